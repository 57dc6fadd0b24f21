"""Simulation lifecycle: initialise the selected units, advance in time, report.

One step runs these phases, each separated from the next by a barrier:

1. guard fill for every variable, wall temperatures, phase properties
2. per tile: momentum and heat right-hand sides, forcing, predictor, heat update
3. global pressure projection, then velocity guard fill
4. per tile: level-set transport; global redistancing; per tile: cell-centred velocity
5. time update, body motion and remapping, divergence check, output

Tile phases can run on a thread pool. Tiles only write their own arrays,
so results do not depend on the worker count.
"""
from __future__ import annotations

import logging
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from composeflow import apps  # noqa: F401  registers the application initialisers
from composeflow import io as fio
from composeflow.bodies import body_advance, circle_body, ib_forcing, ib_map_to_levelset, read_body_file, sphere_body
from composeflow.composer import SimulationManifest
from composeflow.grid import AXES, DomainSpec, FieldRegistry, NonConvergence, fill_guard_cells, init_grid
from composeflow.heatad import ThermalConfig, apply_inflow_temperature, check_stability, heat_advance, heat_rhs
from composeflow.incompns import (
    FACE,
    VEL,
    FlowConfig,
    add_forcing,
    add_gravity,
    clear_history,
    ins_advection,
    ins_diffusion,
    ins_face_to_center,
    ins_predictor,
    ins_project,
    velocities,
)
from composeflow.multiphase import (
    MultiphaseConfig,
    mph_advect,
    mph_redistance_if_due,
    mph_set_properties,
    mph_vel_forcing,
)
from composeflow.params import ParameterSet, validate
from composeflow.registry import implements, lookup
from composeflow.sourceterms import (
    HeaterPatch,
    OutletConfig,
    check_buffer,
    heater_apply,
    outlet_forcing,
    read_heater_file,
    validate_patches,
)

logger = logging.getLogger(__name__)

# fields recomputed from others every step; written to plot files only
DERIVED = frozenset({"divv", "cvlx", "cvly", "cvlz", "dens", "visc", "curv", "lmda"})

U_FLOW = "physics/IncompNS"
U_HEAT = "physics/HeatAD"
U_HEAT_ADV = "physics/HeatAD/HeatADAdvection"
U_VAR_DIFF = "physics/HeatAD/HeatADMain/varDiffusion"
U_MPH = "physics/Multiphase/MultiphaseMain"
U_IB = "physics/ImBound/ImBoundMain"
U_SOLID = "physics/SolidMechanics/SolidMechanicsMain"
U_OUTLET = "physics/sourceTerms/Outlet/OutletMain"
U_HEATER = "physics/sourceTerms/Heater/HeaterMain"
U_IO = "IO/IOMain"


class DivergenceError(RuntimeError):
    pass


@dataclass
class EvolutionState:
    dt: float
    nend: int
    tmax: float
    step: int = 0
    t: float = 0.0
    start_step: int = 0
    checkpoint_counter: int = 0
    plot_counter: int = 0
    last_checkpoint_step: int = -1
    divergence: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def done(self) -> bool:
        # the small allowance stops accumulated round-off from adding a step
        return self.step >= self.nend or self.t >= self.tmax - 1e-12 * self.dt


@dataclass
class Simulation:
    manifest: SimulationManifest
    params: ParameterSet
    grid: object
    state: EvolutionState
    outdir: Path
    nthreads: int = 1
    enabled: dict = field(default_factory=dict)
    flow: FlowConfig | None = None
    thermal: ThermalConfig | None = None
    mph: MultiphaseConfig | None = None
    outlet: OutletConfig | None = None
    heaters: list = field(default_factory=list)
    body: object = None
    init_log: list = field(default_factory=list)
    trace: list | None = None
    cache: dict = field(default_factory=dict)
    strict_divergence: bool = False

    def on(self, flag: str) -> bool:
        return self.enabled.get(flag, False)

    @property
    def basenm(self) -> str:
        return str(self.params.get("basenm", "flashx_"))

    def _record(self, *ops):
        if self.trace is not None:
            self.trace.extend(ops)


# -- setup ---------------------------------------------------------------------

def _registry(manifest: SimulationManifest, dims: int) -> FieldRegistry:
    reg = FieldRegistry()
    for d in manifest.field_registry:
        if d.centering == "FACEZ" and dims < 3:
            continue
        if d.name in ("cvlz",) and dims < 3:
            continue
        reg.add(d.name, d.centering, "plot" if d.name in DERIVED else "checkpoint")
    return reg


def _default_heater(grid, temperature: float) -> list[HeaterPatch]:
    extent = tuple((grid.domain.lower[b], grid.domain.upper[b]) for b in range(grid.dims) if b != 1)
    return [HeaterPatch("yl", extent, temperature)]


def _make_body(params, dims: int, workdir: Path):
    path = str(params.get("sm_bodyFile", ""))
    vel = tuple(params.get(f"sm_vel{AXES[a].upper()}", 0.0) for a in range(dims))
    if path:
        p = Path(path)
        return read_body_file(p if p.is_absolute() else workdir / p, velocity=vel)
    center = tuple(params.get(f"sm_center{AXES[a].upper()}", 0.5) for a in range(dims))
    radius = params.get("sm_radius", 0.1)
    if dims == 2:
        return circle_body(center, radius, params.get("sm_nseg", 256), vel, params.get("sm_omega", 0.0))
    return sphere_body(center, radius, 3, vel)


def init_all(manifest: SimulationManifest, params=None, *, nthreads: int | None = None,
             outdir=".", workdir=None, trace: bool = False) -> Simulation:
    """Build the grid, configure each selected unit and fill the initial condition."""
    t0 = _time.perf_counter()
    if params is None:
        params = {}
    if not isinstance(params, ParameterSet):
        params = validate(params, manifest.schema())
    geo = manifest.geometry
    dims = geo.dims
    domain = DomainSpec.from_params(params, dims, geo.ncells, geo.maxblocks)
    grid = init_grid(domain, _registry(manifest, dims))
    dt = params.get("ins_dt", 0.0) or params.get("dr_dtInit", 1e-3)
    state = EvolutionState(dt=float(dt), nend=int(params.get("nend", 100)), tmax=float(params.get("tmax", 1.0)))
    if nthreads is None:
        nthreads = int(params.get("dr_nthreads", 1))
    sim = Simulation(manifest, params, grid, state, Path(outdir), max(1, nthreads),
                     trace=[] if trace else None)
    workdir = Path(workdir) if workdir is not None else sim.outdir

    has = manifest.has_unit
    sim.enabled = {
        "flow": has(U_FLOW), "heat": has(U_HEAT), "heat_adv": has(U_HEAT_ADV), "mph": has(U_MPH),
        "ib": has(U_IB), "outlet": has(U_OUTLET), "heater": has(U_HEATER), "io": has(U_IO),
    }
    for unit in manifest.resolved_units:
        sim.init_log.append(unit)
        logger.debug("init %s", unit)

    if sim.on("flow"):
        formulation = "varDens" if (manifest.binding("ins_project") or "").endswith("varDens") else "constDens"
        sim.flow = replace(FlowConfig.from_params(params, formulation), dt=state.dt)
        sim.strict_divergence = bool(params.get("dr_debugDivergence", False))
    if sim.on("heat"):
        form = "varDiffusion" if has(U_VAR_DIFF) else "constDiffusion"
        sim.thermal = ThermalConfig.from_params(params, form)
        check_stability(sim.thermal, state.dt, grid.dx, dims)
    if sim.on("mph"):
        sim.mph = MultiphaseConfig.from_params(params)
    if sim.on("outlet"):
        sim.outlet = OutletConfig.from_params(params)
        check_buffer(grid, sim.outlet)
    if sim.on("heater"):
        path = str(params.get("htr_file", ""))
        temp = params.get("htr_tempWall", 1.0)
        if path:
            p = Path(path)
            sim.heaters = read_heater_file(p if p.is_absolute() else workdir / p, dims, temp)
        else:
            sim.heaters = _default_heater(grid, temp)
        validate_patches(grid, sim.heaters)
    if sim.on("ib"):
        sim.body = _make_body(params, dims, workdir)

    for name in ("dens", "visc"):
        if name in grid:
            for t in grid.tiles:
                t[name] = 1.0

    app_init = lookup(manifest, "simulation_init", required=True)
    app_init(sim)

    if sim.on("ib"):
        ib_map_to_levelset(sim.body, grid, params.get("ib_bandCells", 6.0))
    _refresh_derived(sim)
    state.timings["init"] = _time.perf_counter() - t0
    evolve = lookup(manifest, "evolve")
    if evolve is not None:
        sim.cache["evolve"] = evolve
    return sim


def _refresh_derived(sim: Simulation):
    fill_guards(sim)
    if sim.on("mph"):
        for t in sim.grid.tiles:
            mph_set_properties(t, sim.mph)
    if "cvlx" in sim.grid:
        for t in sim.grid.tiles:
            ins_face_to_center(t)


def fill_guards(sim: Simulation, names=None):
    grid = sim.grid
    fill_guard_cells(grid, names)
    if "temp" in grid and (names is None or "temp" in names):
        if sim.on("heat") and any(k == "inflow_ins" for k in grid.domain.bc.values()):
            apply_inflow_temperature(grid, sim.thermal.inflow_temp)
        if sim.heaters:
            for t in grid.tiles:
                heater_apply(t, sim.heaters)


# -- one step --------------------------------------------------------------------

def _buoyancy(tile, beta: float, grav):
    T = tile["temp"]
    g = tile.nguard
    for a in range(tile.dims):
        if grav[a] == 0.0:
            continue
        n = tile.interior(VEL[a]).shape
        lo = tuple(slice(g - (1 if b == a else 0), g - (1 if b == a else 0) + n[b]) for b in range(tile.dims))
        hi = tuple(slice(g, g + n[b]) for b in range(tile.dims))
        add_forcing(tile, a, -beta * grav[a] * 0.5 * (T[lo] + T[hi]))


def _phase1_ops(sim: Simulation, t_next: float) -> list:
    ops = []
    flow, heat = sim.on("flow"), sim.on("heat")
    grid = sim.grid
    if flow:
        cfg = sim.flow
        ops.append(("ins_advection", ins_advection))
        ops.append(("ins_diffusion", lambda t: ins_diffusion(t, cfg)))
    if heat:
        cpl = flow and sim.on("heat_adv")
        ops.append(("heat_rhs", lambda t: heat_rhs(t, sim.thermal, velocities(t) if cpl else None)))
    if flow:
        if sim.on("mph") and sim.mph.inv_weber > 0.0:
            ops.append(("mph_vel_forcing", lambda t: mph_vel_forcing(t, sim.mph)))
        if any(sim.flow.grav[: grid.dims]):
            ops.append(("gravity", lambda t: add_gravity(t, sim.flow.grav)))
        beta = sim.params.get("ht_buoyancy", 0.0)
        if heat and beta:
            ops.append(("buoyancy", lambda t: _buoyancy(t, beta, sim.flow.grav)))
        if sim.on("outlet"):
            ops.append(("outlet_forcing", lambda t: outlet_forcing(t, grid, sim.outlet)))
        if sim.on("ib"):
            ops.append(("ib_forcing", lambda t: ib_forcing(t, sim.body, t_next, dt=sim.state.dt)))
        masks = sim.cache.setdefault("fixed", {})

        def predictor(t):
            fixed = masks.get(t.index)
            if fixed is None:
                fixed = masks[t.index] = {VEL[a]: grid.fixed_face_mask(t, VEL[a]) for a in range(t.dims)}
            ins_predictor(t, sim.state.dt, False, fixed)

        ops.append(("ins_predictor", predictor))
    if heat:
        ops.append(("heat_advance", lambda t: heat_advance(t, sim.state.dt, False)))
    return ops


def _run_tiles(sim: Simulation, ops, pool):
    def work(tile):
        for _, fn in ops:
            fn(tile)

    if pool is None:
        for tile in sim.grid.tiles:
            work(tile)
    else:
        list(pool.map(work, sim.grid.tiles))


def step(sim: Simulation, pool=None):
    st = sim.state
    grid = sim.grid
    tm = st.timings
    t_next = st.t + st.dt

    c = _time.perf_counter()
    fill_guards(sim)
    sim._record("fill_guard_cells")
    if sim.on("mph"):
        sim._record("mph_set_properties")
        _run_tiles(sim, [("mph_set_properties", lambda t: mph_set_properties(t, sim.mph))], pool)
    tm["guard"] = tm.get("guard", 0.0) + _time.perf_counter() - c

    c = _time.perf_counter()
    ops = _phase1_ops(sim, t_next)
    sim._record(*[name for name, _ in ops])
    _run_tiles(sim, ops, pool)
    tm["phase1"] = tm.get("phase1", 0.0) + _time.perf_counter() - c

    report = None
    if sim.on("flow"):
        c = _time.perf_counter()
        sim._record("ins_project")
        report = ins_project(grid, sim.flow, sim.cache)
        fill_guard_cells(grid, [VEL[a] for a in range(grid.dims)])
        tm["project"] = tm.get("project", 0.0) + _time.perf_counter() - c

    c = _time.perf_counter()
    if sim.on("mph"):
        sim._record("mph_advect")
        _run_tiles(sim, [("mph_advect", lambda t: mph_advect(t, st.dt, False))], pool)
        sim._record("mph_redistance")
        mph_redistance_if_due(grid, st.step + 1, sim.mph)
    if sim.on("flow") and "cvlx" in grid:
        sim._record("ins_face_to_center")
        _run_tiles(sim, [("ins_face_to_center", ins_face_to_center)], pool)
    tm["phase2"] = tm.get("phase2", 0.0) + _time.perf_counter() - c

    st.step += 1
    st.t = t_next
    if sim.on("ib"):
        sim._record("body_advance", "ib_map_to_levelset")
        sim.body = body_advance(sim.body, st.t - st.dt, st.dt)
        if not sim.body.is_static:
            ib_map_to_levelset(sim.body, grid, sim.params.get("ib_bandCells", 6.0))

    if report is not None:
        st.divergence.append(report.max_divergence)
        bound = 10.0 * sim.flow.poisson_tol
        if sim.strict_divergence and report.max_divergence > bound:
            raise DivergenceError(f"step {st.step}: max |div u| = {report.max_divergence:.3e} exceeds {bound:.1e}")
    return report


# -- output ------------------------------------------------------------------------

def write_checkpoint(sim: Simulation) -> Path:
    st = sim.state
    path = sim.outdir / fio.checkpoint_name(sim.basenm, st.checkpoint_counter)
    fio.write_checkpoint(sim.grid, path, st.step, st.t, st.checkpoint_counter)
    st.checkpoints.append(path.name)
    st.checkpoint_counter += 1
    st.last_checkpoint_step = st.step
    # the step after a checkpoint restarts the multistep history on every path
    clear_history(sim.grid)
    sim._record("checkpoint")
    return path


def write_plot(sim: Simulation) -> Path | None:
    names = [sim.params.get(f"plot_var_{k}", "none") for k in range(1, 5)]
    if all(n == "none" for n in names):
        return None
    st = sim.state
    path = sim.outdir / fio.plot_name(sim.basenm, st.plot_counter)
    fio.write_plotfile(sim.grid, path, st.step, st.t, st.plot_counter, names)
    st.plot_counter += 1
    return path


def _io_after_step(sim: Simulation):
    if not sim.on("io"):
        return
    st = sim.state
    every = int(sim.params.get("checkpointFileIntervalStep", 0))
    if every > 0 and st.step % every == 0:
        write_checkpoint(sim)
    pevery = int(sim.params.get("plotFileIntervalStep", 0))
    if pevery > 0 and st.step % pevery == 0:
        write_plot(sim)


def restart(sim: Simulation, path) -> Simulation:
    """Continue from a checkpoint written by a run with the same composition."""
    ck = fio.read_checkpoint(path)
    fio.restore(ck, sim.grid)
    st = sim.state
    st.step = st.start_step = st.last_checkpoint_step = int(ck.step)
    st.t = float(ck.time)
    st.checkpoint_counter = int(ck.counter) + 1
    clear_history(sim.grid)
    if sim.on("ib"):
        sim.body = replace(sim.body, time=st.t)
        ib_map_to_levelset(sim.body, sim.grid, sim.params.get("ib_bandCells", 6.0))
    _refresh_derived(sim)
    sim.cache["restarted"] = True
    return sim


# -- evolution -----------------------------------------------------------------------

def _evolve(sim: Simulation, strict: bool) -> EvolutionState:
    st = sim.state
    sim.strict_divergence = sim.strict_divergence or strict
    c0 = _time.perf_counter()
    if sim.on("io") and not sim.cache.get("restarted") and int(sim.params.get("checkpointFileIntervalStep", 0)) > 0:
        write_checkpoint(sim)
    pool = ThreadPoolExecutor(max_workers=sim.nthreads) if sim.nthreads > 1 else None
    try:
        while not st.done():
            try:
                step(sim, pool)
            except NonConvergence:
                if sim.on("io"):
                    path = sim.outdir / f"{sim.basenm}chk_abort"
                    fio.write_checkpoint(sim.grid, path, st.step, st.t, st.checkpoint_counter)
                    logger.error("pressure solve diverged at step %d; state dumped to %s", st.step, path)
                raise
            _io_after_step(sim)
    finally:
        if pool is not None:
            pool.shutdown()
    if sim.on("io") and st.last_checkpoint_step != st.step:
        write_checkpoint(sim)
    st.timings["evolve"] = st.timings.get("evolve", 0.0) + _time.perf_counter() - c0
    return st


@implements("evolve", "Driver/DriverMain")
def evolve_generic(sim: Simulation) -> EvolutionState:
    return _evolve(sim, strict=False)


@implements("evolve", "Driver/DriverMain/Incomp")
def evolve_incomp(sim: Simulation) -> EvolutionState:
    # flow-centred driver: a divergence excursion aborts the run
    return _evolve(sim, strict=True)


def evolve_all(sim: Simulation) -> EvolutionState:
    evolve = sim.cache.get("evolve") or evolve_generic
    return evolve(sim)


@dataclass
class RunReport:
    data: dict

    def to_toml(self) -> str:
        import tomli_w
        return tomli_w.dumps(self.data)


def finalize_all(sim: Simulation) -> RunReport:
    st = sim.state
    timings = {k: float(max(v, 0.0)) for k, v in st.timings.items()}
    timings["total"] = float(sum(v for k, v in timings.items() if k in ("init", "evolve")))
    data = {
        "run": {
            "application": sim.manifest.application,
            "steps": st.step - st.start_step,
            "final_step": st.step,
            "time": float(st.t),
            "dt": float(st.dt),
            "workers": sim.nthreads,
        },
        "timing": timings,
        "output": {"checkpoints": list(st.checkpoints)},
    }
    if st.divergence:
        data["diagnostics"] = {"max_divergence": float(np.max(st.divergence))}
    if sim.on("io"):
        (sim.outdir / f"{sim.basenm}report.toml").write_text(RunReport(data).to_toml())
    return RunReport(data)


def run(manifest, params=None, *, nthreads=None, outdir=".", workdir=None, restart_from=None, trace=False):
    """init, optional restart, evolve and finalize in one call."""
    sim = init_all(manifest, params, nthreads=nthreads, outdir=outdir, workdir=workdir, trace=trace)
    if restart_from is not None:
        restart(sim, restart_from)
    evolve_all(sim)
    return sim, finalize_all(sim)
