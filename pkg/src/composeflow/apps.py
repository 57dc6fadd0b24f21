"""Initial conditions for the shipped applications.

Each initialiser receives the half-built simulation (grid allocated, units
configured) and fills its fields. Fields start at zero, so only non-zero
data is written here.
"""
from __future__ import annotations

from composeflow.grid import AXES
from composeflow.multiphase import circle_distance
from composeflow.registry import implements

APPS = "Simulation/SimulationMain/incompFlow/"


def _set_uniform_inflow(sim):
    """Start from the inflow velocity everywhere so the first projection is gentle."""
    dom = sim.grid.domain
    for face, kind in dom.bc.items():
        if kind != "inflow_ins":
            continue
        a = AXES.index(face[0])
        for t in sim.grid.tiles:
            t.interior("vel" + AXES[a])[...] = dom.inflow[face]


def _seed_levelset(sim, center, radius, liquid_inside: bool):
    for t in sim.grid.tiles:
        mesh = t.mesh("CENTER")
        d = circle_distance(mesh, center, radius)
        t["dfun"] = d if liquid_inside else -d


@implements("simulation_init", APPS + "ChannelFlow")
def init_channel(sim):
    # pressure and velocity start at rest; the inflow face value comes from the boundary fill
    pass


@implements("simulation_init", APPS + "PoiseuilleFlow")
def init_poiseuille(sim):
    pass


@implements("simulation_init", APPS + "StaticDrop")
def init_static_drop(sim):
    p = sim.params
    center = tuple(p.get(f"sim_drop{AXES[a].upper()}", 0.5) for a in range(sim.grid.dims))
    _seed_levelset(sim, center, p.get("sim_dropRadius", 0.25), liquid_inside=True)


@implements("simulation_init", APPS + "CylinderFlow")
def init_cylinder(sim):
    _set_uniform_inflow(sim)


@implements("simulation_init", APPS + "HeatConduction")
def init_heat(sim):
    for t in sim.grid.tiles:
        t["temp"] = sim.params.get("sim_tempInit", 0.0)


@implements("simulation_init", APPS + "FlowBoiling")
def init_flow_boiling(sim):
    p = sim.params
    dims = sim.grid.dims
    center = [p.get("sim_bubbleX", 0.5), p.get("sim_bubbleY", 0.1)] + [0.5] * (dims - 2)
    _seed_levelset(sim, tuple(center), p.get("sim_bubbleRadius", 0.1), liquid_inside=False)
    for t in sim.grid.tiles:
        t["temp"] = p.get("sim_tempInit", 0.0)
    _set_uniform_inflow(sim)


def registered_apps() -> list[str]:
    from composeflow.registry import registered
    return sorted(unit[len(APPS):] for key, unit in registered() if key == "simulation_init")

