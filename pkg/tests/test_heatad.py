import logging

import numpy as np
import pytest
from conftest import make_grid

from composeflow import heatad
from composeflow.grid import fill_guard_cells
from composeflow.incompns import velocities


def thermal_grid(n=16, nb=2, bc=None, inflow=None, extra=()):
    return make_grid(ncells=(n, n), nblocks=(nb, nb), bc=bc, inflow=inflow,
                     variables=(("temp", "CENTER"),) + tuple(extra))


@pytest.mark.parametrize("kwargs", [dict(alpha=-0.1), dict(formulation="implicit")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        heatad.ThermalConfig(**kwargs)


def test_from_params():
    cfg = heatad.ThermalConfig.from_params({"ht_alpha": 0.2, "ht_tempInflow": 1.0}, "varDiffusion")
    assert (cfg.alpha, cfg.inflow_temp, cfg.formulation) == (0.2, 1.0, "varDiffusion")


def test_stable_dt():
    assert heatad.stable_dt(heatad.ThermalConfig(alpha=0.01), 0.1, 2) == pytest.approx(0.25)
    var = heatad.ThermalConfig(alpha=0.01, alpha_gas=4.0, formulation="varDiffusion")
    assert heatad.stable_dt(var, 0.1, 2) == pytest.approx(0.0625)
    assert heatad.stable_dt(heatad.ThermalConfig(alpha=0.0), 0.1, 3) == np.inf


def test_stability_warning(caplog):
    cfg = heatad.ThermalConfig(alpha=1.0)
    with caplog.at_level(logging.WARNING, logger="composeflow.heatad"):
        assert not heatad.check_stability(cfg, 1.0, 0.1, 2)
    assert "explicit limit" in caplog.text
    assert heatad.check_stability(cfg, 1e-3, 0.1, 2)


def test_periodic_conduction_decays_at_the_analytic_rate():
    n, alpha = 32, 0.05
    grid = thermal_grid(n // 2)
    xc = grid.cell_coords(0)
    k = 2.0 * np.pi
    grid.scatter("temp", np.sin(k * xc)[:, None] * np.cos(k * xc)[None, :])
    cfg = heatad.ThermalConfig(alpha=alpha)
    dt = 0.5 * heatad.stable_dt(cfg, grid.dx, 2)
    steps = 100
    for s in range(steps):
        fill_guard_cells(grid, ["temp"])
        for t in grid.tiles:
            heatad.heat_rhs(t, cfg)
            heatad.heat_advance(t, dt, s == 0)
    amp = np.abs(grid.gather("temp")).max()
    assert amp == pytest.approx(np.exp(-2.0 * k * k * alpha * dt * steps), rel=0.01)


def test_advection_coupling():
    grid = thermal_grid(32, extra=(("velx", "FACEX"), ("vely", "FACEY")))
    xc = grid.cell_coords(0)
    k = 2.0 * np.pi
    grid.scatter("temp", np.broadcast_to(np.sin(k * xc)[:, None], (64, 64)))
    grid.scatter("velx", np.ones(grid.global_shape("FACEX")))
    fill_guard_cells(grid)
    cfg = heatad.ThermalConfig(alpha=0.0)
    for t in grid.tiles:
        heatad.heat_rhs(t, cfg, velocities(t))
    rhs = np.concatenate([np.concatenate([grid.tiles[i + 2 * j].work["rhs_temp"] for j in range(2)], axis=1)
                          for i in range(2)], axis=0)
    assert np.abs(rhs + k * np.cos(k * xc)[:, None]).max() < 0.1 * k


def test_advance_without_rhs_keeps_field_and_records_history(rng):
    grid = thermal_grid(8)
    vals = rng.normal(size=(16, 16))
    grid.scatter("temp", vals)
    t = grid.tiles[0]
    heatad.heat_advance(t, 0.1, True)
    assert np.array_equal(grid.gather("temp"), vals)
    assert "prev_temp" in t.work and "rhs_temp" not in t.work


def test_inflow_temperature_guard_mirrors_about_the_face(rng):
    grid = thermal_grid(8, bc={"xl": "inflow_ins", "xr": "outflow_ins"}, inflow={"xl": 1.0})
    grid.scatter("temp", rng.normal(size=(16, 16)))
    fill_guard_cells(grid, ["temp"])
    heatad.apply_inflow_temperature(grid, 0.7)
    T = grid.tiles[0]["temp"]
    assert np.allclose(0.5 * (T[1, 2:-2] + T[2, 2:-2]), 0.7)
    assert np.allclose(0.5 * (T[0, 2:-2] + T[3, 2:-2]), 0.7)
    # tiles away from the inflow face are untouched
    other = grid.tiles[1]["temp"].copy()
    heatad.apply_inflow_temperature(grid, -5.0)
    assert np.array_equal(grid.tiles[1]["temp"], other)


def test_variable_diffusivity_follows_the_level_set():
    grid = thermal_grid(8, extra=(("dfun", "CENTER"),))
    t = grid.tiles[0]
    cfg = heatad.ThermalConfig(alpha=0.1, alpha_gas=3.0, formulation="varDiffusion")
    t["dfun"] = np.where(np.arange(t["dfun"].shape[0])[:, None] < 6, -1.0, 1.0) * np.ones_like(t["dfun"])
    K = heatad.diffusivity(t, cfg)
    assert K[0, 0] == pytest.approx(0.1) and K[-1, 0] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        heatad.diffusivity(thermal_grid(8).tiles[0], cfg)
