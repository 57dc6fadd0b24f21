import numpy as np
import oracles
import pytest
from conftest import make_grid
from hypothesis import given, settings
from hypothesis import strategies as st

from composeflow import bodies


def star_body(npoints=7, r_out=0.3, r_in=0.12, center=(0.5, 0.5)):
    th = np.pi * np.arange(2 * npoints) / npoints
    r = np.where(np.arange(2 * npoints) % 2 == 0, r_out, r_in)
    nodes = np.stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)], axis=1)
    m = len(nodes)
    return bodies.LagrangianBody(nodes, np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_signed_distance_matches_segment_loop(seed):
    rng = np.random.default_rng(seed)
    body = star_body()
    pts = rng.uniform(0.0, 1.0, (60, 2))
    got = bodies.signed_distance(body, pts)
    ref = np.array([oracles.polygon_signed_distance(p, body.nodes, body.elements) for p in pts])
    assert np.abs(got - ref).max() <= 1e-12


def test_circle_distance_and_sign():
    body = bodies.circle_body((0.5, 0.5), 0.2, nseg=512)
    d = bodies.signed_distance(body, np.array([[0.5, 0.5], [0.9, 0.5], [0.5, 0.65]]))
    assert d[0] == pytest.approx(-0.2, abs=1e-5)
    assert d[1] == pytest.approx(0.2, abs=1e-12)
    assert d[2] == pytest.approx(-0.05, abs=1e-5)


def test_sphere_distance():
    body = bodies.sphere_body((0.0, 0.0, 0.0), 1.0, refine=3)
    pts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, -1.5, 0.2], [0.3, 0.2, -0.1]])
    d = bodies.signed_distance(body, pts)
    exact = np.linalg.norm(pts, axis=1) - 1.0
    assert np.sign(d).tolist() == np.sign(exact).tolist()
    assert np.abs(d - exact).max() < 0.02     # facets sit slightly inside the sphere


@pytest.mark.parametrize("elems", [[[0, 1], [1, 2]], [[0, 1], [1, 2], [2, 0], [0, 2]]])
def test_open_polyline_rejected(elems):
    nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(bodies.OpenSurface):
        bodies.LagrangianBody(nodes, elems)


def test_open_triangle_mesh_rejected():
    sphere = bodies.sphere_body((0, 0, 0), 1.0, refine=0)
    with pytest.raises(bodies.OpenSurface):
        bodies.LagrangianBody(sphere.ref_nodes, sphere.elements[:-1], (0.0, 0.0, 0.0))


@pytest.mark.parametrize("kwargs", [dict(elements=[[0, 5], [5, 0]]), dict(velocity=(1.0,)),
                                    dict(elements=[[0, 1, 2]])])
def test_malformed_bodies(kwargs):
    args = dict(ref_nodes=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], elements=[[0, 1], [1, 2], [2, 0]])
    args.update(kwargs)
    with pytest.raises(ValueError):
        bodies.LagrangianBody(**args)


def test_body_file_round_trip(tmp_path):
    body = star_body()
    path = tmp_path / "star.body"
    bodies.write_body_file(body, path)
    back = bodies.read_body_file(path)
    assert np.array_equal(back.ref_nodes, body.ref_nodes)
    assert np.array_equal(back.elements, body.elements)


def test_body_file_header_checked(tmp_path):
    bad = tmp_path / "bad.body"
    bad.write_text("POINTS 1\n0 0\n")
    with pytest.raises(ValueError):
        bodies.read_body_file(bad)


def test_rigid_motion():
    body = bodies.circle_body((0.5, 0.5), 0.1, nseg=64, velocity=(1.0, 0.0), omega=2.0 * np.pi)
    later = bodies.body_advance(body, 0.0, 1.0)
    assert np.allclose(later.nodes, body.ref_nodes + [1.0, 0.0], atol=1e-12)   # one full turn
    assert later.centroid() == pytest.approx([1.5, 0.5])
    v = body.velocity_at(np.array([[0.5, 0.6]]), 0.0)
    assert v[0] == pytest.approx([1.0 - 2.0 * np.pi * 0.1, 0.0])
    assert not body.is_static and bodies.circle_body((0, 0), 1.0).is_static


def test_levelset_is_clamped_outside_the_band():
    body = bodies.circle_body((0.5, 0.5), 0.1)
    x = (np.arange(32) + 0.5) / 32
    X, Y = np.meshgrid(x, x, indexing="ij")
    lam = bodies.body_levelset(body, (X, Y), 1.0 / 32, band_cells=2)
    assert lam.max() == pytest.approx(2.0 / 32) and lam.min() == pytest.approx(-2.0 / 32)
    exact = np.hypot(X - 0.5, Y - 0.5) - 0.1
    near = np.abs(exact) < 1.5 / 32
    assert np.abs(lam[near] - exact[near]).max() < 1e-4


def test_forcing_weights_and_interior_slip():
    grid = make_grid(ncells=(16, 16), variables=(("velx", "FACEX"), ("vely", "FACEY")))
    body = bodies.circle_body((0.5, 0.5), 0.2, velocity=(0.3, 0.0))
    bodies.ib_map_to_levelset(body, grid)
    t = grid.tiles[0]
    bodies.ib_forcing(t, body, 0.0)
    w = t.work["ib_w_velx"]
    assert set(np.unique(w)) >= {0.0, 1.0} and w.min() >= 0.0 and w.max() <= 1.0
    assert np.allclose(t.work["ib_u_velx"], 0.3)
    for tile in grid.tiles:
        tile.interior("velx")[...] = 0.3
    assert bodies.interior_slip(grid, body, 0.0) == 0.0
    assert bodies.interior_slip(grid) == pytest.approx(0.3)
