import numpy as np
import pytest

from composeflow.grid import DomainSpec, FieldRegistry, init_grid


def make_grid(ncells=(8, 8), nblocks=(2, 2), bc=None, inflow=None, lower=None, upper=None,
              variables=(("q", "CENTER"),), nguard=2):
    dims = len(ncells)
    lower = lower or (0.0,) * dims
    if upper is None:
        # square cells: x spans [0, 1], other axes follow
        h = 1.0 / (nblocks[0] * ncells[0])
        upper = tuple(lo + nb * nc * h for lo, nb, nc in zip(lower, nblocks, ncells))
    dom = DomainSpec(dims, tuple(lower), tuple(upper), tuple(nblocks), tuple(ncells),
                     bc or {}, inflow or {}, nguard=nguard)
    reg = FieldRegistry()
    for name, cen in variables:
        reg.add(name, cen)
    return init_grid(dom, reg)


def observed_orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ---------------------------------------------------------------

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion and return the verdict."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_CRITERIA].append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash.get(_CRITERIA, []))
    if rows:
        terminalreporter.section("acceptance criteria")
        for _, line in rows:
            terminalreporter.write_line(line)
