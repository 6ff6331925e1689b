import numpy as np
import pytest

from gfflab.lattice import LatticeSpec, Region, build_box


@pytest.fixture(scope="session")
def box_d1_n2():
    return build_box(LatticeSpec(d=1, N=2))


@pytest.fixture(scope="session")
def chain_d1():
    """The 3-site path used across modules (tridiagonal precision)."""
    return Region(LatticeSpec(d=1, N=3), [(1,), (2,), (3,)])


@pytest.fixture(scope="session")
def single_site():
    return Region(LatticeSpec(d=1, N=1), [(0,)])


def random_region(rng, d=2, N=3, n_sites=6):
    """Connected-ish random region for property tests."""
    box = build_box(LatticeSpec(d=d, N=N))
    idx = rng.choice(len(box), size=min(n_sites, len(box)), replace=False)
    return Region(box.spec, [box.sites[i] for i in idx])


def combined_z(value_a, err_a, value_b, err_b):
    denom = float(np.hypot(err_a, err_b))
    if denom == 0.0:
        return 0.0 if value_a == value_b else float("inf")
    return (value_a - value_b) / denom
