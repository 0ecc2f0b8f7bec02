import pytest

from polex.presets import get_preset


@pytest.fixture(scope="session")
def fig1():
    return get_preset("fig1_drift")


@pytest.fixture(scope="session")
def fig2():
    return get_preset("fig2_vol")


@pytest.fixture(scope="session")
def dirac():
    return get_preset("dirac")


def assert_within_se(estimate, target, std_error, k=3.0, context=""):
    """|estimate - target| <= k std errors, with a floor for exact-zero noise."""
    tol = k * max(std_error, 1e-12)
    assert abs(estimate - target) <= tol, (
        f"{context}: estimate {estimate} vs target {target} "
        f"(off by {abs(estimate - target):.3g}, allowed {tol:.3g})"
    )
