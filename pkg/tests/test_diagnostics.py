import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

import eulervisc.diagnostics as dg
import eulervisc.material as mat
import eulervisc.stepper as st
from eulervisc.grid_ops import Grid, GridOps


def test_ledger_flat_at_rest():
    grid = Grid((8, 8), (1.0, 1.0), "periodic")
    ops = GridOps(grid)
    model = mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=0.2),
        mu_visc=0.5,
    )
    s = st.State.rest(grid)
    led = dg.ledger(ops, model, s, s, np.zeros(2), 0.01)
    assert led.kinetic == 0.0
    assert abs(led.stored) < 1e-14
    assert led.dissipation == 0.0
    assert abs(led.residual) < 1e-14


def test_monitors_report_margins():
    grid = Grid((6, 6), (1.0, 1.0), "periodic")
    s = st.State.rest(grid)
    mon = dg.monitors(s, 4.0)
    assert mon["min_rho"] == 1.0
    assert mon["min_detFe"] == 1.0
    assert mon["trunc_active_frac"] == 0.0
    assert abs(mon["max_absFe"] - np.sqrt(3.0)) < 1e-14
    assert mon["margin_frob"] > 0 and mon["margin_det"] > 0


# ---------------------------------------------------------------------------
# discrete Gronwall certificate


def test_gronwall_worked_example():
    # C=1, a=1, tau=0.1, k=10: (1) * exp(1/0.9) / 0.9
    cert = dg.gronwall_bound(1.0, 0.1, np.ones(10), np.zeros(10))
    expect = np.exp(1.0 / 0.9) / 0.9
    assert abs(expect - 3.375) < 2e-3  # sanity of the hand value
    assert abs(cert.bound_at(10) - expect) < 1e-3


def test_gronwall_bound_dominates_max_sequence():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = rng.integers(1, 30)
        tau = rng.uniform(0.01, 0.2)
        a = rng.uniform(0.0, 0.9 / tau, size=n)
        b = rng.uniform(0.0, 2.0, size=n)
        C = rng.uniform(0.0, 3.0)
        y = dg.gronwall_max_sequence(C, tau, a, b)
        cert = dg.gronwall_bound(C, tau, a, b)
        assert np.all(y <= cert.bounds * (1 + 1e-12) + 1e-12)


def test_gronwall_invalid_certificate():
    with pytest.raises(dg.InvalidCertificateError):
        dg.gronwall_bound(1.0, 0.5, np.array([3.0]), np.array([0.0]))


@settings(max_examples=100, deadline=None)
@given(
    hst.integers(1, 20),
    hst.floats(0.01, 0.2),
    hst.floats(0.0, 2.0),
    hst.integers(0, 2 ** 31 - 1),
)
def test_gronwall_property_random_recursions(n, tau, C, seed):
    """Any sequence satisfying the recursion (not just the maximal one)
    respects the closed-form bound."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 0.8 / tau, size=n)
    b = rng.uniform(0.0, 1.0, size=n)
    slack = rng.uniform(0.0, 1.0, size=n)  # sub-saturating sequences
    y = np.zeros(n)
    acc_ay, acc_b = 0.0, 0.0
    for k in range(n):
        acc_b += tau * b[k]
        y[k] = slack[k] * (C + acc_ay + acc_b) / (1.0 - tau * a[k])
        acc_ay += tau * a[k] * y[k]
    cert = dg.gronwall_bound(C, tau, a, b)
    assert np.all(y <= cert.bounds * (1 + 1e-12) + 1e-12)
