import numpy as np
import pytest

import eulervisc.material as mat
import eulervisc.tensor_core as tc
from eulervisc.grid_ops import Grid
from eulervisc.oracle import (
    Oracle0DConfig, branch_samples, fd_stress_check, integrate_0d_reference,
    manufactured_residual,
)


def default_model(theta=0.2):
    return mat.MaterialModel(
        phi=mat.NeoHookean(mu=1.0, kappa=2.0),
        truncation=mat.TruncationParams(4.0),
        zeta_vp=mat.QuadraticViscoplastic(theta=theta),
    )


def test_branch_samples_cover_all_branches():
    rng = np.random.default_rng(5)
    samples = branch_samples(4.0, 10, rng)
    assert set(samples) == {
        "untruncated", "frob_blend", "det_blend", "both_blends",
        "dead_frob", "dead_det",
    }
    lam = 4.0
    for name, F in samples.items():
        assert F.shape[0] >= 10
        fn, J = tc.frob(F), tc.det(F)
        if name == "untruncated":
            assert np.all(fn < lam) and np.all(J > 1 / lam)
        if name == "frob_blend":
            assert np.all((fn > lam) & (fn < 2 * lam))
        if name == "dead_frob":
            assert np.all(fn > 2 * lam)
        if name == "dead_det":
            assert np.all(J < 1 / (2 * lam))


def test_fd_stress_check_accurate():
    report = fd_stress_check(default_model(), n_samples=120, seed=3)
    assert report["n_total"] >= 100
    assert report["worst_dF"] < 1e-6
    assert report["worst_dalpha"] < 1e-6


def test_rk4_self_convergence_order_4():
    model = default_model()
    G = np.zeros((3, 3))
    G[0, 1] = 2.0

    def drive(t):
        return G

    finals = []
    for tau in (8e-2, 4e-2, 2e-2):
        ref = integrate_0d_reference(Oracle0DConfig(
            model=model, grad_v=drive, T=0.8, tau_fine=tau))
        finals.append(ref["Fe"][-1])
    e0 = np.max(np.abs(finals[0] - finals[2]))
    e1 = np.max(np.abs(finals[1] - finals[2]))
    assert 3.5 < np.log2(e0 / e1) < 4.8


def test_oracle_requires_fine_step():
    with pytest.raises(ValueError):
        Oracle0DConfig(model=default_model(), grad_v=lambda t: np.zeros((3, 3)),
                       tau_fine=1e-3, tau_test=1e-2)


def test_manufactured_residual_second_order():
    errs = [manufactured_residual(Grid((n, n), (1.0, 1.0), "periodic"))
            for n in (16, 32)]
    for key in ("continuity", "momentum"):
        order = np.log2(errs[0][key] / errs[1][key])
        assert 1.8 <= order <= 2.2, (key, order)
