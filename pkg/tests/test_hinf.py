import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpobs import hinf
from gpobs.errors import InstabilityError
from gpobs.matops import sigma_max, spectral_radius_nonneg
from gpobs.observer import ObserverDesign, simulate
from gpobs.plant import PrivacyBudget

from conftest import make_plant, random_stable, scalar_plant


def dense_grid_hinf(Acl, B, n=100_000):
    """sup over theta of sigma_max((e^{i theta} I - Acl)^{-1} B) on a dense complex grid."""
    k = Acl.shape[0]
    best = 0.0
    for th in np.array_split(np.linspace(0.0, np.pi, n), 50):
        M = np.exp(1j * th)[:, None, None] * np.eye(k) - Acl
        G = np.linalg.solve(M, np.broadcast_to(B.astype(complex), (th.size,) + B.shape))
        best = max(best, np.linalg.svd(G, compute_uv=False)[:, 0].max())
    return best


def test_error_system_examples():
    A = np.array([[0.3, 0.1], [0.0, 0.2]])
    plant = make_plant(A, [[1.0, 1.0]], W=[[1.0, -2.0], [0.0, 1.0]])
    err = hinf.build_error_system(plant, ObserverDesign(np.zeros((2, 1))))
    assert np.array_equal(err.A_tilde, A)
    assert np.array_equal(err.Lambda, np.hstack([np.abs(plant.W), np.zeros((2, 1))]))

    s = scalar_plant(0.9)
    err = hinf.build_error_system(s, ObserverDesign([[0.9]]))
    assert np.array_equal(err.A_tilde, [[0.0]]) and np.array_equal(err.Lambda, [[1.0, 0.9]])


def test_market_error_system(market, published_design):
    err = hinf.build_error_system(market.plant, published_design)
    assert np.all(err.A_tilde >= 0)
    assert spectral_radius_nonneg(err.A_tilde) < 1


def test_gamma_direct_examples():
    err = hinf.ErrorSystem(np.array([[0.5]]), np.array([[1.0]]), np.array([1.0]), np.array([1.0]), np.array([]))
    assert hinf.gamma_direct(err) == pytest.approx(2.0, rel=1e-14)
    Lam = np.array([[1.0, 2.0], [0.5, 0.0]])
    err = hinf.ErrorSystem(np.zeros((2, 2)), Lam, np.ones(2), np.ones(2), np.ones(0))
    assert hinf.gamma_direct(err) == pytest.approx(sigma_max(Lam))
    err = hinf.ErrorSystem(np.array([[1.1]]), np.array([[1.0]]), np.ones(1), np.ones(1), np.ones(0))
    with pytest.raises(InstabilityError):
        hinf.gamma_direct(err)


def test_gamma_direct_is_the_steady_state_gain():
    # the width error system reaches (I - A~)^-1 Lambda d for a constant input d
    rng = np.random.default_rng(2)
    plant, L = random_stable(rng, n=3)
    err = hinf.build_error_system(plant, ObserverDesign(L))
    e = hinf.error_widths(err, np.zeros(3), 2000)[-1]
    gd = hinf.gamma_direct(err)
    assert np.linalg.norm(e) <= gd * np.linalg.norm(err.delta_lambda) * (1 + 1e-9)


def test_eta_examples():
    p = make_plant([[1.0]], [[0.5]], w=(-1, 1), v=(-1, 1))
    eta, theta = hinf.hinf_norm(p.A - p.C, np.ones((1, 1)))
    assert eta == pytest.approx(2.0, rel=1e-9) and theta == pytest.approx(0.0, abs=1e-6)
    assert hinf.eta_hinf(p, ObserverDesign([[1.0]])) == pytest.approx(2.0, rel=1e-9)
    assert hinf.eta_hinf(scalar_plant(0.5), ObserverDesign([[0.0]])) == 0.0


def test_eta_reports_instability():
    s = scalar_plant(2.0)
    with pytest.raises(InstabilityError):
        hinf.eta_hinf(s, ObserverDesign([[0.5]]))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_eta_matches_dense_grid(seed):
    rng = np.random.default_rng(seed)
    Acl = rng.normal(size=(3, 3))
    Acl *= rng.uniform(0.3, 0.95) / np.max(np.abs(np.linalg.eigvals(Acl)))
    B = rng.normal(size=(3, 2))
    got = hinf.hinf_norm(Acl, B)[0]
    assert got == pytest.approx(dense_grid_hinf(Acl, B), rel=1e-5)


# ---------------------------------------------------------------------------
# LMIs


def test_stability_lmi_scalar():
    p = make_plant([[0.5]], [[0.0]], W=[[1.0]], V=[[0.0]], w=(-1, 1), v=(0, 0))
    assert not hinf.check_stability_lmi(p, [1.0], [[0.0]], 1.5).feasible
    assert hinf.check_stability_lmi(p, [1.0], [[0.0]], 3.0).feasible
    rep = hinf.find_certificate(p, ObserverDesign([[0.0]]), hinf.STABILITY, 2.2)
    assert rep.feasible and rep.iterations == 0 and np.array_equal(rep.Q, [1.0])


def test_privacy_lmi_scalar():
    p = make_plant([[1.0]], [[0.5]], w=(-1, 1), v=(-1, 1))
    d = ObserverDesign([[1.0]])
    assert hinf.eta_hinf(p, d) == pytest.approx(2.0)
    assert not hinf.check_privacy_lmi(p, [1.0], [[1.0]], 1.9).feasible
    assert hinf.check_privacy_lmi(p, [1.0], [[1.0]], 2.5).feasible


def test_privacy_lmi_zero_gain_any_eta():
    p = scalar_plant(0.5)
    rep = hinf.find_certificate(p, ObserverDesign([[0.0]]), hinf.PRIVACY, 0.1)
    assert rep.feasible
    assert hinf.check_privacy_lmi(p, rep.Q, [[0.0]], 0.1).feasible


def test_identity_q_infeasible_when_unstable():
    p = scalar_plant(1.2)
    for eta in (0.1, 1.0, 100.0):
        assert not hinf.check_privacy_lmi(p, [1.0], [[0.1]], eta).feasible


def test_non_diagonal_q_rejected():
    p = make_plant(np.eye(2) * 0.5, np.eye(2))
    with pytest.raises(ValueError):
        hinf.check_stability_lmi(p, np.array([[1.0, 0.1], [0.1, 1.0]]), np.zeros((2, 2)), 5.0)


def test_below_direct_level_is_infeasible(market, published_design):
    gd = hinf.gamma_direct(hinf.build_error_system(market.plant, published_design))
    assert not hinf.find_certificate(market.plant, published_design, hinf.STABILITY, 0.99 * gd).feasible
    rep = hinf.find_certificate(market.plant, published_design, hinf.STABILITY, 1.02 * gd)
    assert rep.feasible and rep.iterations <= 500
    # re-verification from the returned certificate
    assert hinf.check_stability_lmi(market.plant, rep.Q, rep.L_tilde, rep.level).feasible


def test_market_certified_levels(published_design):
    assert published_design.certified
    assert published_design.gamma == pytest.approx(1.02 * 2.4187, rel=1e-3)
    assert published_design.beta == pytest.approx(published_design.gamma * 1.364)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_lmi_level_never_below_direct(seed):
    rng = np.random.default_rng(seed)
    plant, L = random_stable(rng)
    d = ObserverDesign(L)
    for which in (hinf.STABILITY, hinf.PRIVACY):
        direct = hinf.direct_level(plant, d, which)
        level = hinf.min_certified_level(plant, d, which, rtol=1e-3)
        assert level >= direct * (1 - 1e-9)


# ---------------------------------------------------------------------------
# privacy budget and accuracy


def test_lhs_vanishes_without_noise():
    p = scalar_plant(0.5, dw=0.0, dv=0.0)
    d = ObserverDesign([[0.0]], gamma=2.04, eta=1e-9)
    assert hinf.privacy_constraint_lhs(p, d, PrivacyBudget(0, 1, 1e-9)) < 1e-15


def test_lhs_interpretations(market, published_design):
    b = market.budget
    base = hinf.privacy_constraint_lhs(market.plant, published_design, b)
    lit = hinf.privacy_constraint_lhs(market.plant, published_design, b, literal=True)
    low = hinf.privacy_constraint_lhs(market.plant, published_design, b, sigma="min")
    assert low <= base < lit
    assert base > b.target  # the published budget is not satisfied
    dl = np.concatenate([market.plant.delta_w, 1.364 * market.plant.delta_v])
    expect = math.sqrt(5) * published_design.gamma * np.linalg.norm(dl) + math.sqrt(5) * published_design.eta
    assert base == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ValueError):
        hinf.privacy_constraint_lhs(market.plant, ObserverDesign(published_design.L), b)


def test_accuracy_identical_designs_zero(market, published_design):
    assert np.all(hinf.accuracy_series(market.plant, published_design, published_design, 20) == 0)


def test_accuracy_matches_width_recursions(market, published_design, market_np):
    series = hinf.accuracy_series(market.plant, market_np.design, published_design, 100)
    a = simulate(market.plant, market_np.design, 101).z_width[:, 0]
    b = simulate(market.plant, published_design, 101).z_width[:, 0]
    assert np.max(np.abs(series - np.abs(a - b))) < 1e-8
    assert series[0] == 0.0
    steady = hinf.accuracy_steady(market.plant, market_np.design, published_design)
    assert series[-1] == pytest.approx(steady, rel=1e-8)


def test_report_format():
    txt = hinf.format_report({"a": 1.5, "b": "x"})
    assert txt == "a: 1.5\nb: x\n"
