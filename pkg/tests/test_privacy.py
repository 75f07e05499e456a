import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpobs import hinf
from gpobs.observer import NON_PRIVATE, ObserverDesign, make_rng, simulate
from gpobs.plant import PrivacyBudget
from gpobs.privacy import (audit_guaranteed, bound_distance, corner_distance, dp_baseline, gen_adjacent,
                           truncated_laplace)
from gpobs.synthesis import load_fixture_design

from conftest import make_plant, scalar_plant


def test_adjacent_modes(market, published_design):
    p = market.plant
    same = gen_adjacent(p, published_design, 1, 0.0)
    assert np.array_equal(same.y, same.y_prime)
    b = gen_adjacent(p, published_design, 1, 0.7, mode="boundary")
    assert np.allclose(b.deviation_norms, 0.7, atol=1e-12)
    i = gen_adjacent(p, published_design, 1, 0.7, mode="interior")
    assert np.all(i.deviation_norms <= 0.7 + 1e-12) and i.deviation_norms.min() < 0.7
    s = gen_adjacent(p, published_design, 1, 0.7, mode="single-agent", agent=2)
    d = s.y_prime - s.y
    assert np.all(d[:, [0, 1, 3, 4]] == 0) and np.allclose(np.abs(d[:, 2]), 0.7)
    with pytest.raises(ValueError):
        gen_adjacent(p, published_design, 1, 0.7, mode="sideways")
    with pytest.raises(ValueError):
        gen_adjacent(p, published_design, 1, 0.7, mode="single-agent", agent=5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_corners_dominate_dense_sampling(d, seed):
    rng = np.random.default_rng(seed)
    lo, lo2 = rng.normal(size=(1, d)), rng.normal(size=(1, d))
    hi, hi2 = lo + rng.uniform(0, 2, (1, d)), lo2 + rng.uniform(0, 2, (1, d))
    corner = corner_distance(lo, hi, lo2, hi2)[0]
    q = lo + (hi - lo) * rng.random((4000, d))
    q2 = lo2 + (hi2 - lo2) * rng.random((4000, d))
    sampled = np.linalg.norm(q - q2, axis=1).max()
    assert sampled <= corner + 1e-12
    # the best corner pair is attained by some explicit corner combination
    best = max(np.linalg.norm(np.array(a) - np.array(b))
               for a in itertools.product(*zip(lo[0], hi[0])) for b in itertools.product(*zip(lo2[0], hi2[0])))
    assert corner == pytest.approx(best, rel=1e-12)
    assert bound_distance(lo, hi, lo2, hi2)[0] >= corner - 1e-12


def test_corner_dim_limit():
    with pytest.raises(ValueError):
        corner_distance(np.zeros((1, 9)), np.ones((1, 9)), np.zeros((1, 9)), np.ones((1, 9)))


def test_zero_widths_zero_distance():
    plant = scalar_plant(0.5, dw=0.0, dv=0.0)
    d = load_fixture_design(plant, [[0.4]])
    rep = audit_guaranteed(plant, d, PrivacyBudget(0.0, 1.0, 1e-300), pairs=3, horizon=20)
    assert rep.worst <= 1e-12 and rep.violations == 0


def test_scalar_audit_clean(scalar, tmp_path):
    d = load_fixture_design(scalar.plant, [[0.5]], alpha=1.0)
    rep = audit_guaranteed(scalar.plant, d, scalar.budget, pairs=50, horizon=100)
    assert rep.violations == 0 and rep.method == "corners" and not rep.flagged
    assert rep.budget_residual <= 0
    rep.write_csv(tmp_path / "a.csv")
    rows = list(csv.reader((tmp_path / "a.csv").open()))
    assert rows[0] == ["k", "max_scaled_distance", "delta"] and len(rows) == 101


def test_market_audit_reports_violations(market, published_design):
    rep = audit_guaranteed(market.plant, published_design, market.budget, pairs=5, horizon=100)
    assert rep.violations == 5 and rep.budget_residual > 0
    assert any("budget_residual" in line for line in rep.lines())


def test_audit_requires_certified_design(market):
    with pytest.raises(ValueError):
        audit_guaranteed(market.plant, ObserverDesign(market.gain.L), market.budget, pairs=1)
    with pytest.raises(ValueError):
        audit_guaranteed(market.plant, ObserverDesign(market.gain.L, gamma=1, eta=1), market.budget, pairs=0)


def test_high_dimensional_output_uses_flagged_bound():
    G = np.vstack([np.eye(4), np.eye(4), np.ones((1, 4))])
    plant = make_plant(0.5 * np.eye(4), np.eye(4), Gamma=G, x0=(np.zeros(4), np.zeros(4)))
    d = load_fixture_design(plant, 0.2 * np.eye(4))
    rep = audit_guaranteed(plant, d, PrivacyBudget(0.0, 1e6, 0.1), pairs=2, horizon=10)
    assert plant.n_z == 9
    assert rep.flagged and rep.method == "centre-width-bound" and rep.violations == 0


@settings(max_examples=8, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.5, 1.5), st.floats(1e-4, 1e-2), st.floats(1e-3, 0.5),
       st.floats(0.0, 1.0), st.integers(0, 1000))
def test_audit_sound_when_budget_holds(a, c, width, rho, eps, seed):
    plant = scalar_plant(a, c=c, dw=width, dv=width)
    d = load_fixture_design(plant, [[a / c * 0.8]])
    lhs = hinf.privacy_constraint_lhs(plant, d, PrivacyBudget(eps, 1.0, rho))
    budget = PrivacyBudget(eps, np.exp(eps) * lhs * (1 + 1e-9), rho)
    assert hinf.budget_residual(plant, d, budget) <= 0
    rep = audit_guaranteed(plant, d, budget, pairs=20, horizon=60, seed=seed)
    assert rep.violations == 0


def test_truncated_laplace_support():
    u = truncated_laplace(make_rng(0, 3), (20000,), 0.5, 0.2)
    assert np.abs(u).max() <= 0.5
    assert abs(u.mean()) < 0.01
    assert np.mean(np.abs(u) < 0.1) > np.mean(np.abs(u) > 0.4)  # Laplace mass near zero
    assert np.array_equal(truncated_laplace(make_rng(0, 3), (5,), 0.0, 1.0), np.zeros(5))


def test_dp_zero_support_matches_np(market):
    np_design = ObserverDesign(market.gain.L, 1.0, provenance=NON_PRIVATE)
    a = simulate(market.plant, np_design, 50, seed=2)
    b = dp_baseline(market.plant, market.gain.L, 0.0, 50, seed=2)
    assert np.array_equal(a.z_lo, b.z_lo) and np.array_equal(a.z_hi, b.z_hi)


def test_dp_wider_and_contained(market, published_design):
    np_design = ObserverDesign(market.gain.L, 1.0, provenance=NON_PRIVATE)
    base = simulate(market.plant, np_design, 101, seed=0).z_width[-1, 0]
    gp = simulate(market.plant, published_design, 101, seed=0).z_width[-1, 0]
    for s in (0.05, 0.5, 1.0):
        for seed in range(5):
            tr = dp_baseline(market.plant, market.gain.L, s, 101, seed=seed)
            assert tr.containment_slack() >= -1e-9
        assert tr.z_width[-1, 0] > base
    assert gp < dp_baseline(market.plant, market.gain.L, 1.0, 101, seed=0).z_width[-1, 0]
