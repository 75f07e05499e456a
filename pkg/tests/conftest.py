import numpy as np
import pytest

from gpobs.observer import ObserverDesign
from gpobs.plant import IntervalVector, PlantModel, PrivacyBudget
from gpobs.scenario import bundled_path, load_scenario
from gpobs.synthesis import load_fixture_design


def make_plant(A, C, W=None, V=None, Gamma=None, x0=(0.0, 0.0), w=(-0.5, 0.5), v=(-0.5, 0.5)):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, m = A.shape[0], C.shape[0]
    W = np.eye(n) if W is None else np.atleast_2d(np.asarray(W, dtype=float))
    V = np.eye(m) if V is None else np.atleast_2d(np.asarray(V, dtype=float))
    Gamma = np.ones((1, n)) if Gamma is None else np.atleast_2d(np.asarray(Gamma, dtype=float))

    def box(b, k):
        lo, hi = b
        return IntervalVector(np.broadcast_to(np.asarray(lo, float), (k,)).copy(),
                              np.broadcast_to(np.asarray(hi, float), (k,)).copy())

    return PlantModel(A=A, C=C, W=W, V=V, Gamma=Gamma, x0=box(x0, n), w_bounds=box(w, W.shape[1]),
                      v_bounds=box(v, V.shape[1]))


def random_stable(rng, n=None, target=None):
    """Random Schur-stable plant and gain with rho(|A - L C|) < 1 (A and L scaled together)."""
    from gpobs.matops import spectral_radius_nonneg
    n = n or int(rng.integers(1, 5))
    m = int(rng.integers(1, n + 1))
    while True:
        A = rng.normal(size=(n, n))
        C = rng.normal(size=(m, n))
        L = 0.5 * rng.normal(size=(n, m))
        rho = spectral_radius_nonneg(np.abs(A - L @ C))
        s = (target or rng.uniform(0.2, 0.9)) / rho
        A, L = A * s, L * s
        # keep the true state bounded too, so containment is not lost in roundoff
        if np.max(np.abs(np.linalg.eigvals(A))) < 1.0:
            break
    W = rng.uniform(-1, 1, size=(n, n))
    V = rng.uniform(-1, 1, size=(m, m))
    Gamma = rng.uniform(-1, 1, size=(int(rng.integers(1, 3)), n))
    w = (-rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n))
    v = (-rng.uniform(0.1, 1, m), rng.uniform(0.1, 1, m))
    plant = make_plant(A, C, W, V, Gamma, x0=(np.zeros(n), np.zeros(n)), w=w, v=v)
    return plant, L


@pytest.fixture(scope="session")
def market():
    return load_scenario(bundled_path("market5.cfg"))


@pytest.fixture(scope="session")
def published_design(market):
    return load_fixture_design(market.plant, market.gain.L, market.gain.alpha)


@pytest.fixture(scope="session")
def market_np(market):
    from gpobs.synthesis import SynthesisOptions, SynthesisProblem, synth_nonprivate
    return synth_nonprivate(SynthesisProblem(market.plant, None, SynthesisOptions(mask=market.mask)))


@pytest.fixture(scope="session")
def scalar():
    return load_scenario(bundled_path("scalar.cfg"))


def scalar_plant(a, c=1.0, w=1.0, v=1.0, dw=1.0, dv=1.0, x0=(0.0, 0.0)):
    return make_plant([[a]], [[c]], [[w]], [[v]], [[1.0]], x0=x0, w=(-dw / 2, dw / 2), v=(-dv / 2, dv / 2))


__all__ = ["make_plant", "random_stable", "scalar_plant", "ObserverDesign", "PrivacyBudget"]
