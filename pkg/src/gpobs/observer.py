"""Interval framer: plant co-simulation, the framer recursion and the published mechanism."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IntervalError, NoiseBoundError
from .matops import as_matrix, as_vector, split
from .plant import IntervalVector, PlantModel

MAX_HORIZON = 10**6

SYNTHESIZED = "synthesized"
LOADED_FIXTURE = "loaded-fixture"
NON_PRIVATE = "non-private"
PROVENANCES = (SYNTHESIZED, LOADED_FIXTURE, NON_PRIVATE)


@dataclass(frozen=True)
class ObserverDesign:
    """Observer gain ``L`` and perturbation factor ``alpha`` plus certified levels.

    ``gamma``/``eta``/``Q`` are ``None`` for a design that has not been
    certified yet (any gain still yields a valid framer).
    """

    L: np.ndarray
    alpha: float = 1.0
    gamma: float | None = None
    eta: float | None = None
    Q: np.ndarray | None = None
    provenance: str = SYNTHESIZED

    def __post_init__(self):
        L = as_matrix(self.L, "L")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        for key in ("gamma", "eta"):
            val = getattr(self, key)
            if val is not None and not val > 0:
                raise ValueError(f"{key} must be positive, got {val}")
        if self.Q is not None:
            Q = as_vector(self.Q, "Q")
            if np.any(Q <= 0):
                raise ValueError("certificate Q must have positive diagonal")
            object.__setattr__(self, "Q", Q)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def L_tilde(self):
        if self.Q is None:
            return None
        return self.Q[:, None] * self.L

    @property
    def beta(self):
        return None if self.gamma is None else self.gamma * self.alpha

    @property
    def certified(self) -> bool:
        return self.gamma is not None and self.eta is not None


class Framer:
    """Precomputed splittings of ``A - L C``, ``W`` and ``L V`` for one plant/design pair."""

    def __init__(self, plant: PlantModel, design: ObserverDesign):
        L = design.L
        if L.shape != (plant.n, plant.m):
            raise DimensionError(f"gain has shape {L.shape}, expected {(plant.n, plant.m)}")
        self.plant = plant
        self.L = L
        self.alpha = float(design.alpha)
        acl = split(plant.A - L @ plant.C)
        wsp = split(plant.W)
        lv = split(L @ plant.V)
        self.P, self.N = acl.plus, acl.minus
        w_lo, w_hi = plant.w_bounds.lo, plant.w_bounds.hi
        v_lo, v_hi = self.alpha * plant.v_bounds.lo, self.alpha * plant.v_bounds.hi
        self.c_lo = wsp.plus @ w_lo - wsp.minus @ w_hi + lv.minus @ v_lo - lv.plus @ v_hi
        self.c_hi = wsp.plus @ w_hi - wsp.minus @ w_lo + lv.minus @ v_hi - lv.plus @ v_lo
        g = split(plant.Gamma)
        self.G_plus, self.G_minus = g.plus, g.minus

    def step(self, x_lo, x_hi, y):
        Ly = self.L @ y
        lo = self.P @ x_lo - self.N @ x_hi + Ly + self.c_lo
        hi = self.P @ x_hi - self.N @ x_lo + Ly + self.c_hi
        return lo, hi

    def output(self, x_lo, x_hi):
        return (self.G_plus @ x_lo - self.G_minus @ x_hi,
                self.G_plus @ x_hi - self.G_minus @ x_lo)

    def run(self, ys):
        """Framer states for ``k = 0..K-1`` driven by measurements ``ys`` (K x m)."""
        ys = np.asarray(ys, dtype=float)
        K = ys.shape[0]
        n = self.plant.n
        x_lo = np.empty((K, n))
        x_hi = np.empty((K, n))
        lo, hi = self.plant.x0.lo.copy(), self.plant.x0.hi.copy()
        for k in range(K):
            x_lo[k], x_hi[k] = lo, hi
            lo, hi = self.step(lo, hi, ys[k])
        return x_lo, x_hi


def framer_step(plant: PlantModel, design: ObserverDesign, x_lo, x_hi, y):
    """One step of the framer recursion, returning the next ``(x_lo, x_hi)``."""
    x_lo = as_vector(x_lo, "x_lo")
    x_hi = as_vector(x_hi, "x_hi")
    y = as_vector(y, "y")
    if x_lo.shape != (plant.n,) or x_hi.shape != (plant.n,):
        raise DimensionError(f"framer state must have length {plant.n}")
    if y.shape != (plant.m,):
        raise DimensionError(f"measurement has length {y.shape[0]}, expected {plant.m}")
    if np.any(x_lo > x_hi):
        raise IntervalError("x_lo > x_hi")
    return Framer(plant, design).step(x_lo, x_hi, y)


@dataclass(frozen=True)
class NoiseRecord:
    """Initial state and noise sequences driving one simulation.

    ``va`` is the injected perturbation; the measurement sees ``v + va``.
    """

    x0: np.ndarray
    w: np.ndarray
    v: np.ndarray
    va: np.ndarray

    @property
    def horizon(self):
        return self.w.shape[0]


def make_rng(seed, stream=0):
    """Counter-based generator for ``(seed, stream)``; streams never overlap."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(plant: PlantModel, horizon, alpha=1.0, seed=0, perturb=True) -> NoiseRecord:
    """Uniform admissible noise; ``v + va`` is drawn uniformly from ``[alpha v_lo, alpha v_hi]``.

    The plant stream (x0, w, v) does not depend on ``alpha`` or ``perturb``,
    so runs sharing a seed share the true state trajectory.
    """
    rng = make_rng(seed, 0)
    x0 = plant.x0.lo + plant.x0.widths * rng.random(plant.n)
    w = plant.w_bounds.lo + plant.w_bounds.widths * rng.random((horizon, plant.n_w))
    v = plant.v_bounds.lo + plant.v_bounds.widths * rng.random((horizon, plant.n_v))
    if perturb:
        prng = make_rng(seed, 1)
        s = alpha * plant.v_bounds.lo + alpha * plant.v_bounds.widths * prng.random((horizon, plant.n_v))
        va = s - v
    else:
        va = np.zeros_like(v)
    return NoiseRecord(x0=x0, w=w, v=v, va=va)


def _check_noise(plant, noise, alpha, horizon):
    if noise.w.shape != (horizon, plant.n_w) or noise.v.shape != (horizon, plant.n_v) \
            or noise.va.shape != (horizon, plant.n_v) or noise.x0.shape != (plant.n,):
        raise DimensionError("noise record does not match plant dimensions / horizon")
    if not plant.x0.contains(noise.x0):
        raise NoiseBoundError("initial state outside [x0_lo, x0_hi]", step=0)
    wb, vb = plant.w_bounds, plant.v_bounds
    bad_w = np.any((noise.w < wb.lo) | (noise.w > wb.hi), axis=1)
    bad_v = np.any((noise.v < vb.lo) | (noise.v > vb.hi), axis=1)
    s = noise.v + noise.va
    tol = 1e-12 * (1.0 + np.abs(alpha * np.concatenate([vb.lo, vb.hi])).max())
    bad_s = np.any((s < alpha * vb.lo - tol) | (s > alpha * vb.hi + tol), axis=1)
    bad = bad_w | bad_v | bad_s
    if np.any(bad):
        raise NoiseBoundError("noise sample outside its bounds", step=int(np.argmax(bad)))


@dataclass(frozen=True)
class FramerTrajectory:
    """Framer bounds (and optionally the true trajectory) for steps ``0..K-1``."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    x_true: np.ndarray | None = None
    y: np.ndarray | None = None
    z_true: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("x_lo", "x_hi", "z_lo", "z_hi", "x_true", "y", "z_true"):
            a = getattr(self, key)
            if a is not None:
                a = np.array(a, dtype=float)
                a.setflags(write=False)
                object.__setattr__(self, key, a)

    @property
    def horizon(self):
        return self.x_lo.shape[0]

    @property
    def x_width(self):
        return self.x_hi - self.x_lo

    @property
    def z_width(self):
        return self.z_hi - self.z_lo

    def containment_slack(self) -> float:
        """Smallest signed distance of the true state/output to its framer (>= 0 when framed)."""
        if self.x_true is None:
            raise ValueError("trajectory has no true state")
        parts = [self.x_true - self.x_lo, self.x_hi - self.x_true,
                 self.z_true - self.z_lo, self.z_hi - self.z_true]
        return float(min(p.min() for p in parts))


def simulate(plant: PlantModel, design: ObserverDesign, horizon, seed=0, noise: NoiseRecord | None = None,
             perturb=None) -> FramerTrajectory:
    """Co-simulate the plant and the framer for ``horizon`` steps.

    Without ``noise`` the sequences are sampled with :func:`sample_noise`;
    non-private designs get no injected perturbation unless ``perturb`` says otherwise.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > MAX_HORIZON:
        raise ValueError(f"horizon capped at {MAX_HORIZON}")
    if noise is None:
        if perturb is None:
            perturb = design.provenance != NON_PRIVATE
        noise = sample_noise(plant, horizon, design.alpha, seed, perturb=perturb)
    _check_noise(plant, noise, design.alpha, horizon)
    fr = Framer(plant, design)
    A, C, W, V = plant.A, plant.C, plant.W, plant.V
    xs = np.empty((horizon, plant.n))
    x = noise.x0.copy()
    for k in range(horizon):
        xs[k] = x
        x = A @ x + W @ noise.w[k]
    ys = xs @ C.T + (noise.v + noise.va) @ V.T
    x_lo, x_hi = fr.run(ys)
    z_lo, z_hi = fr.output(x_lo.T, x_hi.T)
    return FramerTrajectory(x_lo=x_lo, x_hi=x_hi, z_lo=z_lo.T, z_hi=z_hi.T, x_true=xs, y=ys,
                            z_true=xs @ plant.Gamma.T, meta={"seed": seed, "alpha": design.alpha})


def mechanism(plant: PlantModel, design: ObserverDesign, ys):
    """Deterministic map from a measurement sequence to the published intervals ``[z_lo_k, z_hi_k]``."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != plant.m:
        raise DimensionError(f"measurements have length {ys.shape[1]}, expected {plant.m}")
    fr = Framer(plant, design)
    x_lo, x_hi = fr.run(ys)
    z_lo, z_hi = fr.output(x_lo.T, x_hi.T)
    return [IntervalVector(lo, hi) for lo, hi in zip(z_lo.T, z_hi.T)]


def trajectory_header(n_z):
    cols = ["k"]
    for j in range(n_z):
        cols += [f"z_true_{j}", f"z_lo_{j}", f"z_hi_{j}", f"width_{j}"]
    return cols


def write_trajectory_csv(traj: FramerTrajectory, path):
    """CSV with columns ``k, z_true_j, z_lo_j, z_hi_j, width_j`` for every output ``j``."""
    n_z = traj.z_lo.shape[1]
    width = traj.z_width
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(n_z))
        for k in range(traj.horizon):
            row = [k]
            for j in range(n_z):
                zt = traj.z_true[k, j] if traj.z_true is not None else float("nan")
                row += [repr(float(zt)), repr(float(traj.z_lo[k, j])), repr(float(traj.z_hi[k, j])),
                        repr(float(width[k, j]))]
            w.writerow(row)
