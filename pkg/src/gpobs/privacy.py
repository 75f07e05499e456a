"""Empirical audit of guaranteed privacy and a bounded-noise DP-style baseline."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import hinf
from .observer import NON_PRIVATE, NoiseRecord, ObserverDesign, make_rng, mechanism, sample_noise, simulate
from .plant import IntervalVector, PlantModel, PrivacyBudget

BOUNDARY = "boundary"
INTERIOR = "interior"
SINGLE_AGENT = "single-agent"
MODES = (BOUNDARY, INTERIOR, SINGLE_AGENT)

MAX_CORNER_DIM = 8
ADJ_STREAM = 2
DP_STREAM = 3


@dataclass(frozen=True)
class AdjacentPair:
    y: np.ndarray
    y_prime: np.ndarray
    mode: str = BOUNDARY

    @property
    def deviation_norms(self):
        return np.linalg.norm(self.y_prime - self.y, axis=1)


def _directions(rng, shape):
    d = rng.standard_normal(shape)
    nrm = np.linalg.norm(d, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return d / nrm


def gen_adjacent(plant: PlantModel, design: ObserverDesign, seed, rho, mode=BOUNDARY, horizon=100,
                 agent=0) -> AdjacentPair:
    """Measurements ``y`` of a simulated run and a neighbour ``y' = y + d`` with ``||d_k||_2 <= rho``.

    ``agent`` (0-based) selects the output block perturbed in single-agent mode.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    y = simulate(plant, design, horizon, seed=seed).y
    rng = make_rng(seed, ADJ_STREAM)
    K, m = y.shape
    if mode == SINGLE_AGENT:
        if not 0 <= agent < len(plant.output_blocks):
            raise ValueError(f"agent {agent} out of range (plant has {len(plant.output_blocks)} blocks)")
        a, b = plant.output_blocks[agent]
        d = np.zeros((K, m))
        d[:, a:b] = rho * _directions(rng, (K, b - a))
    else:
        d = rho * _directions(rng, (K, m))
        if mode == INTERIOR:
            d *= rng.random((K, 1)) ** (1.0 / m)
    return AdjacentPair(y=y, y_prime=y + d, mode=mode)


def _box_corners(lo, hi):
    """All ``2^d`` corners of each box; ``lo, hi`` have shape ``(K, d)``."""
    d = lo.shape[1]
    sel = np.array(list(itertools.product((0, 1), repeat=d)), dtype=bool)
    return np.where(sel[None, :, :], hi[:, None, :], lo[:, None, :])


def corner_distance(lo, hi, lo2, hi2):
    """Per-step max of ``||q - q'||_2`` over corner pairs and the two centres."""
    lo, hi, lo2, hi2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (lo, hi, lo2, hi2))
    d = lo.shape[1]
    if d > MAX_CORNER_DIM:
        raise ValueError(f"corner audit limited to dim z <= {MAX_CORNER_DIM}")
    c1, c2 = _box_corners(lo, hi), _box_corners(lo2, hi2)
    out = np.empty(lo.shape[0])
    chunk = max(1, 2 ** 22 // (4 ** d * d))
    for s in range(0, lo.shape[0], chunk):
        diff = c1[s:s + chunk, :, None, :] - c2[s:s + chunk, None, :, :]
        out[s:s + chunk] = np.sqrt((diff * diff).sum(axis=-1)).max(axis=(1, 2))
    centre = np.linalg.norm(0.5 * (lo + hi) - 0.5 * (lo2 + hi2), axis=1)
    return np.maximum(out, centre)


def bound_distance(lo, hi, lo2, hi2):
    """Upper bound ``||c - c'|| + (||w|| + ||w'||) / 2`` used when corners are too many."""
    lo, hi, lo2, hi2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (lo, hi, lo2, hi2))
    centre = np.linalg.norm(0.5 * (lo + hi) - 0.5 * (lo2 + hi2), axis=1)
    return centre + 0.5 * (np.linalg.norm(hi - lo, axis=1) + np.linalg.norm(hi2 - lo2, axis=1))


@dataclass
class AuditReport:
    pairs: int
    horizon: int
    epsilon: float
    delta: float
    rho: float
    mode: str
    method: str
    per_step_max: np.ndarray
    violating_pairs: int
    violating_steps: int
    budget_lhs: float | None = None
    budget_residual: float | None = None
    width_stats: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return float(self.per_step_max.max()) if self.per_step_max.size else 0.0

    @property
    def violations(self) -> int:
        return self.violating_pairs

    @property
    def flagged(self) -> bool:
        return self.method != "corners"

    def lines(self):
        out = [
            f"pairs: {self.pairs}",
            f"horizon: {self.horizon}",
            f"mode: {self.mode}",
            f"method: {self.method}",
            f"epsilon: {self.epsilon!r}",
            f"delta: {self.delta!r}",
            f"rho: {self.rho!r}",
            f"worst_scaled_distance: {self.worst!r}",
            f"violating_pairs: {self.violating_pairs}",
            f"violating_steps: {self.violating_steps}",
        ]
        if self.budget_lhs is not None:
            out += [f"budget_lhs: {self.budget_lhs!r}", f"budget_target: {self.delta * math.exp(-self.epsilon)!r}",
                    f"budget_residual: {self.budget_residual!r}"]
        for key in sorted(self.width_stats):
            out.append(f"width_{key}: {self.width_stats[key]!r}")
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "max_scaled_distance", "delta"])
            for k, v in enumerate(self.per_step_max):
                w.writerow([k, repr(float(v)), repr(float(self.delta))])


def _stack(intervals):
    return np.array([iv.lo for iv in intervals]), np.array([iv.hi for iv in intervals])


def audit_guaranteed(plant: PlantModel, design: ObserverDesign, budget: PrivacyBudget, pairs=100, horizon=100,
                     seed=0, mode=BOUNDARY, agent=0, sigma="max", literal=False) -> AuditReport:
    """Worst ``e^eps ||q - q'||_2`` over the published boxes of adjacent measurement pairs.

    Pair ``i`` uses seed ``seed + i``. A pair violates the budget when any step
    exceeds ``delta``.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if not design.certified:
        raise ValueError("audit needs a certified design (gamma and eta set)")
    use_corners = plant.n_z <= MAX_CORNER_DIM
    dist_fn = corner_distance if use_corners else bound_distance
    scale = math.exp(budget.epsilon)
    per_step = np.zeros(horizon)
    bad_pairs = bad_steps = 0
    for i in range(pairs):
        pair = gen_adjacent(plant, design, seed + i, budget.rho, mode=mode, horizon=horizon, agent=agent)
        z = _stack(mechanism(plant, design, pair.y))
        zp = _stack(mechanism(plant, design, pair.y_prime))
        dist = scale * dist_fn(z[0], z[1], zp[0], zp[1])
        per_step = np.maximum(per_step, dist)
        over = dist > budget.delta
        bad_steps += int(over.sum())
        bad_pairs += int(over.any())
    lhs = hinf.privacy_constraint_lhs(plant, design, budget, sigma=sigma, literal=literal)
    return AuditReport(pairs=pairs, horizon=horizon, epsilon=budget.epsilon, delta=budget.delta, rho=budget.rho,
                       mode=mode, method="corners" if use_corners else "centre-width-bound",
                       per_step_max=per_step, violating_pairs=bad_pairs, violating_steps=bad_steps,
                       budget_lhs=lhs, budget_residual=lhs - budget.target)


def truncated_laplace(rng, shape, support, scale):
    """Symmetric Laplace samples conditioned on ``[-support, support]`` (inverse CDF)."""
    if support == 0:
        return np.zeros(shape)
    r = rng.random(shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    mag = -scale * np.log1p(-r * -np.expm1(-support / scale))
    return sign * np.minimum(mag, support)


def dp_plant(plant: PlantModel, support) -> PlantModel:
    """Plant whose measurement noise is ``[v; u]`` with ``u`` in ``[-s, s]`` entering through ``I``."""
    m = plant.m
    V = np.hstack([plant.V, np.eye(m)])
    vb = IntervalVector(np.concatenate([plant.v_bounds.lo, np.full(m, -support)]),
                        np.concatenate([plant.v_bounds.hi, np.full(m, support)]))
    return plant.with_bounds(v_bounds=vb, V=V)


def dp_baseline(plant: PlantModel, L, support, horizon=100, seed=0, scale=None):
    """Framer run on measurements perturbed by i.i.d. truncated-Laplace noise of the given support.

    The framer's noise bounds are widened by ``[-support, support]`` so it still
    frames the state. The plant noise stream matches :func:`simulate` with
    the same seed, so NP and DP runs share their true trajectory.
    """
    if support < 0:
        raise ValueError("support must be nonnegative")
    if scale is None:
        scale = support / 2.0
    if support > 0 and not scale > 0:
        raise ValueError("Laplace scale must be positive")
    base = sample_noise(plant, horizon, 1.0, seed, perturb=False)
    u = truncated_laplace(make_rng(seed, DP_STREAM), (horizon, plant.m), support, scale)
    aug = dp_plant(plant, support)
    noise = NoiseRecord(x0=base.x0, w=base.w, v=np.hstack([base.v, u]), va=np.zeros((horizon, aug.n_v)))
    traj = simulate(aug, ObserverDesign(L, 1.0, provenance=NON_PRIVATE), horizon, seed=seed, noise=noise)
    traj.meta.update(support=support, scale=scale)
    return traj
