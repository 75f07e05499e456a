"""Observer synthesis by derivative-free search with certificate recovery.

For a candidate gain the absolute values in the LMIs are evaluated exactly,
which turns the inner problem into direct gain computations (``gamma_direct``
for the width error system, a frequency sweep for the centre-deviation gain).
A compass search over the gain entries minimises the certified level; the
final design is certified by :func:`gpobs.hinf.certify`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import hinf
from .errors import InstabilityError, SynthesisError
from .matops import as_matrix, sigma_max, sigma_min, spectral_radius_nonneg
from .observer import LOADED_FIXTURE, NON_PRIVATE, SYNTHESIZED, ObserverDesign
from .plant import PlantModel, PrivacyBudget
from .scenario import dump_gain

log = logging.getLogger(__name__)

CERTIFIED = "certified"
INFEASIBLE_BUDGET = "infeasible-budget"
UNCERTIFIED = "uncertified"


@dataclass(frozen=True)
class SynthesisOptions:
    max_evals: int = 50_000
    seed: int = 0
    mask: np.ndarray | None = None
    alpha_range: tuple = (1e-3, 1e3)
    step0: float = 0.5
    step_min: float = 1e-6
    cert_margin: float = hinf.CERT_MARGIN
    sigma: str = "max"
    literal: bool = False
    alpha_tol: float = 1e-6

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError("iteration budget must be >= 1")
        lo, hi = self.alpha_range
        if not 0 < lo <= hi:
            raise ValueError("alpha range must be positive and ordered")


@dataclass(frozen=True)
class SynthesisProblem:
    plant: PlantModel
    budget: PrivacyBudget | None = None
    options: SynthesisOptions = field(default_factory=SynthesisOptions)


@dataclass
class SynthesisResult:
    design: ObserverDesign
    status: str
    objective_history: list
    evaluations: int
    gamma_direct: float
    eta_direct: float
    stability_cert: hinf.LmiReport
    privacy_cert: hinf.LmiReport
    lhs: float | None = None
    residual: float | None = None
    target: float | None = None

    @property
    def certificates(self):
        return self.stability_cert, self.privacy_cert

    def report_lines(self):
        d = self.design
        lines = [
            f"status: {self.status}",
            f"provenance: {d.provenance}",
            f"gamma: {d.gamma!r}",
            f"gamma_direct: {self.gamma_direct!r}",
            f"eta: {d.eta!r}",
            f"eta_direct: {self.eta_direct!r}",
            f"alpha: {float(d.alpha)!r}",
            f"beta: {d.beta!r}",
            f"evaluations: {self.evaluations}",
        ]
        if self.lhs is not None:
            lines += [f"budget_lhs: {self.lhs!r}", f"budget_target: {self.target!r}",
                      f"budget_residual: {self.residual!r}"]
        lines += self.stability_cert.lines() + self.privacy_cert.lines()
        return lines

    def gain_text(self):
        return dump_gain(self.design.L, self.design.alpha,
                         header=[f"status {self.status}", f"gamma {self.design.gamma!r}", f"eta {self.design.eta!r}"])


class _Param:
    """Gain parametrisation: entries sharing a nonnegative mask label share one value,
    negative labels pin the entry to zero."""

    def __init__(self, shape, mask=None):
        if mask is None:
            mask = np.arange(shape[0] * shape[1]).reshape(shape)
        mask = np.asarray(mask)
        if mask.shape != tuple(shape):
            raise ValueError(f"mask has shape {mask.shape}, expected {tuple(shape)}")
        if np.any(mask != np.round(mask)):
            raise ValueError("mask entries must be integers")
        mask = mask.astype(int)
        self.shape = tuple(shape)
        self.labels = sorted({int(x) for x in mask.ravel() if x >= 0})
        index = {lab: i for i, lab in enumerate(self.labels)}
        self.idx = np.array([index.get(int(x), -1) for x in mask.ravel()])

    @property
    def dim(self):
        return len(self.labels)

    def to_L(self, theta):
        flat = np.where(self.idx >= 0, np.append(theta, 0.0)[self.idx], 0.0)
        return flat.reshape(self.shape)

    def project(self, L):
        flat = np.asarray(L, dtype=float).ravel()
        theta = np.zeros(self.dim)
        for i in range(self.dim):
            theta[i] = flat[self.idx == i].mean()
        return theta


def _least_squares_gain(plant):
    # L minimising ||A - L C||_F
    sol, *_ = np.linalg.lstsq(plant.C.T, plant.A.T, rcond=None)
    return sol.T


class _Search:
    """Compass search with halving steps; ties go to the first candidate in row-major order."""

    def __init__(self, key_fn, opts: SynthesisOptions):
        self.key_fn = key_fn
        self.opts = opts
        self.evals = 0
        self.history = []

    def __call__(self, theta0):
        opts = self.opts
        theta = np.array(theta0, dtype=float)
        key = self.key_fn(theta)
        self.evals += 1
        step = opts.step0
        it = 0
        while step >= opts.step_min and self.evals < opts.max_evals:
            it += 1
            best_key, best_theta = key, None
            for i in range(theta.shape[0]):
                for sgn in (1.0, -1.0):
                    if self.evals >= opts.max_evals:
                        break
                    cand = theta.copy()
                    cand[i] += sgn * step
                    k = self.key_fn(cand)
                    self.evals += 1
                    if k < best_key:
                        best_key, best_theta = k, cand
            if best_theta is None:
                step *= 0.5
            else:
                theta, key = best_theta, best_key
            self.history.append((it, key))
        return theta, key


def _np_key(plant):
    def key(L):
        err = hinf.build_error_system(plant, ObserverDesign(L))
        rho = spectral_radius_nonneg(err.A_tilde)
        if rho >= 1.0:
            return (2, rho)
        return (0, hinf.gamma_direct(err))
    return key


def _history_gamma(history, margin):
    out = []
    for it, key in history:
        out.append((it, key[1] * (1 + margin) if key[0] == 0 else math.inf))
    return out


def _certify_design(plant, L, alpha, provenance, margin, gd=None, ed=None):
    design = ObserverDesign(L, alpha)
    if gd is None:
        gd = hinf.gamma_direct(hinf.build_error_system(plant, design))
    if ed is None:
        ed = hinf.eta_hinf(plant, design)
    stab, _ = hinf.certify(plant, design, hinf.STABILITY, gd, margin)
    priv, _ = hinf.certify(plant, design, hinf.PRIVACY, ed, margin)
    final = ObserverDesign(
        L, alpha,
        gamma=stab.level if stab.feasible else None,
        eta=priv.level if priv.feasible else None,
        Q=stab.Q if stab.feasible else None,
        provenance=provenance,
    )
    return final, stab, priv, gd, ed


def synth_nonprivate(problem: SynthesisProblem) -> SynthesisResult:
    """Minimise ``gamma_direct`` over the gain with no injected noise (``alpha = 1``).

    Searches from ``L = 0`` and from the least-squares fit of ``A`` against
    ``C``, keeping the better end point.
    """
    if problem.budget is not None:
        raise ValueError("synth_nonprivate expects a problem without privacy budget")
    plant, opts = problem.plant, problem.options
    param = _Param((plant.n, plant.m), opts.mask)
    raw_key = _np_key(plant)
    search = _Search(lambda th: raw_key(param.to_L(th)), opts)
    best = None
    for L0 in (np.zeros((plant.n, plant.m)), _least_squares_gain(plant)):
        theta, key = search(param.project(L0))
        if best is None or key < best[1]:
            best = (theta, key)
    theta, key = best
    if key[0] != 0:
        raise SynthesisError(f"no stabilising gain found; best spectral radius {key[1]:.6g}", best_radius=key[1])
    L = param.to_L(theta)
    design, stab, priv, gd, ed = _certify_design(plant, L, 1.0, NON_PRIVATE, opts.cert_margin, gd=key[1])
    status = CERTIFIED if design.certified else UNCERTIFIED
    return SynthesisResult(design, status, _history_gamma(search.history, opts.cert_margin), search.evals,
                           gd, ed, stab, priv)


class _PrivateObjective:
    def __init__(self, plant, budget, opts):
        self.plant, self.budget, self.opts = plant, budget, opts
        sv = sigma_max if opts.sigma == "max" else sigma_min
        self.s_abs = sv(np.abs(plant.Gamma))
        self.s_gam = sv(plant.Gamma)
        self.m = 1.0 + opts.cert_margin
        self.cache = {}

    def lhs(self, gd, ed, alpha):
        dl = np.concatenate([self.plant.delta_w, alpha * self.plant.delta_v])
        first = self.s_abs * self.m * gd * float(np.linalg.norm(dl))
        if self.opts.literal:
            first *= alpha
        return first + self.s_gam * self.m * ed * self.budget.rho

    def alpha_key(self, gd, ed, alpha):
        lhs = self.lhs(gd, ed, alpha)
        res = lhs - self.budget.target
        if res > 0:
            return (1, res, gd, lhs)
        return (0, gd, lhs)

    def best_alpha(self, gd, ed):
        """Golden-section search on log(alpha) over the allowed range."""
        lo, hi = (math.log(a) for a in self.opts.alpha_range)
        g = hinf._GOLDEN
        f = lambda la: self.alpha_key(gd, ed, math.exp(la))
        x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
        f1, f2 = f(x1), f(x2)
        while hi - lo > self.opts.alpha_tol:
            if f1 <= f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - g * (hi - lo)
                f1 = f(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + g * (hi - lo)
                f2 = f(x2)
        cands = [(f(lo), lo), (f1, x1), (f2, x2), (f(hi), hi)]
        k, la = min(cands, key=lambda c: c[0])
        return math.exp(la), k

    def evaluate(self, L):
        tag = L.tobytes()
        if tag in self.cache:
            return self.cache[tag]
        plant = self.plant
        design = ObserverDesign(L)
        err = hinf.build_error_system(plant, design)
        rho = spectral_radius_nonneg(err.A_tilde)
        if rho >= 1.0:
            out = ((2, rho), None, None, None)
        else:
            gd = hinf.gamma_direct(err)
            ed = hinf.hinf_norm(plant.A - L @ plant.C, L, n_refine=1)[0]
            alpha, key = self.best_alpha(gd, ed)
            out = (key, alpha, gd, ed)
        self.cache[tag] = out
        return out


def synth_private(problem: SynthesisProblem) -> SynthesisResult:
    """Minimise the certified ``gamma`` over ``(L, alpha)`` subject to the privacy budget.

    Infeasible candidates are ranked by budget residual, so when nothing is
    feasible the returned design is the smallest-residual one and the status
    is ``infeasible-budget``.
    """
    plant, budget, opts = problem.plant, problem.budget, problem.options
    if budget is None:
        raise ValueError("synth_private needs a privacy budget")
    if not budget.target > 0:
        raise ValueError("privacy target exp(-epsilon) * delta must be positive")
    param = _Param((plant.n, plant.m), opts.mask)
    obj = _PrivateObjective(plant, budget, opts)
    search = _Search(lambda th: obj.evaluate(param.to_L(th))[0], opts)
    try:
        np_res = synth_nonprivate(SynthesisProblem(plant, None, opts))
        starts = [np_res.design.L]
    except SynthesisError:
        starts = []
    starts += [np.zeros((plant.n, plant.m)), _least_squares_gain(plant)]
    best = None
    for L0 in starts:
        theta, key = search(param.project(L0))
        if best is None or key < best[1]:
            best = (theta, key)
    theta, key = best
    if key[0] == 2:
        raise SynthesisError(f"no stabilising gain found; best spectral radius {key[1]:.6g}", best_radius=key[1])
    L = param.to_L(theta)
    _, alpha, gd, ed = obj.evaluate(L)
    design, stab, priv, gd, ed = _certify_design(plant, L, alpha, SYNTHESIZED, opts.cert_margin, gd=gd,
                                                 ed=hinf.eta_hinf(plant, ObserverDesign(L)))
    lhs = residual = None
    if design.certified:
        lhs = hinf.privacy_constraint_lhs(plant, design, budget, sigma=opts.sigma, literal=opts.literal)
        residual = lhs - budget.target
    if key[0] == 1:
        status = INFEASIBLE_BUDGET
    elif design.certified and residual <= 0:
        status = CERTIFIED
    else:
        status = UNCERTIFIED
    if lhs is None:
        lhs = obj.lhs(gd, ed, alpha)
        residual = lhs - budget.target
    hist = [(it, k[1] * obj.m if k[0] == 0 else math.inf) for it, k in search.history]
    return SynthesisResult(design, status, hist, search.evals, gd, ed, stab, priv,
                           lhs=lhs, residual=residual, target=budget.target)


def load_fixture_design(plant: PlantModel, L, alpha=1.0, margin=hinf.CERT_MARGIN) -> ObserverDesign:
    """Design from a given gain: stability checked, certificates recovered, levels filled in."""
    L = as_matrix(L, "L")
    if L.shape != (plant.n, plant.m):
        raise ValueError(f"gain has shape {L.shape}, expected {(plant.n, plant.m)}")
    err = hinf.build_error_system(plant, ObserverDesign(L, alpha))
    rho = spectral_radius_nonneg(err.A_tilde)
    if rho >= 1.0:
        raise InstabilityError(f"unstable: spectral radius of |A - L C| is {rho:.6g}")
    design, stab, priv, _, _ = _certify_design(plant, L, alpha, LOADED_FIXTURE, margin)
    if not design.certified:
        log.warning("fixture gain could not be fully certified (stability %s, privacy %s)",
                    stab.feasible, priv.feasible)
    return design
