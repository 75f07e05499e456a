"""Error-system gains, LMI certificates with diagonal storage, and accuracy loss.

The width error ``e_{k+1} = |A - L C| e_k + Lambda delta_lambda`` is an
internally nonnegative system, so its l2 gain is attained at zero frequency
and equals ``sigma_max((I - |A - LC|)^{-1} Lambda)``. The interval-centre
deviation obeys ``d_{k+1} = (A - L C) d_k + L (y_k - y'_k)``, which has no sign
structure; its gain is found by a frequency sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InstabilityError
from .matops import (PD_MARGIN, as_matrix, as_vector, is_schur_stable, sigma_max, sigma_min,
                     solve, spectral_radius_nonneg, sym_eig_min)
from .observer import ObserverDesign
from .plant import PlantModel, PrivacyBudget

STABILITY = "stability"
PRIVACY = "privacy"
CERT_MARGIN = 0.02
LEVEL_FLOOR = 1e-6  # certified levels are kept above this so min_eig clears the PD margin
N_GRID = 720
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ErrorSystem:
    A_tilde: np.ndarray
    Lambda: np.ndarray
    delta_lambda: np.ndarray
    delta_w: np.ndarray
    delta_v: np.ndarray
    alpha: float = 1.0

    @property
    def n(self):
        return self.A_tilde.shape[0]


def build_error_system(plant: PlantModel, design: ObserverDesign) -> ErrorSystem:
    L = design.L
    if L.shape != (plant.n, plant.m):
        raise DimensionError(f"gain has shape {L.shape}, expected {(plant.n, plant.m)}")
    At = np.abs(plant.A - L @ plant.C)
    Lam = np.hstack([np.abs(plant.W), np.abs(L @ plant.V)])
    dl = np.concatenate([plant.delta_w, design.alpha * plant.delta_v])
    assert np.all(At >= 0) and np.all(Lam >= 0) and np.all(dl >= 0)
    return ErrorSystem(At, Lam, dl, plant.delta_w.copy(), plant.delta_v.copy(), float(design.alpha))


def error_widths(err: ErrorSystem, e0, horizon):
    """Autonomous width recursion for ``k = 0..horizon-1`` (rows)."""
    e = as_vector(e0, "e0").copy()
    drive = err.Lambda @ err.delta_lambda
    out = np.empty((horizon, err.n))
    for k in range(horizon):
        out[k] = e
        e = err.A_tilde @ e + drive
    return out


def gamma_direct(err: ErrorSystem) -> float:
    """Exact l2 gain ``sigma_max((I - A~)^{-1} Lambda)`` of the width error system."""
    rho = spectral_radius_nonneg(err.A_tilde)
    if rho >= 1.0:
        raise InstabilityError(f"error system unstable: spectral radius {rho:.6g} >= 1")
    G = solve(np.eye(err.n) - err.A_tilde, err.Lambda)
    return sigma_max(G)


# ---------------------------------------------------------------------------
# frequency sweep for the centre-deviation gain
# ---------------------------------------------------------------------------

def _resolvent_gains(Acl, B, thetas):
    """``sigma_max((e^{i theta} I - Acl)^{-1} B)`` for each theta via the real 2n x 2n embedding."""
    n, m = B.shape
    T = len(thetas)
    c = np.cos(thetas)[:, None, None]
    s = np.sin(thetas)[:, None, None]
    eye = np.eye(n)
    Mr = c * eye - Acl
    Mi = s * eye
    aug = np.block([[Mr, -Mi], [Mi, Mr]])
    rhs = np.broadcast_to(np.vstack([B, np.zeros((n, m))]), (T, 2 * n, m))
    try:
        X = np.linalg.solve(aug, rhs)
    except np.linalg.LinAlgError:
        for t in thetas:
            M = np.block([[np.cos(t) * eye - Acl, -np.sin(t) * eye], [np.sin(t) * eye, np.cos(t) * eye - Acl]])
            if np.linalg.matrix_rank(M) < 2 * n:
                raise InstabilityError(f"resolvent singular at theta={t:.6g}", theta=float(t)) from None
        raise
    Xr, Xi = X[:, :n], X[:, n:]
    R = np.concatenate([np.concatenate([Xr, -Xi], axis=2), np.concatenate([Xi, Xr], axis=2)], axis=1)
    G = R @ np.swapaxes(R, 1, 2) if n <= m else np.swapaxes(R, 1, 2) @ R
    lam = np.linalg.eigvalsh(G)[:, -1]
    return np.sqrt(np.maximum(lam, 0.0))


def _golden_max(f, a, b, rtol):
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > rtol * max(1.0, abs(a) + abs(b)):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def hinf_norm(Acl, B, n_grid=N_GRID, rtol=1e-6, n_refine=3):
    """Peak gain of ``x+ = Acl x + B u`` over the unit circle.

    Returns ``(gain, theta)``; the grid maximum is refined by golden-section
    search around the ``n_refine`` largest local maxima of the grid.
    """
    Acl = as_matrix(Acl, "Acl")
    B = as_matrix(B, "B")
    if not np.any(B):
        return 0.0, 0.0
    if not is_schur_stable(Acl):
        raise InstabilityError("closed loop A - L C is not Schur stable")
    thetas = np.linspace(0.0, math.pi, n_grid)
    g = _resolvent_gains(Acl, B, thetas)
    padded = np.concatenate([[-np.inf], g, [-np.inf]])
    peaks = [i for i in range(n_grid) if padded[i + 1] >= padded[i] and padded[i + 1] >= padded[i + 2]]
    peaks.sort(key=lambda i: (-g[i], i))
    best_val, best_theta = float(g.max()), float(thetas[int(np.argmax(g))])

    def f(t):
        return float(_resolvent_gains(Acl, B, np.array([t]))[0])

    for i in peaks[:n_refine]:
        a = thetas[max(i - 1, 0)]
        b = thetas[min(i + 1, n_grid - 1)]
        t, val = _golden_max(f, a, b, rtol)
        if val > best_val:
            best_val, best_theta = val, t
    return best_val, best_theta


def eta_hinf(plant: PlantModel, design: ObserverDesign) -> float:
    """Gain from per-step measurement deviation to interval-centre deviation."""
    return hinf_norm(plant.A - design.L @ plant.C, design.L)[0]


# ---------------------------------------------------------------------------
# LMIs with diagonal storage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LmiReport:
    which: str
    level: float
    min_eig: float
    feasible: bool
    Q: np.ndarray
    L_tilde: np.ndarray
    margin: float = PD_MARGIN
    iterations: int = 0

    def lines(self, prefix=""):
        p = f"{prefix}{self.which}"
        return [
            f"{p}_level: {self.level!r}",
            f"{p}_min_eig: {self.min_eig!r}",
            f"{p}_feasible: {str(self.feasible).lower()}",
            f"{p}_Q: " + " ".join(repr(float(q)) for q in self.Q),
            f"{p}_iterations: {self.iterations}",
        ]


def _diag_vector(Q, n):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 2:
        if Q.shape != (n, n):
            raise DimensionError(f"Q has shape {Q.shape}, expected {(n, n)}")
        if np.any(Q - np.diag(np.diag(Q))):
            raise ValueError("certificate Q must be diagonal")
        Q = np.diag(Q)
    Q = Q.reshape(-1)
    if Q.shape != (n,):
        raise DimensionError(f"Q has length {Q.shape[0]}, expected {n}")
    if np.any(Q <= 0):
        raise ValueError("certificate Q must have a positive diagonal")
    return Q


def _assemble(Qd, QK, QB, level):
    """Symmetric matrix ``[[Q, QK, QB, 0], [*, Q, 0, I], [*, *, level I, 0], [*, *, *, level I]]``."""
    n = Qd.shape[0]
    p = QB.shape[1]
    N = 3 * n + p
    M = np.zeros((N, N))
    M[:n, :n] = np.diag(Qd)
    M[:n, n:2 * n] = QK
    M[:n, 2 * n:2 * n + p] = QB
    M[n:2 * n, n:2 * n] = np.diag(Qd)
    M[n:2 * n, 2 * n + p:] = np.eye(n)
    M[2 * n:, 2 * n:] = level * np.eye(n + p)
    return np.triu(M) + np.triu(M, 1).T


def stability_lmi(plant: PlantModel, Q, L_tilde, gamma):
    Qd = _diag_vector(Q, plant.n)
    Lt = as_matrix(L_tilde, "L_tilde")
    QA = Qd[:, None] * plant.A
    QB = np.hstack([Qd[:, None] * np.abs(plant.W), np.abs(Lt @ plant.V)])
    return _assemble(Qd, np.abs(QA - Lt @ plant.C), QB, gamma)


def privacy_lmi(plant: PlantModel, Q, L_tilde, eta):
    Qd = _diag_vector(Q, plant.n)
    Lt = as_matrix(L_tilde, "L_tilde")
    return _assemble(Qd, Qd[:, None] * plant.A - Lt @ plant.C, Lt, eta)


def check_stability_lmi(plant, Q, L_tilde, gamma, margin=PD_MARGIN) -> LmiReport:
    """Min eigenvalue and feasibility of the stability / gain LMI at level ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    Qd = _diag_vector(Q, plant.n)
    lam = sym_eig_min(stability_lmi(plant, Qd, L_tilde, gamma))
    return LmiReport(STABILITY, float(gamma), lam, lam > margin, Qd, as_matrix(L_tilde), margin)


def check_privacy_lmi(plant, Q, L_tilde, eta, margin=PD_MARGIN) -> LmiReport:
    if not eta > 0:
        raise ValueError("eta must be positive")
    Qd = _diag_vector(Q, plant.n)
    lam = sym_eig_min(privacy_lmi(plant, Qd, L_tilde, eta))
    return LmiReport(PRIVACY, float(eta), lam, lam > margin, Qd, as_matrix(L_tilde), margin)


def _lmi_data(plant, design, which):
    L = design.L
    if which == STABILITY:
        return np.abs(plant.A - L @ plant.C), np.hstack([np.abs(plant.W), np.abs(L @ plant.V)])
    if which == PRIVACY:
        return plant.A - L @ plant.C, L
    raise ValueError(f"unknown LMI {which!r}")


def find_certificate(plant, design, which, level, iters=500, margin=PD_MARGIN) -> LmiReport:
    """Search a diagonal ``Q`` making the chosen LMI positive definite at ``level``.

    ``L`` is held fixed and ``L~ = Q L``, so the LMI is affine in the diagonal
    of ``Q`` and its smallest eigenvalue is concave. Projected subgradient
    ascent from ``Q = max(1, 1/level) I`` with steps ``c / sqrt(t)`` along the normalised
    subgradient, ``c`` being the initial ``|min_eig|``, then a backtracking
    ascent in ``log Q`` if that did not reach the margin.
    """
    if not level > 0:
        raise ValueError("level must be positive")
    K, B = _lmi_data(plant, design, which)
    n, p = B.shape[0], B.shape[1]
    q = np.full(n, max(1.0, 1.0 / level))

    def eig(qv):
        M = _assemble(qv, qv[:, None] * K, qv[:, None] * B, level)
        w, V = np.linalg.eigh(M)
        return w[0], V[:, 0]

    lam, v = eig(q)
    best_lam, best_q = lam, q.copy()
    c = max(abs(lam), 0.1 * q[0])
    t = 0
    while best_lam <= margin and t < iters:
        t += 1
        a, b, cc = v[:n], v[n:2 * n], v[2 * n:2 * n + p]
        grad = a * a + b * b + 2.0 * a * (K @ b) + 2.0 * a * (B @ cc)
        gn = float(np.linalg.norm(grad))
        if gn == 0.0:
            break
        q = np.maximum(q + (c / math.sqrt(t)) * math.sqrt(n) * grad / gn, 1e-6)
        lam, v = eig(q)
        if lam > best_lam:
            best_lam, best_q = lam, q.copy()
    # multiplicative refinement: narrow feasible windows far from Q = I
    q, s = best_q.copy(), 0.5
    lam, v = eig(q)
    while best_lam <= margin and t < 2 * iters and s > 1e-8:
        t += 1
        a, b, cc = v[:n], v[n:2 * n], v[2 * n:2 * n + p]
        g = q * (a * a + b * b + 2.0 * a * (K @ b) + 2.0 * a * (B @ cc))
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        trial = q * np.exp(s * g / gn)
        lt, vt = eig(trial)
        if lt > lam:
            q, lam, v = trial, lt, vt
            s *= 1.5
            if lam > best_lam:
                best_lam, best_q = lam, q.copy()
        else:
            s *= 0.5
    check = check_stability_lmi if which == STABILITY else check_privacy_lmi
    rep = check(plant, best_q, best_q[:, None] * design.L, level, margin)
    return LmiReport(rep.which, rep.level, rep.min_eig, rep.feasible, rep.Q, rep.L_tilde, margin, t)


def direct_level(plant, design, which) -> float:
    if which == STABILITY:
        return gamma_direct(build_error_system(plant, design))
    return eta_hinf(plant, design)


def certify(plant, design, which, direct=None, margin=CERT_MARGIN, max_raises=25, iters=500):
    """Certificate at ``(1 + margin) * direct``, raising the level by that factor until feasible.

    Returns ``(report, raises)``; ``report.feasible`` is false if no level up to
    ``(1 + margin)^(max_raises + 1) * direct`` could be certified.
    """
    if direct is None:
        direct = direct_level(plant, design, which)
    level = max(direct, LEVEL_FLOOR) * (1.0 + margin)
    rep = find_certificate(plant, design, which, level, iters=iters)
    raises = 0
    while not rep.feasible and raises < max_raises:
        raises += 1
        level *= 1.0 + margin
        rep = find_certificate(plant, design, which, level, iters=iters)
    return rep, raises


def min_certified_level(plant, design, which, rtol=1e-3, iters=500):
    """Bisected smallest level at which :func:`find_certificate` succeeds."""
    lo = direct_level(plant, design, which)
    hi = max(lo, 1e-9) * 1.05
    while not find_certificate(plant, design, which, hi, iters=iters).feasible:
        lo, hi = hi, hi * 1.5
        if hi > 1e6 * max(lo, 1.0):
            return math.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if find_certificate(plant, design, which, mid, iters=iters).feasible:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# privacy budget
# ---------------------------------------------------------------------------

def privacy_constraint_lhs(plant, design, budget: PrivacyBudget, sigma="max", literal=False) -> float:
    """Left side of the budget inequality ``lhs <= exp(-eps) delta``.

    Default: ``sigma_max(|Gamma|) gamma ||[dw; alpha dv]|| + sigma_max(Gamma) eta rho``.
    ``literal=True`` multiplies the first term by an extra ``alpha``;
    ``sigma="min"`` uses smallest singular values instead.
    """
    if design.gamma is None or design.eta is None:
        raise ValueError("design carries no certified gamma/eta")
    sv = sigma_max if sigma == "max" else sigma_min
    if sigma not in ("max", "min"):
        raise ValueError("sigma must be 'max' or 'min'")
    dl = np.concatenate([plant.delta_w, design.alpha * plant.delta_v])
    first = sv(np.abs(plant.Gamma)) * design.gamma * float(np.linalg.norm(dl))
    if literal:
        first *= design.alpha
    return first + sv(plant.Gamma) * design.eta * budget.rho


def budget_residual(plant, design, budget, **kw) -> float:
    """``lhs - exp(-eps) delta``; nonpositive means the budget holds."""
    return privacy_constraint_lhs(plant, design, budget, **kw) - budget.target


# ---------------------------------------------------------------------------
# accuracy loss of the private design
# ---------------------------------------------------------------------------

def _accuracy_parts(plant, design):
    err = build_error_system(plant, design)
    if spectral_radius_nonneg(err.A_tilde) >= 1.0:
        raise InstabilityError("design is not stable")
    Wt = np.hstack([np.abs(plant.W), design.alpha * np.abs(design.L @ plant.V)])
    dwt = np.concatenate([plant.delta_w, plant.delta_v])
    steady = solve(np.eye(plant.n) - err.A_tilde, Wt @ dwt)
    return err.A_tilde, steady


def accuracy_error(plant, np_design, gp_design, k) -> float:
    """Closed-form ``||e^NP_k - e^GP_k||_inf`` of the published widths at step ``k``."""
    A_np, s_np = _accuracy_parts(plant, np_design)
    A_gp, s_gp = _accuracy_parts(plant, gp_design)
    e0 = plant.x0.widths
    I = np.eye(plant.n)
    Pn = np.linalg.matrix_power(A_np, int(k))
    Pg = np.linalg.matrix_power(A_gp, int(k))
    diff = (Pn - Pg) @ e0 + (I - Pn) @ s_np - (I - Pg) @ s_gp
    return float(np.max(np.abs(np.abs(plant.Gamma) @ diff)))


def accuracy_steady(plant, np_design, gp_design) -> float:
    _, s_np = _accuracy_parts(plant, np_design)
    _, s_gp = _accuracy_parts(plant, gp_design)
    return float(np.max(np.abs(np.abs(plant.Gamma) @ (s_np - s_gp))))


def accuracy_series(plant, np_design, gp_design, horizon):
    """Closed-form accuracy error for ``k = 0..horizon``."""
    return np.array([accuracy_error(plant, np_design, gp_design, k) for k in range(horizon + 1)])


def format_report(items) -> str:
    """``key: value`` lines from a mapping or a sequence of pairs/lines."""
    out = []
    for item in (items.items() if isinstance(items, dict) else items):
        if isinstance(item, str):
            out.append(item)
        else:
            key, val = item
            out.append(f"{key}: {val!r}" if isinstance(val, float) else f"{key}: {val}")
    return "\n".join(out) + "\n"
