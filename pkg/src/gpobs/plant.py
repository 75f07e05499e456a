"""Per-agent bounded-error LTI blocks and the assembled global plant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, IntervalError
from .matops import as_matrix, as_vector, block_diag


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IntervalVector:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lo, "lo")
        hi = as_vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionError(f"interval bounds differ in length: {lo.shape[0]} vs {hi.shape[0]}")
        if np.any(lo > hi):
            raise IntervalError(f"lo > hi at index {int(np.argmax(lo > hi))}")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))

    def __len__(self):
        return self.lo.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def diam(self) -> float:
        return float(np.max(self.widths)) if len(self) else 0.0

    def contains(self, x, tol=0.0) -> bool:
        x = as_vector(x)
        return bool(np.all(self.lo - tol <= x) and np.all(x <= self.hi + tol))


@dataclass(frozen=True)
class PrivacyBudget:
    """Guaranteed-privacy parameters ``(epsilon, delta, rho)``."""

    epsilon: float
    delta: float
    rho: float

    def __post_init__(self):
        if not (self.epsilon >= 0 and self.delta >= 0):
            raise ValueError("epsilon and delta must be nonnegative")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def target(self) -> float:
        """Right-hand side ``exp(-epsilon) * delta`` of the budget inequality."""
        return math.exp(-self.epsilon) * self.delta


@dataclass
class AgentBlock:
    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    x0_lo: np.ndarray
    x0_hi: np.ndarray
    w_lo: np.ndarray
    w_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    couplings: Mapping[int, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.C = as_matrix(self.C, "C")
        self.W = as_matrix(self.W, "W")
        self.V = as_matrix(self.V, "V")
        for key in ("x0_lo", "x0_hi", "w_lo", "w_hi", "v_lo", "v_hi"):
            setattr(self, key, as_vector(getattr(self, key), key))
        self.couplings = {int(j): as_matrix(M, f"A{j}") for j, M in self.couplings.items()}
        n = self.A.shape[0]
        label = self.name or "agent"
        checks = [
            (self.A.shape == (n, n), f"A must be square, got {self.A.shape}"),
            (self.C.shape[1] == n, f"C has {self.C.shape[1]} columns, expected {n}"),
            (self.W.shape[0] == n, f"W has {self.W.shape[0]} rows, expected {n}"),
            (self.V.shape[0] == self.C.shape[0], f"V has {self.V.shape[0]} rows, expected {self.C.shape[0]}"),
            (self.x0_lo.shape == self.x0_hi.shape == (n,), "x0 bounds must have length n"),
            (self.w_lo.shape == self.w_hi.shape == (self.W.shape[1],), "w bounds must match W columns"),
            (self.v_lo.shape == self.v_hi.shape == (self.V.shape[1],), "v bounds must match V columns"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DimensionError(f"{label}: {msg}")
        for lo, hi, key in ((self.x0_lo, self.x0_hi, "x0"), (self.w_lo, self.w_hi, "w"), (self.v_lo, self.v_hi, "v")):
            if np.any(lo > hi):
                raise IntervalError(f"{label}: {key}_lo > {key}_hi at index {int(np.argmax(lo > hi))}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class PlantModel:
    """Global plant ``x+ = A x + W w``, ``y = C x + V v``, published output ``z = Gamma x``.

    ``state_blocks`` / ``output_blocks`` record the per-agent coordinate
    ranges (a single block when the plant was not assembled from agents).
    """

    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Gamma: np.ndarray
    x0: IntervalVector
    w_bounds: IntervalVector
    v_bounds: IntervalVector
    state_blocks: tuple = ()
    output_blocks: tuple = ()

    def __post_init__(self):
        A, C, W, V, G = (as_matrix(getattr(self, k), k) for k in ("A", "C", "W", "V", "Gamma"))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
        if W.shape[0] != n:
            raise DimensionError(f"W has {W.shape[0]} rows, expected {n}")
        if V.shape[0] != C.shape[0]:
            raise DimensionError(f"V has {V.shape[0]} rows, expected {C.shape[0]}")
        if G.shape[1] != n:
            raise DimensionError(f"Gamma has {G.shape[1]} columns, expected {n}")
        if len(self.x0) != n:
            raise DimensionError(f"x0 bounds have length {len(self.x0)}, expected {n}")
        if len(self.w_bounds) != W.shape[1]:
            raise DimensionError(f"w bounds have length {len(self.w_bounds)}, expected {W.shape[1]}")
        if len(self.v_bounds) != V.shape[1]:
            raise DimensionError(f"v bounds have length {len(self.v_bounds)}, expected {V.shape[1]}")
        for key, val in zip(("A", "C", "W", "V", "Gamma"), (A, C, W, V, G)):
            object.__setattr__(self, key, _frozen(val))
        if not self.state_blocks:
            object.__setattr__(self, "state_blocks", ((0, n),))
            object.__setattr__(self, "output_blocks", ((0, C.shape[0]),))

    n = property(lambda self: self.A.shape[0])
    m = property(lambda self: self.C.shape[0])
    n_w = property(lambda self: self.W.shape[1])
    n_v = property(lambda self: self.V.shape[1])
    n_z = property(lambda self: self.Gamma.shape[0])

    @property
    def delta_w(self):
        return self.w_bounds.widths

    @property
    def delta_v(self):
        return self.v_bounds.widths

    def with_bounds(self, x0=None, w_bounds=None, v_bounds=None, V=None):
        """Copy of the plant with some bounds (and optionally V) replaced."""
        return PlantModel(
            A=self.A, C=self.C, W=self.W, V=self.V if V is None else V, Gamma=self.Gamma,
            x0=self.x0 if x0 is None else x0,
            w_bounds=self.w_bounds if w_bounds is None else w_bounds,
            v_bounds=self.v_bounds if v_bounds is None else v_bounds,
            state_blocks=self.state_blocks, output_blocks=self.output_blocks,
        )


def assemble_global(agents: Sequence[AgentBlock], Gamma) -> PlantModel:
    """Stack agents into the global plant.

    ``C``, ``W`` and ``V`` become block diagonal; ``A`` carries each agent's
    own matrix on the diagonal and coupling ``A^{ij}`` in block ``(i, j)``.
    Coupling keys are 1-based agent indices.
    """
    agents = list(agents)
    if not agents:
        raise ValueError("at least one agent is required")
    sizes = [ag.n for ag in agents]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    n = int(offsets[-1])
    A = np.zeros((n, n))
    for i, ag in enumerate(agents):
        r = slice(offsets[i], offsets[i + 1])
        A[r, r] = ag.A
        for j, Aij in ag.couplings.items():
            if not 1 <= j <= len(agents) or j == i + 1:
                raise DimensionError(f"agent {i + 1} couples to unknown agent {j}")
            if Aij.shape != (ag.n, sizes[j - 1]):
                raise DimensionError(
                    f"coupling between agent {i + 1} and agent {j} has shape {Aij.shape}, "
                    f"expected {(ag.n, sizes[j - 1])}"
                )
            A[r, offsets[j - 1]:offsets[j]] = Aij
    m_off = np.concatenate([[0], np.cumsum([ag.m for ag in agents])]).astype(int)
    return PlantModel(
        A=A,
        C=block_diag(*[ag.C for ag in agents]),
        W=block_diag(*[ag.W for ag in agents]),
        V=block_diag(*[ag.V for ag in agents]),
        Gamma=as_matrix(Gamma, "Gamma"),
        x0=IntervalVector(np.concatenate([ag.x0_lo for ag in agents]), np.concatenate([ag.x0_hi for ag in agents])),
        w_bounds=IntervalVector(np.concatenate([ag.w_lo for ag in agents]), np.concatenate([ag.w_hi for ag in agents])),
        v_bounds=IntervalVector(np.concatenate([ag.v_lo for ag in agents]), np.concatenate([ag.v_hi for ag in agents])),
        state_blocks=tuple((int(offsets[i]), int(offsets[i + 1])) for i in range(len(agents))),
        output_blocks=tuple((int(m_off[i]), int(m_off[i + 1])) for i in range(len(agents))),
    )


def market_agents(N=5, a=0.16, neighbours=None):
    """Agents of the ring production-network (Leontief) market.

    ``neighbours`` maps 1-based agent index to the agents it reads from, each
    coupling carrying the raw weight ``a`` (not ``a / |N_i|``). The default is
    the influence pattern of the published 5-firm example: a ring ``i -> i+1``
    plus the extra link from firm 3 to firm 5.
    """
    if neighbours is None:
        neighbours = {i: [i % N + 1] for i in range(1, N + 1)}
        if N == 5:
            neighbours[3] = [4, 5]
    agents = []
    for i in range(1, N + 1):
        agents.append(AgentBlock(
            A=[[1.0 - a]], C=[[1.0]], W=[[1.0]], V=[[1.0]],
            x0_lo=[185.0], x0_hi=[215.0], w_lo=[-0.5], w_hi=[0.5], v_lo=[0.0], v_hi=[1.0],
            couplings={j: [[a]] for j in neighbours.get(i, [])}, name=f"firm {i}",
        ))
    return agents


def market_gain(l0=-0.005, l1=0.425, l2=0.076):
    """The published gain pattern: ``l1`` on the diagonal, ``l2`` where A couples, ``l0`` elsewhere."""
    L = np.full((5, 5), l0)
    np.fill_diagonal(L, l1)
    for i, j in ((0, 1), (1, 2), (2, 3), (2, 4), (3, 4), (4, 0)):
        L[i, j] = l2
    return L
