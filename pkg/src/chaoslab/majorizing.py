"""Contraction-graph quantities dominating mixed contraction norms.

The majorizing integral of a symmetric order-q kernel ``f`` at contraction
order ``r`` and overlap ``m`` is the eight-vertex tensor network in which
four pairs share ``r`` slots, four pairs share ``m`` slots across the
doubled graph, and the remaining ``q - r - m`` slots pair each vertex with
its mirror image.  Key facts realized numerically here:

* ``M_r(f, m) >= 0`` with ``M_r(f, 0) = M_r(f, q - r) = ||f ox_r f||^4``;
* interior values are dominated by the endpoints (grouping the inner four
  vertices and applying Cauchy-Schwarz);
* for any mixed-contraction norm of two kernels there is a splitting
  ``m_k + n_k = s`` with
  ``G^8 <= prod_k M_r(f_i, m_k) M_r(f_j, n_k)``.

Networks are evaluated numerically by pairwise elimination (einsum), never
manipulated symbolically; the splitting is found by exhaustive search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaos import ChaosVector
from .tensor_core import SymKernel, contract, symmetrize

__all__ = [
    "MajorizingSpec",
    "majorizing_integral",
    "majorizing_bound_check",
    "contraction_conditions",
    "SIZE_CAP",
]

# hard ceiling on dense intermediate tensors inside a network evaluation
SIZE_CAP = 100_000_000


@dataclass(frozen=True)
class MajorizingSpec:
    """Kernel plus admissible (r, m) for one majorizing integral."""

    kernel: SymKernel
    r: int
    m: int

    def __post_init__(self):
        q = self.kernel.order
        if not 1 <= self.r <= q:
            raise ValueError(f"contraction order r={self.r} outside [1, {q}]")
        if not 0 <= self.m <= q - self.r:
            raise ValueError(f"overlap m={self.m} outside [0, {q - self.r}]")


def _network_edges(q: int, r: int, m: int):
    """Edges of the eight-vertex graph; vertices 0-3 top row, 4-7 bottom."""
    return [
        ((0, 1), r), ((2, 3), r), ((4, 5), r), ((6, 7), r),
        ((0, 2), m), ((1, 3), m), ((4, 6), m), ((5, 7), m),
        ((0, 4), q - r - m), ((1, 5), q - r - m),
        ((2, 6), q - r - m), ((3, 7), q - r - m),
    ]


def _einsum_args(kernel: SymKernel, edges):
    subscripts = [[] for _ in range(8)]
    next_id = 0
    for (a, b), weight in edges:
        for _ in range(weight):
            subscripts[a].append(next_id)
            subscripts[b].append(next_id)
            next_id += 1
    args = []
    for v in range(8):
        args.append(kernel.coeffs)
        args.append(subscripts[v])
    args.append([])
    return args, subscripts


def _path_max_intermediate(subscripts, dim, path):
    """Largest dense intermediate (in entries) along a pairwise einsum path."""
    open_sets = [set(s) for s in subscripts]
    biggest = max((dim ** len(s) for s in open_sets), default=1)
    for pair in path:
        merged = set()
        for pos in sorted(pair, reverse=True):
            merged |= open_sets.pop(pos)
        remaining = set().union(*open_sets) if open_sets else set()
        merged &= remaining | set()  # indices still needed downstream
        keep = merged & remaining
        open_sets.append(keep)
        biggest = max(biggest, dim ** len(keep))
    return biggest


def majorizing_integral(
    kernel: SymKernel, r: int, m: int, elimination: str | list = "greedy"
) -> float:
    """Value of the eight-vertex network; nonnegative up to roundoff.

    ``elimination`` is either an einsum optimization strategy or an
    explicit pairwise contraction path; two different orders give the same
    value, which the property tests exercise.  Intermediates above
    ``SIZE_CAP`` dense entries abort with the offending contraction named.
    """
    MajorizingSpec(kernel, r, m)
    edges = _network_edges(kernel.order, r, m)
    args, subscripts = _einsum_args(kernel, edges)
    if isinstance(elimination, str):
        path_info = np.einsum_path(*args, optimize=elimination)
        path = [tuple(step) for step in path_info[0][1:]]
    else:
        path = [tuple(step) for step in elimination]
    biggest = _path_max_intermediate(subscripts, kernel.dim, path)
    if biggest > SIZE_CAP:
        raise MemoryError(
            f"network intermediate of {biggest:.3e} dense entries exceeds cap "
            f"{SIZE_CAP:.0e} (q={kernel.order}, M={kernel.dim}, r={r}, m={m})"
        )
    return float(np.einsum(*args, optimize=["einsum_path"] + path))


@dataclass(frozen=True)
class SplittingReport:
    """Outcome of the exhaustive splitting search for one (r, s) pair."""

    g_norm2: float
    feasible: tuple
    satisfied: tuple
    tightest: tuple | None
    tightest_log_bound: float

    @property
    def holds(self) -> bool:
        return self.g_norm2 == 0.0 or self.tightest is not None


def majorizing_bound_check(f_i: SymKernel, f_j: SymKernel, r: int, s: int) -> SplittingReport:
    """Search for a splitting dominating ``||sym(f_i ox_r f_j) ox_s same||^2``.

    Enumerates all 4-tuples (m_k, n_k) with m_k + n_k = s inside the
    admissible ranges and reports which of them satisfy
    ``G^8 <= prod_k M_r(f_i, m_k) M_r(f_j, n_k)`` (compared in logs to
    avoid overflow), together with the tightest satisfying one.
    """
    qi, qj = f_i.order, f_j.order
    if f_i.dim != f_j.dim:
        raise ValueError("dimension mismatch")
    if not 1 <= r <= min(qi, qj) - (1 if qi == qj else 0):
        raise ValueError(f"contraction order r={r} inadmissible for orders ({qi}, {qj})")
    if not 1 <= s <= qi + qj - 2 * r - 1:
        raise ValueError(f"second-level order s={s} inadmissible")

    h = symmetrize(contract(f_i, f_j, r))
    g_arr = contract(h, h, s)
    g_norm2 = float(np.sum(g_arr * g_arr))

    m_lo = max(0, s - (qj - r))
    m_hi = min(s, qi - r)
    if m_hi < m_lo:
        raise ValueError("no admissible splitting range")  # cannot happen in-range
    mi_vals = {m: majorizing_integral(f_i, r, m) for m in range(m_lo, m_hi + 1)}
    nj_vals = {s - m: majorizing_integral(f_j, r, s - m) for m in range(m_lo, m_hi + 1)}

    def log_pos(x):
        return math.log(x) if x > 0 else -math.inf

    log_lhs = 8.0 * log_pos(g_norm2)
    feasible, satisfied = [], []
    best, best_log = None, math.inf
    import itertools

    for combo in itertools.product(range(m_lo, m_hi + 1), repeat=4):
        feasible.append(combo)
        log_rhs = sum(log_pos(mi_vals[m]) + log_pos(nj_vals[s - m]) for m in combo)
        if log_lhs <= log_rhs + 1e-9 * max(1.0, abs(log_rhs)):
            satisfied.append(combo)
            if log_rhs < best_log:
                best, best_log = combo, log_rhs
    return SplittingReport(g_norm2, tuple(feasible), tuple(satisfied), best, best_log)


def contraction_conditions(F_seq) -> list:
    """Per-scale report of the three contraction-driven conditions.

    For every component of every pure vector in the sequence reports the
    plain contraction-norm sum, the symmetrized-to-plain ratio, and the
    ratio of interior majorizing integrals to the fourth power of the
    plain sum; the last two entering the sufficient conditions under which
    mixed contractions can be ignored.
    """
    rows = []
    for scale, F in enumerate(F_seq):
        if not isinstance(F, ChaosVector) or not F.pure:
            raise ValueError("condition report needs pure chaos vectors")
        for i in range(F.d):
            q = F.order(i)
            f = F.kernel(i)
            plain = [float(np.linalg.norm(contract(f, f, r))) for r in range(1, q)]
            sym = [symmetrize(contract(f, f, r)).norm for r in range(1, q)]
            plain_sum = sum(plain)
            sym_ratio = sum(sym) / plain_sum if plain_sum > 0 else 1.0
            interior = 0.0
            for r in range(1, q):
                for s in range(1, q - r):
                    interior += majorizing_integral(f, r, s)
            fourth = sum(v**4 for v in plain)
            rows.append(
                {
                    "scale": scale,
                    "component": i,
                    "order": q,
                    "contraction_norm_sum": plain_sum,
                    "symmetrized_ratio": sym_ratio,
                    "majorizing_ratio": interior / fourth if fourth > 0 else 0.0,
                }
            )
    return rows
