"""Moment/cumulant combinatorics and generalized Edgeworth expansions.

Joint moments and cumulants of an R^d-valued vector are indexed by
multi-indices; the conversion in both directions runs over set partitions
of the elementary decomposition (the multiset of order-one indices summing
to alpha).  The same conversion applied to *differences* of cumulants
yields the formal moments entering the generalized Edgeworth expansion

    E_m(F, Z, g) = E[g(Z)] + sum_{1 <= |alpha| <= m}
                     mu~_alpha(F, Z) / alpha! * E[d_alpha g(Z)],

with the multi-index factorial alpha! = prod_i alpha_i!.  Note that
mu~_alpha(F1, F2) differs from mu_alpha(F1) - mu_alpha(F2) in general; a
regression test pins a concrete counterexample.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .hermite_stein import GaussianSpec, TestFunction, gaussian_expectation

__all__ = [
    "MultiIndex",
    "CumulantSet",
    "set_partitions",
    "pair_partitions",
    "moments_from_cumulants",
    "cumulants_from_moments",
    "formal_cumulants",
    "edgeworth3",
    "edgeworth3_from_terms",
    "sample_cumulants",
    "isserlis_moment",
    "multi_indices_up_to",
]


@dataclass(frozen=True)
class MultiIndex:
    """Length-d tuple of nonnegative integers indexing joint moments."""

    entries: tuple

    def __post_init__(self):
        e = tuple(int(v) for v in self.entries)
        if any(v < 0 for v in e):
            raise ValueError("multi-index entries must be nonnegative")
        object.__setattr__(self, "entries", e)

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def d(self) -> int:
        return len(self.entries)

    def decomposition(self) -> tuple:
        """Positions of the order-one multi-indices summing to self."""
        out = []
        for i, v in enumerate(self.entries):
            out.extend([i] * v)
        return tuple(out)

    @classmethod
    def from_positions(cls, positions, d: int) -> "MultiIndex":
        e = [0] * d
        for p in positions:
            e[p] += 1
        return cls(tuple(e))


def _entries(alpha) -> tuple:
    if isinstance(alpha, MultiIndex):
        return alpha.entries
    return tuple(int(v) for v in alpha)


def multi_indices_up_to(d: int, max_order: int, min_order: int = 1):
    """All multi-indices with min_order <= |alpha| <= max_order."""
    out = []
    for order in range(min_order, max_order + 1):
        for positions in itertools.combinations_with_replacement(range(d), order):
            e = [0] * d
            for p in positions:
                e[p] += 1
            out.append(tuple(e))
    return out


def set_partitions(items: list):
    """All partitions of ``items`` (by position), via first-element grouping."""
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1 :]


def pair_partitions(items: list):
    """All perfect matchings of ``items``; empty when the count is odd."""
    if not items:
        yield []
        return
    if len(items) % 2:
        return
    head, rest = items[0], items[1:]
    for i in range(len(rest)):
        pair = (head, rest[i])
        remaining = rest[:i] + rest[i + 1 :]
        for rest_pairs in pair_partitions(remaining):
            yield [pair] + rest_pairs


@dataclass
class CumulantSet:
    """Joint cumulants of one vector up to a declared order.

    ``values`` maps entry-tuples to floats and must be complete up to
    ``max_order``; ``formal`` marks sets built from cumulant differences,
    which are not the cumulants of any random vector.
    """

    d: int
    max_order: int
    values: dict = field(default_factory=dict)
    formal: bool = False

    def get(self, alpha) -> float:
        e = _entries(alpha)
        order = sum(e)
        if order < 1:
            raise KeyError("cumulants of order zero are not defined")
        if order > self.max_order:
            raise KeyError(f"order {order} beyond declared max {self.max_order}")
        try:
            return self.values[e]
        except KeyError:
            raise KeyError(f"missing cumulant for {e}") from None

    def set(self, alpha, value: float) -> None:
        self.values[_entries(alpha)] = float(value)

    @classmethod
    def gaussian(cls, Z: GaussianSpec, max_order: int = 3) -> "CumulantSet":
        out = cls(Z.d, max_order)
        for alpha in multi_indices_up_to(Z.d, max_order):
            order = sum(alpha)
            if order == 2:
                pos = MultiIndex(alpha).decomposition()
                out.set(alpha, Z.cov[pos[0], pos[1]])
            else:
                out.set(alpha, 0.0)
        return out


def moments_from_cumulants(kappa: CumulantSet, alpha) -> float:
    """Joint moment from cumulants, summing over partitions of the
    elementary decomposition; works identically for formal sets."""
    e = _entries(alpha)
    positions = list(MultiIndex(e).decomposition())
    total = 0.0
    for part in set_partitions(positions):
        prod = 1.0
        for block in part:
            prod *= kappa.get(MultiIndex.from_positions(block, len(e)))
        total += prod
    return total


def cumulants_from_moments(moments: dict, d: int, max_order: int) -> CumulantSet:
    """Invert the partition sum: recover cumulants from joint moments."""
    out = CumulantSet(d, max_order)
    for order in range(1, max_order + 1):
        for alpha in multi_indices_up_to(d, order, order):
            positions = list(MultiIndex(alpha).decomposition())
            resid = moments[alpha]
            for part in set_partitions(positions):
                if len(part) == 1:
                    continue
                prod = 1.0
                for block in part:
                    prod *= out.get(MultiIndex.from_positions(block, d))
                resid -= prod
            out.set(alpha, resid)
    return out


def formal_cumulants(k1: CumulantSet, k2: CumulantSet) -> CumulantSet:
    """Entrywise cumulant difference, marked formal."""
    if k1.d != k2.d:
        raise ValueError("dimension mismatch")
    m = min(k1.max_order, k2.max_order)
    out = CumulantSet(k1.d, m, formal=True)
    for alpha in multi_indices_up_to(k1.d, m):
        out.set(alpha, k1.get(alpha) - k2.get(alpha))
    return out


def _multi_factorial(alpha) -> int:
    return math.prod(math.factorial(v) for v in alpha)


def edgeworth3_from_terms(base: float, tilde_mu: dict, dg_expectations: dict) -> float:
    """Assemble the expansion from precomputed formal moments and E[d_alpha g(Z)]."""
    total = base
    for alpha, mu in tilde_mu.items():
        total += mu / _multi_factorial(alpha) * dg_expectations[alpha]
    return total


def edgeworth3(
    F_cumulants: CumulantSet,
    Z: GaussianSpec,
    g: TestFunction,
    nodes: int = 40,
) -> float:
    """Third-order generalized Edgeworth expansion of E[g(F)] around E[g(Z)].

    Formal cumulants are the differences kappa(F) - kappa(Z) up to order 3;
    formal moments follow by the partition sum and weight the Gaussian
    derivative expectations.  When F is centered with covariance equal to
    that of Z only the third-moment term survives.
    """
    if F_cumulants.d != Z.d:
        raise ValueError("dimension mismatch between cumulants and Gaussian spec")
    if F_cumulants.max_order < 3:
        raise ValueError("cumulants must be complete to order 3")
    tilde_k = formal_cumulants(F_cumulants, CumulantSet.gaussian(Z, 3))
    base = gaussian_expectation(g, (0,) * Z.d, Z, nodes)
    tilde_mu = {}
    dg = {}
    for alpha in multi_indices_up_to(Z.d, 3):
        mu = moments_from_cumulants(tilde_k, alpha)
        if mu != 0.0:
            tilde_mu[alpha] = mu
            dg[alpha] = gaussian_expectation(g, alpha, Z, nodes)
    return edgeworth3_from_terms(base, tilde_mu, dg)


def isserlis_moment(alpha, cov) -> float:
    """Gaussian joint moment E[Z^alpha] by pair-partition enumeration.

    Independent brute-force oracle for polynomial moments; odd orders
    return zero by construction.  Supports |alpha| <= 8.
    """
    e = _entries(alpha)
    order = sum(e)
    if order > 8:
        raise ValueError("pair-partition enumeration capped at order 8")
    if order % 2:
        return 0.0
    cov = np.asarray(cov, dtype=float)
    positions = list(MultiIndex(e).decomposition())
    total = 0.0
    for pairs in pair_partitions(positions):
        prod = 1.0
        for a, b in pairs:
            prod *= cov[a, b]
        total += prod
    return total


def sample_cumulants(samples, max_order: int = 4, blocks: int = 20):
    """Joint sample cumulants with block-jackknife standard errors.

    Sample moments are inverted through the partition sum; the standard
    errors come from leave-one-block-out re-estimates (``blocks`` groups
    in sample order).
    Returns ``(CumulantSet, {alpha: se})``.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if n < 10:
        raise ValueError("need at least 10 samples")
    if max_order > 4:
        raise ValueError("sample cumulants capped at order 4")
    if float(np.max(X.std(axis=0))) == 0.0:
        # constant sample: first cumulant is the value, the rest vanish
        out = CumulantSet(d, max_order)
        for alpha in multi_indices_up_to(d, max_order):
            out.set(alpha, X[0].prod() if sum(alpha) == 1 and 1 in alpha else 0.0)
        for i in range(d):
            e = tuple(int(i == j) for j in range(d))
            out.set(e, float(X[0, i]))
        return out, {a: 0.0 for a in multi_indices_up_to(d, max_order)}

    alphas = multi_indices_up_to(d, max_order)

    def moments_of(Y):
        out = {}
        for alpha in alphas:
            prod = np.ones(len(Y))
            for i, v in enumerate(alpha):
                if v:
                    prod = prod * Y[:, i] ** v
            out[alpha] = float(prod.mean())
        return out

    full = cumulants_from_moments(moments_of(X), d, max_order)

    edges = np.linspace(0, n, blocks + 1).astype(int)
    jack = {alpha: [] for alpha in alphas}
    for b in range(blocks):
        mask = np.ones(n, dtype=bool)
        mask[edges[b] : edges[b + 1]] = False
        kb = cumulants_from_moments(moments_of(X[mask]), d, max_order)
        for alpha in alphas:
            jack[alpha].append(kb.get(alpha))
    se = {}
    for alpha in alphas:
        vals = np.asarray(jack[alpha])
        se[alpha] = float(np.sqrt((blocks - 1) / blocks * np.sum((vals - vals.mean()) ** 2)))
    return full, se
