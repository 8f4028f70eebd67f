"""Multiple Wiener-Ito integrals over a finite Gaussian basis.

A :class:`ChaosElement` is a finite chaos expansion: a constant plus one
symmetric kernel per stochastic order.  With ``xi`` a vector of i.i.d.
standard Gaussians indexed by the basis, the order-q integral of a
symmetric kernel evaluates pathwise through products of probabilists'
Hermite polynomials; equivalently, through the partial-trace expansion

    I_q(f)(xi) = sum_k (-1)^k q! / (k! 2^k (q-2k)!) <Tr^k f, xi^(q-2k)>

used by the vectorized evaluator below.

On top of the arithmetic the module provides the Gamma operators (iterated
Malliavin brackets), their closed-form variances, joint cumulants via three
computation routes, the discrepancy metrics of the normal approximation,
and fourth-moment diagnostics.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_core import SymKernel, contract, inner, symmetrize

__all__ = [
    "ChaosElement",
    "ChaosVector",
    "DiscrepancyReport",
    "evaluate",
    "evaluate_batch",
    "multiply",
    "gamma_step",
    "gamma_fold",
    "var_gamma",
    "covariance_matrix",
    "discrepancy",
    "joint_cumulant",
    "third_cumulant_pairing",
    "fourth_moment_diagnostics",
    "rho_constant",
    "rho_identity_gap",
    "save_vector",
    "load_vector",
]

MAX_PRODUCT_ORDER = 4
MAX_CUMULANT_ORDER = 4
MAX_CUMULANT_ORDER_SECOND_CHAOS = 8


def beta_coeff(a: int, b: int, r: int) -> float:
    """Pairing coefficient r! C(a,r) C(b,r) from the multiplication formula."""
    return float(math.factorial(r) * math.comb(a, r) * math.comb(b, r))


@dataclass(frozen=True)
class ChaosElement:
    """Finite chaos expansion: constant + at most one kernel per order >= 1."""

    dim: int
    constant: float
    terms: tuple = ()  # tuple of (order, SymKernel), distinct ascending orders

    def __post_init__(self):
        terms = tuple(sorted(((int(q), k) for q, k in self.terms), key=lambda t: t[0]))
        orders = [q for q, _ in terms]
        if len(set(orders)) != len(orders):
            raise ValueError("at most one kernel per order")
        for q, k in terms:
            if q < 1:
                raise ValueError("stochastic orders start at 1")
            if not isinstance(k, SymKernel):
                raise TypeError("terms must hold SymKernel instances")
            if k.order != q or k.dim != self.dim:
                raise ValueError(f"kernel of order {k.order}/dim {k.dim} under ({q},{self.dim})")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def from_kernel(cls, kernel: SymKernel, constant: float = 0.0) -> "ChaosElement":
        return cls(kernel.dim, constant, ((kernel.order, kernel),))

    def kernel(self, q: int) -> SymKernel | None:
        for order, k in self.terms:
            if order == q:
                return k
        return None

    @property
    def max_order(self) -> int:
        return self.terms[-1][0] if self.terms else 0

    @property
    def second_moment(self) -> float:
        return self.constant**2 + sum(math.factorial(q) * k.norm2 for q, k in self.terms)

    @property
    def variance(self) -> float:
        return self.second_moment - self.constant**2

    def scaled(self, c: float) -> "ChaosElement":
        return ChaosElement(
            self.dim, c * self.constant, tuple((q, k.scaled(c)) for q, k in self.terms)
        )


@dataclass(frozen=True)
class ChaosVector:
    """Vector of chaos elements over one common basis."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("empty vector")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError("components must share the basis dimension")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def pure(self) -> bool:
        """True when every component is a single centered multiple integral."""
        return all(c.constant == 0.0 and len(c.terms) == 1 for c in self.components)

    def order(self, i: int) -> int:
        if not self.pure:
            raise ValueError("orders are defined for pure vectors only")
        return self.components[i].terms[0][0]

    def kernel(self, i: int) -> SymKernel:
        if not self.pure:
            raise ValueError("kernels are defined for pure vectors only")
        return self.components[i].terms[0][1]

    @classmethod
    def from_kernels(cls, kernels) -> "ChaosVector":
        return cls(tuple(ChaosElement.from_kernel(k) for k in kernels))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _partial_trace(arr: np.ndarray) -> np.ndarray:
    """Contract the last two slots with the identity."""
    return np.trace(arr, axis1=-2, axis2=-1)


def _kernel_eval_batch(kernel: SymKernel, Xi: np.ndarray) -> np.ndarray:
    """I_q(f) at each row of ``Xi`` through the partial-trace expansion."""
    q, M = kernel.order, kernel.dim
    n = Xi.shape[0]
    out = np.zeros(n)
    traced = kernel.coeffs
    for k in range(q // 2 + 1):
        p = q - 2 * k
        coef = (-1) ** k * math.factorial(q) / (
            math.factorial(k) * 2**k * math.factorial(p)
        )
        if p == 0:
            out += coef * float(traced)
        else:
            cur = np.broadcast_to(traced.reshape((1,) + traced.shape), (n,) + traced.shape)
            # contract the p free slots one by one against the sample rows
            for _ in range(p):
                cur = np.einsum("n...i,ni->n...", cur, Xi)
            out += coef * cur
        if p >= 2:
            traced = _partial_trace(traced)
    return out


def evaluate_batch(F: ChaosElement, Xi) -> np.ndarray:
    """Realized values of ``F`` at rows of ``Xi`` (shape ``(n, dim)``)."""
    Xi = np.asarray(Xi, dtype=float)
    if Xi.ndim != 2 or Xi.shape[1] != F.dim:
        raise ValueError(f"samples must have shape (n, {F.dim})")
    out = np.full(Xi.shape[0], F.constant)
    for _, kernel in F.terms:
        out += _kernel_eval_batch(kernel, Xi)
    return out


def evaluate(F: ChaosElement, xi) -> float:
    """Realized value of ``F`` at one standard-Gaussian sample ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (F.dim,):
        raise ValueError(f"sample must have length {F.dim}")
    return float(evaluate_batch(F, xi[None, :])[0])


# ---------------------------------------------------------------------------
# multiplication and Gamma operators
# ---------------------------------------------------------------------------


def multiply(F: ChaosElement, G: ChaosElement, max_order: int = MAX_PRODUCT_ORDER) -> "ChaosElement":
    """Chaos expansion of the pointwise product F * G.

    Pairs of terms expand through symmetrized contractions with the
    pairing coefficients ``beta_coeff``; resulting orders above
    ``max_order`` are refused rather than truncated.
    """
    if F.dim != G.dim:
        raise ValueError("dimension mismatch")
    top = F.max_order + G.max_order
    if top > max_order:
        raise ValueError(f"product reaches order {top} > supported {max_order}")
    const = F.constant * G.constant
    acc: dict[int, np.ndarray] = {}

    def add(order, coeffs):
        if order in acc:
            acc[order] = acc[order] + coeffs
        else:
            acc[order] = np.array(coeffs, dtype=float)

    for q, k in F.terms:
        if G.constant:
            add(q, G.constant * k.coeffs)
    for q, k in G.terms:
        if F.constant:
            add(q, F.constant * k.coeffs)
    for (a, ka), (b, kb) in itertools.product(F.terms, G.terms):
        for r in range(min(a, b) + 1):
            coef = beta_coeff(a, b, r)
            piece = symmetrize(contract(ka, kb, r))
            if piece.order == 0:
                const += coef * float(piece.coeffs)
            else:
                add(piece.order, coef * piece.coeffs)
    terms = tuple((q, symmetrize(c)) for q, c in sorted(acc.items()) if np.any(c))
    return ChaosElement(F.dim, const, terms)


def gamma_step(prev: ChaosElement, new: ChaosElement) -> ChaosElement:
    """One step of the iterated Malliavin bracket.

    ``new`` must be a pure single integral I_a(u); it enters through the
    derivative slot, ``prev`` through the pseudo-inverse slot (whose
    projection annihilates the constant term).  A term I_b(v) of ``prev``
    contributes ``sum_r a * beta(a-1, b-1, r-1) I_{a+b-2r}(sym(u ox_r v))``.
    """
    if not (new.constant == 0.0 and len(new.terms) == 1):
        raise ValueError("the derivative-slot argument must be a pure single integral")
    if prev.dim != new.dim:
        raise ValueError("dimension mismatch")
    a, u = new.terms[0]
    const = 0.0
    acc: dict[int, np.ndarray] = {}
    for b, v in prev.terms:
        for r in range(1, min(a, b) + 1):
            coef = a * beta_coeff(a - 1, b - 1, r - 1)
            piece = symmetrize(contract(u, v, r))
            if piece.order == 0:
                const += coef * float(piece.coeffs)
            else:
                if piece.order in acc:
                    acc[piece.order] = acc[piece.order] + coef * piece.coeffs
                else:
                    acc[piece.order] = coef * piece.coeffs
    terms = tuple((q, symmetrize(c)) for q, c in sorted(acc.items()) if np.any(c))
    return ChaosElement(prev.dim, const, terms)


def gamma_fold(F: ChaosVector, indices) -> ChaosElement:
    """Iterated bracket over component indices, left to right.

    ``gamma_fold(F, [i])`` is F_i itself; each further index enters through
    the derivative slot of :func:`gamma_step`.
    """
    indices = [int(i) for i in indices]
    if not indices:
        raise ValueError("need at least one index")
    out = F.components[indices[0]]
    for idx in indices[1:]:
        out = gamma_step(out, F.components[idx])
    return out


def var_gamma(F: ChaosVector, i: int, j: int) -> float:
    """Closed-form variance of the bracket <D F_i, -D L^{-1} F_j>.

    Equals ``sum_r (q_i + q_j - 2r)! q_i^2 beta(q_i-1, q_j-1, r-1)^2
    ||sym(f_i ox_r f_j)||^2`` where the top term is excluded exactly when
    q_i == q_j (it is deterministic there).
    """
    if not F.pure:
        raise ValueError("variance formula applies to pure vectors")
    d = F.d
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError("component index out of range")
    qi, qj = F.order(i), F.order(j)
    fi, fj = F.kernel(i), F.kernel(j)
    total = 0.0
    for r in range(1, min(qi, qj) + 1 - (1 if qi == qj else 0)):
        sym = symmetrize(contract(fi, fj, r))
        total += (
            math.factorial(qi + qj - 2 * r)
            * qi**2
            * beta_coeff(qi - 1, qj - 1, r - 1) ** 2
            * sym.norm2
        )
    return total


def covariance_matrix(F: ChaosVector) -> np.ndarray:
    """E[F_i F_j] for a pure vector: delta_{q_i q_j} q_i! <f_i, f_j>."""
    if not F.pure:
        raise ValueError("covariance formula applies to pure vectors")
    d = F.d
    C = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            if F.order(i) == F.order(j):
                C[i, j] = C[j, i] = math.factorial(F.order(i)) * inner(
                    F.kernel(i), F.kernel(j)
                )
    return C


@dataclass(frozen=True)
class DiscrepancyReport:
    """Normal-approximation discrepancies of a pure chaos vector.

    ``delta_gamma`` is the Hilbert-Schmidt size of the bracket fluctuation,
    ``delta_c`` the covariance mismatch to the target normal and ``phi``
    their sum, the driving rate of the approximation.
    """

    var_gamma: np.ndarray = field(repr=False)
    covariance: np.ndarray = field(repr=False)
    delta_gamma: float = 0.0
    delta_c: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        for value in (self.delta_gamma, self.delta_c, self.phi):
            if value < 0:
                raise ValueError("discrepancies are nonnegative")


def discrepancy(F: ChaosVector, target_cov) -> DiscrepancyReport:
    """Fill the full report against a d x d symmetric PSD target covariance."""
    C = np.asarray(getattr(target_cov, "cov", target_cov), dtype=float)
    d = F.d
    if C.shape != (d, d):
        raise ValueError(f"target covariance shape {C.shape}, expected {(d, d)}")
    vg = np.array([[var_gamma(F, i, j) for j in range(d)] for i in range(d)])
    cov = covariance_matrix(F)
    dg = float(np.sqrt(np.sum(vg)))
    dc = float(np.sqrt(np.sum((cov - C) ** 2)))
    return DiscrepancyReport(vg, cov, dg, dc, dg + dc)


# ---------------------------------------------------------------------------
# joint cumulants
# ---------------------------------------------------------------------------


def _decomposition(alpha) -> list:
    e = [int(v) for v in (alpha.entries if hasattr(alpha, "entries") else alpha)]
    if any(v < 0 for v in e):
        raise ValueError("multi-index entries must be nonnegative")
    out = []
    for i, v in enumerate(e):
        out.extend([i] * v)
    return out


def _tail_orderings(tail):
    """Distinct orderings of the multiset with their common multiplicity."""
    mult = 1
    for c in set(tail):
        mult *= math.factorial(tail.count(c))
    return sorted(set(itertools.permutations(tail))), mult


def _cumulant_gamma_path(F: ChaosVector, positions, first: int) -> float:
    head = positions[first]
    tail = positions[:first] + positions[first + 1 :]
    orderings, mult = _tail_orderings(tail)
    total = 0.0
    for ordering in orderings:
        total += gamma_fold(F, (head,) + ordering).constant
    return mult * total


def _cumulant_second_chaos_path(F: ChaosVector, positions, first: int) -> float:
    """Second-chaos specialization: iterated symmetrized matrix products."""
    mats = [F.kernel(i).coeffs for i in range(F.d)]
    head = positions[first]
    tail = positions[:first] + positions[first + 1 :]
    orderings, mult = _tail_orderings(tail)
    total = 0.0
    for ordering in orderings:
        X = mats[head]
        for idx in ordering[:-1]:
            prod = X @ mats[idx]
            X = 0.5 * (prod + prod.T)
        total += float(np.sum(X * mats[ordering[-1]]))
    m = len(positions)
    return 2.0 ** (m - 1) * mult * total


def joint_cumulant(F: ChaosVector, alpha, method: str = "auto", first: int = 0) -> float:
    """Joint cumulant of a pure chaos vector at multi-index ``alpha``.

    Two computation routes: the Gamma-operator route (sum over orderings of
    the elementary decomposition of the constant term of the iterated
    bracket, the first element held fixed) and, when every component lives
    in the second chaos, the iterated-contraction route.  ``method`` picks
    ``"gamma"``, ``"second_chaos"`` or ``"auto"``; ``first`` selects which
    element of the decomposition is held fixed (the value is invariant).

    Orders are capped: |alpha| <= 4 in general, <= 8 when all orders are 2.
    """
    if not F.pure:
        raise ValueError("cumulants implemented for pure vectors")
    positions = _decomposition(alpha)
    m = len(positions)
    if m < 1:
        raise ValueError("order must be at least 1")
    if max(positions) >= F.d:
        raise IndexError("multi-index dimension exceeds vector dimension")
    if m == 1:
        return 0.0  # pure integrals are centered
    all_second = all(F.order(i) == 2 for i in range(F.d))
    cap = MAX_CUMULANT_ORDER_SECOND_CHAOS if all_second else MAX_CUMULANT_ORDER
    if m > cap:
        raise ValueError(f"cumulant order {m} unsupported (cap {cap})")
    if not (0 <= first < m):
        raise IndexError("fixed-element position out of range")
    if method == "auto":
        method = "second_chaos" if all_second and m > MAX_CUMULANT_ORDER else "gamma"
    if method == "gamma":
        return _cumulant_gamma_path(F, positions, first)
    if method == "second_chaos":
        if not all_second:
            raise ValueError("second-chaos route requires all orders equal to 2")
        return _cumulant_second_chaos_path(F, positions, first)
    raise ValueError(f"unknown method {method!r}")


def third_cumulant_pairing(F: ChaosVector, i: int, j: int, k: int) -> float:
    """Structural third-order pairing <sym(f_i ox_r f_j), f_k>.

    Nonzero only when r = (q_i + q_j - q_k) / 2 is an admissible
    contraction order; the proportionality constant linking it to the
    third cumulant depends on the three orders and is checked empirically
    rather than assumed.
    """
    if not F.pure:
        raise ValueError("pairing defined for pure vectors")
    qi, qj, qk = F.order(i), F.order(j), F.order(k)
    twice_r = qi + qj - qk
    if twice_r % 2 or not (1 <= twice_r // 2 <= min(qi, qj)):
        return 0.0
    r = twice_r // 2
    sym = symmetrize(contract(F.kernel(i), F.kernel(j), r))
    return inner(sym, F.kernel(k))


def fourth_moment_diagnostics(F_seq) -> list:
    """Per-scale, per-component normality diagnostics.

    For each component reports the fourth cumulant, all contraction norms
    ||f ox_r f|| for 1 <= r <= q-1 and the bracket variance; all three
    vanish together along a chaotic sequence approaching normality.
    """
    rows = []
    for scale, F in enumerate(F_seq):
        if not F.pure:
            raise ValueError("diagnostics defined for pure vectors")
        for i in range(F.d):
            q = F.order(i)
            f = F.kernel(i)
            sub = ChaosVector((F.components[i],))
            alpha4 = (4,)
            kappa4 = joint_cumulant(sub, alpha4)
            norms = [float(np.linalg.norm(contract(f, f, r))) for r in range(1, q)]
            rows.append(
                {
                    "scale": scale,
                    "component": i,
                    "order": q,
                    "kappa4": kappa4,
                    "contraction_norms": norms,
                    "var_gamma": var_gamma(sub, 0, 0),
                }
            )
    return rows


def rho_constant(F: ChaosVector, i: int, j: int, k: int) -> float:
    """Third-order limit constant E[Gamma_{ijk}] / sqrt(Var Gamma_ij).

    The numerator is the constant term of the double bracket fold; a zero
    variance signals that this (i, j) direction vanishes too fast to
    contribute and the caller should treat the constant as zero.
    """
    vg = var_gamma(F, i, j)
    if vg <= 0.0:
        raise ZeroDivisionError(
            f"Var Gamma_{i}{j} vanishes; the direction does not contribute"
        )
    num = gamma_fold(F, [j, i, k]).constant
    return num / math.sqrt(vg)


def rho_identity_gap(F: ChaosVector, i: int, j: int, k: int) -> float:
    """Residual of rho_ijk + rho_jik = kappa_{e_i+e_j+e_k} / sqrt(Var Gamma_ij)."""
    vg = var_gamma(F, i, j)
    alpha = tuple(
        (1 if u == i else 0) + (1 if u == j else 0) + (1 if u == k else 0)
        for u in range(F.d)
    )
    kappa = joint_cumulant(F, alpha)
    return rho_constant(F, i, j, k) + rho_constant(F, j, i, k) - kappa / math.sqrt(vg)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def save_vector(F: ChaosVector, path) -> None:
    payload = {
        "dim": F.dim,
        "components": [
            {
                "constant": c.constant,
                "terms": [
                    {
                        "order": q,
                        "kernel": {
                            "dim": k.dim,
                            "order": k.order,
                            "coeffs": k.coeffs.ravel().tolist(),
                        },
                    }
                    for q, k in c.terms
                ],
            }
            for c in F.components
        ],
    }
    Path(path).write_text(json.dumps(payload))


def load_vector(source) -> ChaosVector:
    from .tensor_core import load_kernel

    if isinstance(source, (str, Path)):
        payload = json.loads(Path(source).read_text())
    else:
        payload = source
    dim = int(payload["dim"])
    comps = []
    for entry in payload["components"]:
        terms = tuple(
            (int(t["order"]), load_kernel(t["kernel"])) for t in entry["terms"]
        )
        comps.append(ChaosElement(dim, float(entry.get("constant", 0.0)), terms))
    return ChaosVector(tuple(comps))
