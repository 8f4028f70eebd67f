"""Step-kernel matrix calculus for the second chaos.

A second-chaos kernel that is constant on the cells of an N x N grid over
the unit square is determined by a symmetric matrix A.  Contractions,
inner products and all cumulants of the corresponding quadratic
functional reduce to matrix products and traces:

    f ox_1 g   <->  (1/N) A B,          <f, g> = tr(A B^T) / N^2,
    kappa_m(I_2(f)) = 2^(m-1) (m-1)! tr(A^m) / N^m.

The ratio tr(A^8)/tr(A^4)^2 controls whether the eighth-to-fourth cumulant
comparison can vanish; it equals 1/2 exactly for any 2 x 2 matrix with two
equal fourth-power eigenvalues, 1 for rank one, and more generally
(1 + sum_{k != l} lam_k^4 lam_l^4 / sum_k lam_k^8)^(-1), which stays near
1 whenever one eigenvalue dominates (for instance for matrices with
positive entries, by Perron-Frobenius).  Families with tr(A^4)/N^4 -> 0
whose ratio stays bounded away from zero are the canonical obstruction:
the fourth cumulant vanishes (a central limit theorem holds) while the
expansion machinery's eighth-cumulant hypothesis fails.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_core import SymKernel

__all__ = [
    "StepKernelMatrix",
    "m_contract",
    "step_inner",
    "to_sym_kernel",
    "trace_cumulant",
    "eigen_cumulant",
    "ratio_bound",
    "kappa_ratio",
    "obstruction_family",
    "random_step_matrix",
    "load_matrix",
    "save_matrix",
]


@dataclass(frozen=True)
class StepKernelMatrix:
    """Symmetric N x N matrix identifying a grid-constant second-chaos kernel."""

    N: int
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.array(self.mat, dtype=float, order="C")
        if A.shape != (self.N, self.N):
            raise ValueError(f"matrix shape {A.shape}, expected {(self.N, self.N)}")
        if np.max(np.abs(A - A.T)) > 1e-12 * (1.0 + np.max(np.abs(A))):
            raise ValueError("step-kernel matrix must be symmetric")
        object.__setattr__(self, "mat", 0.5 * (A + A.T))


def _mat(x) -> tuple[int, np.ndarray]:
    if isinstance(x, StepKernelMatrix):
        return x.N, x.mat
    A = np.asarray(x, dtype=float)
    return A.shape[0], A


def m_contract(A, B):
    """Order-1 contraction and its symmetrization as matrices.

    Returns ``(A @ B / N, (C + C^T) / 2)``.
    """
    Na, Ma = _mat(A)
    Nb, Mb = _mat(B)
    if Na != Nb:
        raise ValueError(f"size mismatch: {Na} vs {Nb}")
    C = Ma @ Mb / Na
    return C, 0.5 * (C + C.T)


def step_inner(A, B) -> float:
    """<f, g> = tr(A B^T) / N^2 for the step kernels behind A and B."""
    Na, Ma = _mat(A)
    Nb, Mb = _mat(B)
    if Na != Nb:
        raise ValueError(f"size mismatch: {Na} vs {Nb}")
    return float(np.sum(Ma * Mb)) / Na**2


def to_sym_kernel(A) -> SymKernel:
    """The same kernel in orthonormal coordinates (cell indicators scaled
    by sqrt(N)), ready for the generic tensor calculus."""
    N, M = _mat(A)
    return SymKernel(2, N, M / N)


def trace_cumulant(A, m: int) -> float:
    """kappa_m of the quadratic functional, by repeated matrix products.

    Powers are accumulated multiplicatively (not through eigenvalues) so
    the identity-matrix cases are exact.
    """
    if m < 2 or m > 12:
        raise ValueError("cumulant order must lie in [2, 12]")
    N, M = _mat(A)
    P = M
    for _ in range(m - 1):
        P = P @ M
    return 2.0 ** (m - 1) * math.factorial(m - 1) * float(np.trace(P)) / N**m


def eigen_cumulant(A, m: int, resid_tol: float = 1e-10) -> float:
    """Same cumulant through the eigenvalue form, with a residual check."""
    N, M = _mat(A)
    lam, V = np.linalg.eigh(M)
    scale = max(float(np.linalg.norm(M)), 1e-300)
    resid = np.linalg.norm(M @ V - V * lam) / scale
    if resid > resid_tol:
        raise ArithmeticError(f"eigen decomposition residual {resid:.3e} above tolerance")
    return 2.0 ** (m - 1) * math.factorial(m - 1) * float(np.sum((lam / N) ** m))


def ratio_bound(A) -> float:
    """tr(A^8) / tr(A^4)^2, the normalized eighth-to-fourth cumulant ratio.

    Equals ``(3!^2 / (2 * 7!)) * kappa_8 / kappa_4^2``; see the module
    docstring for when the value 1/2 is a true lower bound.
    """
    N, M = _mat(A)
    if not np.any(M):
        raise ValueError("zero matrix has no cumulant ratio")
    P2 = M @ M
    P4 = P2 @ P2
    t4 = float(np.trace(P4))
    if t4 <= 0.0:
        raise ValueError("tr(A^4) must be positive")
    t8 = float(np.trace(P4 @ P4))
    return t8 / t4**2


def kappa_ratio(A) -> float:
    """kappa_8 / kappa_4^2 with all combinatorial constants included."""
    return 2.0 * math.factorial(7) / math.factorial(3) ** 2 * ratio_bound(A)


def random_step_matrix(N: int, rng: np.random.Generator, positive: bool = False) -> StepKernelMatrix:
    """Random symmetric matrix; ``positive`` draws entries from (0, 1),
    which keeps the top eigenvalue dominant (Perron-Frobenius)."""
    raw = rng.uniform(0.0, 1.0, (N, N)) if positive else rng.standard_normal((N, N))
    return StepKernelMatrix(N, 0.5 * (raw + raw.T))


def obstruction_family(N_seq, kind: str = "identity", seed: int = 0) -> list:
    """Families with vanishing fourth cumulant but non-vanishing ratio.

    For each size (all must be at least 2) reports kappa_4 -> 0 together
    with the eighth-to-fourth ratio, which stays bounded away from zero at
    these sizes, so normality holds while the one-term expansion hypotheses
    do not.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for N in N_seq:
        N = int(N)
        if N < 2:
            raise ValueError("family sizes start at 2")
        if kind == "identity":
            A = StepKernelMatrix(N, np.eye(N))
        elif kind == "random_sign":
            A = StepKernelMatrix(N, np.diag(rng.choice([-1.0, 1.0], N)))
        else:
            raise ValueError(f"unknown family kind {kind!r}")
        rows.append(
            {
                "N": N,
                "kappa4": trace_cumulant(A, 4),
                "kappa8_over_kappa4_sq": kappa_ratio(A),
                "trace_ratio": ratio_bound(A),
            }
        )
    return rows


# -- file format --------------------------------------------------------------


def save_matrix(A: StepKernelMatrix, path) -> None:
    Path(path).write_text(json.dumps({"n": A.N, "rows": A.mat.tolist()}))


def load_matrix(source) -> StepKernelMatrix:
    if isinstance(source, (str, Path)):
        payload = json.loads(Path(source).read_text())
    else:
        payload = source
    return StepKernelMatrix(int(payload["n"]), np.asarray(payload["rows"], dtype=float))
