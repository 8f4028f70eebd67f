"""Dense symmetric-tensor algebra on a finite orthonormal basis.

Everything downstream (multiple integrals, cumulants, contraction-graph
quantities) is built on the two objects in this module:

* :class:`SymKernel` -- a dense, fully symmetric real tensor with ``q``
  slots over an ``M``-dimensional orthonormal basis, stored row-major as
  an ``M**q`` array.
* :class:`GramBasis` -- a non-orthonormal generating family described by
  its Gram matrix, together with a lower-triangular whitening factor that
  maps coordinates in the family to orthonormal coordinates.

Contractions are reshaped matrix products (the single hot kernel of the
package, delegated to BLAS); symmetrization averages over the permutation
group of the slots.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SymKernel",
    "GramBasis",
    "SymmetryError",
    "contract",
    "symmetrize",
    "inner",
    "norm",
    "to_orthonormal",
    "load_kernel",
    "save_kernel",
    "random_symmetric_kernel",
]

# Loader thresholds: deviations up to WARN are repaired by symmetrization,
# larger ones are rejected.  Scale is relative to 1 + max|coeff|.
LOAD_TOL = 1e-12
LOAD_WARN_TOL = 1e-8


class SymmetryError(ValueError):
    """Raised when coefficients are not invariant under slot permutations."""


def _as_coeff_array(x) -> np.ndarray:
    if isinstance(x, SymKernel):
        return x.coeffs
    return np.asarray(x, dtype=float)


def _symmetry_deviation(arr: np.ndarray) -> float:
    """Max absolute deviation from invariance under adjacent transpositions.

    Invariance under the adjacent transpositions generates invariance under
    the whole permutation group, so checking the q-1 generators suffices.
    """
    q = arr.ndim
    dev = 0.0
    for k in range(q - 1):
        axes = list(range(q))
        axes[k], axes[k + 1] = axes[k + 1], axes[k]
        dev = max(dev, float(np.max(np.abs(arr - arr.transpose(axes)))) if arr.size else 0.0)
    return dev


@dataclass(frozen=True)
class SymKernel:
    """Symmetric tensor of ``order`` slots over a basis of size ``dim``.

    ``coeffs`` has shape ``(dim,) * order``; ``order == 0`` holds a scalar.
    Construction validates exact permutation invariance -- use
    :func:`symmetrize` to build a kernel from a non-symmetric array.
    """

    order: int
    dim: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.order < 0 or self.dim < 1:
            raise ValueError(f"invalid kernel shape: order={self.order} dim={self.dim}")
        arr = np.array(self.coeffs, dtype=float, order="C")
        if arr.shape != (self.dim,) * self.order:
            raise ValueError(
                f"coefficient array has shape {arr.shape}, expected {(self.dim,) * self.order}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernel coefficients must be finite")
        dev = _symmetry_deviation(arr)
        if dev > 0.0:
            raise SymmetryError(
                f"coefficients deviate from symmetry by {dev:.3e}; "
                "use symmetrize() or load_kernel() for approximate input"
            )
        object.__setattr__(self, "coeffs", arr)

    # -- basic algebra -----------------------------------------------------

    @property
    def norm2(self) -> float:
        return float(np.sum(self.coeffs * self.coeffs))

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm2)

    def inner(self, other: "SymKernel") -> float:
        return inner(self, other)

    def scaled(self, c: float) -> "SymKernel":
        return SymKernel(self.order, self.dim, self.coeffs * float(c))

    def __add__(self, other: "SymKernel") -> "SymKernel":
        if (self.order, self.dim) != (other.order, other.dim):
            raise ValueError("kernel shape mismatch in addition")
        return SymKernel(self.order, self.dim, self.coeffs + other.coeffs)


def _infer_order_dim(x) -> tuple[int, int, np.ndarray]:
    if isinstance(x, SymKernel):
        return x.order, x.dim, x.coeffs
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return 0, 1, arr
    dims = set(arr.shape)
    if len(dims) != 1:
        raise ValueError(f"tensor axes must share one basis size, got shape {arr.shape}")
    return arr.ndim, arr.shape[0], arr


def contract(f, g, r: int) -> np.ndarray:
    """Contraction of the last ``r`` slots of ``f`` with the last ``r`` of ``g``.

    Returns the generally non-symmetric raw coefficient array of order
    ``q_f + q_g - 2r``; ``r = 0`` is the plain tensor product and
    ``r = q_f = q_g`` yields a rank-0 array holding the inner product.
    """
    qf, Mf, a = _infer_order_dim(f)
    qg, Mg, b = _infer_order_dim(g)
    if Mf != Mg and qf > 0 and qg > 0:
        raise ValueError(f"dimension mismatch: {Mf} vs {Mg}")
    M = Mf if qf > 0 else Mg
    if r < 0 or r > min(qf, qg):
        raise ValueError(f"contraction order r={r} outside [0, {min(qf, qg)}]")
    A = a.reshape(M ** (qf - r), M**r)
    B = b.reshape(M ** (qg - r), M**r)
    out = A @ B.T
    return out.reshape((M,) * (qf + qg - 2 * r))


def _canonical_orbit_gather(avg: np.ndarray) -> np.ndarray:
    """Make an approximately symmetric array exactly orbit-constant.

    Every entry is replaced by the value at the sorted version of its index,
    so the result is invariant under slot permutations to the last bit.
    """
    q = avg.ndim
    if q <= 1:
        return avg
    M = avg.shape[0]
    out = np.empty_like(avg)
    rest = np.indices(avg.shape[1:]).reshape(q - 1, -1)
    for i in range(M):
        idx = np.vstack([np.full((1, rest.shape[1]), i, dtype=rest.dtype), rest])
        idx.sort(axis=0)
        out[i] = avg[tuple(idx)].reshape(avg.shape[1:])
    return out


def symmetrize(x, order: int | None = None) -> SymKernel:
    """Canonical symmetrization: average over all slot permutations.

    Idempotent on symmetric input (returns the coefficients unchanged).
    """
    q, M, arr = _infer_order_dim(x)
    if order is not None and order != q:
        raise ValueError(f"declared order {order} does not match array order {q}")
    if q <= 1 or _symmetry_deviation(arr) == 0.0:
        return SymKernel(q, M, arr)
    acc = np.zeros_like(arr)
    for perm in itertools.permutations(range(q)):
        acc += arr.transpose(perm)
    acc /= math.factorial(q)
    return SymKernel(q, M, _canonical_orbit_gather(acc))


def inner(f, g) -> float:
    """Euclidean inner product of coefficient arrays."""
    qf, Mf, a = _infer_order_dim(f)
    qg, Mg, b = _infer_order_dim(g)
    if (qf, Mf) != (qg, Mg):
        raise ValueError(f"shape mismatch: order/dim ({qf},{Mf}) vs ({qg},{Mg})")
    return float(np.sum(a * b))


def norm(f) -> float:
    _, _, a = _infer_order_dim(f)
    return float(np.sqrt(np.sum(a * a)))


# -- non-orthonormal generating families ------------------------------------


def _floored_lower_factor(gram: np.ndarray, floor_scale: float = 1e-12) -> np.ndarray:
    """Lower-triangular L with L L^T = gram, with a diagonal-pivot floor.

    A pivot below ``floor_scale * trace(gram)`` aborts with the offending
    index and value; this is deliberate, the ill-conditioned Gram matrices
    arising from long-range correlated increments should fail loudly rather
    than silently regularize.
    """
    G = np.asarray(gram, dtype=float)
    n = G.shape[0]
    floor = floor_scale * float(np.trace(G))
    L = np.zeros_like(G)
    for k in range(n):
        d = G[k, k] - L[k, :k] @ L[k, :k]
        if d < floor:
            raise np.linalg.LinAlgError(
                f"Gram pivot {d:.3e} at index {k} below floor {floor:.3e}"
            )
        L[k, k] = math.sqrt(d)
        if k + 1 < n:
            L[k + 1 :, k] = (G[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
    return L


@dataclass(frozen=True)
class GramBasis:
    """Generating family of ``size`` vectors described by its Gram matrix.

    ``whitener`` is lower-triangular with ``whitener @ whitener.T == gram``;
    row ``u`` holds the orthonormal coordinates of the ``u``-th generator.
    """

    size: int
    gram: np.ndarray = field(repr=False)
    whitener: np.ndarray = field(repr=False)

    def __post_init__(self):
        G = np.asarray(self.gram, dtype=float)
        if G.shape != (self.size, self.size):
            raise ValueError("gram matrix shape mismatch")
        if np.max(np.abs(G - G.T)) > 1e-12 * (1.0 + np.max(np.abs(G))):
            raise ValueError("gram matrix must be symmetric")
        L = np.asarray(self.whitener, dtype=float)
        resid = np.linalg.norm(L @ L.T - G) / max(np.linalg.norm(G), 1e-300)
        if resid > 1e-10:
            raise ValueError(f"whitener does not reproduce gram (relative error {resid:.3e})")
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "whitener", L)

    @classmethod
    def from_gram(cls, gram, floor_scale: float = 1e-12) -> "GramBasis":
        G = np.asarray(gram, dtype=float)
        try:
            L = _floored_lower_factor(G, floor_scale)
        except np.linalg.LinAlgError:
            eigmin = float(np.linalg.eigvalsh(G).min())
            raise np.linalg.LinAlgError(
                f"gram matrix is not usably positive definite (smallest eigenvalue {eigmin:.3e})"
            ) from None
        return cls(G.shape[0], G, L)


def to_orthonormal(coeffs, basis: GramBasis) -> SymKernel:
    """Re-express a tensor given in generating-family coordinates.

    Applies the whitening factor to every slot, so that inner products and
    contractions computed downstream agree with the ones induced by the
    Gram matrix of the family.
    """
    q, M, arr = _infer_order_dim(coeffs)
    if q > 0 and M != basis.size:
        raise ValueError(f"tensor is over {M} generators, basis has {basis.size}")
    out = arr
    for _ in range(q):
        # contract the leading slot against the whitener, then rotate axes
        out = np.tensordot(basis.whitener, out, axes=(0, 0))
        out = np.moveaxis(out, 0, -1)
    return symmetrize(out) if q >= 2 else SymKernel(q, basis.size if q else 1, out)


# -- file format -------------------------------------------------------------


def save_kernel(kernel: SymKernel, path) -> None:
    payload = {
        "dim": kernel.dim,
        "order": kernel.order,
        "coeffs": kernel.coeffs.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_kernel(source) -> SymKernel:
    """Load ``{"dim": M, "order": q, "coeffs": [...]}`` with symmetry repair.

    Deviations up to ``1e-12 * (1 + max|coeff|)`` are accepted as
    serialization rounding, up to ``1e-8`` they are symmetrized with a
    warning, anything larger is rejected.
    """
    if isinstance(source, (str, Path)):
        payload = json.loads(Path(source).read_text())
    else:
        payload = source
    M = int(payload["dim"])
    q = int(payload["order"])
    flat = np.asarray(payload["coeffs"], dtype=float)
    if flat.size != M**q:
        raise ValueError(f"expected {M ** q} coefficients, got {flat.size}")
    arr = flat.reshape((M,) * q)
    scale = 1.0 + (float(np.max(np.abs(arr))) if arr.size else 0.0)
    dev = _symmetry_deviation(arr)
    if dev <= LOAD_TOL * scale:
        return symmetrize(arr)
    if dev <= LOAD_WARN_TOL * scale:
        warnings.warn(
            f"kernel deviates from symmetry by {dev:.3e}; symmetrizing", stacklevel=2
        )
        return symmetrize(arr)
    raise SymmetryError(f"kernel deviates from symmetry by {dev:.3e}; rejected")


def random_symmetric_kernel(order: int, dim: int, rng: np.random.Generator) -> SymKernel:
    """Symmetrized standard-normal coefficients; handy for tests and demos."""
    return symmetrize(rng.standard_normal((dim,) * order) if order else rng.standard_normal(()))
