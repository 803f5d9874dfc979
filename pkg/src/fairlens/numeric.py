"""Small dense numerics: cosine similarity, Jacobi eigensolver, skewness, seeded RNG.

Vectors and matrices are plain float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NumericError, ShapeError

SYMMETRY_TOL = 1e-9
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_vector(a, name="a"):
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite entries")
    return v


def cosine_similarity(a, b):
    """Cosine of the angle between two vectors.

    Raises DomainError naming the offending argument when a norm is zero.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0:
        raise DomainError("cosine_similarity: argument 'a' has zero norm")
    if nb == 0.0:
        raise DomainError("cosine_similarity: argument 'b' has zero norm")
    sim = float(np.dot(a / na, b / nb))
    return min(1.0, max(-1.0, sim))


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues sorted descending; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _off_norm(a):
    return float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))


def symmetric_eigen(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops to ``tol * ||m||_F``.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"symmetric_eigen needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("symmetric_eigen: matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL * scale:
        raise ShapeError("symmetric_eigen: matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 0 or norm == 0.0:
        return EigenResult(np.zeros(n), v)

    for _ in range(max_sweeps):
        off = _off_norm(a)
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                with np.errstate(over="ignore"):
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    # theta**2 would overflow; first-order root
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = _off_norm(a)
        if off > tol * norm:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigenResult(values[order], v[:, order])


def sample_skewness(values):
    """Fisher-Pearson moment coefficient g1 = m3 / m2**1.5."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 3:
        raise DomainError(f"skewness needs at least 3 values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("skewness: non-finite values")
    d = x - x.mean()
    m2 = np.mean(d * d)
    scale = np.max(np.abs(x))
    if m2 <= (1e-12 * scale) ** 2 or m2 == 0.0:
        raise DomainError("skewness undefined for zero variance")
    m3 = np.mean(d * d * d)
    return float(m3 / m2**1.5)


class SeededRNG:
    """Deterministic random stream on the PCG64 generator.

    Uniforms come straight from PCG64 (53-bit doubles in [0, 1)). Normals use the
    Box-Muller transform ``sqrt(-2 ln u1) * (cos 2πu2, sin 2πu2)`` with ``u1 = 1 - U``
    so the log argument lies in (0, 1]. ``child(*keys)`` derives an independent
    stream from the same seed, so sub-tasks stay reproducible regardless of order.
    """

    def __init__(self, seed, _keys=()):
        self.seed = int(seed)
        self._keys = tuple(int(k) for k in _keys)
        seq = np.random.SeedSequence(self.seed, spawn_key=self._keys)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys):
        return SeededRNG(self.seed, self._keys + tuple(keys))

    def uniform(self, size=None, low=0.0, high=1.0):
        u = self._gen.random(size)
        return low + (high - low) * u

    def normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        z = z[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def unit_vector(self, dim):
        v = self.normal(dim)
        return v / np.linalg.norm(v)
