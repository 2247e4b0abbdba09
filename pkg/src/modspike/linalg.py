"""Dense symmetric eigensolver (cyclic Jacobi), Cholesky, and exact
integer-matrix arithmetic for unimodular transforms."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rngstat import NumericError

IntMatrix = list[list[int]]  # row-major, arbitrary-precision Python ints


def require_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix must be exactly symmetric")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (a + a.T)/2, which is exactly symmetric in floating point."""
    a = np.asarray(a, dtype=np.float64)
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # orthonormal columns, matching order


def sym_eig(a: np.ndarray, max_sweeps: int = 60) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Rotations annihilate each off-diagonal pair in turn; the method is slower
    than tridiagonalization but numerically robust and gives every eigenvalue,
    which the spectral-gap diagnostics need. Convergence: off-diagonal
    Frobenius mass below 1e-13 of the matrix scale. Eigenvectors are sign-fixed
    so the largest-magnitude coordinate of each is positive.
    """
    a = require_symmetric(a).copy()
    k = a.shape[0]
    if k == 1:
        return EigenDecomposition(a[0].copy(), np.array([[1.0]]))
    v = np.eye(k)
    scale = np.sqrt(np.sum(a * a))
    tol = 1e-13 * max(scale, 1e-300)

    def _off(m):
        od = m - np.diag(np.diag(m))
        return np.sqrt(np.sum(od * od))

    for _ in range(max_sweeps):
        if _off(a) <= tol:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                h = a[q, q] - a[p, p]
                if abs(h) + 100.0 * abs(apq) == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    if abs(theta) > 1e8:  # asymptotic branch avoids theta**2 overflow
                        t = 0.5 / theta
                    elif theta >= 0.0:
                        t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise NumericError(f"jacobi did not converge: off-diagonal residual {_off(a):.3e}")

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = v[:, order]
    for j in range(k):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return EigenDecomposition(vals, vecs)


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a; raises on non-SPD input."""
    a = require_symmetric(a)
    k = a.shape[0]
    L = np.zeros_like(a)
    for j in range(k):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise ValueError(f"matrix is not positive definite (pivot {d:.3e} at {j})")
        L[j, j] = np.sqrt(d)
        if j + 1 < k:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


# ---------------------------------------------------------------------------
# exact integer arithmetic

def int_matrix(rows) -> IntMatrix:
    """Copy into row-major lists of Python ints, validating squareness."""
    m = [[int(x) for x in row] for row in rows]
    n = len(m)
    if n == 0 or any(len(r) != n for r in m):
        raise ValueError("integer matrix must be square and nonempty")
    return m


def int_det(m: IntMatrix) -> int:
    """Exact determinant by fraction-free Bareiss elimination."""
    a = [row[:] for row in m]
    n = len(a)
    sign = 1
    prev = 1
    for col in range(n - 1):
        if a[col][col] == 0:
            for r in range(col + 1, n):
                if a[r][col] != 0:
                    a[col], a[r] = a[r], a[col]
                    sign = -sign
                    break
            else:
                return 0
        for r in range(col + 1, n):
            for c in range(col + 1, n):
                a[r][c] = (a[r][c] * a[col][col] - a[r][col] * a[col][c]) // prev
            a[r][col] = 0
        prev = a[col][col]
    return sign * a[n - 1][n - 1]


def int_matmul(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    """Exact product. Uses int64 BLAS when magnitudes provably cannot overflow."""
    n = len(a)
    max_a = max((abs(x) for row in a for x in row), default=0)
    max_b = max((abs(x) for row in b for x in row), default=0)
    if max_a and max_b and max_a * max_b * n < (1 << 62):
        prod = np.array(a, dtype=np.int64) @ np.array(b, dtype=np.int64)
        return [[int(x) for x in row] for row in prod]
    return [
        [sum(a[i][t] * b[t][j] for t in range(n)) for j in range(n)]
        for i in range(n)
    ]


def is_identity(m: IntMatrix) -> bool:
    n = len(m)
    return all(m[i][j] == (1 if i == j else 0) for i in range(n) for j in range(n))


def _fraction_inverse(m: IntMatrix) -> IntMatrix:
    n = len(m)
    aug = [[Fraction(m[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if aug[piv][col] == 0:
            raise ValueError("matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        pval = aug[col][col]
        aug[col] = [x / pval for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    inv = [[aug[i][n + j] for j in range(n)] for i in range(n)]
    if any(x.denominator != 1 for row in inv for x in row):
        raise ValueError("matrix is not unimodular (non-integer inverse)")
    return [[int(x) for x in row] for row in inv]


def unimodular_inverse(m: IntMatrix) -> IntMatrix:
    """Exact integer inverse of a unimodular matrix; domain error otherwise.

    Fast path: round the floating inverse and verify m @ inv == I exactly
    (an exact round trip certifies |det| == 1). Falls back to exact Fraction
    elimination when the float inverse is off, then re-checks the determinant
    to report non-unimodular inputs precisely.
    """
    m = int_matrix(m)
    n = len(m)
    try:
        f = np.array(m, dtype=np.float64)
        finv = np.linalg.inv(f)
        cand = [[int(round(x)) for x in row] for row in finv]
        if is_identity(int_matmul(m, cand)):
            return cand
    except (OverflowError, np.linalg.LinAlgError):
        pass
    d = int_det(m)
    if abs(d) != 1:
        raise ValueError(f"matrix is not unimodular (det = {d})")
    inv = _fraction_inverse(m)
    if not is_identity(int_matmul(m, inv)):
        raise NumericError("exact inverse failed round-trip check")
    return inv


def int_transpose(m: IntMatrix) -> IntMatrix:
    n = len(m)
    return [[m[j][i] for j in range(n)] for i in range(n)]
