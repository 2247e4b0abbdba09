"""Lattice machinery for unwrapping folded measurements: LLL reduction with
exact unimodular tracking, the integer-forcing decoder, brute-force MAP
decoding for small dimension, and error-rate evaluation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .estimator import default_radius
from .model import modulo_reduce
from .rngstat import NumericError, RngStream


def _gram_schmidt(b: np.ndarray):
    """Classical GS of the columns of b: returns (mu, squared star norms)."""
    k = b.shape[1]
    bstar = np.zeros_like(b)
    mu = np.zeros((k, k))
    bsq = np.zeros(k)
    for i in range(k):
        v = b[:, i].copy()
        for j in range(i):
            mu[i, j] = (b[:, i] @ bstar[:, j]) / bsq[j]
            v -= mu[i, j] * bstar[:, j]
        bstar[:, i] = v
        bsq[i] = v @ v
    return mu, bsq


def check_reduced(b: np.ndarray, delta_lovasz: float, tol: float = 1e-9) -> None:
    """Re-derive the GS data of a basis and verify size reduction and the
    Lovasz condition, raising NumericError on any violation."""
    mu, bsq = _gram_schmidt(np.asarray(b, dtype=np.float64))
    k = b.shape[1]
    for i in range(k):
        for j in range(i):
            if abs(mu[i, j]) > 0.5 + tol:
                raise NumericError(f"size reduction violated: |mu[{i},{j}]| = {abs(mu[i, j]):.12f}")
    for i in range(1, k):
        lhs = bsq[i]
        rhs = (delta_lovasz - mu[i, i - 1] ** 2) * bsq[i - 1]
        if lhs < rhs * (1.0 - tol) - tol * max(bsq):
            raise NumericError(f"Lovasz condition violated at index {i}")


def _check_full_rank(b: np.ndarray) -> None:
    # threshold admits legitimately skewed bases (condition up to ~1e13) and
    # rejects numerically dependent columns (ratio ~ machine epsilon)
    s = np.linalg.svd(b, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= 1e-13 * s[0]:
        raise ValueError("basis is rank deficient (vanishing Gram determinant)")


def lll_reduce(basis: np.ndarray, delta_lovasz: float = 0.75):
    """LLL-reduce the columns of `basis`.

    Returns (reduced, u) where u is an exact integer unimodular matrix with
    reduced = basis @ u. Floating-point Gram-Schmidt data is maintained
    incrementally (size-reduction and swap updates in O(k) per step) while u
    is tracked in exact arbitrary-precision integers; the returned product is
    recomputed from u and re-verified, so silent violations of the reduction
    conditions cannot escape.
    """
    if not (0.25 < delta_lovasz <= 1.0):
        raise ValueError("delta_lovasz must be in (1/4, 1]")
    b = np.array(basis, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("basis must be square (columns are lattice generators)")
    k = b.shape[1]
    _check_full_rank(b)
    if k == 1:
        return b.copy(), [[1]]

    c = b.copy()
    ucols = [[int(i == j) for i in range(k)] for j in range(k)]  # ucols[j][i]
    mu, bsq = _gram_schmidt(c)

    def reduce_col(i: int, j: int) -> None:
        if abs(mu[i, j]) <= 0.5:
            return
        m = int(round(mu[i, j]))
        c[:, i] -= m * c[:, j]
        uj = ucols[j]
        ucols[i] = [a - m * bcoef for a, bcoef in zip(ucols[i], uj)]
        mu[i, :j] -= m * mu[j, :j]
        mu[i, j] -= m

    steps = 0
    max_steps = max(100_000, 2000 * k * k)
    kk = 1
    while kk < k:
        steps += 1
        if steps > max_steps:
            raise NumericError("LLL iteration cap exceeded")
        reduce_col(kk, kk - 1)
        if bsq[kk] < (delta_lovasz - mu[kk, kk - 1] ** 2) * bsq[kk - 1]:
            c[:, [kk - 1, kk]] = c[:, [kk, kk - 1]]
            ucols[kk - 1], ucols[kk] = ucols[kk], ucols[kk - 1]
            mu_km1 = mu[kk, kk - 1]
            bnew = bsq[kk] + mu_km1 * mu_km1 * bsq[kk - 1]
            if not np.isfinite(bnew) or bnew <= 0.0:
                raise NumericError("LLL lost rank during reduction")
            mu_new = mu_km1 * bsq[kk - 1] / bnew
            bsq[kk] = bsq[kk - 1] * bsq[kk] / bnew
            bsq[kk - 1] = bnew
            tmp = mu[kk - 1, :kk - 1].copy()
            mu[kk - 1, :kk - 1] = mu[kk, :kk - 1]
            mu[kk, :kk - 1] = tmp
            mu[kk, kk - 1] = mu_new
            for i in range(kk + 1, k):
                t = mu[i, kk]
                mu[i, kk] = mu[i, kk - 1] - mu_km1 * t
                mu[i, kk - 1] = t + mu_new * mu[i, kk]
            kk = max(1, kk - 1)
        else:
            for j in range(kk - 2, -1, -1):
                reduce_col(kk, j)
            kk += 1

    u = [[ucols[j][i] for j in range(k)] for i in range(k)]  # row-major
    # the true reduced vectors are small differences of large products, so the
    # final product is accumulated in extended precision before rounding
    reduced = np.asarray(
        b.astype(np.longdouble) @ np.array(u, dtype=np.longdouble),
        dtype=np.float64)
    check_reduced(reduced, delta_lovasz)
    return reduced, u


# ---------------------------------------------------------------------------
# decoders

@dataclass(frozen=True)
class IFDecoder:
    """Integer-forcing unwrapper x_hat = A^-1 ([A y] mod delta).

    Rows of `a` are short in the Sigma-norm; max_variance records
    max_l a_l^T Sigma a_l, the squared successive minimum the reduction
    achieved.
    """
    a: linalg.IntMatrix
    a_inv: linalg.IntMatrix
    delta: float
    max_variance: float


@dataclass(frozen=True)
class DecodeReport:
    n: int
    n_errors: int
    p_e_hat: float
    decoder_name: str


def integer_forcing_matrix(sigma: np.ndarray, delta: float) -> IFDecoder:
    """Build an IF decoder for covariance sigma via LLL.

    The lattice with Gram matrix sigma is generated by the columns of L^T
    (cholesky factor L), so the unimodular transform returned by LLL has
    columns that are short in the sigma-norm; its transpose supplies the
    decoder rows. Restricting to unimodular transforms makes this a
    shortest-basis problem, which LLL approximates.
    """
    sigma = linalg.require_symmetric(sigma)
    L = linalg.cholesky(sigma)
    _, u = lll_reduce(L.T, 0.75)
    a = linalg.int_transpose(u)
    a_inv = linalg.unimodular_inverse(a)
    af = np.array(a, dtype=np.float64)
    max_var = float(np.max(np.einsum("ij,jk,ik->i", af, sigma, af)))
    return IFDecoder(a=a, a_inv=a_inv, delta=float(delta), max_variance=max_var)


def if_decode(y_batch: np.ndarray, decoder: IFDecoder) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y_batch, dtype=np.float64))
    af = np.array(decoder.a, dtype=np.float64)
    ainvf = np.array(decoder.a_inv, dtype=np.float64)
    folded = modulo_reduce(y @ af.T, decoder.delta)
    return folded @ ainvf.T


def trivial_decode(y_batch: np.ndarray) -> np.ndarray:
    """The identity unwrapper x_hat = y."""
    return np.asarray(y_batch, dtype=np.float64)


def _default_coeff_bound(sigma: np.ndarray, delta: float) -> int:
    k = sigma.shape[0]
    lam1 = float(linalg.sym_eig(sigma).eigenvalues[0])
    return int(math.ceil((default_radius(k) + 6.0 * math.sqrt(lam1)) / delta)) + 1


def coset_offsets(k: int, coeff_bound: int) -> np.ndarray:
    """All integer offsets with sup-norm <= coeff_bound, in ascending
    lexicographic order (ties in the search below resolve to the smallest)."""
    rng = range(-coeff_bound, coeff_bound + 1)
    return np.array(list(itertools.product(rng, repeat=k)), dtype=np.float64)


def map_decode_batch(y_batch: np.ndarray, sigma: np.ndarray, delta: float,
                     coeff_bound: int | None = None,
                     chunk: int = 2000) -> np.ndarray:
    """Coset search x_hat = argmin (y + delta t)^T sigma^-1 (y + delta t).

    The objective splits as Q(y) + 2 delta t^T sigma^-1 y + delta^2 Q(t), so
    per sample only the t-dependent part is minimized; it is precomputed for
    the whole offset grid and applied to samples in chunks. Cost grows as
    (2*coeff_bound+1)^k, so this is for k <= 4. The bound defaults to covering
    every coset point within the high-probability region of the source.
    """
    y = np.atleast_2d(np.asarray(y_batch, dtype=np.float64))
    sigma = linalg.require_symmetric(sigma)
    k = sigma.shape[0]
    if k > 4:
        raise ValueError("brute-force MAP is limited to k <= 4")
    if coeff_bound is None:
        coeff_bound = _default_coeff_bound(sigma, delta)
    t_grid = coset_offsets(k, coeff_bound)
    sigma_inv_t = np.linalg.solve(sigma, t_grid.T)           # k x n_t
    const = delta * delta * np.einsum("ij,ji->i", t_grid, sigma_inv_t)
    cross = 2.0 * delta * sigma_inv_t.T                      # n_t x k
    out = np.empty_like(y)
    for start in range(0, y.shape[0], chunk):
        yc = y[start:start + chunk]
        scores = const[:, None] + cross @ yc.T               # n_t x m
        best = np.argmin(scores, axis=0)
        out[start:start + chunk] = yc + delta * t_grid[best]
    return out


def map_decode_bruteforce(y: np.ndarray, sigma: np.ndarray, delta: float,
                          coeff_bound: int | None = None) -> np.ndarray:
    """Single-vector MAP unwrapping (see map_decode_batch)."""
    return map_decode_batch(np.asarray(y, dtype=np.float64)[None, :], sigma,
                            delta, coeff_bound)[0]


def evaluate_unwrapping(x_batch: np.ndarray, xhat_batch: np.ndarray,
                        delta: float, decoder_name: str = "") -> DecodeReport:
    """Exact-recovery error rate: a sample is wrong if any coordinate is off
    by more than 1e-6 * delta (i.e. the wrong coset representative)."""
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    xh = np.atleast_2d(np.asarray(xhat_batch, dtype=np.float64))
    if x.shape != xh.shape:
        raise ValueError("batches must have identical shape")
    wrong = np.any(np.abs(x - xh) > 1e-6 * delta, axis=1)
    n = x.shape[0]
    n_err = int(np.count_nonzero(wrong))
    return DecodeReport(n=n, n_errors=n_err, p_e_hat=n_err / n,
                        decoder_name=decoder_name)


# ---------------------------------------------------------------------------
# oracles

def gaussian_voronoi_mass_mc(sigma: np.ndarray, delta: float, coeff_bound: int,
                             n: int, rng: RngStream, chunk: int = 20_000) -> float:
    """Monte-Carlo Gaussian measure of the origin's Voronoi cell for the
    lattice delta * sigma^(-1/2) Z^k, with membership tested by enumerating
    lattice points up to the given coefficient bound."""
    sigma = linalg.require_symmetric(sigma)
    eig = linalg.sym_eig(sigma)
    if np.any(eig.eigenvalues <= 0):
        raise ValueError("sigma must be positive definite")
    inv_half = eig.eigenvectors @ np.diag(eig.eigenvalues ** -0.5) @ eig.eigenvectors.T
    k = sigma.shape[0]
    t_grid = coset_offsets(k, coeff_bound)
    t_grid = t_grid[np.any(t_grid != 0, axis=1)]
    points = delta * (t_grid @ inv_half.T)                   # rows are lattice points
    pnorm2 = np.einsum("ij,ij->i", points, points)
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        z = rng.gaussian(m * k).reshape(m, k)
        margin = pnorm2[None, :] - 2.0 * (z @ points.T)      # m x n_t
        hits += int(np.count_nonzero(np.min(margin, axis=1) >= 0.0))
        done += m
    return hits / n


def _exact_subset_det(rows: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Exact determinants of k x k integer row subsets (k <= 3), vectorized."""
    k = rows.shape[1]
    r = rows[idx]                                            # m x k x k (int64)
    if k == 1:
        return r[:, 0, 0]
    if k == 2:
        return r[:, 0, 0] * r[:, 1, 1] - r[:, 0, 1] * r[:, 1, 0]
    c = np.cross(r[:, 1, :], r[:, 2, :])
    return np.einsum("ij,ij->i", r[:, 0, :], c)


def min_max_variance_exhaustive(sigma: np.ndarray, entry_bound: int = 3) -> float:
    """Exhaustive-search reference for the integer-forcing objective.

    Scans all integer rows with entries in [-entry_bound, entry_bound],
    sorted by sigma-norm, and reports the smallest norm tier at which some
    k rows of norm <= tier form a matrix with |det| = 1. Exact integer
    determinants; intended as a small-k oracle for measuring the LLL gap.
    """
    sigma = linalg.require_symmetric(sigma)
    k = sigma.shape[0]
    if k > 3:
        raise ValueError("exhaustive search is limited to k <= 3")
    grid = np.array(list(itertools.product(range(-entry_bound, entry_bound + 1),
                                           repeat=k)), dtype=np.int64)
    grid = grid[np.any(grid != 0, axis=1)]
    norms = np.einsum("ij,jk,ik->i", grid.astype(np.float64), sigma,
                      grid.astype(np.float64))
    order = np.argsort(norms, kind="stable")
    grid, norms = grid[order], norms[order]
    tiers = np.unique(norms)
    for tier in tiers:
        m = int(np.searchsorted(norms, tier, side="right"))
        prefix = grid[:m]
        if m < k:
            continue
        idx = np.array(list(itertools.combinations(range(m), k)))
        dets = np.abs(_exact_subset_det(prefix, idx))
        if np.any(dets == 1):
            return float(tier)
    raise ValueError("no unimodular matrix within the entry bound")
