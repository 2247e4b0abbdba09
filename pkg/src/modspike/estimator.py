"""Ball-truncated PCA spike estimation, the truncation-radius rule, p_ball
evaluation and inversion, and conditional ball moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri

from . import linalg
from .rngstat import NumericError, RngStream, erf, gammainc_lower, tail_thresholds

_SQRT_2PI_INV = 1.0 / math.sqrt(2.0 * math.pi)


class EstimationError(RuntimeError):
    """Estimation could not produce an output (e.g. empty selection ball)."""


def default_radius(k: int) -> float:
    """Truncation radius 2*sqrt(k) + z2(k, 0.1); any C*sqrt(k), C > 1 works,
    this choice is the fixed default."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return 2.0 * math.sqrt(k) + tail_thresholds(k, 0.1).z2


@dataclass(frozen=True)
class SpikeEstimate:
    u_hat: np.ndarray          # unit vector, largest-magnitude coordinate positive
    eigenvalues: np.ndarray    # descending, of the 1/|K|-normalized second moment
    n_selected: int
    n_total: int
    radius_used: float
    rank_deficient: bool       # fewer selected samples than coordinates


def estimate_spike(y: np.ndarray, radius: float) -> SpikeEstimate:
    """Principal direction of the folded samples that land inside the ball.

    Blind by construction: only the folded matrix y and the radius are read.
    The second-moment matrix is normalized by the selection count |K|, which
    leaves its eigenvectors unchanged and keeps the eigenvalue diagnostics on
    an interpretable scale. Selecting fewer than k samples is flagged, not
    fatal: the principal eigenvector is still well defined when there is a
    spectral gap.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("y must be a nonempty sample matrix")
    if radius <= 0:
        raise ValueError("radius must be positive")
    n, k = y.shape
    selected = np.linalg.norm(y, axis=1) <= radius
    m = int(np.count_nonzero(selected))
    if m == 0:
        raise EstimationError("no samples in ball")
    ysel = y[selected]
    second = ysel.T @ ysel / m
    second = (second + second.T) / 2.0
    eig = linalg.sym_eig(second)
    return SpikeEstimate(u_hat=eig.eigenvectors[:, 0], eigenvalues=eig.eigenvalues,
                         n_selected=m, n_total=n, radius_used=float(radius),
                         rank_deficient=m < k)


def align_sign(u_hat: np.ndarray, u_ref: np.ndarray) -> np.ndarray:
    """Flip u_hat so its inner product with u_ref is nonnegative (ties keep u_hat)."""
    return -u_hat if float(u_hat @ u_ref) < 0.0 else u_hat


# ---------------------------------------------------------------------------
# p_ball

@dataclass(frozen=True)
class PballResult:
    value: float
    lower_bound: float
    upper_bound: float
    method: str  # "quadrature" | "monte_carlo"


def _pball_brackets(nu: float, k: int, radius: float) -> tuple[float, float]:
    lower = 0.9 * erf(math.sqrt(2.0 * k / nu)) if nu > 0 else 0.9
    upper = erf(radius / math.sqrt(2.0 * (1.0 + nu)))
    return lower, upper


_GL_NODES, _GL_WEIGHTS = leggauss(16)


def _pball_quad_panels(nu: float, k: int, radius: float, panels: int) -> float:
    """Composite 16-point Gauss-Legendre for
    2 * int_0^{R/sqrt(1+nu)} phi(g) * ChiSqCDF_{k-1}(R^2 - (1+nu) g^2) dg."""
    s = 1.0 + nu
    gmax = radius / math.sqrt(s)
    a = 0.5 * (k - 1)
    edges = np.linspace(0.0, gmax, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    g = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    w = np.broadcast_to(half * _GL_WEIGHTS[None, :], (panels, 16)).ravel()
    tau = np.maximum(radius * radius - s * g * g, 0.0)
    f = _SQRT_2PI_INV * np.exp(-0.5 * g * g) * gammainc_lower(a, 0.5 * tau)
    return 2.0 * math.fsum(w * f)


def p_ball(nu: float, k: int, radius: float) -> PballResult:
    """Probability that a spiked sample lands in the ball of the given radius.

    Value is Pr((1+nu) g^2 + W <= R^2) with W chi-square on k-1 degrees of
    freedom, by one-dimensional quadrature over g against the chi-square CDF.
    Panel doubling continues until successive estimates agree to 1e-9, with a
    floor of 64 panels; the fixed floor keeps the computed value a smooth,
    strictly decreasing function of nu, which the inversion below exploits.
    """
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    lower, upper = _pball_brackets(nu, k, radius)
    if k == 1:
        value = erf(radius / math.sqrt(2.0 * (1.0 + nu)))
        return PballResult(value, lower, upper, "quadrature")
    prev = _pball_quad_panels(nu, k, radius, 32)
    panels = 64
    while True:
        cur = _pball_quad_panels(nu, k, radius, panels)
        if abs(cur - prev) < 1e-9:
            break
        if panels >= 1 << 16:
            raise NumericError("p_ball quadrature did not converge")
        prev = cur
        panels *= 2
    return PballResult(min(max(cur, 0.0), 1.0), lower, upper, "quadrature")


def p_ball_mc(nu: float, k: int, radius: float, n: int, rng: RngStream,
              chunk: int = 100_000) -> PballResult:
    """Monte-Carlo estimate of the same probability from n direct draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lower, upper = _pball_brackets(nu, k, radius)
    s = 1.0 + nu
    r2 = radius * radius
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        g = rng.gaussian(m)
        tot = s * g * g
        if k > 1:
            z = rng.gaussian(m * (k - 1)).reshape(m, k - 1)
            tot = tot + np.sum(z * z, axis=1)
        hits += int(np.count_nonzero(tot <= r2))
        done += m
    return PballResult(hits / n, lower, upper, "monte_carlo")


def estimate_nu(p_observed: float, k: int, radius: float,
                p_tol: float = 1e-6) -> float:
    """Invert nu -> p_ball(nu) by monotone bisection.

    p_ball is strictly decreasing in nu, so the bracket [lo, hi] with
    p(lo) >= p_observed >= p(hi) shrinks geometrically; iteration continues to
    a relative nu-width of 1e-9 so round trips are limited by the quadrature's
    smoothness, not the bisection. The returned value satisfies
    |p_ball(nu_hat) - p_observed| <= p_tol.
    """
    if not (0.0 < p_observed <= 1.0):
        raise ValueError("p_observed must lie in (0, 1]")
    p0 = p_ball(0.0, k, radius).value
    if p_observed > p0:
        raise ValueError(f"p_observed {p_observed} exceeds p_ball at nu=0 ({p0})")
    if p_observed == p0:
        return 0.0
    lo = 0.0
    hi = 1.0
    while p_ball(hi, k, radius).value >= p_observed:
        hi *= 4.0
        if hi > 2.0**100:
            raise ValueError("p_observed is below the attainable range")
    while hi - lo > 1e-9 * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if p_ball(mid, k, radius).value >= p_observed:
            lo = mid
        else:
            hi = mid
    nu_hat = 0.5 * (lo + hi)
    if abs(p_ball(nu_hat, k, radius).value - p_observed) > p_tol:
        raise NumericError("bisection finished outside the requested p tolerance")
    return nu_hat


# ---------------------------------------------------------------------------
# conditional ball moments

def _ball_conditional_chunks(lambdas: np.ndarray, radius: float, n_mc: int,
                             rng: RngStream, chunk: int):
    """Yield accepted standard-normal coordinate chunks conditioned on
    sum(lambda_i g_i^2) <= R^2.

    Each coordinate is proposed from the normal truncated to |g_i| <= R/sqrt(
    lambda_i), a box implied by the ellipsoid constraint, so the conditional
    law is unchanged while acceptance stays bounded away from zero even when
    one lambda dominates. n_mc counts proposals.
    """
    k = lambdas.shape[0]
    a = radius / np.sqrt(lambdas)
    c = np.array([erf(v / math.sqrt(2.0)) for v in a])
    lo = 0.5 * (1.0 - c)
    r2 = radius * radius
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        u = rng.uniform(m * k).reshape(m, k)
        g = ndtri(lo[None, :] + u * c[None, :])
        keep = (g * g) @ lambdas <= r2
        done += m
        yield g[keep]


@dataclass(frozen=True)
class TruncatedEigenvalues:
    mu: np.ndarray        # conditional eigenvalues, input order
    stderr: np.ndarray
    n_accepted: int
    n_proposed: int


def truncated_eigenvalues(lambdas, radius: float, n_mc: int, rng: RngStream,
                          chunk: int = 200_000) -> TruncatedEigenvalues:
    """Conditional eigenvalues mu_i = E[lambda_i g_i^2 | sum lambda_j g_j^2 <= R^2]
    by conditional Monte Carlo, with standard errors."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas <= 0):
        raise ValueError("eigenvalues must be positive")
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10000")
    if radius <= 0:
        raise ValueError("radius must be positive")
    k = lambdas.shape[0]
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    n_acc = 0
    for g in _ball_conditional_chunks(lambdas, radius, n_mc, rng, chunk):
        w = (g * g) * lambdas[None, :]
        s1 += w.sum(axis=0)
        s2 += (w * w).sum(axis=0)
        n_acc += g.shape[0]
    if n_acc < 100:
        raise EstimationError(f"only {n_acc} samples accepted; increase n_mc")
    mu = s1 / n_acc
    var = np.maximum(s2 / n_acc - mu * mu, 0.0)
    return TruncatedEigenvalues(mu=mu, stderr=np.sqrt(var / n_acc),
                                n_accepted=n_acc, n_proposed=n_mc)


def conditional_second_moments(lambdas, radius: float, n_mc: int, rng: RngStream,
                               chunk: int = 200_000):
    """Full conditional second-moment matrix of sqrt(lambda_i) g_i coordinates,
    i.e. the ball-truncated covariance expressed in the eigenbasis.

    Returns (matrix, elementwise standard errors, accepted count).
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas <= 0):
        raise ValueError("eigenvalues must be positive")
    k = lambdas.shape[0]
    sq = np.sqrt(lambdas)
    s1 = np.zeros((k, k))
    s2 = np.zeros((k, k))
    n_acc = 0
    for g in _ball_conditional_chunks(lambdas, radius, n_mc, rng, chunk):
        z = g * sq[None, :]
        s1 += z.T @ z
        zz = z * z
        s2 += zz.T @ zz
        n_acc += z.shape[0]
    if n_acc < 100:
        raise EstimationError(f"only {n_acc} samples accepted; increase n_mc")
    m = s1 / n_acc
    var = np.maximum(s2 / n_acc - m * m, 0.0)
    return (m + m.T) / 2.0, np.sqrt(var / n_acc), n_acc


def direction_error_bound(k: int, n: int, nu: float) -> float:
    """Trend-overlay bound on the direction estimation error, unit constants.

    Small spikes (nu <= k): (1/sqrt(nu)) * max(k/n, sqrt(k/n)).
    Large spikes:           sqrt(nu)/n + sqrt(sqrt(nu/k)/n).
    Residual polynomial-decay terms are omitted (their constants are not
    pinned down); use for qualitative overlays only, never as a threshold.
    """
    if nu < 1:
        raise ValueError("bound is stated for nu >= 1")
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    if nu <= k:
        ratio = k / n
        return (1.0 / math.sqrt(nu)) * max(ratio, math.sqrt(ratio))
    return math.sqrt(nu) / n + math.sqrt(math.sqrt(nu / k) / n)
