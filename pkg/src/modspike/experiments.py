"""Experiment drivers and Monte-Carlo verification checks behind the CLI.

Every cell of every experiment draws from a stream keyed by the cell's actual
parameter values (never grid position), so reordering a sweep grid or rerunning
a single cell reproduces identical numbers. Trial aggregation uses exact
summation, making results independent of reduction order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import lattice, linalg
from .estimator import (EstimationError, align_sign, conditional_second_moments,
                        default_radius, estimate_spike, p_ball, p_ball_mc)
from .model import (ModuloChannel, SpikedModel, apply_channel, classify_batch,
                    sample_spiked)
from .rngstat import RngStream, derive_stream_id, uniform_sphere

FIG3A_HEADER = ["k", "alpha", "nu", "delta", "mean_error", "stderr", "trials"]
FIG3B_HEADER = ["k", "nu", "delta_exp", "decoder", "p_e_hat", "trials_total"]
VERIFY_HEADER = ["lemma_id", "statistic", "bound_or_reference", "standard_error",
                 "pass", "trials"]
LEMMA_IDS = ("prop1", "pball", "convex", "gap", "badprob", "voronoi", "nball")
DECODERS_3B = ("informed_if", "blind_if", "trivial")


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared experiment knobs; rule fields pick between derived and absolute
    values (delta from a multiple of sqrt(log k), nu from a power of k)."""
    k: int = 50
    n: int | None = None            # defaults to k^2
    trials: int = 200
    master_seed: int = 0
    delta_factor: float = 16.0      # delta = factor * sqrt(log k)
    delta_abs: float | None = None  # absolute delta wins when set
    nu_power: float = 3.0           # nu = k^alpha
    nu_abs: float | None = None
    radius_abs: float | None = None

    def __post_init__(self):
        if self.k < 1 or self.trials < 1:
            raise ValueError("k and trials must be >= 1")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be >= 1")
        if self.delta_factor <= 0:
            raise ValueError("delta_factor must be positive")

    def sample_count(self) -> int:
        return self.n if self.n is not None else self.k * self.k

    def delta(self) -> float:
        if self.delta_abs is not None:
            return self.delta_abs
        return self.delta_factor * math.sqrt(math.log(self.k))

    def nu(self) -> float:
        if self.nu_abs is not None:
            return self.nu_abs
        return float(self.k) ** self.nu_power

    def radius(self) -> float:
        if self.radius_abs is not None:
            return self.radius_abs
        return default_radius(self.k)


_CONFIG_KEYS = {
    "k": ("k", int),
    "n": ("n", int),
    "trials": ("trials", int),
    "seed": ("master_seed", int),
    "delta_factor": ("delta_factor", float),
    "delta": ("delta_abs", float),
    "alpha": ("nu_power", float),
    "nu": ("nu_abs", float),
    "radius": ("radius_abs", float),
}


def parse_config_file(path) -> dict:
    """Flat `key = value` UTF-8 config; '#' starts a comment; unknown keys are
    fatal. Returns field overrides for ExperimentConfig."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            field, cast = _CONFIG_KEYS[key]
            try:
                overrides[field] = cast(value.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return overrides


def build_config(file_overrides: dict | None = None,
                 cli_overrides: dict | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if file_overrides:
        cfg = replace(cfg, **file_overrides)
    if cli_overrides:
        cfg = replace(cfg, **{k: v for k, v in cli_overrides.items() if v is not None})
    return cfg


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    m = len(values)
    if m == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def _cell_stream(cfg: ExperimentConfig, *parts) -> RngStream:
    return RngStream(cfg.master_seed, derive_stream_id(*parts))


# ---------------------------------------------------------------------------
# figure experiments

def run_figure3a(config: ExperimentConfig, alpha_grid) -> list[dict]:
    """Estimation error against spike exponent alpha (nu = k^alpha).

    One row per alpha: the mean of ||u - u_hat|| (sign-aligned) over trials
    with a fresh uniform direction per trial. Trials whose selection ball is
    empty are excluded; the `trials` column counts the trials actually
    averaged.
    """
    k = config.k
    n = config.sample_count()
    delta = config.delta()
    radius = config.radius()
    channel = ModuloChannel(delta)
    rows = []
    for alpha in alpha_grid:
        alpha = float(alpha)
        nu = float(k) ** alpha
        errors: list[float] = []
        for t in range(config.trials):
            rng = _cell_stream(config, "fig3a", k, n, float(delta), alpha, t)
            u = uniform_sphere(k, rng)
            x = sample_spiked(SpikedModel(k, nu, u), n, rng)
            y = apply_channel(x, channel)
            try:
                est = estimate_spike(y, radius)
            except EstimationError:
                continue
            errors.append(float(np.linalg.norm(u - align_sign(est.u_hat, u))))
        mean, stderr = _mean_stderr(errors)
        rows.append({"k": k, "alpha": alpha, "nu": nu, "delta": delta,
                     "mean_error": mean, "stderr": stderr, "trials": len(errors)})
    return rows


def _blind_if_decoder(y: np.ndarray, nu: float, radius: float,
                      delta: float) -> lattice.IFDecoder:
    """Integer forcing from the estimated direction with the true spike
    strength supplied: sigma_hat = nu * u_hat u_hat^T + I."""
    est = estimate_spike(y, radius)
    k = y.shape[1]
    sigma_hat = linalg.symmetrize(nu * np.outer(est.u_hat, est.u_hat) + np.eye(k))
    return lattice.integer_forcing_matrix(sigma_hat, delta)


def run_figure3b(config: ExperimentConfig, delta_exp_grid) -> list[dict]:
    """Unwrapping error rate against delta exponent, delta = 2^d * sqrt(log k),
    for the informed IF, blind IF, and trivial decoders.

    All decoders at a grid point share each trial's data, and error counts are
    pooled over trials * n single recovery attempts (`trials_total`). Blind
    trials whose estimation fails are excluded from the blind pool only.
    """
    k = config.k
    n = config.sample_count()
    nu = config.nu()
    radius = config.radius()
    sqrt_log_k = math.sqrt(math.log(k))
    rows = []
    for dexp in delta_exp_grid:
        dexp = float(dexp)
        delta = 2.0 ** dexp * sqrt_log_k
        channel = ModuloChannel(delta)
        errors = {name: 0 for name in DECODERS_3B}
        samples = {name: 0 for name in DECODERS_3B}
        for t in range(config.trials):
            rng = _cell_stream(config, "fig3b", k, n, float(nu), dexp, t)
            u = uniform_sphere(k, rng)
            x = sample_spiked(SpikedModel(k, nu, u), n, rng)
            y = apply_channel(x, channel)
            sigma = linalg.symmetrize(nu * np.outer(u, u) + np.eye(k))
            informed = lattice.integer_forcing_matrix(sigma, delta)
            for name, xhat in (
                    ("informed_if", lattice.if_decode(y, informed)),
                    ("trivial", lattice.trivial_decode(y))):
                rep = lattice.evaluate_unwrapping(x, xhat, delta, name)
                errors[name] += rep.n_errors
                samples[name] += rep.n
            try:
                blind = _blind_if_decoder(y, nu, radius, delta)
            except EstimationError:
                continue
            rep = lattice.evaluate_unwrapping(
                x, lattice.if_decode(y, blind), delta, "blind_if")
            errors["blind_if"] += rep.n_errors
            samples["blind_if"] += rep.n
        for name in DECODERS_3B:
            tot = samples[name]
            rows.append({"k": k, "nu": nu, "delta_exp": dexp, "decoder": name,
                         "p_e_hat": errors[name] / tot if tot else math.nan,
                         "trials_total": tot})
    rows.sort(key=lambda r: (r["decoder"], r["delta_exp"]))
    return rows


# ---------------------------------------------------------------------------
# lemma verification

@dataclass(frozen=True)
class VerificationReport:
    lemma_id: str
    statistic: float
    bound_or_reference: float
    standard_error: float
    passed: bool
    trials: int


def _conditional_cov_mc(mdl: SpikedModel, radius: float, n_accept: int,
                        rng: RngStream, directions: np.ndarray | None = None,
                        chunk: int = 100_000):
    """Second moments of X | ||X|| <= R by plain rejection on model samples,
    run until n_accept samples are kept.

    Returns (M, SE, n_acc) and, when probe directions are given, per-direction
    mean/SE of <v, X>^2 as a fourth element.
    """
    k = mdl.k
    s1 = np.zeros((k, k))
    s2 = np.zeros((k, k))
    v_s1 = v_s2 = None
    if directions is not None:
        v_s1 = np.zeros(directions.shape[1])
        v_s2 = np.zeros(directions.shape[1])
    n_acc = 0
    proposed = 0
    cap = 2000 * n_accept
    while n_acc < n_accept:
        if proposed >= cap:
            raise EstimationError("ball acceptance too low for conditional MC")
        x = sample_spiked(mdl, chunk, rng)
        proposed += chunk
        keep = x[np.linalg.norm(x, axis=1) <= radius]
        if keep.shape[0] == 0:
            continue
        n_acc += keep.shape[0]
        s1 += keep.T @ keep
        kk = keep * keep
        s2 += kk.T @ kk
        if directions is not None:
            q = (keep @ directions) ** 2
            v_s1 += q.sum(axis=0)
            v_s2 += (q * q).sum(axis=0)
    m = s1 / n_acc
    var = np.maximum(s2 / n_acc - m * m, 0.0)
    out = ((m + m.T) / 2.0, np.sqrt(var / n_acc), n_acc)
    if directions is None:
        return out
    vm = v_s1 / n_acc
    vvar = np.maximum(v_s2 / n_acc - vm * vm, 0.0)
    return out + ((vm, np.sqrt(vvar / n_acc)),)


def _spiked_setup(k: int, nu: float, rng: RngStream):
    u = uniform_sphere(k, rng)
    mdl = SpikedModel(k, nu, u)
    sigma = mdl.covariance()
    eig = linalg.sym_eig(sigma)
    return mdl, sigma, eig


def _verify_prop1(k, nu, radius, trials, rng) -> VerificationReport:
    """Eigenbasis of the covariance diagonalizes the ball-truncated second
    moment, and conditional eigenvalues keep the original order.

    The check runs in the eigenbasis frame (the conditioning event is
    rotation invariant, so the conditional moments transform covariantly),
    which gives honest per-entry standard errors for the off-diagonals.
    """
    mdl, _, eig = _spiked_setup(k, nu, rng)
    u_rot = eig.eigenvectors.T @ mdl.u
    u_rot /= np.linalg.norm(u_rot)
    m, se, n_acc = _conditional_cov_mc(SpikedModel(k, nu, u_rot), radius,
                                       trials, rng)
    ratio = np.abs(m - np.diag(np.diag(m))) / np.maximum(se, 1e-300)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    mu_hat = np.diag(m)
    lam_sorted = eig.eigenvalues[np.argsort(-mu_hat, kind="stable")]
    lam_tol = 1e-9 * max(1.0, float(eig.eigenvalues[0]))
    ordering_ok = bool(np.all(np.diff(lam_sorted) <= lam_tol))
    passed = bool(ratio[i, j] <= 3.0) and ordering_ok
    return VerificationReport("prop1", float(m[i, j]), 0.0, float(se[i, j]),
                              passed, n_acc)


def _verify_pball(k, nu, radius, trials, rng) -> VerificationReport:
    quad = p_ball(nu, k, radius)
    mc = p_ball_mc(nu, k, radius, trials, rng)
    sigma = math.sqrt(max(quad.value * (1.0 - quad.value), 1.0 / trials) / trials)
    bracket_ok = (quad.lower_bound - 1e-6 <= quad.value <= quad.upper_bound + 1e-6)
    passed = abs(mc.value - quad.value) <= 3.0 * sigma and bracket_ok
    return VerificationReport("pball", mc.value, quad.value, sigma, passed, trials)


def _verify_convex(k, nu, radius, trials, rng) -> VerificationReport:
    """Ball truncation cannot inflate any directional second moment."""
    mdl, sigma, _ = _spiked_setup(k, nu, rng)
    n_dirs = 50
    dirs = np.column_stack([uniform_sphere(k, rng) for _ in range(n_dirs)])
    _, _, n_acc, (vmean, vse) = _conditional_cov_mc(mdl, radius, trials, rng,
                                                    directions=dirs)
    ref = np.einsum("ji,jk,ki->i", dirs, sigma, dirs)
    excess = (vmean - ref) / np.maximum(vse, 1e-300)
    worst = int(np.argmax(excess))
    passed = bool(excess[worst] <= 3.0)
    return VerificationReport("convex", float(vmean[worst]), float(ref[worst]),
                              float(vse[worst]), passed, n_acc)


def _verify_gap(k, nu, radius, trials, rng) -> VerificationReport:
    """Positive and nu-monotone spectral gap of the truncated covariance,
    evaluated on the grid nu in {1, k, 10k} (the supplied nu is ignored)."""
    gaps = []
    ses = []
    for nu_i in (1.0, float(k), 10.0 * float(k)):
        lam = np.concatenate([[1.0 + nu_i], np.ones(k - 1)])
        m, se, n_acc = conditional_second_moments(lam, radius, trials, rng)
        mu = np.diag(m)
        second = int(np.argmax(mu[1:])) + 1
        gaps.append(float(mu[0] - mu[second]))
        ses.append(float(math.hypot(se[0, 0], se[second, second])))
    positive_ok = all(g > 3.0 * s for g, s in zip(gaps, ses))
    monotone_ok = all(gaps[i + 1] >= gaps[i] - 3.0 * math.hypot(ses[i], ses[i + 1])
                      for i in range(len(gaps) - 1))
    worst = int(np.argmin([g / s for g, s in zip(gaps, ses)]))
    return VerificationReport("gap", gaps[worst], 0.0, ses[worst],
                              bool(positive_ok and monotone_ok), trials)


def _verify_badprob(k, nu, delta, radius, trials, rng) -> VerificationReport:
    """Probability that a single folded sample is bad (in the ball but
    folded), over a fresh uniform direction per trial."""
    channel = ModuloChannel(delta)
    bad = 0
    chunk = 20_000
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        g = rng.gaussian(m * k).reshape(m, k)
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        xi = rng.gaussian(m)
        z = rng.gaussian(m * k).reshape(m, k)
        x = math.sqrt(nu) * xi[:, None] * u + z
        y = apply_channel(x, channel)
        batch = classify_batch(x, y, radius)
        bad += int(batch.bad.sum())
        done += m
    p_hat = bad / trials
    sigma = math.sqrt(p_hat * (1.0 - p_hat) / trials)
    passed = p_hat <= 1e-3 + 3.0 * sigma
    return VerificationReport("badprob", p_hat, 1e-3, sigma, passed, trials)


def _verify_voronoi(k, nu, delta, trials, rng) -> VerificationReport:
    """MAP success probability equals the Gaussian mass of the origin's
    Voronoi cell of delta * Sigma^(-1/2) Z^k (both by Monte Carlo, k = 2)."""
    if k != 2:
        raise ValueError("voronoi check is defined for k = 2")
    mdl, sigma, _ = _spiked_setup(k, nu, rng)
    x = sample_spiked(mdl, trials, rng)
    y = apply_channel(x, ModuloChannel(delta))
    xhat = lattice.map_decode_batch(y, sigma, delta)
    rep = lattice.evaluate_unwrapping(x, xhat, delta, "map")
    p_map = 1.0 - rep.p_e_hat
    bound = lattice._default_coeff_bound(sigma, delta)
    p_vor = lattice.gaussian_voronoi_mass_mc(sigma, delta, bound, trials, rng)
    sigma_comb = math.sqrt((p_map * (1 - p_map) + p_vor * (1 - p_vor)) / trials)
    passed = abs(p_map - p_vor) <= 3.0 * max(sigma_comb, 1e-12)
    return VerificationReport("voronoi", p_map, p_vor, sigma_comb, passed, trials)


def _verify_nball(k, nu, radius, trials, rng, n=None) -> VerificationReport:
    """|K_Ball| is Binomial(n, p_ball): batch means against the quadrature."""
    n = n if n is not None else k * k
    p = p_ball(nu, k, radius).value
    counts = []
    for _ in range(trials):
        mdl = SpikedModel(k, nu, uniform_sphere(k, rng))
        x = sample_spiked(mdl, n, rng)
        counts.append(float(np.count_nonzero(np.linalg.norm(x, axis=1) <= radius)))
    mean = math.fsum(counts) / trials
    ref = n * p
    se = math.sqrt(n * p * (1.0 - p) / trials)
    passed = abs(mean - ref) <= 3.0 * max(se, 1e-12)
    return VerificationReport("nball", mean, ref, se, passed, trials)


def verify(lemma_id: str, config: ExperimentConfig) -> VerificationReport:
    """Run one named Monte-Carlo check at the configured scale."""
    if lemma_id not in LEMMA_IDS:
        raise ValueError(f"unknown lemma id {lemma_id!r}; choose from {LEMMA_IDS}")
    rng = _cell_stream(config, "verify", lemma_id, config.k,
                       float(config.nu()), float(config.delta()),
                       float(config.radius()), config.trials)
    k = config.k
    nu = config.nu()
    radius = config.radius()
    delta = config.delta()
    trials = config.trials
    if lemma_id == "prop1":
        return _verify_prop1(k, nu, radius, trials, rng)
    if lemma_id == "pball":
        return _verify_pball(k, nu, radius, trials, rng)
    if lemma_id == "convex":
        return _verify_convex(k, nu, radius, trials, rng)
    if lemma_id == "gap":
        return _verify_gap(k, nu, radius, trials, rng)
    if lemma_id == "badprob":
        return _verify_badprob(k, nu, delta, radius, trials, rng)
    if lemma_id == "voronoi":
        return _verify_voronoi(k, nu, delta, trials, rng)
    return _verify_nball(k, nu, radius, trials, rng, n=config.n)


# ---------------------------------------------------------------------------
# CSV emission

def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def rows_to_csv(header: list[str], rows: list[dict]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(row[h]) for h in header))
    return "\n".join(lines) + "\n"


def report_to_row(report: VerificationReport) -> dict:
    return {"lemma_id": report.lemma_id, "statistic": report.statistic,
            "bound_or_reference": report.bound_or_reference,
            "standard_error": report.standard_error, "pass": report.passed,
            "trials": report.trials}
