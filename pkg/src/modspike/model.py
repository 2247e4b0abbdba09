"""Generative pipeline: spiked Gaussian sampling, the coordinate-wise folding
channel, and ground-truth good/bad/ball classification of sample pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rngstat import RngStream, gaussian_vector, uniform_sphere


@dataclass(frozen=True)
class SpikedModel:
    """Covariance nu * u u^T + I in dimension k, with unit spike direction u."""
    k: int
    nu: float
    u: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        u = np.asarray(self.u, dtype=np.float64)
        if u.shape != (self.k,):
            raise ValueError("u must have length k")
        if abs(math.sqrt(float(u @ u)) - 1.0) > 1e-12:
            raise ValueError("u must be a unit vector")
        object.__setattr__(self, "u", u)

    def covariance(self) -> np.ndarray:
        c = self.nu * np.outer(self.u, self.u) + np.eye(self.k)
        return (c + c.T) / 2.0

    @staticmethod
    def random_direction(k: int, nu: float, rng: RngStream) -> "SpikedModel":
        return SpikedModel(k=k, nu=nu, u=uniform_sphere(k, rng))


@dataclass(frozen=True)
class ModuloChannel:
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def sample_spiked(model: SpikedModel, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. rows of sqrt(nu) * xi * u + Z with standard normal xi, Z.

    Draw order is fixed (n spike coefficients first, then n*k noise entries)
    so a given stream always reproduces the same matrix.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xi = rng.gaussian(n)
    z = rng.gaussian(n * model.k).reshape(n, model.k)
    return math.sqrt(model.nu) * xi[:, None] * model.u[None, :] + z


def modulo_reduce(x, delta: float):
    """Fold into [-delta/2, delta/2) via x - delta*floor(x/delta + 1/2).

    A post-correction pins the half-open boundary (delta/2 maps to -delta/2)
    against float rounding in x/delta. Values already inside the interval are
    returned bit-identical since the subtracted multiple is exactly zero.
    delta may be a scalar or an array broadcastable against x.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ValueError("delta must be positive")
    if delta.ndim == 0:
        delta = float(delta)
    scalar = np.isscalar(x)
    x = np.asarray(x, dtype=np.float64)
    y = x - delta * np.floor(x / delta + 0.5)
    half = 0.5 * delta
    y = np.where(y >= half, y - delta, y)
    y = np.where(y < -half, y + delta, y)
    return float(y) if scalar else y


def apply_channel(x: np.ndarray, channel: ModuloChannel) -> np.ndarray:
    """Coordinate-wise folding of a sample matrix; idempotent."""
    return modulo_reduce(np.asarray(x, dtype=np.float64), channel.delta)


@dataclass(frozen=True)
class SampleBatch:
    """Paired clean/folded samples with ground-truth classification flags.

    in_ball:   ||y_i|| <= R          (what a blind estimator can select)
    x_in_ball: ||x_i|| <= R          (implies in_ball)
    good:      in_ball and x_i == y_i exactly (no coordinate folded)
    bad:       in_ball and x_i != y_i
    """
    n: int
    x: np.ndarray
    y: np.ndarray
    radius: float
    in_ball: np.ndarray
    x_in_ball: np.ndarray
    good: np.ndarray
    bad: np.ndarray


def classify_batch(x: np.ndarray, y: np.ndarray, radius: float) -> SampleBatch:
    """Flag each (x, y) pair. The x == y test is exact float equality, valid
    because folding subtracts an exact multiple of delta (zero for unfolded
    coordinates)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("x and y must be matrices of identical shape")
    if radius <= 0:
        raise ValueError("radius must be positive")
    in_ball = np.linalg.norm(y, axis=1) <= radius
    x_in_ball = np.linalg.norm(x, axis=1) <= radius
    unfolded = np.all(x == y, axis=1)
    good = in_ball & unfolded
    bad = in_ball & ~unfolded
    return SampleBatch(n=x.shape[0], x=x, y=y, radius=radius,
                       in_ball=in_ball, x_in_ball=x_in_ball, good=good, bad=bad)


def generate_batch(model: SpikedModel, n: int, channel: ModuloChannel,
                   radius: float, rng: RngStream) -> SampleBatch:
    x = sample_spiked(model, n, rng)
    y = apply_channel(x, channel)
    return classify_batch(x, y, radius)


# ---------------------------------------------------------------------------
# CSV interchange

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_matrix_csv(path, m: np.ndarray) -> None:
    """Header sample_id,coord_0..coord_{k-1}; floats at 17 significant digits."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    k = m.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id," + ",".join(f"coord_{j}" for j in range(k)) + "\n")
        for i in range(m.shape[0]):
            fh.write(str(i) + "," + ",".join(_fmt(v) for v in m[i]) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "sample_id" or any(
                h != f"coord_{j}" for j, h in enumerate(header[1:])):
            raise ValueError(f"unexpected matrix CSV header in {path}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise ValueError(f"no samples in {path}")
    return np.array(rows, dtype=np.float64)


def write_flags_csv(path, batch: SampleBatch) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,in_ball,x_in_ball,good,bad\n")
        for i in range(batch.n):
            fh.write(",".join(str(int(v)) for v in
                              (i, batch.in_ball[i], batch.x_in_ball[i],
                               batch.good[i], batch.bad[i])) + "\n")
