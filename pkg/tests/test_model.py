import math

import numpy as np
import pytest

from modspike import model
from modspike.estimator import p_ball
from modspike.rngstat import RngStream

SEED = 20250809


def test_modulo_examples():
    assert model.modulo_reduce(0.3, 1.0) == 0.3
    assert model.modulo_reduce(1.3, 1.0) == pytest.approx(0.3, abs=1e-15)
    assert model.modulo_reduce(0.5, 1.0) == -0.5
    assert model.modulo_reduce(-0.5, 1.0) == -0.5
    assert model.modulo_reduce(1.5, 1.0) == -0.5


def test_modulo_passthrough_is_bit_identical():
    rng = RngStream(SEED, 0)
    x = rng.uniform(1000) - 0.5  # already inside [-1/2, 1/2)
    assert np.array_equal(model.modulo_reduce(x, 1.0), x)


def test_modulo_range_and_integral_multiple():
    rng = RngStream(SEED, 1)
    n = 100_000
    x = rng.gaussian(n) * 10.0 ** (3.0 * (rng.uniform(n) - 0.5) * 2.0)
    deltas = 10.0 ** (2.0 * (rng.uniform(n) - 0.5) * 2.0)
    for xi, di in zip(x[:20_000], deltas[:20_000]):
        y = model.modulo_reduce(float(xi), float(di))
        assert -di / 2 <= y < di / 2
        m = (xi - y) / di
        assert abs(m - round(m)) < 1e-9


def test_modulo_rejects_bad_delta():
    with pytest.raises(ValueError):
        model.modulo_reduce(1.0, 0.0)
    with pytest.raises(ValueError):
        model.ModuloChannel(-1.0)


def test_apply_channel_identity_inside_cube():
    rng = RngStream(SEED, 2)
    x = (rng.uniform(500).reshape(100, 5) - 0.5) * 1.9
    ch = model.ModuloChannel(2.0)
    assert np.array_equal(model.apply_channel(x, ch), x)


def test_apply_channel_idempotent():
    rng = RngStream(SEED, 3)
    x = rng.gaussian(5000).reshape(1000, 5) * 4.0
    ch = model.ModuloChannel(1.7)
    y = model.apply_channel(x, ch)
    assert np.array_equal(model.apply_channel(y, ch), y)


def test_integer_matrix_commutes_with_folding():
    rng = RngStream(SEED, 4)
    delta = 2.3
    x = rng.gaussian(4000).reshape(1000, 4) * 6.0
    y = model.modulo_reduce(x, delta)
    a = np.array([[1, 2, 0, -1], [0, 1, 1, 1], [3, -2, 1, 0], [0, 0, -1, 2]],
                 dtype=np.float64)
    lhs = model.modulo_reduce(y @ a.T, delta)
    rhs = model.modulo_reduce(x @ a.T, delta)
    diff = np.abs(lhs - rhs)
    diff = np.minimum(diff, delta - diff)  # wrap-around at the cell boundary
    assert np.max(diff) < 1e-9 * delta


def test_sample_spiked_zero_spike_is_standard_normal():
    mdl = model.SpikedModel(3, 0.0, np.array([0.0, 1.0, 0.0]))
    x = model.sample_spiked(mdl, 200_000, RngStream(SEED, 5))
    assert np.max(np.abs(x.mean(axis=0))) < 0.02
    assert np.max(np.abs(x.var(axis=0) - 1.0)) < 0.02


def test_sample_spiked_k1_variance():
    mdl = model.SpikedModel(1, 3.0, np.array([1.0]))
    x = model.sample_spiked(mdl, 10**6, RngStream(SEED, 6))
    assert 3.96 < x.var() < 4.04


def test_sample_spiked_covariance_k5():
    k, nu = 5, 10.0
    rng = RngStream(SEED, 7)
    mdl = model.SpikedModel.random_direction(k, nu, rng)
    x = model.sample_spiked(mdl, 10**6, rng)
    cov = x.T @ x / x.shape[0]
    assert np.linalg.norm(cov - mdl.covariance()) < 0.1


def test_spiked_model_validation():
    with pytest.raises(ValueError):
        model.SpikedModel(2, -1.0, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        model.SpikedModel(2, 1.0, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        model.SpikedModel(2, 1.0, np.array([1.0]))


def test_classification_deterministic_cases():
    delta, radius = 2.0, 2.0
    x = np.array([
        [0.5, 0.5],    # inside cube, inside ball -> good
        [2.5, 0.0],    # norm 2.5 > R, folds to (0.5, 0) inside -> bad
        [0.9, 0.9],    # inside cube, inside ball -> good
        [50.0, 50.0],  # folds to (0,0) -> bad
    ])
    y = model.modulo_reduce(x, delta)
    b = model.classify_batch(x, y, radius)
    assert b.good.tolist() == [True, False, True, False]
    assert b.bad.tolist() == [False, True, False, True]
    assert b.x_in_ball.tolist() == [True, False, True, False]
    assert b.in_ball.all()


def test_classification_chain_on_generated_batch():
    rng = RngStream(SEED, 8)
    mdl = model.SpikedModel.random_direction(10, 300.0, rng)
    batch = model.generate_batch(mdl, 20_000, model.ModuloChannel(4.0), 7.0, rng)
    assert np.all(batch.x_in_ball <= batch.in_ball)
    assert np.all(batch.good <= batch.in_ball)
    assert np.array_equal(batch.good | batch.bad, batch.in_ball)
    assert not np.any(batch.good & batch.bad)
    # fold consistency: (x - y)/delta entrywise integral
    m = (batch.x - batch.y) / 4.0
    assert np.max(np.abs(m - np.round(m))) < 1e-9


def test_ball_count_matches_binomial_mean():
    k, nu, n, batches = 5, 10.0, 200, 150
    radius = 6.0
    p = p_ball(nu, k, radius).value
    rng = RngStream(SEED, 9)
    counts = []
    for _ in range(batches):
        mdl = model.SpikedModel.random_direction(k, nu, rng)
        x = model.sample_spiked(mdl, n, rng)
        counts.append(np.count_nonzero(np.linalg.norm(x, axis=1) <= radius))
    se = math.sqrt(n * p * (1 - p) / batches)
    assert abs(np.mean(counts) - n * p) <= 3 * se


def test_matrix_csv_roundtrip(tmp_path):
    rng = RngStream(SEED, 10)
    x = rng.gaussian(60).reshape(12, 5) * 1e3
    path = tmp_path / "x.csv"
    model.write_matrix_csv(path, x)
    assert np.array_equal(model.read_matrix_csv(path), x)
    header = path.read_text().splitlines()[0]
    assert header == "sample_id,coord_0,coord_1,coord_2,coord_3,coord_4"


def test_matrix_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,c0\n0,1.5\n")
    with pytest.raises(ValueError):
        model.read_matrix_csv(path)


def test_flags_csv_layout(tmp_path):
    rng = RngStream(SEED, 11)
    mdl = model.SpikedModel.random_direction(3, 50.0, rng)
    batch = model.generate_batch(mdl, 25, model.ModuloChannel(2.0), 2.5, rng)
    path = tmp_path / "flags.csv"
    model.write_flags_csv(path, batch)
    lines = path.read_text().splitlines()
    assert lines[0] == "sample_id,in_ball,x_in_ball,good,bad"
    assert len(lines) == 26
    first = lines[1].split(",")
    assert first[0] == "0" and set(first[1:]) <= {"0", "1"}
