import numpy as np
import pytest

from modspike import linalg as la

SEED = 20250809


def test_sym_eig_identity():
    e = la.sym_eig(np.eye(6))
    assert np.allclose(e.eigenvalues, 1.0, atol=1e-14)


def test_sym_eig_diagonal():
    e = la.sym_eig(np.diag([3.0, 1.0]))
    assert e.eigenvalues == pytest.approx([3.0, 1.0], abs=1e-14)
    assert np.allclose(np.abs(e.eigenvectors), np.eye(2), atol=1e-14)
    # sign rule: largest-magnitude coordinate positive
    assert e.eigenvectors[0, 0] > 0 and e.eigenvectors[1, 1] > 0


def test_sym_eig_residual_random():
    rng = np.random.default_rng(SEED)
    m = rng.standard_normal((20, 20))
    a = la.symmetrize(m + m.T)
    e = la.sym_eig(a)
    lam1 = abs(e.eigenvalues[0])
    res = np.linalg.norm(a @ e.eigenvectors - e.eigenvectors * e.eigenvalues, axis=0)
    assert np.max(res) < 1e-10 * (1.0 + lam1)
    gram = e.eigenvectors.T @ e.eigenvectors
    assert np.max(np.abs(gram - np.eye(20))) < 1e-10
    assert np.all(np.diff(e.eigenvalues) <= 0)


def test_sym_eig_reconstruction_spd():
    rng = np.random.default_rng(SEED + 1)
    for k in (3, 10, 40):
        b = rng.standard_normal((k, k))
        a = la.symmetrize(b @ b.T + np.eye(k))
        e = la.sym_eig(a)
        rec = e.eigenvectors @ np.diag(e.eigenvalues) @ e.eigenvectors.T
        assert np.linalg.norm(rec - a) / np.linalg.norm(a) < 1e-9


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        la.sym_eig(np.array([[1.0, 2.0], [2.0 + 1e-14, 1.0]]))


def test_sym_eig_handles_spiked_scale():
    rng = np.random.default_rng(SEED + 2)
    u = rng.standard_normal(30)
    u /= np.linalg.norm(u)
    a = la.symmetrize(1e6 * np.outer(u, u) + np.eye(30))
    e = la.sym_eig(a)
    assert e.eigenvalues[0] == pytest.approx(1e6 + 1.0, rel=1e-10)
    assert abs(float(e.eigenvectors[:, 0] @ u)) == pytest.approx(1.0, abs=1e-10)


def test_cholesky_cases():
    assert np.array_equal(la.cholesky(np.eye(4)), np.eye(4))
    L = la.cholesky(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert L == pytest.approx(np.array([[2.0, 0.0], [1.0, 1.0]]), abs=1e-14)
    rng = np.random.default_rng(SEED + 3)
    b = rng.standard_normal((15, 15))
    a = la.symmetrize(b @ b.T + 0.5 * np.eye(15))
    L = la.cholesky(a)
    assert np.linalg.norm(L @ L.T - a) / np.linalg.norm(a) < 1e-10
    assert np.all(np.diag(L) > 0)
    assert np.allclose(L, np.tril(L))


def test_cholesky_rejects_indefinite():
    with pytest.raises(ValueError):
        la.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_int_det_exact():
    assert la.int_det([[1]]) == 1
    assert la.int_det([[2, 3], [4, 7]]) == 2
    assert la.int_det([[2, 0], [0, 1]]) == 2
    assert la.int_det([[1, 2], [2, 4]]) == 0
    # permutation with a swap picks up the sign
    assert la.int_det([[0, 1], [1, 0]]) == -1


def test_unimodular_inverse_cases():
    assert la.unimodular_inverse([[1, 0], [0, 1]]) == [[1, 0], [0, 1]]
    assert la.unimodular_inverse([[1, 1], [0, 1]]) == [[1, -1], [0, 1]]
    with pytest.raises(ValueError):
        la.unimodular_inverse([[2, 0], [0, 1]])


def _random_shear_product(rng, k: int, steps: int) -> la.IntMatrix:
    m = [[int(i == j) for j in range(k)] for i in range(k)]
    for _ in range(steps):
        i, j = rng.choice(k, size=2, replace=False)
        c = int(rng.integers(-4, 5))
        for t in range(k):
            m[i][t] += c * m[j][t]
    return m


def test_unimodular_inverse_roundtrip_exact():
    rng = np.random.default_rng(SEED + 4)
    for _ in range(60):
        k = int(rng.integers(2, 7))
        m = _random_shear_product(rng, k, steps=25)
        inv = la.unimodular_inverse(m)
        assert la.is_identity(la.int_matmul(m, inv))
        assert la.is_identity(la.int_matmul(inv, m))
        assert abs(la.int_det(m)) == 1


def test_unimodular_inverse_big_entries_uses_exact_path():
    # entries beyond float53 force the Fraction fallback
    big = 1 << 60
    m = [[1, big], [0, 1]]
    inv = la.unimodular_inverse(m)
    assert inv == [[1, -big], [0, 1]]
    assert la.is_identity(la.int_matmul(m, inv))


def test_int_matmul_matches_python_path():
    rng = np.random.default_rng(SEED + 5)
    a = [[int(v) for v in row] for row in rng.integers(-50, 50, size=(5, 5))]
    b = [[int(v) for v in row] for row in rng.integers(-50, 50, size=(5, 5))]
    fast = la.int_matmul(a, b)
    slow = [[sum(a[i][t] * b[t][j] for t in range(5)) for j in range(5)]
            for i in range(5)]
    assert fast == slow
