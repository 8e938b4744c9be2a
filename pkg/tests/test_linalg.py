import numpy as np
import pytest

from polyproj.errors import InputError
from polyproj.linalg import (QrFactorization, lstsq_min_norm, orth_complement_apply,
                             qr_pivoted)


def test_qr_identity():
    f = qr_pivoted(np.eye(2), 1e-12)
    assert f.rank == 2
    np.testing.assert_allclose(np.abs(f.q1), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(np.abs(f.r), np.eye(2), atol=1e-15)


def test_qr_column_vector():
    f = qr_pivoted([[1.0], [2.0]], 1e-12)
    assert f.rank == 1
    u = np.array([1.0, 2.0]) / np.sqrt(5.0)
    assert abs(abs(f.q1[:, 0] @ u) - 1.0) < 1e-15


def test_qr_duplicated_column():
    assert qr_pivoted([[1.0, 1.0], [1.0, 1.0]], 1e-12).rank == 1


def test_qr_rejects_bad_input():
    with pytest.raises(InputError):
        qr_pivoted([[1.0, np.nan]])
    with pytest.raises(InputError):
        qr_pivoted(np.zeros((0, 3)))
    with pytest.raises(InputError):
        qr_pivoted(np.eye(2), 0.0)


def test_qr_random_invariants():
    rng = np.random.default_rng(0)
    for _ in range(200):
        rows, cols = rng.integers(1, 13, size=2)
        h = rng.normal(size=(rows, cols))
        f = qr_pivoted(h)
        assert f.rank <= min(rows, cols)
        np.testing.assert_allclose(f.q1.T @ f.q1, np.eye(f.rank), atol=1e-12)
        rec = f.q1 @ f.r
        err = np.linalg.norm(h[:, f.pivot] - rec) / np.linalg.norm(h)
        assert err <= 1e-10


def test_qr_recovers_rank_of_products():
    rng = np.random.default_rng(1)
    for k in range(1, 9):
        for _ in range(10):
            U = rng.normal(size=(12, k))
            V = rng.normal(size=(10, k))
            assert qr_pivoted(U @ V.T).rank == k


def test_orth_complement_examples():
    np.testing.assert_array_equal(orth_complement_apply(QrFactorization.empty(2), [3.0, -1.0]),
                                  [3.0, -1.0])
    f = qr_pivoted([[1.0], [2.0]])
    np.testing.assert_allclose(orth_complement_apply(f, [1.0, 0.0]), [0.8, -0.4], atol=1e-15)
    f = qr_pivoted([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(orth_complement_apply(f, [1.0, 1.0]), [0.0, 0.0], atol=1e-15)
    with pytest.raises(InputError):
        orth_complement_apply(f, [1.0, 2.0, 3.0])


def test_orth_complement_random():
    rng = np.random.default_rng(2)
    for _ in range(200):
        rows, cols = rng.integers(1, 13, size=2)
        f = qr_pivoted(rng.normal(size=(rows, cols)))
        v = rng.normal(size=rows)
        w = orth_complement_apply(f, v)
        assert np.max(np.abs(f.q1.T @ w), initial=0.0) <= 1e-10
        np.testing.assert_allclose(orth_complement_apply(f, w), w, atol=1e-10)
        np.testing.assert_allclose(w + f.q1 @ (f.q1.T @ v), v, atol=1e-10)


def test_lstsq_examples():
    z, res = lstsq_min_norm([[1.0], [1.0]], [1.0, 1.0])
    np.testing.assert_allclose(z, [1.0], atol=1e-15)
    assert res < 1e-15
    z, _ = lstsq_min_norm(np.eye(2), [3.0, 4.0])
    np.testing.assert_allclose(z, [3.0, 4.0], atol=1e-15)
    z, res = lstsq_min_norm([[1.0], [2.0]], [1.0, 0.0])
    np.testing.assert_allclose(z, [0.2], atol=1e-15)
    assert abs(res - np.linalg.norm([0.8, -0.4])) < 1e-15
    with pytest.raises(InputError):
        lstsq_min_norm(np.eye(2), [1.0])


def test_lstsq_matches_normal_equations():
    rng = np.random.default_rng(3)
    for _ in range(200):
        cols = int(rng.integers(1, 8))
        rows = int(rng.integers(cols, 13))
        h = rng.normal(size=(rows, cols))
        r = rng.normal(size=rows)
        z, _ = lstsq_min_norm(h, r)
        ref = np.linalg.solve(h.T @ h, h.T @ r)
        assert np.linalg.norm(z - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


def test_lstsq_minimum_norm_on_rank_deficient():
    rng = np.random.default_rng(4)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        h = rng.normal(size=(8, k)) @ rng.normal(size=(k, 6))
        r = rng.normal(size=8)
        z, _ = lstsq_min_norm(h, r)
        np.testing.assert_allclose(z, np.linalg.pinv(h) @ r, atol=1e-9)
