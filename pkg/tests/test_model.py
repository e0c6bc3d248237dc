import json
import pathlib

import numpy as np
import pytest

from alto.cpd import KruskalModel, gram, hadamard_chain, init_factors, solve_pseudo
from conftest import assert_close_rel

DATA = pathlib.Path(__file__).parent / "data"


class TestGram:
    def test_orthonormal_columns(self):
        a = np.eye(5)[:, :3]
        assert np.array_equal(gram(a), np.eye(3))

    def test_ones(self):
        a = np.ones((7, 2))
        assert np.array_equal(gram(a), np.full((2, 2), 7.0))

    def test_matches_naive_loops(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 4))
        naive = np.zeros((4, 4))
        for i in range(4):
            for j in range(4):
                for k in range(6):
                    naive[i, j] += a[k, i] * a[k, j]
        assert_close_rel(gram(a), naive, rel=1e-14, scale=np.abs(naive).max())


class TestHadamardChain:
    def test_identity_product(self):
        assert np.array_equal(
            hadamard_chain([np.eye(3), np.eye(3)]), np.eye(3)
        )

    def test_ones_neutral(self):
        rng = np.random.default_rng(1)
        x = rng.random((3, 3))
        assert np.array_equal(hadamard_chain([np.ones((3, 3)), x]), x)

    def test_skip_and_naive(self):
        rng = np.random.default_rng(2)
        gs = [rng.random((2, 2)) for _ in range(4)]
        want = gs[0] * gs[2] * gs[3]
        assert_close_rel(hadamard_chain(gs, skip=1), want, rel=1e-14)

    def test_skip_only_gram(self):
        g = np.full((2, 2), 3.0)
        assert np.array_equal(hadamard_chain([g], skip=0), np.ones((2, 2)))


class TestSolvePseudo:
    def test_identity(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((5, 3))
        assert_close_rel(solve_pseudo(m, np.eye(3)), m, rel=1e-12)

    def test_scaled_identity(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((5, 3))
        assert_close_rel(solve_pseudo(m, 2 * np.eye(3)), m / 2, rel=1e-12)

    def test_rank_deficient_minimum_norm(self):
        rng = np.random.default_rng(5)
        # duplicate factor columns make the normal-equation matrix singular
        base = rng.random((6, 1))
        a = np.hstack([base, base, rng.random((6, 1))])
        v = a.T @ a
        m = rng.standard_normal((4, 3))
        got = solve_pseudo(m, v)
        want = m @ np.linalg.pinv(v)
        assert_close_rel(got, want, rel=1e-9, scale=np.abs(want).max())
        # consistency on the row space of v
        assert_close_rel(got @ v @ np.linalg.pinv(v), got, rel=1e-9,
                         scale=max(np.abs(got).max(), 1e-30))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            solve_pseudo(np.array([[np.nan]]), np.eye(1))


class TestKruskalModel:
    def test_dense_and_values_at(self):
        rng = np.random.default_rng(6)
        m = KruskalModel(
            rng.random(3), [rng.random((4, 3)), rng.random((5, 3)), rng.random((2, 3))]
        )
        dense = m.to_dense()
        coords = np.argwhere(np.ones((4, 5, 2), dtype=bool))
        assert_close_rel(
            m.values_at(coords), dense[tuple(coords.T)], rel=1e-13,
            scale=np.abs(dense).max(),
        )
        assert m.norm_squared() == pytest.approx((dense**2).sum(), rel=1e-12)

    def test_normalized_preserves_model(self):
        rng = np.random.default_rng(7)
        m = KruskalModel(np.array([2.0, 0.5]), [rng.random((4, 2)), rng.random((3, 2))])
        n2 = m.normalized(ord=2)
        assert_close_rel(n2.to_dense(), m.to_dense(), rel=1e-12,
                         scale=np.abs(m.to_dense()).max())
        for f in n2.factors:
            assert np.linalg.norm(f, axis=0) == pytest.approx([1.0, 1.0])
        n1 = m.normalized(ord=1)
        assert_close_rel(n1.to_dense(), m.to_dense(), rel=1e-12,
                         scale=np.abs(m.to_dense()).max())
        for f in n1.factors:
            assert f.sum(axis=0) == pytest.approx([1.0, 1.0])

    def test_json_roundtrip(self):
        rng = np.random.default_rng(8)
        m = KruskalModel(rng.random(2), [rng.random((3, 2)), rng.random((4, 2))])
        back = KruskalModel.from_json_dict(m.to_json_dict())
        assert np.array_equal(back.weights, m.weights)
        for a, b in zip(back.factors, m.factors):
            assert np.array_equal(a, b)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            KruskalModel(np.ones(2), [np.ones((3, 2)), np.ones((4, 3))])


class TestInitFactors:
    def test_deterministic(self):
        a = init_factors((4, 8, 2), 2, seed=7)
        b = init_factors((4, 8, 2), 2, seed=7)
        for fa, fb in zip(a.factors, b.factors):
            assert np.array_equal(fa, fb)
        assert np.array_equal(a.weights, np.ones(2))

    def test_nonneg_strictly_positive(self):
        m = init_factors((50, 60), 4, seed=1, nonneg=True)
        assert all((f > 0).all() for f in m.factors)

    def test_pinned_fixture(self):
        with open(DATA / "init_seed42_4x8x2_r2.json") as f:
            pinned = json.load(f)
        m = init_factors(tuple(pinned["shape"]), pinned["rank"], seed=pinned["seed"])
        assert m.weights.tolist() == pinned["lambda"]
        for got, want in zip(m.factors, pinned["factors"]):
            assert got.tolist() == want
