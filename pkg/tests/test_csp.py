import numpy as np
import pytest
from conftest import random_spd
from hypothesis import given, strategies as st

from mipilot.csp import CSP, apply_csp, extract_features, fit_csp
from mipilot.eig import jacobi_eigh, off_norm
from mipilot.errors import (BadM, ChannelMismatch, DegenerateVariance, NoConvergence,
                            RankDeficient)
from mipilot.signal import EegTrial, SpatialCovariance


def cov(m):
    return SpatialCovariance(m)


def check_joint_diag(model, s1, s2, tol=1e-8):
    w, lam = model.w_full, model.eigenvalues
    eye = np.eye(len(lam))
    assert np.max(np.abs(w.T @ s1 @ w - np.diag(lam))) <= tol
    assert np.max(np.abs(w.T @ s2 @ w - (eye - np.diag(lam)))) <= tol
    assert np.max(np.abs(w.T @ (s1 + s2) @ w - eye)) <= tol


class TestJacobi:
    @given(st.integers(1, 16), st.integers(0, 2**32 - 1))
    def test_matches_numpy(self, n, seed):
        a = np.random.default_rng(seed).standard_normal((n, n))
        a = (a + a.T) / 2
        w, v = jacobi_eigh(a)
        np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(a), rtol=0,
                                   atol=1e-10 * max(1, np.abs(a).max()))
        np.testing.assert_allclose(v.T @ v, np.eye(n), rtol=0, atol=1e-10)
        np.testing.assert_allclose(a @ v, v * w, rtol=0, atol=1e-9)

    def test_diagonal_input_untouched(self):
        w, v = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
        assert w.tolist() == [3.0, 1.0, 2.0]
        np.testing.assert_array_equal(v, np.eye(3))

    def test_off_norm(self):
        assert off_norm(np.array([[5.0, 3.0], [4.0, 7.0]])) == 5.0

    def test_no_convergence(self, rng):
        a = rng.standard_normal((8, 8))
        with pytest.raises(NoConvergence):
            jacobi_eigh(a + a.T, max_sweeps=1)


class TestFitCsp:
    def test_equal_covariances_give_half(self, rng):
        s = random_spd(rng, 6)
        model = fit_csp(cov(s), cov(s), 2)
        np.testing.assert_allclose(model.eigenvalues, 0.5, rtol=0, atol=1e-9)

    def test_diagonal_pair(self):
        model = fit_csp(cov(np.diag([0.8, 0.2])), cov(np.diag([0.2, 0.8])), 1)
        np.testing.assert_allclose(model.eigenvalues, [0.8, 0.2], rtol=0, atol=1e-12)
        np.testing.assert_allclose(np.abs(model.w_csp), np.eye(2), rtol=0, atol=1e-12)
        # sign fix makes the largest entry of every filter positive
        np.testing.assert_allclose(model.w_csp, np.eye(2), rtol=0, atol=1e-12)

    def test_random_pair_against_dense_oracle(self, rng):
        s1, s2 = random_spd(rng, 14), random_spd(rng, 14)
        model = fit_csp(cov(s1), cov(s2), 3)
        check_joint_diag(model, s1, s2)
        # oracle: generalized eigenvalues of (s1, s1+s2) via numpy
        c = s1 + s2
        l = np.linalg.cholesky(c)
        li = np.linalg.inv(l)
        oracle = np.sort(np.linalg.eigvalsh(li @ s1 @ li.T))[::-1]
        np.testing.assert_allclose(model.eigenvalues, oracle, rtol=0, atol=1e-10)
        assert model.w_csp.shape == (6, 14)
        keep = [0, 1, 2, 11, 12, 13]
        np.testing.assert_array_equal(model.w_csp, model.w_full[:, keep].T)

    @given(st.sampled_from([2, 4, 8, 14]), st.integers(0, 2**32 - 1))
    def test_model_invariants(self, ch, seed):
        rng = np.random.default_rng(seed)
        s1, s2 = random_spd(rng, ch), random_spd(rng, ch)
        model = fit_csp(cov(s1), cov(s2), 1)
        lam = model.eigenvalues
        assert np.all(lam >= -1e-9) and np.all(lam <= 1 + 1e-9)
        assert np.all(np.diff(lam) <= 0)
        r = model.rotation
        assert np.max(np.abs(r.T @ r - np.eye(ch))) <= 1e-9
        check_joint_diag(model, s1, s2)
        idx = np.argmax(np.abs(model.w_full), axis=0)
        assert np.all(model.w_full[idx, np.arange(ch)] > 0)

    @given(st.sampled_from([4, 8, 14]), st.integers(0, 2**32 - 1))
    def test_swap_symmetry(self, ch, seed):
        rng = np.random.default_rng(seed)
        s1, s2 = random_spd(rng, ch), random_spd(rng, ch)
        a = fit_csp(cov(s1), cov(s2), 2)
        b = fit_csp(cov(s2), cov(s1), 2)
        np.testing.assert_allclose(b.eigenvalues, np.sort(1 - a.eigenvalues)[::-1],
                                   rtol=0, atol=1e-10)
        qa, _ = np.linalg.qr(a.w_csp.T)
        qb, _ = np.linalg.qr(b.w_csp.T)
        cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
        angles = np.arccos(np.clip(cosines, -1, 1))
        assert angles.max() <= 1e-6

    def test_rank_deficient(self):
        s = np.diag([0.5, 0.5, 0.0])
        with pytest.raises(RankDeficient):
            fit_csp(cov(s), cov(s), 1)

    def test_bad_m(self, rng):
        s = random_spd(rng, 4)
        with pytest.raises(BadM):
            fit_csp(cov(s), cov(s), 3)
        with pytest.raises(BadM):
            fit_csp(cov(s), cov(s), 0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ChannelMismatch):
            fit_csp(cov(random_spd(rng, 3)), cov(random_spd(rng, 4)), 1)


class TestApplyAndFeatures:
    def test_identity_filters(self, rng):
        model = fit_csp(cov(np.diag([0.8, 0.2])), cov(np.diag([0.2, 0.8])), 1)
        x = rng.standard_normal((2, 30))
        np.testing.assert_allclose(apply_csp(model, EegTrial(x)), x, rtol=0, atol=1e-12)

    def test_zero_trial(self, rng):
        model = fit_csp(cov(random_spd(rng, 4)), cov(random_spd(rng, 4)), 2)
        assert not apply_csp(model, np.zeros((4, 10))).any()

    def test_matches_matmul_oracle(self, rng):
        model = fit_csp(cov(random_spd(rng, 8)), cov(random_spd(rng, 8)), 3)
        x = rng.standard_normal((8, 40))
        expect = np.array([[sum(model.w_csp[i, c] * x[c, t] for c in range(8))
                            for t in range(40)] for i in range(6)])
        np.testing.assert_allclose(apply_csp(model, EegTrial(x)), expect, rtol=0, atol=1e-12)

    def test_channel_mismatch(self, rng):
        model = fit_csp(cov(random_spd(rng, 4)), cov(random_spd(rng, 4)), 1)
        with pytest.raises(ChannelMismatch):
            apply_csp(model, np.zeros((3, 10)))

    def test_equal_variance_features(self):
        s = np.array([[1.0, -1.0, 1.0, -1.0], [2.0, 0.0, 2.0, 0.0]])
        np.testing.assert_allclose(extract_features(s), [np.log(0.5)] * 2, rtol=0, atol=1e-15)

    def test_ratio_three_to_one(self):
        s = np.array([[np.sqrt(3), -np.sqrt(3)], [1.0, -1.0]])
        np.testing.assert_allclose(extract_features(s), np.log([0.75, 0.25]),
                                   rtol=0, atol=1e-15)

    def test_matches_straight_line_oracle(self, rng):
        s = rng.standard_normal((6, 500)) * rng.uniform(0.1, 5, (6, 1))
        var = []
        for row in s:
            mean = sum(row) / len(row)
            var.append(sum((v - mean) ** 2 for v in row) / len(row))
        expect = [np.log(v / sum(var)) for v in var]
        np.testing.assert_allclose(extract_features(s), expect, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("s", [np.zeros((2, 10)), np.ones((2, 10)),
                                   np.array([[1.0, 2.0], [3.0, 3.0]]), np.ones((2, 1))])
    def test_degenerate(self, s):
        with pytest.raises(DegenerateVariance):
            extract_features(s)

    @given(st.integers(0, 2**32 - 1),
           st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3))
    def test_scale_invariance_and_simplex(self, seed, c):
        s = np.random.default_rng(seed).standard_normal((6, 64))
        f = extract_features(s)
        np.testing.assert_allclose(extract_features(c * s), f, rtol=0, atol=1e-12)
        assert abs(np.exp(f).sum() - 1) <= 1e-9


class TestEstimator:
    def test_fit_transform(self, rng):
        X = rng.standard_normal((40, 4, 64))
        X[:20, 0] *= 3
        y = np.repeat([1, 2], 20)
        est = CSP(n_pairs=1).fit(X, y)
        feats = est.transform(X)
        assert feats.shape == (40, 2)
        # the first filter captures class 1's boosted channel
        assert feats[:20, 0].mean() > feats[20:, 0].mean()
        assert est.filters_.shape == (2, 4)
        assert est.get_params() == {"n_pairs": 1, "class_groups": None}
