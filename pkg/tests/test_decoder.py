import math

import numpy as np
import pytest

from simodec.decoder import (
    FailureAction,
    RadiusPolicy,
    build_search_matrix,
    estimate_channel,
    exhaustive_ml,
    partial_metric,
    search_matrix_from_gram,
    sphere_decode,
)
from simodec.experiments import closed_form_diag, ideal_gram
from simodec.model import BPSK, QAM4, generate_block, snr_to_noise_var


def closed_form_factor(T, s):
    """Exact factor of the ideal shifted Gram (T*I - s s^H, unit-modulus s).

    Row i (1-based): diagonal sqrt(T - T/(T-i+1)), off-diagonal entries
    -s_i conj(s_j) * (T/(T-i+1)) / diagonal; the last row is zero.
    """
    R = np.zeros((T, T), dtype=complex)
    for i in range(T - 1):
        d = math.sqrt(T - T / (T - i))
        R[i, i] = d
        R[i, i + 1 :] = -s[i] * np.conj(s[i + 1 :]) * (T / (T - i)) / d
    return R


class TestSearchMatrix:
    def test_noiseless_true_metric_is_uniform_shift(self):
        rng = np.random.default_rng(0)
        b = generate_block(6, 12, QAM4, 0.0, rng=rng)
        sm = build_search_matrix(b.X, b.N, jitter_rel=1e-6)
        metric = float(np.sum(np.abs(sm.R @ b.s_true) ** 2))
        assert metric == pytest.approx(sm.jitter * 6, abs=1e-9)

    def test_ideal_gram_reproduces_closed_form_factor(self):
        rng = np.random.default_rng(5)
        T = 6
        s = QAM4.points[rng.integers(0, 4, size=T)]
        sm = search_matrix_from_gram(ideal_gram(s, 0.25), jitter_rel=0.0)
        assert np.max(np.abs(sm.R - closed_form_factor(T, s))) < 1e-6
        assert np.max(np.abs(sm.R.diagonal().real - closed_form_diag(T))) < 1e-9

    def test_shifted_matrix_positive_definite(self):
        rng = np.random.default_rng(3)
        b = generate_block(4, 8, QAM4, snr_to_noise_var(6.0), rng=rng)
        sm = build_search_matrix(b.X, b.N, jitter_rel=1e-6)
        G = (b.X.conj().T @ b.X) / b.N
        A = sm.rho * np.eye(4) - G
        # direct eigendecomposition oracle: min eigenvalue equals the jitter
        eig_min = float(np.linalg.eigvalsh(A)[0])
        assert eig_min > 0
        assert eig_min == pytest.approx(sm.jitter, rel=1e-6)
        assert sm.rho > sm.lambda_max
        assert np.linalg.norm(sm.R.conj().T @ sm.R - A) < 1e-9 * 4

    def test_rejects_nonpositive_jitter(self):
        with pytest.raises(ValueError):
            build_search_matrix(np.ones((4, 2), dtype=complex), 4, jitter_rel=0.0)


class TestPartialMetric:
    def test_pilot_layer_zero_on_ideal_matrix(self):
        s = QAM4.points[np.array([0, 1, 2, 3, 0])]
        sm = search_matrix_from_gram(ideal_gram(s, 0.4), jitter_rel=0.0)
        # last diagonal entry is exactly zero, so any pilot has zero metric
        for p in QAM4.points:
            assert partial_metric(sm.R, np.array([p])) == pytest.approx(0.0, abs=1e-18)

    def test_full_sequence_telescopes(self):
        rng = np.random.default_rng(8)
        b = generate_block(5, 16, QAM4, 0.5, rng=rng)
        sm = build_search_matrix(b.X, b.N)
        s = QAM4.points[rng.integers(0, 4, size=5)]
        m = 0.0
        for i in range(4, -1, -1):
            m = partial_metric(sm.R, s[i:], m)
        assert m == pytest.approx(float(np.sum(np.abs(sm.R @ s) ** 2)), abs=1e-10)

    def test_single_corruption_closed_form(self):
        rng = np.random.default_rng(13)
        T = 7
        s = QAM4.points[rng.integers(0, 4, size=T)]
        sm = search_matrix_from_gram(ideal_gram(s, 0.1), jitter_rel=0.0)
        diag = closed_form_diag(T)
        for i in range(T - 1):
            for p in QAM4.points:
                if p == s[i]:
                    continue
                suffix = s[i:].copy()
                suffix[0] = p
                m = partial_metric(sm.R, suffix)
                assert m == pytest.approx(diag[i] ** 2 * abs(p - s[i]) ** 2, abs=1e-8)
                assert m > 0


def decode_pair(b, constellation, r2=None):
    T = b.T
    policy = RadiusPolicy(r2 if r2 is not None else T / 8.0)
    sd = sphere_decode(b.X, constellation, b.pilot_symbol, policy, b.N)
    ex = exhaustive_ml(b.X, constellation, b.pilot_symbol, b.N)
    return sd, ex


class TestSphereDecode:
    def test_noiseless_recovers_truth(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            b = generate_block(6, 8, QAM4, 0.0, rng=rng)
            res = sphere_decode(b.X, QAM4, b.pilot_symbol, RadiusPolicy(6 / 8), b.N)
            assert np.array_equal(res.sequence, b.s_true)
            sm = build_search_matrix(b.X, b.N)
            assert res.metric == pytest.approx(sm.jitter * 6, abs=1e-9)

    def test_matches_exhaustive_over_grid(self):
        # the central correctness property, sampled here; the full 500-block
        # suite runs in the acceptance module
        count = 0
        for seed in range(60):
            rng = np.random.default_rng(seed)
            T = 4 + seed % 5
            N = (4, 16, 64)[seed % 3]
            constellation = QAM4 if seed % 2 else BPSK
            snr = (-2.0, 6.0, 14.0)[seed % 3]
            b = generate_block(T, N, constellation, snr_to_noise_var(snr), rng=rng)
            sd, ex = decode_pair(b, constellation)
            assert abs(sd.metric - ex.metric) < 1e-9
            assert np.array_equal(sd.sequence, ex.sequence)
            count += 1
        assert count == 60

    def test_metric_recomputes_from_scratch(self):
        rng = np.random.default_rng(77)
        b = generate_block(7, 32, QAM4, snr_to_noise_var(0.0), rng=rng)
        res = sphere_decode(b.X, QAM4, b.pilot_symbol, RadiusPolicy(7 / 8), b.N)
        sm = build_search_matrix(b.X, b.N)
        direct = float(np.sum(np.abs(sm.R @ res.sequence) ** 2))
        assert res.metric == pytest.approx(direct, abs=1e-9)

    def test_pilot_layer_single_visit_and_bounds(self):
        rng = np.random.default_rng(21)
        b = generate_block(5, 64, QAM4, snr_to_noise_var(6.0), rng=rng)
        res = sphere_decode(b.X, QAM4, b.pilot_symbol, RadiusPolicy(5 / 8), b.N)
        T = 5
        assert res.restarts == 0
        assert res.visited_per_layer[T - 1] == 1
        # per-pass tree-size bound (counts accumulate across restarts, so the
        # bound is exact only for restart-free searches)
        for i in range(T):
            assert res.visited_per_layer[i] <= 4 ** (T - 1 - i)

    def test_jitter_invariance(self):
        rng = np.random.default_rng(33)
        b = generate_block(6, 24, QAM4, snr_to_noise_var(6.0), rng=rng)
        pol = RadiusPolicy(6 / 8)
        r1 = sphere_decode(b.X, QAM4, b.pilot_symbol, pol, b.N, jitter_rel=1e-6)
        r2 = sphere_decode(b.X, QAM4, b.pilot_symbol, pol, b.N, jitter_rel=1e-4)
        assert np.array_equal(r1.sequence, r2.sequence)
        sm1 = build_search_matrix(b.X, b.N, 1e-6)
        sm2 = build_search_matrix(b.X, b.N, 1e-4)
        shift = (sm2.jitter - sm1.jitter) * 6
        assert r2.metric - r1.metric == pytest.approx(shift, abs=1e-8)

    def test_double_policy_restarts_until_found(self):
        rng = np.random.default_rng(55)
        b = generate_block(5, 4, QAM4, snr_to_noise_var(-2.0), rng=rng)
        pol = RadiusPolicy(1e-6, FailureAction.DOUBLE)
        with pytest.warns(RuntimeWarning):
            res = sphere_decode(b.X, QAM4, b.pilot_symbol, pol, b.N)
        ex = exhaustive_ml(b.X, QAM4, b.pilot_symbol, b.N)
        assert res.restarts > 0
        assert abs(res.metric - ex.metric) < 1e-9

    def test_set_infinite_policy_is_complete(self):
        rng = np.random.default_rng(56)
        b = generate_block(5, 4, BPSK, snr_to_noise_var(-2.0), rng=rng)
        pol = RadiusPolicy(1e-9, FailureAction.SET_INFINITE)
        with pytest.warns(RuntimeWarning):
            res = sphere_decode(b.X, BPSK, b.pilot_symbol, pol, b.N)
        ex = exhaustive_ml(b.X, BPSK, b.pilot_symbol, b.N)
        assert res.restarts == 1
        assert abs(res.metric - ex.metric) < 1e-9

    def test_small_radius_warns_when_shift_comparable(self):
        rng = np.random.default_rng(58)
        b = generate_block(4, 8, QAM4, 0.1, rng=rng)
        with pytest.warns(RuntimeWarning):
            sphere_decode(
                b.X, QAM4, b.pilot_symbol, RadiusPolicy(1e-9), b.N, jitter_rel=1e-3
            )

    def test_foreign_pilot_rejected(self):
        rng = np.random.default_rng(59)
        b = generate_block(4, 8, QAM4, 0.1, rng=rng)
        with pytest.raises(ValueError):
            sphere_decode(b.X, QAM4, 1j * 0.5, RadiusPolicy(0.5), b.N)


class TestExhaustive:
    def test_single_free_symbol_matches_coherent(self):
        # T=2, noiseless: the lone data symbol must come back exactly
        rng = np.random.default_rng(61)
        b = generate_block(2, 8, QAM4, 0.0, rng=rng)
        res = exhaustive_ml(b.X, QAM4, b.pilot_symbol, b.N)
        assert np.array_equal(res.sequence, b.s_true)
        assert res.visited_per_layer.tolist() == [4, 1]

    def test_cap_refused(self):
        X = np.ones((4, 16), dtype=complex)
        with pytest.raises(ValueError, match="cap"):
            exhaustive_ml(X, QAM4, QAM4.points[0], 4, cap=1000)

    def test_ideal_matrix_unique_zero_metric(self):
        rng = np.random.default_rng(67)
        T = 5
        s = QAM4.points[rng.integers(0, 4, size=T)].copy()
        s[T - 1] = QAM4.points[0]
        sm = search_matrix_from_gram(ideal_gram(s, 0.3), jitter_rel=0.0)
        # scan every candidate: only the transmitted sequence has zero metric
        import itertools

        zero_count = 0
        for combo in itertools.product(range(4), repeat=T - 1):
            cand = np.append(QAM4.points[list(combo)], QAM4.points[0])
            m = float(np.sum(np.abs(sm.R @ cand) ** 2))
            if m < 1e-12:
                zero_count += 1
                assert np.array_equal(cand, s)
        assert zero_count == 1


class TestEstimateChannel:
    def test_noiseless_exact_recovery(self):
        rng = np.random.default_rng(71)
        b = generate_block(5, 6, QAM4, 0.0, rng=rng)
        assert np.allclose(estimate_channel(b.X, b.s_true), b.h_true, atol=1e-12)

    def test_unit_vector_projects_single_column(self):
        rng = np.random.default_rng(72)
        X = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
        e1 = np.array([2.0, 0.0, 0.0], dtype=complex)
        assert np.allclose(estimate_channel(X, e1), X[:, 0] / 2.0)

    def test_local_optimality(self):
        rng = np.random.default_rng(73)
        b = generate_block(6, 10, QAM4, 0.5, rng=rng)
        h_hat = estimate_channel(b.X, b.s_true)
        base = np.linalg.norm(b.X - np.outer(h_hat, b.s_true.conj())) ** 2
        for _ in range(100):
            pert = h_hat + 0.01 * (rng.normal(size=10) + 1j * rng.normal(size=10))
            alt = np.linalg.norm(b.X - np.outer(pert, b.s_true.conj())) ** 2
            assert alt >= base - 1e-12

    def test_zero_sequence_rejected(self):
        with pytest.raises(ValueError):
            estimate_channel(np.ones((3, 2), dtype=complex), np.zeros(2, dtype=complex))
