import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botcensus.calibration import (
    LOG_T_HIGH,
    LOG_T_LOW,
    apply_temperature,
    expected_calibration_error,
    fit_temperature,
)
from botcensus.errors import (
    BadTemperature,
    DimensionError,
    EmptyValidation,
    SingleClassError,
)
from botcensus.numerics import nll_of_logits, softmax


def grid_argmin_T(Z, y, points=4001):
    """Independent grid-search oracle over the same temperature window."""
    grid = np.exp(np.linspace(LOG_T_LOW, LOG_T_HIGH, points))
    nlls = [nll_of_logits(Z / t, y) for t in grid]
    return float(grid[int(np.argmin(nlls))])


class TestApplyTemperature:
    def test_equal_logits_stay_uniform(self):
        for c in (-3.0, 0.0, 7.5):
            for T in (0.1, 1.0, 9.0):
                assert apply_temperature(np.array([c, c]), T) == pytest.approx(
                    [0.5, 0.5]
                )

    def test_unit_temperature_is_softmax(self):
        z = np.array([0.3, -1.2])
        assert apply_temperature(z, 1.0) == pytest.approx(softmax(z))

    def test_two_temperature_example(self):
        probs = apply_temperature(np.array([0.0, 2.0]), 2.0)
        assert probs == pytest.approx([0.2689, 0.7311], abs=1e-4)

    @given(
        st.floats(-20, 20), st.floats(-20, 20),
        st.floats(0.05, 20.0),
    )
    def test_argmax_preserved(self, a, b, T):
        z = np.array([a, b])
        assert apply_temperature(z, T).argmax() == softmax(z).argmax()

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(20, 2)) * 5
        probs = apply_temperature(z, 0.3)
        assert np.allclose(probs.sum(axis=1), 1.0)

    @pytest.mark.parametrize("T", [0.0, -1.0, float("nan"), float("inf")])
    def test_bad_temperature(self, T):
        with pytest.raises(BadTemperature):
            apply_temperature(np.array([0.0, 1.0]), T)


def calibrated_fixture():
    """Logits whose NLL-optimal temperature is exactly 1: one logit family
    with empirical label frequency equal to its softmax probability."""
    logit_gap = math.log(0.8 / 0.2)  # p_bot = 0.8 at T = 1
    Z = np.tile([0.0, logit_gap], (10, 1))
    y = np.array([1] * 8 + [0] * 2)
    return Z, y


class TestFitTemperature:
    def test_already_calibrated_returns_one(self):
        Z, y = calibrated_fixture()
        T = fit_temperature(Z, y)
        oracle = grid_argmin_T(Z, y)
        assert T == pytest.approx(1.0, abs=1e-2)
        assert oracle == pytest.approx(1.0, abs=1e-2)

    def test_overconfident_correct_drifts_to_window_edge(self):
        # Every prediction correct: sharpening only lowers the NLL, so the
        # minimizer sits at the window edge. Margins stay small enough that
        # the NLL is strictly decreasing (no float-underflow plateau).
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, size=40)
        Z = rng.uniform(1.0, 2.0, size=(40, 1)) * np.eye(2)[y]
        T = fit_temperature(Z, y)
        oracle = grid_argmin_T(Z, y)
        assert T == pytest.approx(oracle, abs=1e-2)
        assert T == pytest.approx(math.exp(LOG_T_LOW), abs=1e-2)

    def test_underconfident_fixture_matches_grid_oracle(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 2, size=200)
        margins = rng.uniform(0.2, 0.6, size=200)
        Z = np.zeros((200, 2))
        Z[np.arange(200), y] = margins
        noise = rng.random(200) < 0.05
        Z[noise] = Z[noise][:, ::-1]
        T = fit_temperature(Z, y)
        assert T == pytest.approx(grid_argmin_T(Z, y), abs=1e-2)
        assert T < 1.0

    def test_duplicating_validation_set_is_invariant(self):
        Z, y = calibrated_fixture()
        T1 = fit_temperature(Z, y)
        T2 = fit_temperature(np.vstack([Z, Z]), np.concatenate([y, y]))
        assert T1 == pytest.approx(T2, abs=1e-12)

    def test_fitted_nll_never_worse_than_unit(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            r = np.random.default_rng(seed)
            Z = r.normal(size=(50, 2)) * r.uniform(0.5, 5)
            y = r.integers(0, 2, size=50)
            T = fit_temperature(Z, y)
            assert nll_of_logits(Z / T, y) <= nll_of_logits(Z, y) + 1e-12

    def test_errors(self):
        Z, y = calibrated_fixture()
        with pytest.raises(EmptyValidation):
            fit_temperature(Z[:5], y[:5])
        with pytest.raises(SingleClassError):
            fit_temperature(Z, np.ones_like(y))
        with pytest.raises(DimensionError):
            fit_temperature(Z, y[:-1])


def ece_oracle(P, y, bins):
    """Direct per-bin loop."""
    n = len(y)
    conf = P.max(axis=1)
    correct = (P.argmax(axis=1) == y).astype(float)
    total = 0.0
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        if b == bins - 1:
            mask = (conf >= lo) & (conf <= hi)
        else:
            mask = (conf >= lo) & (conf < hi)
        if mask.sum() == 0:
            continue
        total += (mask.sum() / n) * abs(correct[mask].mean() - conf[mask].mean())
    return total


class TestECE:
    def test_perfect_confident_predictions(self):
        P = np.array([[0.0, 1.0], [1.0, 0.0]])
        y = np.array([1, 0])
        assert expected_calibration_error(P, y, 10) == 0.0

    def test_single_prediction(self):
        P = np.array([[0.2, 0.8]])
        y = np.array([1])
        assert expected_calibration_error(P, y, 10) == pytest.approx(0.2)

    def test_confidence_matching_accuracy_in_every_bin(self):
        P = np.tile([0.2, 0.8], (10, 1))
        y = np.array([1] * 8 + [0] * 2)
        assert expected_calibration_error(P, y, 10) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        p_bot = rng.random(30)
        P = np.stack([1 - p_bot, p_bot], axis=1)
        y = rng.integers(0, 2, size=30)
        before = expected_calibration_error(P, y, 10)
        perm = rng.permutation(30)
        after = expected_calibration_error(P[perm], y[perm], 10)
        assert before == pytest.approx(after, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(1, 60))
            bins = int(rng.integers(1, 15))
            p_bot = rng.random(n)
            P = np.stack([1 - p_bot, p_bot], axis=1)
            y = rng.integers(0, 2, size=n)
            mine = expected_calibration_error(P, y, bins)
            assert mine == pytest.approx(ece_oracle(P, y, bins), abs=1e-9)
            assert 0.0 <= mine <= 1.0

    def test_errors(self):
        P = np.array([[0.5, 0.5]])
        with pytest.raises(ValueError):
            expected_calibration_error(P, np.array([0]), bins=0)
        with pytest.raises(DimensionError):
            expected_calibration_error(P, np.array([0, 1]))
