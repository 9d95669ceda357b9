import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpforecast.pipeline import (
    ConfigError,
    DegenerateScaleError,
    ScalerParams,
    fit_scaler,
    scale,
    split,
    unscale,
    window,
)


def test_split_default_counts():
    train, test = split(np.arange(100_000, dtype=float), 0.6)
    assert len(train) == 60_000 and len(test) == 40_000


def test_split_enumeration():
    s = list(range(1, 11))
    train, test = split(s, 0.5)
    assert train.tolist() == [1, 2, 3, 4, 5] and test.tolist() == [6, 7, 8, 9, 10]
    train, test = split(s, 0.99)
    assert train.tolist() == list(range(1, 10)) and test.tolist() == [10]


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
def test_split_rejects_fraction(fraction):
    with pytest.raises(ConfigError):
        split(range(20), fraction)


def test_split_rejects_short_series():
    with pytest.raises(ConfigError):
        split(range(9), 0.5)


@pytest.mark.invariant
@given(st.lists(st.floats(-1e6, 1e6), min_size=10, max_size=300), st.floats(0.05, 0.95))
def test_split_preserves_order(series, fraction):
    try:
        train, test = split(series, fraction)
    except ConfigError:
        return  # fraction too extreme for this length
    assert np.concatenate([train, test]).tolist() == list(series)


def test_fit_scaler_extrema():
    s = fit_scaler([0.0, 1.0], -1, 1)
    assert (s.x_min, s.x_max, s.a, s.b) == (0.0, 1.0, -1.0, 1.0)
    s = fit_scaler([0.2, 0.8, 0.5])
    assert (s.x_min, s.x_max) == (0.2, 0.8)


def test_fit_scaler_degenerate():
    with pytest.raises(DegenerateScaleError):
        fit_scaler([0.3, 0.3, 0.3])
    with pytest.raises(ConfigError):
        fit_scaler([])


def test_scaler_params_invariants():
    with pytest.raises(DegenerateScaleError):
        ScalerParams(1.0, 0.5)
    with pytest.raises(ConfigError):
        ScalerParams(0.0, 1.0, a=1.0, b=-1.0)


def test_scale_endpoints_and_midpoint():
    s = ScalerParams(0.16, 0.95)
    assert scale(s.x_min, s) == -1.0
    assert scale(s.x_max, s) == 1.0
    assert scale((s.x_min + s.x_max) / 2, s) == pytest.approx(0.0, abs=1e-15)


def test_scale_hand_values():
    s = ScalerParams(0.0, 0.5)
    assert scale(0.25, s) == 0.0
    assert unscale(0.0, s) == 0.25


def test_scale_out_of_range_values_pass_through():
    s = ScalerParams(0.2, 0.8)
    assert scale(0.9, s) > 1.0
    assert scale(0.1, s) < -1.0


def test_scaler_round_trip_many_values():
    rng = np.random.default_rng(3)
    s = ScalerParams(0.1638, 0.95, -1.0, 1.0)
    x = rng.uniform(-0.5, 1.5, 10_000)
    x = x[np.abs(x) > 1e-3]
    back = unscale(scale(x, s), s)
    assert np.max(np.abs(back - x) / np.abs(x)) < 1e-12


@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_scale_strictly_monotone(lo, span, x1, x2):
    s = ScalerParams(lo, lo + span)
    if x1 < x2 and (x2 - x1) > 1e-9 * span:
        assert scale(x1, s) < scale(x2, s)


def test_window_enumeration():
    d = window([1, 2, 3, 4, 5], 1, 1)
    assert d.inputs.tolist() == [[1], [2], [3], [4]]
    assert d.targets.tolist() == [[2], [3], [4], [5]]
    d = window([1, 2, 3, 4, 5], 2, 2)
    assert d.inputs.tolist() == [[1, 2], [2, 3]]
    assert d.targets.tolist() == [[3, 4], [4, 5]]


def test_window_too_short():
    with pytest.raises(ConfigError, match="at least 3"):
        window([1, 2], 1, 2)


@pytest.mark.invariant
@settings(max_examples=60)
@given(st.integers(2, 200), st.integers(1, 20), st.integers(1, 10))
def test_window_count_and_alignment(L, W, H):
    if L < W + H:
        with pytest.raises(ConfigError):
            window(np.arange(L, dtype=float), W, H)
        return
    series = np.arange(L, dtype=float)
    d = window(series, W, H)
    assert len(d) == L - W - H + 1
    assert d.W == W and d.H == H
    for i in (0, len(d) - 1):
        assert d.inputs[i].tolist() == series[i:i + W].tolist()
        assert d.targets[i].tolist() == series[i + W:i + W + H].tolist()


@pytest.mark.invariant
@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(0, 1))
def test_scaler_round_trip_property(lo, span, u):
    s = ScalerParams(lo, lo + span)
    x = lo + u * span
    assert abs(unscale(scale(x, s), s) - x) <= 1e-12 * max(1.0, abs(lo) + span)
