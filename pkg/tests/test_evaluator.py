import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpforecast import evaluator
from qpforecast.evaluator import (
    emit_scatter,
    evaluate,
    multistep_eval,
    read_scatter,
    recursive_forecast,
    rmse,
    summary_dict,
    unit_sweep,
    write_summary,
    write_sweep_csv,
)
from qpforecast.lstm_core import LstmConfig, StructuralError, init_weights, mse_loss, predict
from qpforecast.map_core import MapParams, iterate
from qpforecast.pipeline import ScalerParams, SupervisedSet, fit_scaler, scale, split, unscale, window
from qpforecast.trainer import TrainConfig, train


def test_rmse_examples():
    assert rmse([0.2, 0.4], [0.2, 0.4]) == 0.0
    assert rmse(np.arange(10) + 0.25, np.arange(10)) == pytest.approx(0.25, rel=1e-15)
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), rel=1e-15)
    assert rmse([0, 0], [3, 4]) == pytest.approx(3.53553, abs=1e-5)


def test_rmse_errors():
    with pytest.raises(StructuralError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(StructuralError):
        rmse([], [])


@pytest.mark.invariant
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=50))
def test_rmse_is_sqrt_mse_and_permutation_invariant(pairs):
    p = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs])
    r = rmse(p, y)
    assert r == pytest.approx(math.sqrt(mse_loss(p, y)), rel=1e-12, abs=1e-300)
    perm = np.random.default_rng(len(pairs)).permutation(len(pairs))
    assert rmse(p[perm], y[perm]) == pytest.approx(r, rel=1e-12, abs=1e-300)


def test_rmse_affine_equivariance():
    rng = np.random.default_rng(0)
    s = ScalerParams(0.11, 0.955)
    y = rng.uniform(0.11, 0.955, 5000)
    p = y + rng.normal(0, 0.01, 5000)
    scaled = rmse(scale(p, s), scale(y, s))
    assert scaled * s.factor == pytest.approx(rmse(p, y), rel=1e-12)


@pytest.fixture
def oracle(monkeypatch):
    """Make the evaluator's predictions equal the test targets."""
    state = {}

    def fake_predict(weights, inputs):
        return state["targets"]

    monkeypatch.setattr(evaluator, "predict", fake_predict)
    return state


def make_test_set(H, W=1):
    t = iterate(MapParams.from_prime(3.6, 0.5), n=600)
    s = fit_scaler(t.x)
    return s, window(scale(t.x, s), W, H)


def test_evaluate_perfect_oracle(oracle):
    s, test = make_test_set(1)
    oracle["targets"] = test.targets
    rep = evaluate(init_weights(LstmConfig(), 0), s, test, "C1", 3.6, 0.5)
    assert rep.rmse == 0.0 and rep.per_step_rmse == [0.0]
    assert rep.n_test == len(test) == len(rep.pairs())
    # pairs are in original units
    assert np.allclose(rep.pairs()[:, 0], unscale(test.targets[:, 0], s), atol=1e-15)


def test_multistep_perfect_oracle(oracle):
    s, test = make_test_set(5)
    oracle["targets"] = test.targets
    per_step = multistep_eval(init_weights(LstmConfig(output_dim=5), 0), s, test, 5)
    assert per_step == [0.0] * 5


def test_evaluate_unscales_before_rmse():
    s, test = make_test_set(1)
    w = init_weights(LstmConfig(), 1)
    rep = evaluate(w, s, test)
    scaled = rmse(predict(w, test.inputs), test.targets)
    assert rep.rmse == pytest.approx(scaled * s.factor, rel=1e-12)


def test_evaluate_shape_mismatch():
    s, test = make_test_set(2)
    with pytest.raises(StructuralError):
        evaluate(init_weights(LstmConfig(output_dim=1), 0), s, test)


def test_multistep_horizon_checks():
    s, test = make_test_set(3)
    with pytest.raises(StructuralError):
        multistep_eval(init_weights(LstmConfig(output_dim=3), 0), s, test, 1)
    with pytest.raises(StructuralError):
        multistep_eval(init_weights(LstmConfig(output_dim=3), 0), s, test, 4)
    with pytest.raises(StructuralError):
        multistep_eval(init_weights(LstmConfig(output_dim=2), 0), s, test, 3)


def test_multistep_per_horizon_models_and_recursive():
    s, test = make_test_set(3, W=2)
    models = [init_weights(LstmConfig(output_dim=1, window=2), k) for k in range(3)]
    per_step = multistep_eval(models, s, test, 3)
    for k in range(3):
        expect = rmse(unscale(predict(models[k], test.inputs)[:, 0], s), unscale(test.targets[:, k], s))
        assert per_step[k] == expect
    rec = multistep_eval(models[0], s, test, 3, mode="recursive")
    assert len(rec) == 3 and all(np.isfinite(rec))


def test_recursive_forecast_feeds_back():
    w = init_weights(LstmConfig(window=3), 2)
    x = np.array([[0.1, 0.2, 0.3]])
    out = recursive_forecast(w, x, 2)
    first = predict(w, x)[0, 0]
    assert out[0, 0] == first
    assert out[0, 1] == predict(w, np.array([[0.2, 0.3, first]]))[0, 0]


def test_emit_scatter(tmp_path, oracle):
    s, test = make_test_set(1)
    oracle["targets"] = test.targets
    rep = evaluate(init_weights(LstmConfig(), 0), s, test)
    rep.actual, rep.predicted = rep.actual[:3], rep.predicted[:3]
    sidecar = emit_scatter(rep, tmp_path / "sc.csv")
    lines = (tmp_path / "sc.csv").read_text().splitlines()
    assert lines[0] == "actual,predicted" and len(lines) == 4
    assert all(a == p for a, p in (line.split(",") for line in lines[1:]))
    assert sidecar.read_text().startswith("rmse=0 ")


def test_scatter_round_trip_rmse(tmp_path):
    s, test = make_test_set(1)
    rep = evaluate(init_weights(LstmConfig(), 3), s, test)
    emit_scatter(rep, tmp_path / "sc.csv")
    data = read_scatter(tmp_path / "sc.csv")
    assert rmse(data[:, 1], data[:, 0]) == pytest.approx(rep.rmse, abs=1e-9)


def test_summary_json(tmp_path):
    s, test = make_test_set(1)
    rep = evaluate(init_weights(LstmConfig(), 3), s, test, "C1", 3.6, 0.5)
    summ = summary_dict(rep, 1, 1, 16, 7)
    write_summary(summ, tmp_path / "s.json")
    back = json.loads((tmp_path / "s.json").read_text())
    assert set(back) == {"regime", "alpha", "eps_prime", "W", "H", "units", "seed", "rmse", "per_step_rmse"}
    assert back["rmse"] == rep.rmse


# -- unit sweep, small scale -----------------------------------------------------------

@pytest.fixture(scope="module")
def small_c1():
    t = iterate(MapParams.from_prime(3.6, 0.5), n=4000)
    tr, te = split(t.x, 0.6)
    s = fit_scaler(tr)
    return s, window(scale(tr, s), 1, 1), window(scale(te, s), 1, 1)


def test_unit_sweep_single_matches_direct(small_c1):
    s, tr, te = small_c1
    tc = TrainConfig(epochs=3, seed=5)
    base = LstmConfig(units=99)
    res = unit_sweep([16], tr, te, s, base, tc)
    w, _ = train(tr, LstmConfig(units=16), tc, scaler=s)
    assert len(res) == 1 and res[0].units == 16
    assert res[0].rmse == evaluate(w, s, te).rmse


def test_unit_sweep_varies_and_records_errors(small_c1, tmp_path):
    s, tr, te = small_c1
    res = unit_sweep([0, 2, 4], tr, te, s, LstmConfig(), TrainConfig(epochs=3, seed=5))
    assert [r.units for r in res] == [0, 2, 4]
    assert res[0].error and math.isnan(res[0].rmse)
    assert all(np.isfinite(r.rmse) for r in res[1:])
    assert res[1].rmse != res[2].rmse
    write_sweep_csv(res, tmp_path / "sweep.csv")
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == "units,rmse"


def test_unit_sweep_restarts_keeps_best(small_c1):
    s, tr, te = small_c1
    tc = TrainConfig(epochs=2, seed=5)
    one = unit_sweep([4], tr, te, s, LstmConfig(), tc)[0].rmse
    best = unit_sweep([4], tr, te, s, LstmConfig(), tc, restarts=2)[0].rmse
    assert best <= one


def test_empty_supervised_set_rejected():
    s = ScalerParams(0, 1)
    with pytest.raises(StructuralError):
        evaluate(init_weights(LstmConfig(), 0), s, SupervisedSet(np.zeros((0, 1)), np.zeros((0, 1))))
