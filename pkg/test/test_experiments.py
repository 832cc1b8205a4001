from pathlib import Path

import numpy as np
import pytest


def test_dgp_preset():

    from apgarch.experiments import dgp_preset
    from apgarch.model import ModelOrder

    order, params = dgp_preset("sym", (1.0, 1.0))
    assert order == ModelOrder(2, 0, 1)
    assert np.array_equal(params.a_plus, params.a_minus)

    order, params = dgp_preset("asym", (2.0, 2.0))
    assert order == ModelOrder(2, 0, 1)
    assert params.a_plus[0, 0, 0] == 0.25
    assert params.a_minus[0, 0, 0] == 0.45

    order, params = dgp_preset("alt", (1.0, 1.0))
    assert order == ModelOrder(2, 1, 1)
    assert params.b[0].tolist() == [[0.43, 0.1], [0.1, 0.42]]
    assert params.rho.tolist() == [0.7]

    with pytest.raises(ValueError):
        dgp_preset("garch", (1.0, 1.0))
    with pytest.raises(ValueError):
        dgp_preset("sym", (1.0,))


def test_nominal_interval():

    from apgarch.experiments import nominal_interval

    low, high = nominal_interval(0.05, 1000)
    assert (round(low, 1), round(high, 1)) == (3.6, 6.4)
    low, high = nominal_interval(0.10, 1000)
    assert (round(low, 1), round(high, 1)) == (8.1, 11.9)

    low99, high99 = nominal_interval(0.05, 1000, 0.99)
    assert low99 < 3.6 and high99 > 6.4

    assert nominal_interval(0.01, 10)[0] == 0.0

    with pytest.raises(ValueError):
        nominal_interval(0.0, 100)
    with pytest.raises(ValueError):
        nominal_interval(0.05, 0)


def test_config_from_dict():

    from apgarch.experiments import McConfig
    from apgarch.model import ModelOrder, PowerMode

    config = McConfig.from_dict({"n": 100, "replications": 3, "m_max": 3})
    assert config.dgp_order == ModelOrder(2, 0, 1)
    assert config.fitted_order == ModelOrder(2, 0, 1)
    assert config.power_mode == PowerMode.KNOWN
    assert config.alphas == [0.01, 0.05, 0.10]
    assert config.fitted_delta.tolist() == [1.0, 1.0]
    assert config.label == "(1,1)"
    assert config.start == "dgp"
    assert config.dgp_is_null()

    config = McConfig.from_dict({
        "n": 200,
        "replications": 10,
        "power_mode": "estimated",
        "dgp": {"preset": "alt", "delta": [1.5, 1.5]},
        "fit": {"order": "2,0,1", "grad_tol": 1e-4},
        "label": "alt",
    })
    assert config.dgp_order == ModelOrder(2, 1, 1)
    assert config.fitted_order == ModelOrder(2, 0, 1, PowerMode.ESTIMATED)
    assert config.grad_tol == 1e-4
    assert config.max_iters == 500
    assert config.label == "alt"
    assert not config.dgp_is_null()

    config = McConfig.from_dict({
        "n": 100,
        "replications": 1,
        "dgp": {
            "order": "1,0,1",
            "params": {"omega": [0.1], "a_plus": [[[0.2]]], "a_minus": [[[0.3]]]},
            "delta": [2.0],
        },
    })
    assert config.dgp_params.delta.tolist() == [2.0]
    assert config.fitted_order == ModelOrder(1, 0, 1)


def test_config_errors():

    from apgarch.experiments import McConfig

    for data in (
        {"n": 10, "m_max": 10},
        {"replications": 0},
        {"alphas": [0.0]},
        {"power_mode": "guessed"},
        {"method": "other"},
        {"fit": {"start": "random"}},
        {"dgp": {"params": {"omega": [0.1]}}},
        {"fit": {"order": "3,0,1"}},
    ):
        with pytest.raises(ValueError):
            McConfig.from_dict(data)


def test_config_from_toml(tmp_path: Path):

    from apgarch.experiments import McConfig

    path = tmp_path / "size.toml"
    path.write_text('n = 250\nreplications = 20\nm_max = 6\nbase_seed = 9\n\n[dgp]\npreset = "asym"\ndelta = [1.0, 2.0]\n')
    config = McConfig.from_toml(path)
    assert (config.n, config.replications, config.m_max, config.base_seed) == (250, 20, 6, 9)
    assert config.dgp_params.delta.tolist() == [1.0, 2.0]


def test_start_params():

    from apgarch.experiments import McConfig, dgp_preset
    from apgarch.model import ModelOrder, PowerMode, validate_params

    order, params = dgp_preset("sym", (1.0, 1.0))
    fitted = ModelOrder(2, 1, 2)
    config = McConfig(order, params, fitted, 200, 5, fitted_delta=[2.0, 2.0])
    start = config.start_params()
    validate_params(fitted, start)
    assert start.a_plus[0].tolist() == params.a_plus[0].tolist()
    assert np.all(start.a_plus[1] == 0.01)
    assert np.all(start.b == 0.01)
    assert start.delta.tolist() == [2.0, 2.0]
    assert not config.dgp_is_null()

    config = McConfig(order, params, fitted.with_mode(PowerMode.ESTIMATED), 200, 5, fitted_delta=[2.0, 2.0])
    assert config.start_params().delta.tolist() == [1.0, 1.0]
    assert config.dgp_is_null()

    config = McConfig(order, params, order, 200, 5, start="auto")
    assert config.start_params() is None
    assert config.fit_config().init_params is None


def _fake_replication(failing=()):

    from apgarch.experiments import ReplicationOutcome

    def run(config, stream_id):
        if stream_id in failing:
            return ReplicationOutcome(stream_id, None, None, ReplicationOutcome.NOT_CONVERGED, "stopped", 0.0)
        # Replication r has p-value r / 10 at every lag.
        pvalues = np.full(config.m_max, stream_id / 10)
        return ReplicationOutcome(stream_id, np.ones(config.m_max), pvalues, None, None, 0.0)

    return run


def _config(replications, m_max=2, **kwargs):
    from apgarch.experiments import McConfig, dgp_preset
    order, params = dgp_preset("sym", (1.0, 1.0))
    return McConfig(order, params, order, 100, replications, m_max=m_max, **kwargs)


def test_size_experiment_frequencies(monkeypatch):

    from apgarch import experiments
    from apgarch.watcher import CollectWatcher, ExperimentStartEvent, ReplicationDoneEvent, \
        ReplicationFailedEvent, ExperimentCompleteEvent

    monkeypatch.setattr(experiments, "run_replication", _fake_replication(failing=(3,)))
    watcher = CollectWatcher()
    result = experiments.run_size_experiment(_config(10, alphas=[0.05, 0.25]), watcher=watcher)

    # P-values 0.0, 0.1, 0.2, 0.4, ... with replication 3 failed.
    assert result.n_failed_fits == 1
    assert result.n_ok == 9
    assert result.rejection_freq[0.05].tolist() == pytest.approx([100 / 9] * 2)
    assert result.rejection_freq[0.25].tolist() == pytest.approx([300 / 9] * 2)
    assert np.all(result.rejection_freq[0.05] <= result.rejection_freq[0.25])
    assert set(result.ci_bounds[0.05]) == {0.95, 0.99}
    assert result.kind == "size"

    assert watcher.of_type(ExperimentStartEvent)[0].replications == 10
    assert [e.stream_id for e in watcher.of_type(ReplicationDoneEvent)] == list(range(10))
    assert watcher.of_type(ReplicationFailedEvent)[0].code == "not_converged"
    assert watcher.of_type(ExperimentCompleteEvent)[0].n_failed == 1

    table = result.table()
    assert table.columns.tolist() == ["delta", "n", "alpha", "m1", "m2"]
    assert table["alpha"].tolist() == ["5%", "25%"]


def test_size_experiment_failures(monkeypatch):

    from apgarch import experiments

    monkeypatch.setattr(experiments, "run_replication", _fake_replication(failing=(1, 2, 3)))
    with pytest.raises(experiments.TooManyFailedFitsError) as exc:
        experiments.run_size_experiment(_config(10))
    assert exc.value.failed == 3
    assert exc.value.total == 10

    # Exactly 20% is tolerated.
    monkeypatch.setattr(experiments, "run_replication", _fake_replication(failing=(1, 2)))
    assert experiments.run_size_experiment(_config(10)).n_failed_fits == 2

    with pytest.raises(ValueError):
        experiments.run_size_experiment(_config(10), jobs=0)


def test_experiment_orders(monkeypatch):

    from apgarch import experiments
    from apgarch.model import ModelOrder
    from apgarch.watcher import CollectWatcher, PowerDgpIsNullWarningEvent

    monkeypatch.setattr(experiments, "run_replication", _fake_replication())
    order, params = experiments.dgp_preset("alt", (1.0, 1.0))
    config = experiments.McConfig(order, params, ModelOrder(2, 0, 1), 100, 5)
    with pytest.raises(ValueError):
        experiments.run_size_experiment(config)

    watcher = CollectWatcher()
    result = experiments.run_power_experiment(config, watcher=watcher)
    assert result.kind == "power"
    assert not watcher.of_type(PowerDgpIsNullWarningEvent)

    watcher = CollectWatcher()
    experiments.run_power_experiment(_config(5), watcher=watcher)
    assert len(watcher.of_type(PowerDgpIsNullWarningEvent)) == 1


def test_single_replication():

    from apgarch.experiments import run_size_experiment

    config = _config(1, m_max=2, grad_tol=1e-2, burn_in=200)
    config.n = 400
    result = run_size_experiment(config)
    for freq in result.rejection_freq.values():
        assert set(freq.tolist()) <= {0.0, 100.0}


def test_replication_determinism():

    from apgarch.experiments import run_replication

    config = _config(2, m_max=3, grad_tol=1e-2, burn_in=200)
    config.n = 400
    a = run_replication(config, 1)
    b = run_replication(config, 1)
    assert a.ok
    assert np.array_equal(a.pvalues, b.pvalues)
    assert a.to_dict()["pvalue_r"] == a.pvalues.tolist()


def test_write_mc(monkeypatch, tmp_path: Path):

    from apgarch import experiments
    import json
    import pandas as pd

    monkeypatch.setattr(experiments, "run_replication", _fake_replication(failing=(3,)))
    result = experiments.run_size_experiment(_config(10, alphas=[0.05, 0.25]))

    csv_path = tmp_path / "size.csv"
    experiments.write_mc_csv([result, result], csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "delta,n,alpha,m1,m2"
    assert lines[1] == '"(1,1)",100,5%,11.1,11.1'
    assert len(lines) == 5

    table = pd.read_csv(csv_path, dtype=str)
    assert table["delta"].tolist() == ["(1,1)"] * 4
    assert table["alpha"].tolist() == ["5%", "25%"] * 2
    assert table["m2"].tolist() == ["11.1", "33.3"] * 2

    json_path = tmp_path / "size.json"
    experiments.write_mc_json(result, json_path)
    doc = json.loads(json_path.read_text())
    assert doc["n_failed_fits"] == 1
    assert doc["raw"][3] is None
    assert doc["raw"][0]["pvalue_r"] == [0.0, 0.0]
    assert doc["rejection_freq"]["0.25"] == pytest.approx([100 / 3] * 2)

    with pytest.raises(ValueError):
        experiments.write_mc_csv([], csv_path)


@pytest.mark.slow
def test_parallel_determinism():

    from apgarch.experiments import run_size_experiment

    config = _config(4, m_max=3, grad_tol=1e-2, burn_in=200)
    config.n = 400
    serial = run_size_experiment(config, jobs=1)
    parallel = run_size_experiment(config, jobs=2)
    for alpha in config.alphas:
        assert np.array_equal(serial.rejection_freq[alpha], parallel.rejection_freq[alpha])
    for a, b in zip(serial.raw, parallel.raw):
        assert a.code == b.code
        if a.ok:
            assert np.array_equal(a.pvalues, b.pvalues)


@pytest.mark.slow
def test_size_desk_scale():

    from apgarch.experiments import McConfig, run_size_experiment

    config = McConfig.from_dict({"n": 500, "replications": 200, "m_max": 6, "alphas": [0.01, 0.05, 0.10], "base_seed": 1})
    result = run_size_experiment(config, jobs=-1)
    freq = result.rejection_freq[0.05]
    for m in (1, 3, 6):
        assert 1.0 <= freq[m - 1] <= 10.0
    assert np.all(result.rejection_freq[0.01] <= freq)
    assert np.all(freq <= result.rejection_freq[0.10])


@pytest.mark.slow
def test_size_desk_scale_estimated_power():

    from apgarch.experiments import McConfig, run_size_experiment

    config = McConfig.from_dict({"n": 500, "replications": 200, "m_max": 6, "alphas": [0.01, 0.05, 0.10],
                                 "base_seed": 2, "power_mode": "estimated"})
    result = run_size_experiment(config, jobs=-1)
    freq = result.rejection_freq[0.05]
    for m in (1, 3, 6):
        assert 1.0 <= freq[m - 1] <= 10.0
    assert np.all(result.rejection_freq[0.01] <= freq)
    assert np.all(freq <= result.rejection_freq[0.10])


@pytest.mark.slow
def test_power_desk_scale():

    from apgarch.experiments import McConfig, run_power_experiment

    config = McConfig.from_dict({
        "n": 500,
        "replications": 100,
        "m_max": 4,
        "alphas": [0.01, 0.05, 0.10],
        "base_seed": 3,
        "dgp": {"preset": "alt"},
        "fit": {"order": "2,0,1"},
    })
    result = run_power_experiment(config, jobs=-1)
    assert result.rejection_freq[0.05][3] > 70.0
    assert np.all(result.rejection_freq[0.01] <= result.rejection_freq[0.05])
    assert np.all(result.rejection_freq[0.05] <= result.rejection_freq[0.10])
