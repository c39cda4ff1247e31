"""End-to-end smoke test for the flowcast Python bindings."""

import math
import tempfile

import flowcast

SMALL = """
[window]
n_days = 10
[data]
train_days = 7
[baselines]
dema_tune_days = 2
lasso_select_days = 2
[gru]
hidden_dim = 8
epochs = 2
"""


def main():
    assert flowcast.rmse([[1.0, 3.0]], [[2.0, 5.0]]) == math.sqrt(2.5)
    assert flowcast.mape([[0.0, 4.0]], [[1.0, 5.0]]) == (25.0, 1)
    assert abs(flowcast.soft_threshold(0.3, 0.1) - 0.2) < 1e-15
    assert flowcast.soft_threshold(-0.05, 0.1) == 0.0
    assert flowcast.dema_forecast(0.5, [[2.0], [2.0], [2.0]]) == [[2.0], [2.0], [2.0]]
    counts = [flowcast.recurrent_param_count(k, 68, 128) for k in ("rnn", "gru", "lstm")]
    assert counts[1] == 3 * counts[0] and counts[2] == 4 * counts[0], counts

    try:
        flowcast.Config("sede = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    with tempfile.TemporaryDirectory() as work:
        cfg = flowcast.Config(SMALL)
        cfg.workdir = work
        cfg.models = ["dema", "lasso", "gru"]
        cfg.validate()

        summary = flowcast.generate(cfg)
        assert summary["n_slots"] == 960 and summary["rows"] > 0, summary

        tensor, stats = flowcast.ingest(cfg)
        assert len(tensor) == 960 and stats["regions_after"] == len(tensor.region_ids)

        results = flowcast.run(cfg)
        assert set(results) == {"dema", "lasso", "gru"}, results
        for name, r in results.items():
            assert r["rmse"] > 0 and math.isfinite(r["rmse"]), (name, r)

        table = flowcast.report(cfg)
        assert "gru" in table

        forecast = flowcast.predict(cfg, 700, model="gru")
        assert sorted(forecast) == tensor.region_ids
        assert all(v >= 0 for v in forecast.values())

    print("flowcast smoke test passed:", {k: round(v["rmse"], 3) for k, v in results.items()})


if __name__ == "__main__":
    main()
