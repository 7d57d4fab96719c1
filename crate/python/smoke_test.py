"""Smoke test for the trustfed Python extension."""

import csv
import io
import math

import trustfed


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    cm = trustfed.confusion_matrix([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert cm == [[1, 0, 0], [0, 1, 0], [0, 1, 1]], cm
    m = trustfed.macro_metrics(cm)
    assert close(m["accuracy"], 0.75), m

    t = trustfed.topsis_scores([[0.9] * 4, [0.5] * 4, [0.1] * 4])
    assert close(t[0], 1.0) and close(t[2], 0.0) and 0.0 < t[1] < 1.0, t
    assert trustfed.topsis_scores([[0.4] * 4] * 3) == [1.0, 1.0, 1.0]

    assert trustfed.trust_variance([0.0, 1.0]) == 0.25
    assert close(trustfed.adapt_alpha(0.3, 0.02), 0.15)
    assert trustfed.adapt_alpha(0.98, 0.001) == 1.0
    assert close(trustfed.ema_update([1.0], [0.5], 0.3)[0], 0.85)

    avg = trustfed.fedavg_aggregate([[0.0, 2.0], [3.0, 5.0]], [1, 2])
    assert close(avg[0], 2.0) and close(avg[1], 4.0), avg

    tracker = trustfed.ParticipationTracker([0, 1, 2], tau=0.75, m=1)
    d = tracker.decide({0: 0.1, 1: 0.2, 2: 0.9})
    assert d["omitted_now"] == [0] and d["active"] == [1, 2], d
    for _ in range(2):
        d = tracker.decide({0: 0.8, 1: 0.8, 2: 0.9})
    assert d["readmitted_now"] == [0], d
    assert tracker.statuses()[0] == ("included", 0)

    overrides = {
        "strategy": "atsssf_adaptive",
        "rounds": 3,
        "clients": 4,
        "dataset.n_per_class": 30,
        "adversaries.count": 1,
    }
    out = trustfed.run_experiment(overrides)
    rows = list(csv.DictReader(io.StringIO(out["round_log_csv"])))
    assert len(rows) == 3, rows
    report = out["report"]
    assert report["config"]["rounds"] == 3
    f1 = report["strategies"][0]["final_metrics"]["macro_f1"]
    assert 0.0 <= f1 <= 1.0 and all(math.isfinite(v) for v in out["final_params"])
    assert trustfed.run_experiment(overrides)["round_log_csv"] == out["round_log_csv"]

    try:
        trustfed.run_experiment({"tau": 1.5})
    except ValueError as e:
        assert "tau" in str(e)
    else:
        raise AssertionError("invalid tau accepted")

    print(f"smoke test passed (3-round macro F1 {f1:.3f})")


if __name__ == "__main__":
    main()
