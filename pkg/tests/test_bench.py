import json

import numpy as np
import pandas as pd
import pytest

from netctl.bench.cli import main
from netctl.bench.studies import STUDIES, resolve_config, run_study, summarize, trial_seed

SMALL = {
    "fig2c": {"n": 30, "T": 4, "m": 2, "p": 4, "N": [6, 10], "reps": 3},
    "thm1-coverage": {"n": 10, "T": 4, "m": 2, "p": 3, "reps": 4},
}


def test_resolve_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        resolve_config("fig2c", {"bogus": 1})
    with pytest.raises(ValueError):
        resolve_config("nope")
    with pytest.raises(ValueError):
        resolve_config("fig2c", {"reps": 0})
    assert resolve_config("fig2c", {"reps": 2})["reps"] == 2


def test_trial_seeds_are_distinct():
    a = np.random.default_rng(trial_seed(1, "fig2c", 0, 0)).random()
    assert a == np.random.default_rng(trial_seed(1, "fig2c", 0, 0)).random()
    others = [trial_seed(1, "fig2c", 0, 1), trial_seed(1, "fig2c", 1, 0), trial_seed(2, "fig2c", 0, 0), trial_seed(1, "fig3a", 0, 0)]
    assert all(np.random.default_rng(s).random() != a for s in others)


@pytest.mark.parametrize("study", sorted(SMALL))
def test_study_reruns_are_byte_identical(study, tmp_path):
    run_study(study, SMALL[study], tmp_path / "a", seed=11)
    run_study(study, SMALL[study], tmp_path / "b", seed=11)
    assert (tmp_path / "a" / "raw.csv").read_bytes() == (tmp_path / "b" / "raw.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["seed"] == 11 and meta["config"]["reps"] == SMALL[study]["reps"]
    summary = pd.read_csv(tmp_path / "a" / "summary.csv")
    assert {"metric", "median", "mean", "q025", "q975", "count"} <= set(summary.columns)


def test_workers_do_not_change_results():
    one = run_study("fig2c", SMALL["fig2c"], seed=5, workers=1).raw
    two = run_study("fig2c", SMALL["fig2c"], seed=5, workers=2).raw
    pd.testing.assert_frame_equal(one, two)


def test_cost_study_rows(tmp_path):
    res = run_study("fig2c", SMALL["fig2c"], tmp_path, seed=3)
    assert len(res.raw) == 6 and (res.raw["error"] == "").all()
    assert res.raw["cost_ratio"].min() >= 1 - 1e-9  # data-driven cost never beats the optimum
    assert res.raw["err"].max() <= 1e-6
    assert not (tmp_path / "timing.csv").exists()  # no wall times recorded by this study


def test_wall_times_go_to_timing_csv(tmp_path):
    cfg = {"n": [30], "T": 5, "extra_experiments": 5, "reps": 1}
    res = run_study("fig3c", cfg, tmp_path, seed=0)
    assert not any(c.startswith("time_") for c in res.raw.columns)
    timing = pd.read_csv(tmp_path / "timing.csv")
    assert {"time_exact", "time_approx", "time_model"} <= set(timing.columns)


def test_failing_trials_become_error_rows():
    res = run_study("fig2c", dict(SMALL["fig2c"], N=[2]), seed=0)
    assert len(res.raw) == 3
    assert res.raw["error"].str.contains("InfeasibleDataError").all()
    assert res.meta["error_rows"] == 3


def test_summarize_quantiles():
    raw = pd.DataFrame({"point": 0, "rep": range(5), "N": 10, "x": [1.0, 2.0, 3.0, 4.0, 5.0], "error": ""})
    out = summarize(raw, ["N"])
    row = out[out["metric"] == "x"].iloc[0]
    assert (row["median"], row["mean"], row["count"]) == (3.0, 3.0, 5)
    assert row["q025"] == pytest.approx(1.1) and row["q975"] == pytest.approx(4.9)


def test_cli_run_config_and_list(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL["thm1-coverage"]))
    assert main(["run", "thm1-coverage", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "18446744073709551615"]) == 0
    assert (tmp_path / "o" / "raw.csv").exists()
    assert main(["config", "fig3a"]) == 0
    printed = capsys.readouterr().out
    assert json.loads(printed[printed.index("{"):]) == STUDIES["fig3a"].defaults
    assert main(["list"]) == 0
    assert "swing-demo" in capsys.readouterr().out


def test_cli_rejects_bad_input(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["run", "fig2c", "--out", str(tmp_path), "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["run", "fig2c", "--out", str(tmp_path), "--seed", str(2**64)])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["run", "fig2c", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["verify", "--only", "99"]) == 2
