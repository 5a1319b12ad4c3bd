import json
import math
from pathlib import Path

import numpy as np
import pytest

from layered_ou import (
    ModelSpec,
    ObservationDesign,
    make_params,
    save_dataset,
    simulate_dataset,
)
from layered_ou.cli import main


def write_dataset(tmp_path, seed=0, n=40, name="data.csv"):
    spec = ModelSpec(n_layers=1, n_sites=1)
    params = make_params(spec, alpha=[1.0], sigma=[0.6], mu0=0.5)
    design = ObservationDesign.regular(n, 0.0, 20.0, s2=0.05, n=2.0)
    data = simulate_dataset(spec, params, design, seed=seed)
    path = tmp_path / name
    save_dataset(data, path)
    return path


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def test_fit_command_writes_record(tmp_path, capsys):
    data = write_dataset(tmp_path)
    out = tmp_path / "out"
    code = main([
        "fit", "--data", str(data), "--spec", "L1:S1:rw0",
        "--out-dir", str(out), "--seed", "1", "--ml-starts", "5",
    ])
    assert code == 0
    (record,) = read_jsonl(out / "fit.jsonl")
    assert record["spec"] == "L1:S1:rw0"
    assert record["k"] == 3
    assert record["aic"] == pytest.approx(2 * 3 - 2 * record["log_lik"])
    assert {"name", "type", "ml", "prior95"} <= set(record["params"][0])


def test_missing_input_file_exits_2(tmp_path, capsys):
    code = main([
        "fit", "--data", str(tmp_path / "nope.csv"), "--spec", "L1:S1:rw0",
        "--out-dir", str(tmp_path / "out"),
    ])
    assert code == 2


def test_bad_spec_name_exits_2(tmp_path):
    data = write_dataset(tmp_path)
    code = main([
        "fit", "--data", str(data), "--spec", "WAT", "--out-dir", str(tmp_path / "o"),
    ])
    assert code == 2


def test_compare_is_byte_deterministic(tmp_path):
    data = write_dataset(tmp_path)
    outputs = []
    for run_dir in ("a", "b"):
        out = tmp_path / run_dir
        code = main([
            "compare", "--data", str(data),
            "--specs", "L1:S1:rw0", "L1:S1:rw1",
            "--out-dir", str(out), "--seed", "3",
            "--ml-starts", "4", "--ml-max-iter", "150",
            "--mcmc-iterations", "400", "--mcmc-burn-in", "150",
            "--bml-samples", "600",
        ])
        assert code == 0
        outputs.append(
            (
                (out / "models.jsonl").read_bytes(),
                (out / "weights.jsonl").read_bytes(),
                (out / "summary.txt").read_bytes(),
            )
        )
    assert outputs[0] == outputs[1]


def test_compare_summary_has_reference_columns(tmp_path):
    data = write_dataset(tmp_path)
    out = tmp_path / "out"
    code = main([
        "compare", "--data", str(data), "--specs", "L1:S1:rw0",
        "--out-dir", str(out), "--seed", "3",
        "--ml-starts", "4", "--mcmc-iterations", "400",
        "--mcmc-burn-in", "150", "--bml-samples", "600",
    ])
    assert code == 0
    text = (out / "summary.txt").read_text()
    for column in ("ML", "B. median", "Prior 95%", "Posterior 95%"):
        assert column in text


def test_compare_weights_favor_one_layer_on_ou_data(tmp_path):
    # four-model toy frame on one-layer data: the layer-count weight must
    # back a single layer in a majority of seeds
    wins = 0
    seeds = (1, 2, 3, 4, 5)
    for seed in seeds:
        data = write_dataset(tmp_path, seed=seed, name=f"d{seed}.csv")
        out = tmp_path / f"cmp{seed}"
        code = main([
            "compare", "--data", str(data),
            "--specs", "L1:S1:rw0", "L1:S1:rw1", "L2:S1:rw0", "L2:S1:rw1",
            "--out-dir", str(out), "--seed", str(seed),
            "--ml-starts", "3", "--ml-max-iter", "150",
            "--mcmc-iterations", "500", "--mcmc-burn-in", "200",
            "--bml-samples", "800",
        ])
        assert code == 0
        weights = read_jsonl(out / "weights.jsonl")
        layer_weights = next(
            w for w in weights if w["property"] == "number of layers"
        )
        by_label = {c["label"]: c["weight"] for c in layer_weights["categories"]}
        if by_label["1"] > 0.5:
            wins += 1
    assert wins > len(seeds) / 2


def test_all_models_failed_exits_3(tmp_path):
    # dataset with two sites cannot be fitted by single-site specs
    spec = ModelSpec(n_layers=1, n_sites=2)
    params = make_params(spec, alpha=[1.0], sigma=[0.5], mu0=0.0)
    design = ObservationDesign.regular(10, 0.0, 5.0, s2=0.05, sites=("a", "b"))
    data = simulate_dataset(spec, params, design, seed=0)
    path = tmp_path / "two_site.csv"
    save_dataset(data, path)
    code = main([
        "compare", "--data", str(path), "--specs", "L1:S1:rw0",
        "--out-dir", str(tmp_path / "out"), "--ml-starts", "2",
    ])
    assert code == 3


def test_smooth_band_width_grows_away_from_observations(tmp_path):
    spec = ModelSpec(n_layers=1, n_sites=1)
    params = make_params(spec, alpha=[1.0], sigma=[0.8], mu0=0.0)
    design = ObservationDesign.regular(6, 0.0, 1.0, s2=0.02, n=1.0)
    data = simulate_dataset(spec, params, design, seed=4)
    data_path = tmp_path / "cluster.csv"
    save_dataset(data, data_path)
    params_path = tmp_path / "params.json"
    params_path.write_text(json.dumps({"alpha": [1.0], "sigma": [0.8], "mu0": 0.0}))
    out = tmp_path / "sm"
    code = main([
        "smooth", "--data", str(data_path), "--spec", "L1:S1:rw0",
        "--params", str(params_path), "--out-dir", str(out),
        "--time-range", "-4", "5", "120",
    ])
    assert code == 0
    rows = Path(out / "states.csv").read_text().splitlines()[1:]
    times, widths = [], []
    for row in rows:
        layer, site, t, mean, lo, hi = row.split(",")
        times.append(float(t))
        widths.append(float(hi) - float(lo))
    times = np.array(times)
    widths = np.array(widths)
    dist = np.abs(times[:, None] - data.time[None, :]).min(axis=1)
    near_width = widths[dist < 0.15]
    far_width = widths[dist >= 2.0]
    assert far_width.min() > near_width.max()


def test_simulate_command_round_trips(tmp_path):
    params_path = tmp_path / "params.json"
    params_path.write_text(
        json.dumps({"alpha": [2.0, 0.5], "sigma": [0.5, 0.3], "mu0": 1.0})
    )
    design_path = tmp_path / "design.json"
    design_path.write_text(
        json.dumps({"regular": {"n_obs": 12, "t0": 0.0, "t1": 6.0, "s2": 0.01, "n": 2}})
    )
    out = tmp_path / "sim"
    code = main([
        "simulate", "--spec", "L2:S1:rw0", "--params", str(params_path),
        "--design", str(design_path), "--out-dir", str(out), "--seed", "11",
    ])
    assert code == 0
    from layered_ou import load_dataset

    data = load_dataset(out / "dataset.csv")
    assert len(data) == 12
    # repeated run is identical
    out2 = tmp_path / "sim2"
    main([
        "simulate", "--spec", "L2:S1:rw0", "--params", str(params_path),
        "--design", str(design_path), "--out-dir", str(out2), "--seed", "11",
    ])
    assert (out / "dataset.csv").read_bytes() == (out2 / "dataset.csv").read_bytes()


def test_study_command_smoke(tmp_path):
    study_path = tmp_path / "study.json"
    study_path.write_text(
        json.dumps(
            {
                "generators": [
                    {
                        "spec": "L1:S1:rw0",
                        "params": {"alpha": [1.0], "sigma": [0.5], "mu0": 0.0},
                    }
                ],
                "candidates": ["L1:S1:rw0"],
                "design": {
                    "regular": {"n_obs": 15, "t0": 0.0, "t1": 7.0, "s2": 0.05}
                },
                "n_reps": 2,
                "criteria": ["AIC"],
            }
        )
    )
    out = tmp_path / "study"
    code = main([
        "study", "--study", str(study_path), "--out-dir", str(out),
        "--seed", "5", "--ml-starts", "3", "--ml-max-iter", "150",
    ])
    assert code == 0
    records = read_jsonl(out / "study.jsonl")
    assert records[0]["selected_layer_counts"] == {"1": 2}
    assert "AIC" in (out / "study.txt").read_text()


def test_config_file_merges_with_flag_overrides(tmp_path):
    data = write_dataset(tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "data": str(data),
                "spec": "L1:S1:rw0",
                "seed": 9,
                "ml_starts": 4,
                "out_dir": str(tmp_path / "from_config"),
            }
        )
    )
    code = main(["fit", "--config", str(cfg), "--ml-starts", "2"])
    assert code == 0
    (record,) = read_jsonl(tmp_path / "from_config" / "fit.jsonl")
    assert record["seed"] == 9


def test_sample_command_reports_posterior(tmp_path):
    data = write_dataset(tmp_path, n=25)
    out = tmp_path / "s"
    code = main([
        "sample", "--data", str(data), "--spec", "L1:S1:rw0",
        "--out-dir", str(out), "--seed", "2",
        "--mcmc-iterations", "500", "--mcmc-burn-in", "200",
        "--bml-samples", "600", "--save-draws",
    ])
    assert code == 0
    (record,) = read_jsonl(out / "sample.jsonl")
    assert "log_bml" in record
    assert "rhat_max" in record
    row = record["params"][0]
    assert "median" in row and "posterior95" in row
    draws = np.load(out / "draws.npy")
    assert draws.shape[1] == 3
