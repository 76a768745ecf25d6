import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from cablesim.cli import main
from cablesim.trace import SimTrace

CONFIG_DIR = None


@pytest.fixture(scope="module")
def config_dir(tmp_path_factory, packaged_configs):
    """Local copies of the packaged model files plus small experiment
    configs sized for test runtimes."""
    root = tmp_path_factory.mktemp("cfg")
    for name in ("surrogate_morphology.toml", "surrogate_channels.toml"):
        shutil.copy(str(packaged_configs / name), root / name)
    (root / "small.toml").write_text(
        'morphology = "surrogate_morphology.toml"\n'
        'channels = "surrogate_channels.toml"\n'
        'schemes = ["hcn", "ftcs"]\n'
        "dt_list = [2e-6, 4e-6, 8e-6]\n"
        "duration = 0.02\n"
        'out_dir = "out_small"\n', encoding="utf-8")
    (root / "order.toml").write_text(
        'morphology = "surrogate_morphology.toml"\n'
        'channels = "surrogate_channels.toml"\n'
        "duration = 0.02\n"
        'out_dir = "out_order"\n'
        "[order]\n"
        "dt = 4e-6\n"
        "refinements = 3\n"
        "reference_factor = 16\n"
        "duration = 0.008\n"
        "gbar_scale = 1e-3\n", encoding="utf-8")
    (root / "order_spiking.toml").write_text(
        'morphology = "surrogate_morphology.toml"\n'
        'channels = "surrogate_channels.toml"\n'
        "duration = 0.2\n"
        'out_dir = "out_order_bad"\n'
        "[order]\n"
        "dt = 2e-6\n"
        "refinements = 3\n"
        "reference_factor = 16\n"
        "duration = 0.1\n"
        "gbar_scale = 1.0\n", encoding="utf-8")
    # single passive compartment: constant-coefficient stability report
    (root / "passive_morph.toml").write_text(
        "[[compartment]]\nid = 0\nradius_m = 2e-6\nlength_m = 3e-4\n"
        "r_m = 0.05\nE_L = -0.04\n", encoding="utf-8")
    (root / "passive_channels.toml").write_text("# no channels\n",
                                                encoding="utf-8")
    (root / "passive.toml").write_text(
        'morphology = "passive_morph.toml"\n'
        'channels = "passive_channels.toml"\n'
        "dt_list = [1e-5]\n"
        "duration = 0.05\n"
        "coeff_every = 50\n"
        'out_dir = "out_passive"\n', encoding="utf-8")
    return root


def tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            rel = str(path.relative_to(root))
            out[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def test_run_writes_trace_and_metadata(config_dir, tmp_path):
    out = tmp_path / "run_out"
    rc = main(["run", "--config", str(config_dir / "small.toml"),
               "--scheme", "hcn", "--dt", "1e-6", "--duration", "0.01",
               "--out", str(out)])
    assert rc == 0
    csv_path = out / "hcn_dt1us.csv"
    meta_path = out / "hcn_dt1us.meta.json"
    assert csv_path.exists() and meta_path.exists()
    trace = SimTrace.from_csv(csv_path.read_text(encoding="utf-8"))
    assert trace.n_samples == 10001  # floor(duration/k) + 1
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    assert meta["stable"] is True
    assert meta["n_samples"] == 10001
    json_trace = SimTrace.from_json(
        (out / "hcn_dt1us.json").read_text(encoding="utf-8"))
    assert np.array_equal(json_trace.voltages, trace.voltages)


def test_run_unstable_exit_code(config_dir, tmp_path):
    out = tmp_path / "unstable_out"
    rc = main(["run", "--config", str(config_dir / "small.toml"),
               "--scheme", "ftcs", "--dt", "2e-5", "--duration", "0.05",
               "--out", str(out)])
    assert rc == 3
    trace = SimTrace.from_csv(
        (out / "ftcs_dt20us.csv").read_text(encoding="utf-8"))
    assert not trace.stable
    assert trace.failure_time is not None
    assert trace.times[-1] < 0.05


def test_missing_config_file_exit_code(tmp_path):
    rc = main(["run", "--config", str(tmp_path / "nope.toml"),
               "--scheme", "hcn", "--dt", "1e-6"])
    assert rc == 2


def test_broken_config_exit_code(config_dir, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('morphology = "missing_morph.toml"\n'
                   'channels = "missing_chans.toml"\n', encoding="utf-8")
    rc = main(["run", "--config", str(bad), "--scheme", "hcn",
               "--dt", "1e-6"])
    assert rc == 2


def test_sweep_reports_and_partial_failures(config_dir, tmp_path):
    out = tmp_path / "sweep_out"
    rc = main(["sweep", "--config", str(config_dir / "small.toml"),
               "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert len(summary["cells"]) == 6  # 2 schemes x 3 step sizes
    by_key = {(c["scheme"], c["dt"]): c for c in summary["cells"]}
    assert not by_key[("ftcs", 8e-6)]["stable"]  # beyond the FTCS limit
    assert by_key[("hcn", 8e-6)]["stable"]
    for name in ("stability_intervals.csv", "accuracy_vs_dt.csv",
                 "cycle_stats.csv", "class_map.csv", "oscillation_rms.csv",
                 "hcn_growth_span.csv"):
        assert (out / name).exists(), name
    assert (out / "traces" / "hcn_dt2us.csv").exists()
    # short cells record their analysis preconditions instead of failing
    assert "cycles" in by_key[("hcn", 2e-6)]["errors"]


def test_sweep_deterministic_across_worker_counts(config_dir, tmp_path):
    out1 = tmp_path / "sw1"
    out2 = tmp_path / "sw2"
    assert main(["sweep", "--config", str(config_dir / "small.toml"),
                 "--out", str(out1), "--jobs", "1"]) == 0
    assert main(["sweep", "--config", str(config_dir / "small.toml"),
                 "--out", str(out2), "--jobs", "3"]) == 0
    assert tree_digest(out1) == tree_digest(out2)


def test_sweep_seedless_determinism_flag(config_dir, tmp_path):
    rc = main(["sweep", "--config", str(config_dir / "small.toml"),
               "--out", str(tmp_path / "sw3"), "--seedless", "--no-traces"])
    assert rc == 0


def test_emitted_csv_roundtrip_byte_identical(config_dir, tmp_path):
    out = tmp_path / "rt"
    main(["run", "--config", str(config_dir / "small.toml"),
          "--scheme", "rk21", "--dt", "4e-6", "--duration", "0.002",
          "--out", str(out)])
    path = out / "rk21_dt4us.csv"
    text = path.read_text(encoding="utf-8")
    assert SimTrace.from_csv(text).to_csv() == text


def test_stability_command_constant_coefficients(config_dir, tmp_path):
    out = tmp_path / "stab_out"
    rc = main(["stability", "--config", str(config_dir / "passive.toml"),
               "--out", str(out)])
    assert rc == 0
    report = json.loads(
        (out / "stability_report.json").read_text(encoding="utf-8"))
    alpha = 1.0 / (0.05 * 0.01)  # 2000 1/s, the only coefficient
    ftcs = report["schemes"]["ftcs"]
    assert ftcs["limit_seconds"] == pytest.approx(2.0 / alpha, rel=1e-9)
    assert report["schemes"]["taylor2"]["limit_seconds"] == \
        pytest.approx(2.0 / alpha, rel=1e-9)
    for name in ("btcs", "exp_euler", "hcn"):
        assert report["schemes"][name]["unbounded"]
        assert report["schemes"][name]["limit_seconds"] is None
    assert report["schemes"]["hcn"]["oscillation_onset_seconds"] == \
        pytest.approx(2.0 / alpha, rel=1e-9)
    assert report["schemes"]["rk21"]["limit_seconds"] == \
        pytest.approx(2.0 / alpha, rel=1e-9)
    assert report["schemes"]["rk41"]["butcher_limit_seconds"] == \
        pytest.approx(2.7853 / alpha, rel=1e-9)
    assert (out / "growth_curves.csv").exists()
    assert (out / "theta_series.csv").exists()


def test_stability_command_insufficient_cycle_exit(config_dir, tmp_path):
    cfg = tmp_path / "short.toml"
    cfg.write_text(
        f'morphology = "{config_dir / "surrogate_morphology.toml"}"\n'
        f'channels = "{config_dir / "surrogate_channels.toml"}"\n'
        "dt_list = [2e-6]\n"
        "duration = 0.01\n"          # too short for a complete AP cycle
        'out_dir = "out"\n', encoding="utf-8")
    rc = main(["stability", "--config", str(cfg),
               "--out", str(tmp_path / "stab_short")])
    assert rc == 4


def test_order_command_slopes(config_dir, tmp_path):
    out = tmp_path / "order_out"
    rc = main(["order", "--config", str(config_dir / "order.toml"),
               "--out", str(out)])
    assert rc == 0
    report = json.loads(
        (out / "order_report.json").read_text(encoding="utf-8"))
    assert 1.7 <= report["schemes"]["hcn"]["slope"] <= 2.3
    for name in ("ftcs", "btcs", "exp_euler", "rk21", "rk41"):
        assert 0.6 <= report["schemes"][name]["slope"] <= 1.4, name


def test_order_command_regime_check(config_dir, tmp_path):
    rc = main(["order", "--config", str(config_dir / "order_spiking.toml"),
               "--out", str(tmp_path / "order_bad")])
    assert rc == 4


def test_bad_dt_value_exit_code(config_dir):
    # argparse rejects the dash form; the explicit form reaches the
    # duration/step validation
    rc = main(["run", "--config", str(config_dir / "small.toml"),
               "--scheme", "hcn", "--dt", "-1e-6"])
    assert rc == 2
    rc = main(["run", "--config", str(config_dir / "small.toml"),
               "--scheme", "hcn", "--dt=2e-6", "--duration", "1e-6"])
    assert rc == 2


def test_unknown_clamp_compartment_exit_code(config_dir, tmp_path):
    cfg = tmp_path / "badclamp.toml"
    cfg.write_text(
        f'morphology = "{config_dir / "surrogate_morphology.toml"}"\n'
        f'channels = "{config_dir / "surrogate_channels.toml"}"\n'
        "dt_list = [2e-6]\n"
        "duration = 0.01\n"
        'out_dir = "out"\n'
        "[[clamp]]\ncompartment = 99\nvoltage = -0.02\n", encoding="utf-8")
    rc = main(["run", "--config", str(cfg), "--scheme", "hcn",
               "--dt", "2e-6", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_analyze_command(config_dir, tmp_path):
    sweep_out = tmp_path / "an_src"
    main(["sweep", "--config", str(config_dir / "small.toml"),
          "--out", str(sweep_out)])
    out = tmp_path / "an_out"
    rc = main(["analyze", "--traces", str(sweep_out / "traces"),
               "--out", str(out)])
    assert rc == 0
    report = json.loads(
        (out / "analysis_report.json").read_text(encoding="utf-8"))
    assert report["n_traces"] == 6


def test_bench_command_runs():
    rc = main(["bench", "--dt", "4e-6", "--duration", "0.002"])
    assert rc == 0


def test_state_save_and_reload_hooks(config_dir, tmp_path):
    cfg = tmp_path / "state_cfg.toml"
    state_file = tmp_path / "final_state.json"
    cfg.write_text(
        f'morphology = "{config_dir / "surrogate_morphology.toml"}"\n'
        f'channels = "{config_dir / "surrogate_channels.toml"}"\n'
        "dt_list = [2e-6]\n"
        "duration = 0.004\n"
        f'save_final_state = "{state_file.name}"\n'
        f'out_dir = "state_out"\n', encoding="utf-8")
    rc = main(["run", "--config", str(cfg), "--scheme", "hcn",
               "--dt", "2e-6", "--out", str(tmp_path / "s1")])
    assert rc == 0
    saved = tmp_path / "final_state.json"
    assert saved.exists()
    cfg2 = tmp_path / "state_cfg2.toml"
    cfg2.write_text(
        f'morphology = "{config_dir / "surrogate_morphology.toml"}"\n'
        f'channels = "{config_dir / "surrogate_channels.toml"}"\n'
        "dt_list = [2e-6]\n"
        "duration = 0.004\n"
        f'initial_state = "{saved.name}"\n'
        'out_dir = "state_out2"\n', encoding="utf-8")
    rc = main(["run", "--config", str(cfg2), "--scheme", "hcn",
               "--dt", "2e-6", "--out", str(tmp_path / "s2")])
    assert rc == 0
    a = SimTrace.from_csv(
        (tmp_path / "s1" / "hcn_dt2us.csv").read_text(encoding="utf-8"))
    b = SimTrace.from_csv(
        (tmp_path / "s2" / "hcn_dt2us.csv").read_text(encoding="utf-8"))
    # the second run starts where the first ended
    assert b.voltages[0, 0] == pytest.approx(a.voltages[-1, 0], abs=1e-12)
