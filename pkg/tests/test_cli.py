import os

import pytest

from sinktree.cli import (
    RunConfig,
    config_hash,
    dump_config,
    load_config_file,
    main,
)

SMALL = ["--n", "150", "--side", "1200", "--seed", "3"]


def run_cli(args, tmp_path):
    return main(args + ["--out", str(tmp_path)])


def find_run_dir(tmp_path, command):
    root = tmp_path / command
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    assert dirs, f"no run directory under {root}"
    return dirs[0]


def test_single_one_node(tmp_path, capsys):
    assert run_cli(["single", "--n", "1"], tmp_path) == 0
    out = capsys.readouterr().out
    assert "messages=1" in out


def test_k_zero_is_config_error(tmp_path):
    assert run_cli(["single", "--n", "10", "--k", "0"], tmp_path) == 2


def test_f_below_one_is_config_error(tmp_path):
    assert run_cli(["single", "--n", "10", "--f", "0.5"], tmp_path) == 2


def test_unknown_subcommand_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc_info:
        main(["bogus"])
    assert exc_info.value.code == 2


def test_single_outputs_and_config_roundtrip(tmp_path):
    assert run_cli(["single"] + SMALL + ["--k", "6", "--f", "1.1"], tmp_path) == 0
    run_dir = find_run_dir(tmp_path, "single")
    for name in (
        "config.txt",
        "layout.csv",
        "event_log.csv",
        "per_step.csv",
        "final_state.csv",
        "oracle.csv",
        "fig2_timeseries.csv",
        "fig3_messages_hist.csv",
        "fig4_cost_hist.csv",
        "fig5_hops_hist.csv",
    ):
        assert (run_dir / name).exists(), name
    event_log = (run_dir / "event_log.csv").read_bytes()

    # Re-running from the dumped effective config reproduces the run exactly.
    out2 = tmp_path / "second"
    assert main(["single", "--config", str(run_dir / "config.txt"),
                 "--out", str(out2)]) == 0
    run_dir2 = find_run_dir(out2, "single")
    assert (run_dir2 / "event_log.csv").read_bytes() == event_log


def test_config_file_flags_override(tmp_path):
    cfg_file = tmp_path / "base.cfg"
    cfg_file.write_text("n = 20\nk = 3\nf = 1.2\n# comment line\n")
    values = load_config_file(cfg_file)
    assert values == {"n": 20, "k": 3, "f": 1.2}
    bad = tmp_path / "bad.cfg"
    bad.write_text("nodes = 20\n")
    with pytest.raises(ValueError):
        load_config_file(bad)


def test_every_config_key_roundtrips():
    cfg = RunConfig(n=77, k=5, f=1.3, variant="baseline", out="/tmp/x", workers=2)
    text = dump_config(cfg)
    parsed = {}
    for line in text.splitlines():
        key, _, val = line.partition(" = ")
        parsed[key.strip()] = val.strip()
    assert parsed["n"] == "77"
    assert parsed["range"] == "300.0"
    assert parsed["variant"] == "baseline"
    assert parsed["v"] == ""


def test_config_hash_ignores_out_and_workers():
    a = RunConfig(out="/tmp/a", workers=1)
    b = RunConfig(out="/tmp/b", workers=8)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(RunConfig(seed=2))


def test_env_var_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SINKTREE_OUT", str(tmp_path / "envroot"))
    assert main(["single", "--n", "1"]) == 0
    assert (tmp_path / "envroot" / "single").is_dir()


def test_layout_reuse(tmp_path):
    assert run_cli(["single"] + SMALL, tmp_path) == 0
    layout = find_run_dir(tmp_path, "single") / "layout.csv"
    out2 = tmp_path / "reuse"
    assert main(["single", "--layout", str(layout), "--n", "150",
                 "--out", str(out2)]) == 0


def test_sweep_single_cell_matches_single_run(tmp_path, capsys):
    args = SMALL + ["--k", "6", "--f", "1.1"]
    assert run_cli(["single"] + args, tmp_path) == 0
    single_out = capsys.readouterr().out
    assert run_cli(
        ["sweep"] + args + ["--f-list", "1.1", "--k-list", "6", "--seeds", "3"],
        tmp_path,
    ) == 0
    sweep_out = capsys.readouterr().out
    # Same mean statistics in both summaries.
    single_mean = next(
        tok.split("=")[1] for tok in single_out.split()
        if tok.startswith("mean_msgs_per_node=")
    )
    sweep_mean = next(
        tok.split("=")[1] for tok in sweep_out.split()
        if tok.startswith("mean_msgs=")
    )
    assert float(single_mean) == pytest.approx(float(sweep_mean), rel=1e-9)
    run_dir = find_run_dir(tmp_path, "sweep")
    assert (run_dir / "fig6_sweep.csv").exists()
    assert (run_dir / "fig6.png").exists()


def test_sweep_both_gate_modes(tmp_path):
    assert run_cli(
        ["sweep"] + SMALL + [
            "--k", "6", "--f-list", "1.0,1.1", "--k-list", "6",
            "--both-gate-modes", "--literal-horizon", "2000",
        ],
        tmp_path,
    ) == 0
    run_dir = find_run_dir(tmp_path, "sweep")
    assert (run_dir / "fig6_sweep.csv").exists()
    assert (run_dir / "fig6_sweep_literal_eq3.csv").exists()


def test_validate_passes_on_healthy_instance(tmp_path, capsys):
    assert run_cli(["validate"] + SMALL + ["--k", "8"], tmp_path) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out
    assert "[FAIL]" not in out


def test_single_with_figures(tmp_path):
    assert run_cli(["single"] + SMALL + ["--figures"], tmp_path) == 0
    run_dir = find_run_dir(tmp_path, "single")
    for name in ("map.png", "fig2.png", "fig3.png", "fig4.png", "fig5.png"):
        assert (run_dir / name).exists(), name


def test_paperfigs_small_instance(tmp_path, capsys):
    assert run_cli(
        ["paperfigs", "--n", "250", "--side", "1500", "--seed", "2",
         "--workers", "1", "--literal-horizon", "1500"],
        tmp_path,
    ) == 0
    run_dir = find_run_dir(tmp_path, "paperfigs")
    report = (run_dir / "report.txt").read_text()
    assert "rapid" in report and "comprehensive" in report
    assert "gate mode significant_improvement" in report
    assert "gate mode literal_eq3" in report
    for name in (
        "fig2.png", "fig3.png", "fig4.png", "fig5.png", "fig6.png",
        "fig6_sweep.csv",
    ):
        assert (run_dir / name).exists(), name
    for sub in ("rapid", "comprehensive"):
        assert (run_dir / sub / "event_log.csv").exists()
        assert (run_dir / sub / "map.png").exists()


def test_time_sync_variant_via_cli(tmp_path, capsys):
    assert run_cli(
        ["single", "--n", "60", "--side", "700", "--variant", "time_sync"],
        tmp_path,
    ) == 0
    out = capsys.readouterr().out
    assert "messages=" in out
