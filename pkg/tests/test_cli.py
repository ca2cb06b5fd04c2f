import json

import pytest

from regionadv.cli import EXIT_CODES, build_parser, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out: str) -> dict:
    return json.loads(out.strip().splitlines()[-1])


@pytest.mark.parametrize("cmd", ["train", "tup", "attack", "rat", "eval", "sweep"])
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_missing_model_artifact(tmp_path, capsys):
    code, _, err = run_cli(
        capsys, "tup", "--model", str(tmp_path / "nope.ckpt"),
        "--out", str(tmp_path / "t.bin"), "--data-dir", str(tmp_path),
    )
    assert code == EXIT_CODES["artifact-not-found"]
    assert "error[artifact-not-found]" in err


def test_missing_required_flag(tmp_path, capsys):
    code, _, err = run_cli(capsys, "train", "--dataset", "gaussians")
    assert code == EXIT_CODES["config"]
    assert "error[config]" in err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli-lab")
    ckpt = base / "mlp.ckpt"
    code = main([
        "train", "--dataset", "gaussians", "--model", "mlp", "--epochs", "30",
        "--seed", "3", "--out", str(ckpt), "--data-dir", str(base),
    ])
    assert code == 0
    return base, ckpt


def test_train_artifact_deterministic(tmp_path, capsys):
    args = ["train", "--dataset", "gaussians", "--model", "mlp", "--epochs", "2",
            "--seed", "5", "--data-dir", str(tmp_path)]
    code1, out1, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a.ckpt"))
    code2, out2, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b.ckpt"))
    assert code1 == code2 == 0
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert last_json(out1)["model_hash"] == last_json(out2)["model_hash"]


def test_train_reports_accuracy(trained, capsys):
    base, ckpt = trained
    assert ckpt.exists()


def test_tup_then_eval_flow(trained, capsys, tmp_path):
    base, ckpt = trained
    tup_path = tmp_path / "tup.bin"
    code, out, _ = run_cli(
        capsys, "tup", "--model", str(ckpt), "--target", "2", "--eta", "0.8",
        "--x-size", "30", "--seed", "3", "--out", str(tup_path),
        "--data-dir", str(base),
    )
    assert code == 0
    summary = last_json(out)
    assert summary["success_on_x"] >= 0.0
    assert tup_path.exists() and (str(tup_path) + ".json")

    report = tmp_path / "report.json"
    code, out, _ = run_cli(
        capsys, "eval", "--model", str(ckpt), "--attacks", "identity,tup",
        "--tup", str(tup_path), "--target", "2", "--report", str(report),
        "--data-dir", str(base), "--seed", "3",
    )
    assert code == 0
    doc = json.loads(report.read_text())
    names = doc["tables"][0]["cols"]
    values = doc["tables"][0]["values"][0]
    assert names == ["identity", "tup"]
    assert all(0.0 <= v <= 1.0 for v in values)
    if summary["converged"]:
        # held-out targeted success tracks the working-set rate
        by_name = {t["name"]: t for t in doc["tables"]}
        held_out = by_name["targeted-success"]["values"][0][0]
        assert held_out >= (1.0 - 0.1) - 0.15


def test_attack_fgsm_saves_artifact(trained, capsys, tmp_path):
    base, ckpt = trained
    out_path = tmp_path / "fgsm.bin"
    code, out, _ = run_cli(
        capsys, "attack", "--method", "fgsm", "--model", str(ckpt), "--eps", "0.3",
        "--count", "20", "--out", str(out_path), "--data-dir", str(base),
    )
    assert code == 0
    assert out_path.exists()
    from regionadv import arrayio
    arrays, meta, _ = arrayio.load(out_path)
    assert arrays["delta"].shape == (20, 2)
    assert meta["method"] == "fgsm"


def test_rat_subcommand(trained, capsys, tmp_path):
    base, ckpt = trained
    tup_path = tmp_path / "t.bin"
    code, _, _ = run_cli(
        capsys, "tup", "--model", str(ckpt), "--target", "2", "--x-size", "30",
        "--seed", "3", "--out", str(tup_path), "--data-dir", str(base),
    )
    assert code == 0
    out_ckpt = tmp_path / "rat.ckpt"
    code, out, _ = run_cli(
        capsys, "rat", "--model", str(ckpt), "--tup", str(tup_path), "--target", "2",
        "--epochs", "2", "--seed", "3", "--out", str(out_ckpt), "--data-dir", str(base),
    )
    assert code == 0
    summary = last_json(out)
    assert set(summary["partition_sizes"]) == {"target", "perturbed", "clean"}
    assert out_ckpt.exists()


def test_sweep_k_subcommand(trained, capsys, tmp_path):
    base, ckpt = trained
    report = tmp_path / "sweep"
    code, out, _ = run_cli(
        capsys, "sweep", "--kind", "k", "--values", "10,30", "--model", str(ckpt),
        "--x-size", "30", "--target", "2", "--max-passes", "2", "--seed", "3",
        "--report", str(report), "--data-dir", str(base),
    )
    assert code == 0
    files = last_json(out)["report_files"]
    assert len(files) == 1 and files[0].endswith("-3.json")


def test_config_file_merging_and_flag_override(trained, capsys, tmp_path):
    base, ckpt = trained
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 4, "model": "mlp", "dataset": "gaussians"}))
    with pytest.warns(UserWarning, match="overrides config"):
        code, out, _ = run_cli(
            capsys, "train", "--config", str(cfg), "--epochs", "2", "--seed", "1",
            "--out", str(tmp_path / "m.ckpt"), "--data-dir", str(base),
        )
    assert code == 0
    assert last_json(out)["config"]["epochs"] == 2  # flag wins


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_option": 1}))
    code, _, err = run_cli(
        capsys, "train", "--config", str(cfg), "--dataset", "gaussians",
        "--out", str(tmp_path / "m.ckpt"), "--data-dir", str(tmp_path),
    )
    assert code == EXIT_CODES["config"]
    assert "no_such_option" in err


def test_data_dir_env_var(trained, capsys, tmp_path, monkeypatch):
    base, ckpt = trained
    monkeypatch.setenv("REGIONADV_DATA_DIR", str(base))
    code, out, _ = run_cli(
        capsys, "eval", "--model", str(ckpt), "--attacks", "identity",
        "--report", str(tmp_path / "r.json"), "--seed", "3",
    )
    assert code == 0
