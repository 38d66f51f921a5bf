import json
import warnings

import pytest

from flimsod.cli import main


def run_cli(capsys, *argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(list(argv)) == 0
    return capsys.readouterr().out


@pytest.fixture(scope="module")
def cli_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        main(["synth", "--out", str(root), "--seed", "3", "--images", "6",
              "--size", "96", "--marked", "2", "--object-area", "300", "700"])
    return root


def test_synth_then_ingest(cli_root, capsys):
    out = run_cli(capsys, "ingest", "--dataset", str(cli_root))
    report = json.loads(out)
    assert report["images"] == 6
    assert len(report["trainable"]) == 2


def test_full_command_chain(cli_root, tmp_path, capsys):
    config = {
        "dataset": str(cli_root),
        "mode": "bofp",
        "blocks": [{"kernels_per_marker": 1}, {"kernels_per_marker": 1}],
        "postproc": {"min_area": 100, "max_area": 1500},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))

    run = tmp_path / "run"
    out = run_cli(capsys, "train", "--config", str(config_path),
                  "--out", str(run))
    assert json.loads(out)["kmeans_invocations"] > 0

    inferred = tmp_path / "saliency"
    out = run_cli(capsys, "infer", "--config", str(config_path),
                  "--model", str(run / "model"), "--out", str(inferred),
                  "--images", "img003", "img004")
    assert (inferred / "img003_block2.png").is_file()

    refined = tmp_path / "refined"
    out = run_cli(capsys, "refine", "--config", str(config_path),
                  "--saliency", str(inferred), "--out", str(refined))
    assert json.loads(out)["refined"] == ["img003", "img004"]

    scored = tmp_path / "eval"
    out = run_cli(capsys, "eval", "--config", str(config_path),
                  "--pred", str(refined), "--out", str(scored), "--plot")
    summary = json.loads(out)
    assert summary["images"] == 2
    assert (scored / "curve.svg").is_file()
    assert (scored / "report.csv").is_file()


def test_grid_command(cli_root, tmp_path, capsys):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "dataset": str(cli_root),
        "postproc": {"min_area": 100, "max_area": 1500},
    }))
    out = run_cli(capsys, "grid", "--config", str(config_path),
                  "--kernel-sizes", "3", "--kernels", "1", "--blocks", "1,2",
                  "--out", str(tmp_path / "grid.json"))
    rows = json.loads((tmp_path / "grid.json").read_text())
    assert len(rows) == 2
    assert all("score" in r and "model" not in r for r in rows)


def test_mode_and_seed_overrides(cli_root, tmp_path, capsys):
    out = run_cli(capsys, "train", "--dataset", str(cli_root),
                  "--mode", "cluster", "--seed", "9",
                  "--out", str(tmp_path / "c"))
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert manifest["mode"] == "cluster"
    assert manifest["seed"] == 9
