from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pandas as pd
import pytest
from conftest import CLI_CONFIG
from freezegun import freeze_time

from playbook.cli import MANIFEST_FILE, main, sha256

JSON_DIR = Path(__file__).parent / "json"
TEST_FILES = sorted(JSON_DIR.glob("*.json"))
FROZEN_AT = "2026-01-01T00:00:00+00:00"


def write_config(path: Path, overrides: dict[str, Any] | None = None) -> Path:
    config = {section: dict(values) for section, values in CLI_CONFIG.items()}
    for section, values in (overrides or {}).items():
        config.setdefault(section, {}).update(values)
    path.write_text(json.dumps(config))
    return path


def run(step: list[str], out: Path, config: Path) -> int:
    return main([*step, "--out", str(out), "--config", str(config)])


def read_manifest(out: Path) -> dict[str, Any]:
    return json.loads((out / MANIFEST_FILE).read_text())


@freeze_time("2026-01-01")
@pytest.mark.parametrize("testcase", TEST_FILES, ids=lambda p: p.stem)
def test_cli(
    testcase: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    case = json.loads(testcase.read_text())
    out = tmp_path / "out"
    config = write_config(tmp_path / "config.json", case.get("config"))
    *setup, last = case["steps"]

    for step in setup:
        assert run(step, out, config) == 0
    capsys.readouterr()

    assert run(last, out, config) == case["exit_code"]
    for name in case["artifacts"]:
        assert (out / name).is_file(), name
    if "error" in case:
        err = capsys.readouterr().err
        assert f"playbook: error kind={case['error']} code={case['exit_code']}" in err


@freeze_time("2026-01-01")
def test_manifest(tmp_path: Path) -> None:
    out = tmp_path / "out"
    config = write_config(tmp_path / "config.json")
    for step in (["generate"], ["align"], ["train", "--eta-pi", "0.1"]):
        assert run(step, out, config) == 0

    manifest = read_manifest(out)

    assert manifest["subcommand"] == "train"
    assert manifest["status"] == "ok"
    assert manifest["started_at"] == FROZEN_AT
    assert manifest["seed"] is None
    assert manifest["config"]["tree"]["eta_pi"] == 0.1
    assert manifest["arguments"]["out"] == str(out)
    assert list(manifest["inputs"]) == [str(out / "aligned.jsonl")]
    assert {Path(p).name for p in manifest["outputs"]} == {
        "tree.json",
        "alpha.csv",
        "training_loss.csv",
    }
    for path, checksum in {**manifest["inputs"], **manifest["outputs"]}.items():
        assert sha256(Path(path)) == checksum


@freeze_time("2026-01-01")
def test_failed_run_is_recorded(tmp_path: Path) -> None:
    out = tmp_path / "out"

    assert run(["train"], out, write_config(tmp_path / "config.json")) == 3

    manifest = read_manifest(out)
    assert manifest["status"] == "error:MissingInputError"
    assert manifest["inputs"] == {}


def test_manifest_reproduces_training(tmp_path: Path) -> None:
    first, second = tmp_path / "first", tmp_path / "second"
    config = write_config(tmp_path / "config.json")
    for step in (["generate"], ["align"], ["train", "--seed", "5"]):
        assert run(step, first, config) == 0

    manifest = first / MANIFEST_FILE
    plays = str(first / "aligned.jsonl")
    assert run(["train", "--plays", plays], second, manifest) == 0

    assert read_manifest(second)["config"] == read_manifest(first)["config"]
    for name in ("alpha.csv", "training_loss.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_evaluation_table(tmp_path: Path) -> None:
    out = tmp_path / "out"
    config = write_config(tmp_path / "config.json")
    for step in (["generate"], ["align"], ["evaluate", "--compare-layers", "3"]):
        assert run(step, out, config) == 0

    frame = pd.read_csv(out / "evaluation.csv")

    assert list(frame.columns) == [
        "experiment",
        "n_layers",
        "mean_log_loss",
        "n_train",
        "n_test",
    ]
    assert frame["n_layers"].tolist() == [0, 3]
    assert (frame["mean_log_loss"] > 0).all()
    assert frame["n_test"].gt(0).all()
    assert frame["n_train"].nunique() == frame["n_test"].nunique() == 1


def test_usage_errors_exit_with_2(tmp_path: Path) -> None:
    with pytest.raises(SystemExit) as exc_info:
        main(["unknown", "--out", str(tmp_path)])

    assert exc_info.value.code == 2
