from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from units.cli.app import EXIT_ERROR, build_parser, main


@pytest.fixture
def run_config(tmp_path: Path) -> Path:
    manifest = tmp_path / "manifest.yaml"
    manifest.write_text(
        yaml.safe_dump(
            {"datasets": [{"name": "s", "generator": {"kind": "two_class"}, "window": 8}]}
        ),
        encoding="utf-8",
    )
    path = tmp_path / "run.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "manifest": "manifest.yaml",
                "out": str(tmp_path / "out"),
                "model": {"n_blocks": 1, "d_model": 8, "patch_size": 4, "n_heads": 2},
                "training": {"steps": 1, "batch_size": 2},
            }
        ),
        encoding="utf-8",
    )
    return path


class TestParser:
    def test_training_commands_need_config(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train"])

    def test_eval_split(self) -> None:
        args = build_parser().parse_args(
            ["eval", "--config", "r.yaml", "--from-checkpoint", "m.unts", "--split", "val"]
        )
        assert args.split == "val"
        assert args.checkpoint == Path("m.unts")

    def test_detect_needs_one_threshold_source(self) -> None:
        """Exactly one of --anomaly-ratio and --threshold is accepted."""
        base = ["detect", "--from-checkpoint", "m.unts", "--input", "s.csv"]
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(base)
        with pytest.raises(SystemExit):
            parser.parse_args([*base, "--threshold", "1", "--anomaly-ratio", "0.1"])
        args = parser.parse_args([*base, "--threshold", "0.5"])
        assert args.threshold == 0.5 and args.anomaly_ratio is None

    def test_forecast_arguments(self) -> None:
        args = build_parser().parse_args(
            ["forecast", "--from-checkpoint", "m.unts", "--input", "s.csv", "--horizon-tokens", "3"]
        )
        assert args.horizon_tokens == 3
        assert args.source is None
        assert args.out == Path(".")


class TestMainErrors:
    def test_missing_config_file(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["train", "--config", str(tmp_path / "absent.yaml")])
        assert code == EXIT_ERROR
        assert "absent.yaml" in capsys.readouterr().err

    def test_prompt_tune_without_checkpoint(
        self, run_config: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Prompt tuning refuses to start from a fresh model."""
        assert main(["prompt-tune", "--config", str(run_config)]) == EXIT_ERROR
        assert "--from-checkpoint" in capsys.readouterr().err

    def test_train_refuses_targeted_regimes(
        self, tmp_path: Path, run_config: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        raw = yaml.safe_load(run_config.read_text())
        raw["training"].update(regime="finetune", target_task="s")
        run_config.write_text(yaml.safe_dump(raw))
        assert main(["train", "--config", str(run_config)]) == EXIT_ERROR
        assert "finetune" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_missing_checkpoint(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = main(["analyze-prompts", "--from-checkpoint", str(tmp_path / "m.unts")])
        assert code == EXIT_ERROR
        assert "no such checkpoint" in capsys.readouterr().err
