"""Tests for the granularity study and the charts."""

import math

import pytest

from omnidet.evaluation import THRESHOLDS
from omnidet.exceptions import ParseError
from omnidet.experiments import (
    STUDY_FILE,
    StudyResult,
    StudySetting,
    default_settings,
    read_study_csv,
    run_granularity_study,
    study_config,
    summarize_study,
    write_study_csv,
)
from omnidet.models import EvalResult
from omnidet.plotting import (
    plot_eval_curve,
    plot_granularity_comparison,
    plot_loss_curves,
    read_log,
)


def _result(setting, repeat, mean_ap):
    return StudyResult(
        setting=setting,
        repeat=repeat,
        seed=repeat,
        result=EvalResult(thresholds=THRESHOLDS, mean_ap=mean_ap),
    )


class TestStudySettings:
    """Tests for default_settings and study_config."""

    def test_shared_full_fraction(self):
        """Test that every arm keeps the same fully labeled fraction."""
        settings = default_settings(0.3)
        assert [s.name for s in settings] == ["full", "full+weak", "full+unlabeled"]
        assert all(s.overrides["granularity"][0] == 0.3 for s in settings)
        assert settings[1].overrides["granularity"] == pytest.approx((0.3, 0.7, 0.0))

    def test_full_arm_is_supervised_only(self):
        """Test that the FULL arm trains without the other terms."""
        full = default_settings()[0]
        assert full.overrides["terms"] == ("supervised",)
        assert full.overrides["n_weak"] == full.overrides["n_unlabeled"] == 0

    def test_study_config(self, tiny_config, tmp_path):
        """Test seed offset, output directory and overrides of one arm."""
        setting = StudySetting(name="full+weak", overrides={"granularity": (0.2, 0.8, 0.0)})
        config = study_config(tiny_config, setting, 2, tmp_path)
        assert config.seed == tiny_config.seed + 2
        assert config.output_dir == str(tmp_path / "full+weak" / "repeat_2")
        assert config.granularity == (0.2, 0.8, 0.0)
        assert config.terms == tiny_config.terms


class TestStudyFiles:
    """Tests for the study CSV."""

    def test_roundtrip_and_summary(self, tmp_path):
        """Test writing results and summarizing them per setting."""
        results = [_result("full", 0, 0.2), _result("full", 1, 0.4), _result("full+weak", 0, 0.5)]
        write_study_csv(results, tmp_path / STUDY_FILE)
        maps = read_study_csv(tmp_path / STUDY_FILE)
        assert maps == {"full": [0.2, 0.4], "full+weak": [0.5]}
        summary = summarize_study(maps)
        assert summary["full"] == pytest.approx((0.3, 0.1))
        assert summary["full+weak"] == pytest.approx((0.5, 0.0))

    def test_missing(self, tmp_path):
        """Test that a missing file raises ParseError."""
        with pytest.raises(ParseError):
            read_study_csv(tmp_path / STUDY_FILE)

    def test_bad_row(self, tmp_path):
        """Test that a non-numeric mAP raises ParseError."""
        (tmp_path / STUDY_FILE).write_text("setting,mAP\nfull,oops\n")
        with pytest.raises(ParseError, match="bad study row"):
            read_study_csv(tmp_path / STUDY_FILE)


class TestPlotting:
    """Tests for the chart writers."""

    @pytest.fixture
    def loss_csv(self, tmp_path):
        path = tmp_path / "loss.csv"
        path.write_text(
            "step,lr,focal,regression,bce,intra,inter,sfl,total\n"
            "0,0.001,1.0,0.5,0.7,0,0,0.1,2.3\n"
            "1,0.001,0.9,0.4,0.6,0,0,0.1,2.0\n"
        )
        return path

    def test_read_log(self, tmp_path):
        """Test numeric columns with an empty cell."""
        path = tmp_path / "eval.csv"
        path.write_text("step,mAP,AP_L\n2,0.5,\n4,0.6,0.1\n")
        log = read_log(path)
        assert log["step"] == [2.0, 4.0]
        assert math.isnan(log["AP_L"][0])

    def test_read_log_bad_cell(self, tmp_path):
        """Test that a non-numeric cell raises ParseError."""
        path = tmp_path / "eval.csv"
        path.write_text("step,mAP\n2,high\n")
        with pytest.raises(ParseError, match="line 2"):
            read_log(path)

    def test_loss_curves(self, loss_csv, tmp_path):
        """Test that the loss chart is written."""
        out = plot_loss_curves(loss_csv, tmp_path / "plots" / "loss.png")
        assert out.read_bytes().startswith(b"\x89PNG")

    def test_loss_curves_all_zero(self, tmp_path):
        """Test that a log without nonzero components raises ParseError."""
        path = tmp_path / "loss.csv"
        path.write_text("step,focal,total\n0,0,0\n")
        with pytest.raises(ParseError):
            plot_loss_curves(path, tmp_path / "loss.png")

    def test_eval_curve(self, tmp_path):
        """Test that the validation chart is written."""
        path = tmp_path / "eval.csv"
        path.write_text("step,lr,mAP\n2,0.001,0.1\n4,0.0001,0.2\n")
        assert plot_eval_curve(path, tmp_path / "val.png").is_file()

    def test_granularity_comparison(self, tmp_path):
        """Test the study bar chart and its empty case."""
        out = plot_granularity_comparison({"full": [0.2, 0.3], "full+weak": [0.4]}, tmp_path / "g.png")
        assert out.is_file()
        with pytest.raises(ParseError):
            plot_granularity_comparison({}, tmp_path / "empty.png")


@pytest.mark.slow
class TestGranularityStudy:
    """End-to-end study on a small synthetic dataset."""

    def test_study(self, tiny_config, tiny_dataset, tmp_path):
        """Test that every arm and repeat is trained, scored and written."""
        config = tiny_config.model_copy(update={"max_steps": 60, "eval_every": 30, "checkpoint_every": 60})
        results = run_granularity_study(tiny_dataset, tmp_path / "study", config, repeats=2)
        assert len(results) == 6
        assert {r.setting for r in results} == {"full", "full+weak", "full+unlabeled"}
        assert all(0.0 <= r.result.mean_ap <= 1.0 for r in results)
        maps = read_study_csv(tmp_path / "study" / STUDY_FILE)
        assert {k: len(v) for k, v in maps.items()} == {
            "full": 2, "full+weak": 2, "full+unlabeled": 2
        }
