"""Tests for the models module."""

import numpy as np
import pytest
from pydantic import ValidationError

from omnidet.models import (
    AreaRange,
    BatchComposition,
    DatasetManifest,
    Detection,
    EvalResult,
    Granularity,
    GroundTruthBox,
    LossReport,
    Sample,
    SampleRecord,
    derive_labels,
)


def _box(x0=2.0, y0=2.0, x1=10.0, y1=12.0, c=0):
    return GroundTruthBox(x_min=x0, y_min=y0, x_max=x1, y_max=y1, class_id=c)


class TestGranularity:
    """Tests for Granularity enum."""

    def test_values(self):
        """Test the serialized values."""
        assert [g.value for g in Granularity] == ["full", "weak", "unlabeled"]

    def test_label_availability(self):
        """Test which granularities expose boxes and labels."""
        assert Granularity.FULL.has_boxes and Granularity.FULL.has_labels
        assert not Granularity.WEAK.has_boxes and Granularity.WEAK.has_labels
        assert not Granularity.UNLABELED.has_boxes
        assert not Granularity.UNLABELED.has_labels

    def test_display_name(self):
        """Test human-readable names."""
        assert Granularity.WEAK.display_name == "Weakly labeled"


class TestAreaRange:
    """Tests for AreaRange buckets."""

    def test_half_open_bounds(self):
        """Test that the cutoffs belong to the upper bucket."""
        assert AreaRange.SMALL.contains(32.0**2 - 1)
        assert not AreaRange.SMALL.contains(32.0**2)
        assert AreaRange.MEDIUM.contains(32.0**2)
        assert not AreaRange.MEDIUM.contains(96.0**2)
        assert AreaRange.LARGE.contains(96.0**2)
        assert AreaRange.ALL.contains(0.0)


class TestGroundTruthBox:
    """Tests for GroundTruthBox model."""

    def test_area(self):
        """Test the box area."""
        assert _box().area == 80.0

    def test_rejects_degenerate(self):
        """Test that zero-width boxes are rejected."""
        with pytest.raises(ValidationError, match="well-ordered"):
            _box(x0=5.0, x1=5.0)

    def test_rejects_negative_class(self):
        """Test that class ids are nonnegative."""
        with pytest.raises(ValidationError):
            _box(c=-1)

    def test_immutability(self):
        """Test that boxes are frozen."""
        box = _box()
        with pytest.raises(ValidationError):
            box.x_min = 0.0


class TestDetection:
    """Tests for Detection model."""

    def test_score_range(self):
        """Test that scores outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            Detection(x_min=0, y_min=0, x_max=1, y_max=1, class_id=0, score=1.5)


class TestDeriveLabels:
    """Tests for derive_labels."""

    def test_multi_label(self):
        """Test that each class with a box is set exactly once."""
        boxes = [_box(c=2), _box(c=0), _box(c=2)]
        assert derive_labels(boxes, 4) == (1, 0, 1, 0)

    def test_no_boxes(self):
        """Test the all-zero vector for an image without lesions."""
        assert derive_labels([], 3) == (0, 0, 0)

    def test_class_out_of_range(self):
        """Test that an unknown class raises ValueError."""
        with pytest.raises(ValueError):
            derive_labels([_box(c=5)], 3)


class TestSample:
    """Tests for Sample model."""

    @pytest.fixture
    def image(self):
        return np.zeros((16, 16), dtype=np.float32)

    def test_full_derives_labels(self, image):
        """Test that the full constructor derives image labels from boxes."""
        sample = Sample.full("a", image, [_box(c=1)], num_classes=3)
        assert sample.granularity is Granularity.FULL
        assert sample.image_labels == (0, 1, 0)
        assert sample.height == sample.width == 16

    def test_full_rejects_inconsistent_labels(self, image):
        """Test that labels disagreeing with the boxes are rejected."""
        with pytest.raises(ValidationError, match="disagree"):
            Sample(
                sample_id="a",
                image=image,
                granularity=Granularity.FULL,
                boxes=(_box(c=1),),
                image_labels=(1, 0, 0),
            )

    def test_full_rejects_box_outside_image(self, image):
        """Test that boxes must lie inside the image."""
        with pytest.raises(ValidationError, match="outside"):
            Sample.full("a", image, [_box(x1=20.0)], num_classes=2)

    def test_weak_has_no_boxes(self, image):
        """Test that weak samples cannot carry boxes."""
        Sample(sample_id="w", image=image, granularity=Granularity.WEAK, image_labels=(1, 0))
        with pytest.raises(ValidationError, match="no boxes"):
            Sample(
                sample_id="w",
                image=image,
                granularity=Granularity.WEAK,
                boxes=(),
                image_labels=(0, 0),
            )

    def test_unlabeled_has_nothing(self, image):
        """Test that unlabeled samples carry neither boxes nor labels."""
        with pytest.raises(ValidationError, match="neither"):
            Sample(
                sample_id="u",
                image=image,
                granularity=Granularity.UNLABELED,
                image_labels=(0, 0),
            )

    def test_rejects_out_of_range_pixels(self):
        """Test that image values must lie in [0, 1]."""
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            Sample(
                sample_id="u",
                image=np.full((4, 4), 2.0),
                granularity=Granularity.UNLABELED,
            )

    def test_rejects_non_binary_labels(self, image):
        """Test that labels must be 0 or 1."""
        with pytest.raises(ValidationError, match="binary"):
            Sample(sample_id="w", image=image, granularity=Granularity.WEAK, image_labels=(2,))


class TestSampleRecord:
    """Tests for SampleRecord model."""

    def test_weak_record_without_labels(self):
        """Test that a weak record must carry labels."""
        with pytest.raises(ValidationError, match="labels inconsistent"):
            SampleRecord(id="a", path="a.png", granularity=Granularity.WEAK)

    def test_unlabeled_record(self):
        """Test a bare unlabeled record."""
        record = SampleRecord(id="a", path="a.png", granularity=Granularity.UNLABELED)
        assert record.boxes is None and record.labels is None


class TestDatasetManifest:
    """Tests for DatasetManifest model."""

    def test_duplicate_ids(self):
        """Test that duplicate sample ids are rejected."""
        record = SampleRecord(id="a", path="a.png", boxes=(), labels=(0,))
        with pytest.raises(ValidationError, match="Duplicate"):
            DatasetManifest(split="train", seed=0, num_classes=1, image_size=16, records=(record, record))

    def test_counts(self):
        """Test counting records per granularity."""
        records = (
            SampleRecord(id="a", path="a.png", boxes=(), labels=(0,)),
            SampleRecord(id="b", path="b.png", granularity=Granularity.WEAK, labels=(1,)),
            SampleRecord(id="c", path="c.png", granularity=Granularity.UNLABELED),
            SampleRecord(id="d", path="d.png", granularity=Granularity.UNLABELED),
        )
        manifest = DatasetManifest(split="train", seed=0, num_classes=1, image_size=16, records=records)
        assert len(manifest) == 4
        assert manifest.counts() == {"full": 1, "weak": 1, "unlabeled": 2}
        assert [r.id for r in manifest.by_granularity(Granularity.UNLABELED)] == ["c", "d"]


class TestBatchComposition:
    """Tests for BatchComposition model."""

    def test_total_and_quota(self):
        """Test the per-granularity quotas."""
        composition = BatchComposition(n_full=1, n_weak=2, n_unlabeled=3)
        assert composition.total == 6
        assert composition.quota(Granularity.WEAK) == 2

    def test_empty_batch_rejected(self):
        """Test that a batch needs at least one sample."""
        with pytest.raises(ValidationError, match="at least one"):
            BatchComposition(n_full=0, n_weak=0, n_unlabeled=0)


class TestEvalResult:
    """Tests for EvalResult model."""

    def test_summary(self):
        """Test the headline columns."""
        result = EvalResult(
            thresholds=(0.4, 0.5, 0.75),
            mean_ap=0.5,
            ap_at_threshold=(0.7, 0.5, 0.3),
            ap_small=0.2,
        )
        assert result.get_summary() == {
            "mAP": 0.5,
            "AP40": 0.7,
            "AP75": 0.3,
            "AP_S": 0.2,
            "AP_M": None,
            "AP_L": None,
        }

    def test_ap_at_unknown_threshold(self):
        """Test that an unevaluated threshold raises KeyError."""
        result = EvalResult(thresholds=(0.5,), ap_at_threshold=(0.1,))
        with pytest.raises(KeyError):
            result.ap_at(0.9)


class TestLossReport:
    """Tests for LossReport model."""

    def test_row_has_every_component(self):
        """Test that the CSV row carries step, lr, components and total."""
        row = LossReport(step=3, lr=1e-4, sfl=0.5, total=0.5).as_row()
        assert list(row) == ["step", "lr", *LossReport.COMPONENTS, "total"]
        assert row["sfl"] == 0.5
