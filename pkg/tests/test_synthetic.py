"""Tests for synthetic data generation and the on-disk layout."""

import numpy as np
import pytest

from omnidet.data.io import (
    build_dataset,
    load_image,
    manifest_path,
    read_manifest,
    save_image,
    write_manifest,
)
from omnidet.data.synthetic import generate_synthetic, split_samples
from omnidet.exceptions import DatasetError, ParseError
from omnidet.models import AreaRange, Granularity, derive_labels


class TestGenerateSynthetic:
    """Tests for generate_synthetic."""

    def test_deterministic(self):
        """Test that the same seed gives identical images and boxes."""
        a = generate_synthetic(5, 4, image_size=64, num_classes=3)
        b = generate_synthetic(5, 4, image_size=64, num_classes=3)
        for x, y in zip(a, b):
            assert np.array_equal(x.image, y.image)
            assert x.boxes == y.boxes

    def test_image_depends_on_index_only(self):
        """Test that image i does not depend on how many images are drawn."""
        short = generate_synthetic(9, 3, image_size=32, num_classes=2)
        long = generate_synthetic(9, 8, image_size=32, num_classes=2)
        assert np.array_equal(short[2].image, long[2].image)
        assert short[2].boxes == long[2].boxes

    def test_seeds_differ(self):
        """Test that different seeds give different images."""
        a = generate_synthetic(1, 1, image_size=32)[0]
        b = generate_synthetic(2, 1, image_size=32)[0]
        assert not np.array_equal(a.image, b.image)

    def test_empty(self):
        """Test that zero images give an empty list."""
        assert generate_synthetic(0, 0) == []

    def test_samples_are_valid(self):
        """Test ids, value range, box bounds and derived labels."""
        samples = generate_synthetic(3, 20, image_size=64, num_classes=4)
        assert [s.sample_id for s in samples[:2]] == ["img00000", "img00001"]
        for s in samples:
            assert s.granularity is Granularity.FULL
            assert s.image.shape == (64, 64)
            assert 0.0 <= s.image.min() and s.image.max() <= 1.0
            assert all(b.inside(64, 64) for b in s.boxes)
            assert all(b.class_id < 4 for b in s.boxes)
            assert s.image_labels == derive_labels(s.boxes, 4)

    def test_pixels_are_8_bit(self):
        """Test that values are multiples of 1/255 so PNG storage is lossless."""
        image = generate_synthetic(4, 1, image_size=32)[0].image
        assert np.allclose(image * 255.0, np.round(image * 255.0))

    def test_all_area_buckets(self):
        """Test that 128px images populate small, medium and large buckets."""
        samples = generate_synthetic(0, 100, image_size=128)
        areas = [b.area for s in samples for b in s.boxes]
        for bucket in (AreaRange.SMALL, AreaRange.MEDIUM, AreaRange.LARGE):
            assert any(bucket.contains(a) for a in areas)

    @pytest.mark.parametrize(
        ("kwargs", "message"),
        [
            ({"image_size": 8}, "image_size"),
            ({"n_images": -1}, "n_images"),
            ({"num_classes": 10}, "num_classes"),
        ],
    )
    def test_invalid_arguments(self, kwargs, message):
        """Test argument validation."""
        args = {"seed": 0, "n_images": 1, **kwargs}
        with pytest.raises(DatasetError, match=message):
            generate_synthetic(**args)


class TestSplitSamples:
    """Tests for split_samples."""

    def test_disjoint_cover(self):
        """Test that splits are disjoint, cover everything and keep order."""
        samples = generate_synthetic(0, 10, image_size=16)
        splits = split_samples(samples, (0.6, 0.2, 0.2), seed=1)
        ids = [s.sample_id for part in splits.values() for s in part]
        assert sorted(ids) == [s.sample_id for s in samples]
        assert [len(p) for p in splits.values()] == [6, 2, 2]
        for part in splits.values():
            part_ids = [s.sample_id for s in part]
            assert part_ids == sorted(part_ids)

    def test_bad_fractions(self):
        """Test that fractions must sum to one."""
        with pytest.raises(DatasetError):
            split_samples([], (0.5, 0.2, 0.2))


class TestDatasetOnDisk:
    """Tests for build_dataset and the manifest files."""

    def test_same_seed_byte_identical(self, tmp_path):
        """Test that two builds with one seed produce identical files."""
        for name in ("a", "b"):
            build_dataset(tmp_path / name, seed=11, n_images=6, image_size=32, num_classes=2)
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_manifests_roundtrip(self, tiny_dataset):
        """Test that written manifests read back with their records."""
        train = read_manifest(manifest_path(tiny_dataset, "train"))
        assert train.split == "train"
        assert train.num_classes == 3
        assert train.image_size == 32
        assert len(train) == 18
        assert train.counts()["full"] == 18
        image = load_image(tiny_dataset / train.records[0].path)
        assert image.shape == (32, 32)

    def test_png_roundtrip_is_lossless(self, tmp_path):
        """Test that 8-bit images survive PNG storage exactly."""
        image = generate_synthetic(2, 1, image_size=32)[0].image
        save_image(image, tmp_path / "x.png")
        assert np.array_equal(load_image(tmp_path / "x.png"), image)

    def test_empty_dataset(self, tmp_path):
        """Test that zero images give empty manifests."""
        manifests = build_dataset(tmp_path, seed=0, n_images=0, image_size=32)
        assert all(len(m) == 0 for m in manifests.values())
        assert len(read_manifest(manifest_path(tmp_path, "test"))) == 0

    def test_missing_manifest(self, tmp_path):
        """Test that a missing file raises ParseError."""
        with pytest.raises(ParseError):
            read_manifest(tmp_path / "train.jsonl")

    def test_malformed_manifest(self, tmp_path, tiny_dataset):
        """Test that a broken record raises ParseError."""
        manifest = read_manifest(manifest_path(tiny_dataset, "val"))
        path = tmp_path / "broken.jsonl"
        write_manifest(manifest, path)
        path.write_text(path.read_text() + '{"id": 1}\n')
        with pytest.raises(ParseError):
            read_manifest(path)

    def test_unreadable_image(self, tmp_path):
        """Test that a missing image raises DatasetError."""
        with pytest.raises(DatasetError):
            load_image(tmp_path / "nope.png")
