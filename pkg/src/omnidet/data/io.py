"""On-disk dataset layout: PNG images, JSONL manifests and hidden sidecars.

A dataset directory holds ``images/<id>.png`` plus, per split,
``<split>.jsonl`` (a header line followed by one record per sample). A
granularity partition of the train split is written as a manifest plus a
``.hidden.jsonl`` sidecar next to it.
"""

import json
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import DatasetError, ParseError
from ..models import DatasetManifest, Granularity, Sample, SampleRecord
from .sidecar import HiddenSidecar
from .synthetic import generate_synthetic, split_samples

logger = logging.getLogger(__name__)

IMAGE_DIR = "images"
SPLITS: tuple[str, ...] = ("train", "val", "test")


def manifest_path(root: str | Path, split: str) -> Path:
    return Path(root) / f"{split}.jsonl"


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write a [0, 1] float image as 8-bit grayscale PNG."""
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG as a float64 grayscale image in [0, 1].

    Raises:
        DatasetError: If the file cannot be read
    """
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("L"), dtype=np.float64)
    except OSError as e:
        raise DatasetError(f"Cannot read image '{path}': {e}") from e
    return pixels / 255.0


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest as JSON lines: header first, then the records."""
    header = manifest.model_dump(mode="json", exclude={"records"})
    lines = [json.dumps(header)]
    lines += [
        json.dumps(r.model_dump(mode="json", exclude_none=True)) for r in manifest.records
    ]
    Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def read_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest written by :func:`write_manifest`.

    Raises:
        ParseError: If the file is missing, empty or malformed
    """
    path = Path(path)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise ParseError(str(e), source=str(path)) from e
    if not lines:
        raise ParseError("Manifest is empty", source=str(path))
    try:
        header = json.loads(lines[0])
        records = [SampleRecord.model_validate_json(line) for line in lines[1:]]
        return DatasetManifest.model_validate({**header, "records": records})
    except (json.JSONDecodeError, PydanticValidationError) as e:
        raise ParseError(str(e), source=str(path)) from e


def record_for(sample: Sample) -> SampleRecord:
    """Manifest record of a sample stored under ``images/``."""
    return SampleRecord(
        id=sample.sample_id,
        path=f"{IMAGE_DIR}/{sample.sample_id}.png",
        granularity=sample.granularity,
        boxes=sample.boxes,
        labels=sample.image_labels,
    )


def load_sample(record: SampleRecord, root: str | Path) -> Sample:
    """Load the training view of a record: only the labels it exposes."""
    return Sample(
        sample_id=record.id,
        image=load_image(Path(root) / record.path),
        granularity=record.granularity,
        boxes=record.boxes,
        image_labels=record.labels,
    )


def write_split(
    samples: Sequence[Sample],
    root: str | Path,
    split: str,
    seed: int,
    num_classes: int,
    image_size: int,
) -> DatasetManifest:
    """Write the images of one split and its fully labeled manifest."""
    root = Path(root)
    (root / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    for sample in samples:
        save_image(sample.image, root / IMAGE_DIR / f"{sample.sample_id}.png")
    manifest = DatasetManifest(
        split=split,
        seed=seed,
        num_classes=num_classes,
        image_size=image_size,
        records=tuple(record_for(s) for s in samples),
    )
    write_manifest(manifest, manifest_path(root, split))
    return manifest


def build_dataset(
    root: str | Path,
    seed: int,
    n_images: int,
    image_size: int = 128,
    num_classes: int = 9,
    fractions: Sequence[float] = (0.6, 0.2, 0.2),
) -> dict[str, DatasetManifest]:
    """Generate a synthetic dataset, split it and write every split.

    All splits are written fully labeled; the train split is partitioned by
    granularity when a run starts.

    Returns:
        Manifest per split name
    """
    samples = generate_synthetic(seed, n_images, image_size, num_classes)
    splits = split_samples(samples, fractions, seed, SPLITS)
    manifests = {
        name: write_split(members, root, name, seed, num_classes, image_size)
        for name, members in splits.items()
    }
    logger.info(
        "Wrote dataset to %s: %s", root, {name: len(m) for name, m in manifests.items()}
    )
    return manifests


def write_partition(
    manifest: DatasetManifest, sidecar: HiddenSidecar, path: str | Path
) -> Path:
    """Write a partitioned manifest and its hidden sidecar next to it.

    Returns:
        Path of the sidecar file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, path)
    hidden = path.with_name(f"{path.stem}.hidden.jsonl")
    sidecar.write(hidden)
    return hidden


def read_partition(path: str | Path) -> tuple[DatasetManifest, HiddenSidecar]:
    """Read a manifest and, if present, its hidden sidecar."""
    path = Path(path)
    manifest = read_manifest(path)
    hidden = path.with_name(f"{path.stem}.hidden.jsonl")
    sidecar = HiddenSidecar.read(hidden) if hidden.exists() else HiddenSidecar()
    if any(r.granularity is not Granularity.FULL for r in manifest.records) and not len(
        sidecar
    ):
        logger.warning("Partitioned manifest %s has no hidden sidecar", path)
    return manifest, sidecar
