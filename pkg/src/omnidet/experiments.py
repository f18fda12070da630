"""Paired training runs that compare annotation granularities.

Each setting keeps the same fully labeled fraction of the train split and
changes what the rest of it contributes: nothing, image labels, or raw
images. Every setting is trained once per repeat seed and scored on the
test split.
"""

import csv
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from .config import Config, build_config
from .data.io import manifest_path, read_manifest
from .exceptions import ParseError
from .models import EvalResult
from .trainer import OmniSupervisedTrainer

logger = logging.getLogger(__name__)

STUDY_FILE = "study.csv"
STUDY_COLUMNS: tuple[str, ...] = (
    "setting",
    "repeat",
    "seed",
    "mAP",
    "AP40",
    "AP75",
    "AP_S",
    "AP_M",
    "AP_L",
)


class StudySetting(BaseModel):
    """Config overrides of one arm of the study."""

    model_config = {"frozen": True}

    name: str
    overrides: dict[str, Any] = Field(default_factory=dict)


def default_settings(full_fraction: float = 0.2) -> tuple[StudySetting, ...]:
    """FULL-only, FULL+WEAK and FULL+UNLABELED arms with a shared FULL fraction."""
    rest = 1.0 - full_fraction
    return (
        StudySetting(
            name="full",
            overrides={
                "granularity": (full_fraction, 0.0, rest),
                "terms": ("supervised",),
                "n_weak": 0,
                "n_unlabeled": 0,
            },
        ),
        StudySetting(
            name="full+weak",
            overrides={"granularity": (full_fraction, rest, 0.0)},
        ),
        StudySetting(
            name="full+unlabeled",
            overrides={"granularity": (full_fraction, 0.0, rest)},
        ),
    )


class StudyResult(BaseModel):
    """Test-split result of one trained arm."""

    model_config = {"frozen": True}

    setting: str
    repeat: int = Field(..., ge=0)
    seed: int
    result: EvalResult

    def as_row(self) -> dict[str, object]:
        return {
            "setting": self.setting,
            "repeat": self.repeat,
            "seed": self.seed,
            **self.result.get_summary(),
        }


def study_config(base: Config, setting: StudySetting, repeat: int, out_dir: Path) -> Config:
    """Config of one arm and repeat."""
    values = base.model_dump()
    values.update(setting.overrides)
    values["seed"] = base.seed + repeat
    values["output_dir"] = str(out_dir / setting.name / f"repeat_{repeat}")
    return build_config(values)


def run_granularity_study(
    data_dir: str | Path,
    out_dir: str | Path,
    base: Config,
    settings: Sequence[StudySetting] | None = None,
    repeats: int = 3,
) -> list[StudyResult]:
    """Train every setting ``repeats`` times and score each run on the test split.

    Results are also written to ``<out_dir>/study.csv``.
    """
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    settings = default_settings() if settings is None else settings
    test = read_manifest(manifest_path(data_dir, "test"))
    results: list[StudyResult] = []
    for repeat in range(repeats):
        for setting in settings:
            config = study_config(base, setting, repeat, out_dir)
            trainer = OmniSupervisedTrainer(config)
            trainer.fit(data_dir, config.output_dir)
            result = trainer.evaluate_manifest(test, data_dir)
            logger.info(
                "Study %s repeat %d: test mAP %.4f", setting.name, repeat, result.mean_ap
            )
            results.append(
                StudyResult(setting=setting.name, repeat=repeat, seed=config.seed, result=result)
            )
    write_study_csv(results, out_dir / STUDY_FILE)
    return results


def write_study_csv(results: Sequence[StudyResult], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=STUDY_COLUMNS)
        writer.writeheader()
        for r in results:
            writer.writerow({k: "" if v is None else v for k, v in r.as_row().items()})


def read_study_csv(path: str | Path) -> dict[str, list[float]]:
    """Test mAPs per setting, in file order.

    Raises:
        ParseError: If the file is missing or lacks the mAP column
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as e:
        raise ParseError(str(e), source=str(path)) from e
    maps: dict[str, list[float]] = {}
    try:
        for row in rows:
            maps.setdefault(row["setting"], []).append(float(row["mAP"]))
    except (KeyError, ValueError) as e:
        raise ParseError(f"bad study row: {e}", source=str(path)) from e
    return maps


def summarize_study(maps: dict[str, list[float]]) -> dict[str, tuple[float, float]]:
    """Mean and standard deviation of the test mAP per setting."""
    return {name: (float(np.mean(v)), float(np.std(v))) for name, v in maps.items()}
