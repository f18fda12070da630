"""Omni-supervised training loop.

One trainer owns every piece of mutable state: the student network, its
mean teacher, the prototype bank, the optimizer and the step counter. Each
call to :meth:`OmniSupervisedTrainer.train_step` routes the rows of a mixed
batch to the loss terms their granularity qualifies for, takes one Adam
step, one teacher EMA step and (with the prototype term on) one prototype
update.
"""

import csv
import logging
from collections.abc import Iterator, Sequence
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import Config, save_config
from .daa import export_attention_maps
from .data.batching import Batch, BatchStream, effective_composition
from .data.granularity import assign_granularity
from .data.io import load_sample, manifest_path, read_manifest, write_partition
from .data.sidecar import HiddenSidecar
from .detector.anchors import generate_anchors
from .detector.postprocess import decode_and_nms
from .distill import MeanTeacher
from .evaluation import collect_ground_truth, evaluate
from .exceptions import CheckpointError, ConfigError
from .gpa import PrototypeBank
from .model import OmniDetector, OmniOutputs
from .models import DatasetManifest, Detection, EvalResult, LossReport, SampleRecord
from .protocols import LossTermProtocol
from .schedule import lr_schedule
from .term_registry import TermRegistry, get_default_registry
from .terms.base import StepContext

logger = logging.getLogger(__name__)

LOSS_LOG = "loss.csv"
EVAL_LOG = "eval.csv"
PARTITION = "train.partition.jsonl"
CHECKPOINT_DIR = "checkpoints"
LAST_CHECKPOINT = "last.pt"

EVAL_COLUMNS: tuple[str, ...] = ("step", "lr", "mAP", "AP40", "AP75", "AP_S", "AP_M", "AP_L")


class CsvLog:
    """Append-only CSV file with a fixed header and an integer ``step`` column."""

    def __init__(self, path: str | Path, columns: Sequence[str]) -> None:
        self.path = Path(path)
        self.columns = tuple(columns)

    def rows(self) -> list[dict[str, str]]:
        if not self.path.exists():
            return []
        with self.path.open(newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))

    def truncate(self, step: int) -> None:
        """Drop rows logged at or after ``step`` (rows past a resumed checkpoint)."""
        kept = [row for row in self.rows() if int(row["step"]) < step]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=self.columns)
            writer.writeheader()
            writer.writerows(kept)

    def append(self, row: dict[str, object]) -> None:
        new = not self.path.exists()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=self.columns)
            if new:
                writer.writeheader()
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def _chunks(records: Sequence[SampleRecord], size: int) -> Iterator[Sequence[SampleRecord]]:
    for start in range(0, len(records), size):
        yield records[start : start + size]


class OmniSupervisedTrainer:
    """Trains an OmniDetector on a mix of FULL, WEAK and UNLABELED samples.

    Args:
        config: Run configuration
        registry: Term registry to resolve ``config.terms`` against
        terms: Explicit loss terms, overriding ``config.terms``
        dtype: Floating-point type of the networks and the bank
    """

    def __init__(
        self,
        config: Config,
        registry: TermRegistry | None = None,
        terms: Sequence[LossTermProtocol] | None = None,
        dtype: torch.dtype = torch.float32,
    ) -> None:
        self.config = config
        self.dtype = dtype
        if terms is None:
            terms = (registry or get_default_registry()).resolve(config.terms)
        self.terms: list[LossTermProtocol] = list(terms)

        generator = torch.Generator().manual_seed(config.seed)
        self.student = OmniDetector.from_config(config, generator).to(dtype)
        self.teacher = MeanTeacher(self.student, decay=config.ema_decay)
        self.bank = PrototypeBank.create(
            config.num_classes,
            config.feature_channels,
            momentum=config.prototype_momentum,
            dtype=dtype,
        )
        self.optimizer = torch.optim.Adam(
            self.student.parameters(),
            lr=config.lr,
            betas=(config.adam_beta1, config.adam_beta2),
            eps=config.adam_eps,
        )
        self.anchors = generate_anchors(
            config.image_size,
            config.pyramid_levels,
            config.anchor_scales,
            size_factor=config.anchor_size_factor,
            dtype=dtype,
        )
        self.step = 0
        self.lr = config.lr
        self.map_history: list[float] = []

    def check_manifest(self, manifest: DatasetManifest) -> None:
        """Raise ConfigError unless a manifest matches the network geometry."""
        if manifest.image_size != self.config.image_size:
            raise ConfigError(
                "image_size",
                f"split '{manifest.split}' has {manifest.image_size}px images, "
                f"config expects {self.config.image_size}",
            )
        if manifest.num_classes != self.config.num_classes:
            raise ConfigError(
                "num_classes",
                f"split '{manifest.split}' has {manifest.num_classes} classes, "
                f"config expects {self.config.num_classes}",
            )

    # Training

    def train_step(self, batch: Batch) -> LossReport:
        """Run one optimizer step on a batch.

        Components whose qualifying set is empty in this batch are 0.

        Returns:
            LossReport of the step, with the lr the step was taken at
        """
        config = self.config
        self.student.train()
        images = batch.images(self.dtype)
        outputs: OmniOutputs = self.student(images)
        teacher_outputs = None
        if any(t.needs_teacher and batch.indices(*t.granularities) for t in self.terms):
            teacher_outputs = self.teacher.predict(images)

        context = StepContext(
            batch=batch,
            outputs=outputs,
            teacher_outputs=teacher_outputs,
            anchors=self.anchors,
            bank=self.bank,
            labels=batch.labels(config.num_classes, self.dtype),
            config=config,
        )
        components: dict[str, torch.Tensor] = {}
        for term in self.terms:
            result = term.compute(context)
            components.update(result.losses)
            if result.bank is not None:
                self.bank = result.bank

        total = torch.zeros((), dtype=self.dtype)
        for name, value in components.items():
            total = total + config.loss_weight(name) * value

        self.optimizer.zero_grad(set_to_none=True)
        if total.requires_grad:
            total.backward()
        self.optimizer.step()
        self.teacher.update(self.student)

        report = LossReport(
            step=self.step,
            lr=self.lr,
            total=float(total.detach()),
            **{name: float(value.detach()) for name, value in components.items()},
        )
        self.step += 1
        return report

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def record_evaluation(self, result: EvalResult) -> float:
        """Append a validation mAP to the history and apply the lr schedule.

        Returns:
            The learning rate for the following steps
        """
        config = self.config
        self.map_history.append(result.mean_ap)
        self.set_lr(
            lr_schedule(
                self.map_history,
                self.lr,
                patience=config.lr_patience,
                threshold=config.lr_threshold,
                factor=config.lr_factor,
                floor=config.lr_floor,
            )
        )
        return self.lr

    def prepare_partition(self, data_dir: str | Path, run_dir: str | Path) -> DatasetManifest:
        """Partition the fully labeled train split by granularity.

        The partition is a function of the config seed and ratios; it is
        written to the run directory with its hidden sidecar.
        """
        train = read_manifest(manifest_path(data_dir, "train"))
        self.check_manifest(train)
        partition, sidecar = assign_granularity(train, self.config.granularity, self.config.seed)
        write_partition(partition, sidecar, Path(run_dir) / PARTITION)
        return partition

    def fit(self, data_dir: str | Path, run_dir: str | Path | None = None) -> list[LossReport]:
        """Train until ``config.max_steps``, logging, evaluating and checkpointing.

        Continues from ``self.step``, so a trainer restored with
        :meth:`resume` picks up exactly where the checkpoint left off.

        Returns:
            Reports of the steps taken by this call
        """
        config = self.config
        data_dir = Path(data_dir)
        run_dir = Path(run_dir or config.output_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        save_config(config, run_dir / "config.yaml")

        partition = self.prepare_partition(data_dir, run_dir)
        composition = effective_composition(partition, config.batch_composition)
        val = read_manifest(manifest_path(data_dir, "val"))
        loss_log = CsvLog(run_dir / LOSS_LOG, ("step", "lr", *LossReport.COMPONENTS, "total"))
        eval_log = CsvLog(run_dir / EVAL_LOG, EVAL_COLUMNS)
        for log in (loss_log, eval_log):
            log.truncate(self.step)

        stream = BatchStream(
            partition,
            data_dir,
            composition,
            config.seed,
            image_size=config.image_size,
            flip_prob=config.flip_prob,
            max_translation=config.max_translation,
            start_step=self.step,
        )
        logger.info(
            "Training from step %d to %d with terms %s (quotas %s)",
            self.step,
            config.max_steps,
            [t.name for t in self.terms],
            composition.model_dump(),
        )
        reports: list[LossReport] = []
        for batch in stream:
            if self.step >= config.max_steps:
                break
            report = self.train_step(batch)
            reports.append(report)
            loss_log.append(report.as_row())
            if self.step % config.log_every == 0:
                logger.info(
                    "step %d lr %.3g total %.4f (%s)",
                    report.step,
                    report.lr,
                    report.total,
                    ", ".join(f"{c}={getattr(report, c):.4f}" for c in LossReport.COMPONENTS),
                )
            if self.step % config.eval_every == 0:
                result = self.evaluate_manifest(val, data_dir)
                lr = self.lr
                self.record_evaluation(result)
                eval_log.append({"step": self.step, "lr": lr, **result.get_summary()})
                logger.info("step %d validation mAP %.4f", self.step, result.mean_ap)
            if self.step % config.checkpoint_every == 0:
                self.save(run_dir / CHECKPOINT_DIR / f"step_{self.step:06d}.pt")
        self.save(run_dir / CHECKPOINT_DIR / LAST_CHECKPOINT)
        return reports

    # Inference

    @torch.no_grad()
    def predict(self, images: torch.Tensor) -> tuple[list[list[Detection]], OmniOutputs]:
        """Detections per image of a (B, 1, H, W) batch, plus the raw outputs."""
        self.student.eval()
        outputs: OmniOutputs = self.student(images.to(self.dtype))
        height, width = images.shape[-2:]
        detections = decode_and_nms(
            outputs.pyramid,
            self.anchors,
            (int(height), int(width)),
            score_thresh=self.config.score_thresh,
            iou_thresh=self.config.nms_iou,
            max_dets=self.config.max_dets,
            pre_nms_top_k=self.config.pre_nms_top_k,
        )
        return detections, outputs

    def detect_manifest(
        self,
        manifest: DatasetManifest,
        root: str | Path,
        batch_size: int = 16,
        attention_dir: str | Path | None = None,
    ) -> dict[str, list[Detection]]:
        """Run the student on every record of a manifest, without augmentation."""
        detections: dict[str, list[Detection]] = {}
        for chunk in _chunks(manifest.records, batch_size):
            samples = [load_sample(r, root) for r in chunk]
            images = torch.from_numpy(np.stack([s.image for s in samples])).unsqueeze(1)
            per_image, outputs = self.predict(images)
            for sample, dets in zip(samples, per_image):
                detections[sample.sample_id] = dets
            if attention_dir is not None:
                export_attention_maps(
                    outputs.attention, [s.sample_id for s in samples], attention_dir
                )
        return detections

    def evaluate_manifest(
        self,
        manifest: DatasetManifest,
        root: str | Path,
        sidecar: HiddenSidecar | None = None,
        batch_size: int = 16,
        attention_dir: str | Path | None = None,
    ) -> EvalResult:
        """Score the student on a manifest."""
        self.check_manifest(manifest)
        detections = self.detect_manifest(manifest, root, batch_size, attention_dir)
        truth = collect_ground_truth(manifest, sidecar)
        return evaluate(detections, truth, self.config.num_classes)

    # Checkpoints

    def checkpoint(self) -> Checkpoint:
        """Snapshot of the full training state."""
        return Checkpoint(
            step=self.step,
            seed=self.config.seed,
            lr=self.lr,
            map_history=tuple(self.map_history),
            config=self.config,
            student={k: v.clone() for k, v in self.student.state_dict().items()},
            teacher={k: v.clone() for k, v in self.teacher.state_dict().items()},
            bank=self.bank.state_dict(),
            optimizer=self.optimizer.state_dict(),
        )

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(self.checkpoint(), path)

    def restore(self, checkpoint: Checkpoint, source: str = "checkpoint") -> None:
        """Load a snapshot taken by :meth:`checkpoint`."""
        try:
            self.student.load_state_dict(checkpoint.student)
            self.teacher.load_state_dict(checkpoint.teacher)
            self.optimizer.load_state_dict(checkpoint.optimizer)
        except (RuntimeError, ValueError, KeyError) as e:
            raise CheckpointError(source, f"state does not fit the network ({e})") from e
        self.bank = PrototypeBank.from_state_dict(checkpoint.bank)
        self.step = checkpoint.step
        self.map_history = list(checkpoint.map_history)
        self.set_lr(checkpoint.lr)

    @classmethod
    def resume(
        cls,
        path: str | Path,
        config: Config | None = None,
        registry: TermRegistry | None = None,
        dtype: torch.dtype = torch.float32,
    ) -> "OmniSupervisedTrainer":
        """Rebuild a trainer from a checkpoint file.

        Args:
            path: Checkpoint written by :meth:`save`
            config: Config to continue with; may differ from the saved one
                only in run-control fields such as ``max_steps``

        Raises:
            CheckpointError: If the file cannot be loaded
            ConfigMismatchError: If ``config`` changes a training field
        """
        checkpoint = load_checkpoint(path, config)
        trainer = cls(config or checkpoint.config, registry=registry, dtype=dtype)
        trainer.restore(checkpoint, source=str(path))
        return trainer

    def warm_start(self, path: str | Path) -> None:
        """Initialize student and teacher from the student weights of a checkpoint.

        Raises:
            CheckpointError: If the file cannot be loaded or does not fit
        """
        checkpoint = load_checkpoint(path)
        try:
            self.student.load_state_dict(checkpoint.student)
        except RuntimeError as e:
            raise CheckpointError(str(path), f"weights do not fit the network ({e})") from e
        self.teacher.copy_from(self.student)
        logger.info("Warm-started from %s (step %d)", path, checkpoint.step)


def build_trainer(
    config: Config, resume: str | Path | None = None, dtype: torch.dtype = torch.float32
) -> OmniSupervisedTrainer:
    """Trainer for a run: resumed from ``resume``, else warm- or cold-started.

    A cold start with ``config.init_checkpoint`` set copies those weights
    into student and teacher.
    """
    if resume is not None:
        return OmniSupervisedTrainer.resume(resume, config, dtype=dtype)
    trainer = OmniSupervisedTrainer(config, dtype=dtype)
    if config.init_checkpoint:
        trainer.warm_start(config.init_checkpoint)
    return trainer
