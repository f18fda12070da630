"""Hidden ground truth of weakly labeled and unlabeled training samples."""

import json
import threading
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import LabelLeakageError, ParseError
from ..models import GroundTruthBox


class HiddenAnnotation(BaseModel):
    """The labels a sample lost when its granularity was assigned."""

    model_config = {"frozen": True}

    id: str
    boxes: tuple[GroundTruthBox, ...]
    labels: tuple[int, ...]


class HiddenSidecar:
    """Thread-safe store of hidden annotations with an access guard.

    Annotations can be added and listed freely, but reading one requires an
    open :meth:`evaluation_access` block; any other read raises
    :class:`LabelLeakageError`.
    """

    def __init__(self) -> None:
        self._entries: dict[str, HiddenAnnotation] = {}
        self._lock = threading.RLock()
        self._open_access = 0

    def add(self, annotation: HiddenAnnotation) -> None:
        """Store the hidden annotation of one sample, replacing any earlier one."""
        with self._lock:
            self._entries[annotation.id] = annotation

    def __contains__(self, sample_id: object) -> bool:
        with self._lock:
            return sample_id in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def ids(self) -> list[str]:
        """List the ids of all hidden samples."""
        with self._lock:
            return sorted(self._entries)

    @property
    def access_open(self) -> bool:
        with self._lock:
            return self._open_access > 0

    @contextmanager
    def evaluation_access(self) -> Iterator["HiddenSidecar"]:
        """Allow reads for the duration of the block."""
        with self._lock:
            self._open_access += 1
        try:
            yield self
        finally:
            with self._lock:
                self._open_access -= 1

    def get(self, sample_id: str) -> HiddenAnnotation:
        """Read a hidden annotation.

        Raises:
            LabelLeakageError: If no evaluation access block is open
            KeyError: If the sample has no hidden annotation
        """
        with self._lock:
            if self._open_access == 0:
                raise LabelLeakageError(sample_id)
            return self._entries[sample_id]

    def write(self, path: str | Path) -> None:
        """Write one JSON record per hidden sample."""
        with self._lock:
            entries = [self._entries[k] for k in sorted(self._entries)]
        lines = [json.dumps(e.model_dump(mode="json")) for e in entries]
        Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "HiddenSidecar":
        """Load a sidecar written by :meth:`write`.

        Raises:
            ParseError: If a line is not a valid record
        """
        sidecar = cls()
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(str(e), source=str(path)) from e
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                sidecar.add(HiddenAnnotation.model_validate_json(line))
            except PydanticValidationError as e:
                raise ParseError(f"line {number}: {e}", source=str(path)) from e
        return sidecar
