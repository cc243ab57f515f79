"""
A content-addressed store of stage artifacts.

An artifact is a directory named by the SHA-256 of its stage, the configuration sections it depends on, the keys of
its upstream artifacts and the package version. ``artifact.json`` records the digests of every file so a consumer
detects an artifact altered after it was written.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, Mapping, Optional, Union

from ._json import JsonObject, JsonSerializer, JsonValue
from .errors import StageError

__all__ = ("STORE_ENV", "Artifact", "ArtifactWriter", "ArtifactStore", "stable_hash", "file_digest")

log = logging.getLogger(__name__)

STORE_ENV = "RESKAM_CACHE"
RECORD = "artifact.json"


def stable_hash(value: JsonValue, serializer: Optional[JsonSerializer] = None) -> str:
    serializer = serializer or JsonSerializer.create_fastest()
    return hashlib.sha256(serializer.serialize(value)).hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass(frozen=True)
class Artifact:
    """
    A committed artifact.

    Args:
        path: The artifact directory.
        record: The content of ``artifact.json``.
    """

    path: Path
    record: JsonObject

    @property
    def stage(self) -> str:
        return self.record["stage"]

    @property
    def key(self) -> str:
        return self.record["key"]

    @property
    def scalars(self) -> Dict[str, Any]:
        return self.record.get("scalars", {})

    @property
    def caps(self) -> Dict[str, Any]:
        return self.record.get("caps", {})

    @property
    def files(self) -> Dict[str, str]:
        return self.record.get("files", {})

    def file(self, name: str) -> Path:
        """
        Returns the path of an output after checking its digest.

        Raises:
            StageError: When the file is missing or its content changed.
        """
        if name not in self.files:
            raise StageError(f"artifact {self.stage}/{self.key[:12]} has no output {name}.")
        path = self.path / name
        if not path.exists() or file_digest(path) != self.files[name]:
            raise StageError(f"hash mismatch for {self.stage}/{self.key[:12]}/{name}.")
        return path

    def directory(self, name: str) -> Path:
        """
        Returns a sub-directory of outputs after checking the digest of every file in it.
        """
        prefix = f"{name}/"
        for output in self.files:
            if output.startswith(prefix):
                self.file(output)
        return self.path / name

    def read_json(self, name: str) -> JsonValue:
        with open(self.file(name)) as f:
            return JsonSerializer.create_fastest().deserialize(f)


@dataclass
class ArtifactWriter:
    """
    Collects the outputs of a running stage in a temporary directory.
    """

    stage: str
    key: str
    path: Path
    upstream: Dict[str, str]
    caps: Dict[str, Any] = field(default_factory=dict)
    scalars: Dict[str, Any] = field(default_factory=dict)

    def __truediv__(self, name: str) -> Path:
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_json(self, name: str, value: JsonValue):
        (self / name).write_bytes(JsonSerializer.create_fastest().serialize(value))

    def write_text(self, name: str, text: str):
        (self / name).write_text(text)


class ArtifactStore:
    """
    Artifacts under ``root/<first two hex digits>/<key>``.
    """

    def __init__(self, root: Union[str, Path], version: str = "0"):
        self.root = Path(root)
        self.version = version
        self._serializer = JsonSerializer.create_fastest()

    @classmethod
    def from_env(cls, out: Union[str, Path], version: str = "0") -> ArtifactStore:
        """
        Uses ``$RESKAM_CACHE`` or ``<out>/.reskam-cache``.
        """
        root = os.environ.get(STORE_ENV) or Path(out) / ".reskam-cache"
        return cls(root, version)

    def key(self, stage: str, config: JsonValue, upstream: Mapping[str, str]) -> str:
        payload = {"stage": stage, "config": config, "upstream": dict(upstream), "version": self.version}
        return stable_hash(payload, self._serializer)

    def path(self, key: str) -> Path:
        return self.root / key[:2] / key

    def get(self, key: str) -> Optional[Artifact]:
        record = self.path(key) / RECORD
        if not record.exists():
            return None
        with open(record) as f:
            return Artifact(self.path(key), self._serializer.deserialize(f))

    def load(self, key: str, stage: str) -> Artifact:
        """
        Raises:
            StageError: When no artifact has this key or it belongs to another stage.
        """
        artifact = self.get(key)
        if artifact is None:
            raise StageError(f"missing upstream artifact {stage}/{key[:12]}.")
        if artifact.stage != stage:
            raise StageError(f"artifact {key[:12]} belongs to {artifact.stage}, not {stage}.")
        return artifact

    @contextmanager
    def create(self, stage: str, key: str, upstream: Mapping[str, str]) -> Iterator[ArtifactWriter]:
        """
        Yields a writer and commits its directory when the block exits without an exception.
        """
        self.root.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=f".{stage}-", dir=self.root))
        writer = ArtifactWriter(stage, key, scratch, dict(upstream))
        try:
            yield writer
            self._commit(writer)
        finally:
            if scratch.exists():
                shutil.rmtree(scratch, ignore_errors=True)

    def _commit(self, writer: ArtifactWriter):
        files = {
            p.relative_to(writer.path).as_posix(): file_digest(p)
            for p in sorted(writer.path.rglob("*"))
            if p.is_file()
        }
        record = {
            "stage": writer.stage,
            "key": writer.key,
            "version": self.version,
            "upstream": writer.upstream,
            "caps": writer.caps,
            "scalars": writer.scalars,
            "files": files,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        (writer.path / RECORD).write_bytes(self._serializer.serialize(record))
        target = self.path(writer.key)
        target.parent.mkdir(parents=True, exist_ok=True)
        if target.exists():
            shutil.rmtree(target)
        os.replace(writer.path, target)
        log.debug("committed %s/%s with %d files.", writer.stage, writer.key[:12], len(files))
