from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import FrameFormatError
from .frames import FrameStream, FrameVolume
from .types import FrameRole

logger = logging.getLogger(__name__)

FRAME_MAGIC = b"LEBD"
FRAME_VERSION = 1
# magic, version, width, height, frame count
_HEADER = struct.Struct("<4sIIII")


def write_frames(path: str | Path, stream: FrameStream) -> Path:
    """
    Write a stream in the binary frame format.

    Layout: 4-byte magic, then little-endian u32 version, width, height and
    frame count, then float32 samples, row-major within a frame and frames
    in order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, h, w = stream.data.shape
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, w, h, n))
        fh.write(stream.data.astype("<f4").tobytes(order="C"))
    logger.info("Wrote %d frames (%dx%d) to %s", n, w, h, path)
    return path


def read_frames(path: str | Path, role: FrameRole = FrameRole.RAW) -> FrameStream:
    """
    Read a binary frame file.

    Raises:
        FrameFormatError: On a bad magic, unknown version or truncated payload.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FrameFormatError(f"{path}: file too short for a frame header")
    magic, version, w, h, n = _HEADER.unpack_from(blob)
    if magic != FRAME_MAGIC:
        raise FrameFormatError(f"{path}: bad magic {magic!r}")
    if version != FRAME_VERSION:
        raise FrameFormatError(f"{path}: unsupported version {version}")
    expected = n * h * w * 4
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise FrameFormatError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    if n == 0 or h == 0 or w == 0:
        raise FrameFormatError(f"{path}: empty frame file ({n} frames of {w}x{h})")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, h, w).astype(np.float64)
    return FrameStream(data=data, role=role)


def write_pgm(path: str | Path, frame: FrameVolume | np.ndarray) -> Path:
    """8-bit binary PGM, scaled so the frame's min maps to 0 and max to 255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = frame.values if isinstance(frame, FrameVolume) else np.asarray(frame, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span > 0:
        scaled = np.round((values - lo) / span * 255.0)
    else:
        scaled = np.zeros_like(values)
    img = scaled.astype(np.uint8)
    h, w = img.shape
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes(order="C"))
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True, slots=True)
class SweepPlan:
    """One swept key, its values as typed on the command line, seeds per point and compared banks."""
    key: str
    values: tuple[str, ...]
    seeds: int = 1
    compare: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.key or not self.values:
            raise FrameFormatError("A sweep needs a key and at least one value")
        if self.seeds < 1:
            raise FrameFormatError(f"Sweep seeds must be >= 1, got {self.seeds}")

    def to_dict(self) -> dict[str, Any]:
        return {"key": self.key, "values": list(self.values), "seeds": self.seeds, "compare": list(self.compare)}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "SweepPlan":
        values, compare = data["values"], data.get("compare", [])
        if isinstance(values, str) or isinstance(compare, str):
            raise FrameFormatError("Sweep values and compare must be lists")
        return SweepPlan(key=str(data["key"]), values=tuple(str(v) for v in values),
                         seeds=int(data.get("seeds", 1)), compare=tuple(str(m) for m in compare))


@dataclass(slots=True)
class RunManifest:
    """
    Record of one CLI run, sufficient to replay it.

    Attributes:
        command: Subcommand name.
        config: Fully resolved configuration (section -> key -> value).
        seed: Scenario seed.
        output_dir: Directory the outputs were written to.
        version: Package version that produced the run.
        config_path: Config file the run started from, if any.
        outputs: Relative output path -> SHA-256 hex digest.
        input_path: Frame file the run processed, if any.
        input_sha256: Digest of that frame file when it was read.
        sweep: The swept parameter of a sweep run.
    """
    command: str
    config: dict[str, dict[str, Any]]
    seed: int
    output_dir: str
    version: str
    config_path: Optional[str] = None
    outputs: dict[str, str] = field(default_factory=dict)
    input_path: Optional[str] = None
    input_sha256: Optional[str] = None
    sweep: Optional[SweepPlan] = None

    def record_outputs(self, paths: Iterable[Path]) -> None:
        root = Path(self.output_dir)
        for p in paths:
            p = Path(p)
            try:
                key = p.relative_to(root).as_posix()
            except ValueError:
                key = p.as_posix()
            self.outputs[key] = sha256_file(p)

    def record_input(self, path: str | Path) -> None:
        self.input_path = str(Path(path).resolve())
        self.input_sha256 = sha256_file(path)

    def verify_input(self) -> Optional[Path]:
        """
        The recorded input file, checked against its stored digest.

        Returns None when the run had no input file. Raises FrameFormatError
        when the file no longer matches.
        """
        if self.input_path is None:
            return None
        path = Path(self.input_path)
        if not path.is_file():
            raise FrameFormatError(f"Recorded input {path} is missing")
        actual = sha256_file(path)
        if self.input_sha256 is not None and actual != self.input_sha256:
            raise FrameFormatError(f"Recorded input {path} changed: sha256 {actual} != {self.input_sha256}")
        return path

    def to_dict(self) -> dict[str, Any]:
        data = {
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "config_path": self.config_path,
            "output_dir": self.output_dir,
            "config": self.config,
            "outputs": dict(sorted(self.outputs.items())),
        }
        if self.input_path is not None:
            data["input"] = {"path": self.input_path, "sha256": self.input_sha256}
        if self.sweep is not None:
            data["sweep"] = self.sweep.to_dict()
        return data

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "RunManifest":
        try:
            source = data.get("input")
            sweep = data.get("sweep")
            return RunManifest(
                command=str(data["command"]),
                config={str(s): dict(v) for s, v in data["config"].items()},
                seed=int(data["seed"]),
                output_dir=str(data["output_dir"]),
                version=str(data.get("version", "")),
                config_path=data.get("config_path"),
                outputs=dict(data.get("outputs", {})),
                input_path=None if source is None else str(source["path"]),
                input_sha256=None if source is None or source.get("sha256") is None else str(source["sha256"]),
                sweep=None if sweep is None else SweepPlan.from_dict(sweep),
            )
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise FrameFormatError(f"Malformed run manifest: {exc}") from exc


def save_manifest(path: str | Path, manifest: RunManifest) -> Path:
    """Save a run manifest as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> RunManifest:
    """Load a run manifest from JSON."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FrameFormatError(f"{path}: not a JSON manifest ({exc})") from exc
    return RunManifest.from_dict(data)
