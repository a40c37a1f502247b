"""Sensor log persistence: JSON Lines records plus acoustic frame files.

One record per line, in timestamp order:
    {"t": <s>, "type": "odom", "v_x": <m/s>}
    {"t": <s>, "type": "compass", "heading": <rad>}
    {"t": <s>, "type": "sonar", "frame": "<relative image path>"}
    {"t": <s>, "type": "gps", "x": <m>, "y": <m>, "theta": <rad>}

Unknown extra keys are tolerated so converters from other formats can carry
metadata through. A meta.json sidecar records the sonar footprint geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geomap import SonarFootprint
from .sonar import AcousticImage, load_acoustic_frame, save_acoustic_frame

_REQUIRED_FIELDS = {
    "odom": ("v_x",),
    "compass": ("heading",),
    "sonar": ("frame",),
    "gps": ("x", "y", "theta"),
}


def validate_record(rec: dict, index: int) -> None:
    """Check one log record against the schema; index is for error context."""
    if not isinstance(rec, dict):
        raise ValueError(f"record {index}: expected a JSON object, got {type(rec).__name__}")
    kind = rec.get("type")
    if kind not in _REQUIRED_FIELDS:
        raise ValueError(f"record {index}: unknown type {kind!r}")
    t = rec.get("t")
    if not isinstance(t, (int, float)) or not math.isfinite(t):
        raise ValueError(f"record {index}: 't' must be a finite number, got {t!r}")
    for name in _REQUIRED_FIELDS[kind]:
        value = rec.get(name)
        if kind == "sonar":
            if not isinstance(value, str) or not value:
                raise ValueError(f"record {index}: 'frame' must be a non-empty path string")
        elif not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValueError(f"record {index}: {name!r} must be a finite number, got {value!r}")


@dataclass
class MessageLog:
    """Time-ordered sensor records plus the acoustic frames they reference."""

    records: list = field(default_factory=list)
    frames: dict = field(default_factory=dict)
    footprint: SonarFootprint = field(default_factory=SonarFootprint)

    def validate(self) -> None:
        prev_t = -math.inf
        for i, rec in enumerate(self.records):
            validate_record(rec, i)
            if rec["t"] < prev_t:
                raise ValueError(f"record {i}: timestamps decrease ({rec['t']} < {prev_t})")
            prev_t = rec["t"]
            if rec["type"] == "sonar" and rec["frame"] not in self.frames:
                raise ValueError(f"record {i}: missing frame {rec['frame']!r}")


def save_message_log(log: MessageLog, out_dir: str | Path) -> Path:
    """Write log.jsonl, the referenced frame images, and meta.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.validate()
    with (out_dir / "log.jsonl").open("w") as fh:
        for rec in log.records:
            fh.write(json.dumps(rec) + "\n")
    for ref, frame in log.frames.items():
        save_acoustic_frame(frame, out_dir / ref)
    meta = {"footprint": log.footprint.to_dict()}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out_dir / "log.jsonl"


def load_message_log(log_dir: str | Path,
                     footprint: SonarFootprint | None = None) -> MessageLog:
    """Read a log directory written by save_message_log (or a converter).

    The footprint comes from the argument if given, else meta.json, else the
    defaults. Frame paths are resolved relative to the directory and must stay
    inside it.
    """
    log_dir = Path(log_dir)
    log_path = log_dir / "log.jsonl"
    if not log_path.is_file():
        raise FileNotFoundError(f"log file not found: {log_path}")
    if footprint is None:
        meta_path = log_dir / "meta.json"
        if meta_path.is_file():
            try:
                meta = json.loads(meta_path.read_text())
            except json.JSONDecodeError as e:
                raise ValueError(f"meta.json is not valid JSON: {e}") from e
            if "footprint" in meta:
                footprint = SonarFootprint.from_dict(meta["footprint"])
    if footprint is None:
        footprint = SonarFootprint()

    records = []
    with log_path.open() as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"record {i}: invalid JSON: {e}") from e
            validate_record(rec, i)
            records.append(rec)

    frames: dict[str, AcousticImage] = {}
    root = log_dir.resolve()
    for i, rec in enumerate(records):
        if rec["type"] != "sonar" or rec["frame"] in frames:
            continue
        ref = rec["frame"]
        path = (log_dir / ref).resolve()
        if root not in path.parents and path != root:
            raise ValueError(f"record {i}: frame path {ref!r} escapes the log directory")
        if not path.is_file():
            raise FileNotFoundError(f"record {i}: frame image not found: {path}")
        frames[ref] = load_acoustic_frame(path, footprint, timestamp=float(rec["t"]))

    log = MessageLog(records=records, frames=frames, footprint=footprint)
    log.validate()
    return log
