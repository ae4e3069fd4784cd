"""Binary checkpoint format.

Layout (all integers little-endian):
  b"MDNI"                 magic
  u16                     format version
  32 bytes                sha256 config digest
  u32 + bytes             JSON header (sorted keys): counters, RNG state, table index
  raw <f4 data            tables in header order

Tables are named ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``,
written in sorted order.  Serialization is canonical, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"MDNI"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    digest: str
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_step: int = 0
    stage_index: int = 0
    stage_step: int = 0
    global_step: int = 0
    rng: dict = field(default_factory=dict)
    config: str = ""  # JSON text of the run config

    def tables(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for group, d in (("param", self.params), ("adam_m", self.adam_m), ("adam_v", self.adam_v)):
            out.extend((f"{group}/{k}", d[k]) for k in sorted(d))
        return out


def to_bytes(ck: Checkpoint) -> bytes:
    digest = bytes.fromhex(ck.digest)
    if len(digest) != 32:
        raise CheckpointError("config digest must be 32 bytes of hex")
    tables = ck.tables()
    index = [{"name": n, "shape": list(a.shape)} for n, a in tables]
    header = {
        "adam_step": ck.adam_step,
        "config": ck.config,
        "global_step": ck.global_step,
        "rng": ck.rng,
        "stage_index": ck.stage_index,
        "stage_step": ck.stage_step,
        "tables": index,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<H", VERSION), digest, struct.pack("<I", len(hb)), hb]
    parts.extend(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in tables)
    return b"".join(parts)


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < 42:
        raise CheckpointError("truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = blob[6:38].hex()
    (hlen,) = struct.unpack_from("<I", blob, 38)
    off = 42
    try:
        header = json.loads(blob[off:off + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e
    off += hlen
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in header["tables"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 4
        if off + n > len(blob):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=off).reshape(shape).astype(np.float32)
        off += n
        group, name = entry["name"].split("/", 1)
        groups[group][name] = arr
    if off != len(blob):
        raise CheckpointError("trailing bytes after the last table")
    return Checkpoint(digest, groups["param"], groups["adam_m"], groups["adam_v"], header["adam_step"],
                      header["stage_index"], header["stage_step"], header["global_step"], header["rng"],
                      header["config"])


def save(ck: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(ck))
    tmp.replace(path)
    return path


def load(path: str | Path, expected_digest: str | None = None, force: bool = False) -> Checkpoint:
    ck = from_bytes(Path(path).read_bytes())
    if expected_digest is not None and ck.digest != expected_digest and not force:
        raise ConfigError(f"checkpoint {path} was written for config {ck.digest[:12]}, "
                          f"not {expected_digest[:12]} (use force to override)")
    return ck
