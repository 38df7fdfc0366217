"""Binary model snapshots.

Layout (little-endian, no padding)::

    b"RGCF"  u32 version  u32 m  u32 n  u32 k  u32 L  u8 mode  f64 lambda
    f64[(m+n)*k]   layer-0 table, row-major
    f64[m+n]       biases
    u8 flag        1 if the final embeddings follow
    f64[(m+n)*k']  final embeddings (k' = k, or (L+1)*k for concat)
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import IdMap
from .propagation import EmbeddingState, FinalEmbeddings, Mode

MAGIC = b"RGCF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIBd")
_MODES = {Mode.LAST_LAYER: 0, Mode.CONCAT: 1}
_MODE_CODES = {v: k for k, v in _MODES.items()}
_F64 = np.dtype("<f8")


class SnapshotError(Exception):
    pass


class SnapshotFormatError(SnapshotError):
    pass


class SnapshotVersionError(SnapshotError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


@dataclass
class Snapshot:
    num_users: int
    num_items: int
    k: int
    num_layers: int
    lam: float
    mode: Mode
    e0: np.ndarray
    biases: np.ndarray
    e_star: np.ndarray | None = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        rows = self.num_users + self.num_items
        if self.e0.shape != (rows, self.k) or self.biases.shape != (rows,):
            raise SnapshotFormatError(
                f"arrays {self.e0.shape}/{self.biases.shape} do not match header ({rows}, {self.k})")
        if self.e_star is not None and self.e_star.shape != (rows, self.final_width):
            raise SnapshotFormatError(f"cached embeddings {self.e_star.shape} do not match "
                                      f"({rows}, {self.final_width})")

    @property
    def final_width(self) -> int:
        return self.k * (self.num_layers + 1) if self.mode is Mode.CONCAT and self.num_layers else self.k

    @property
    def state(self) -> EmbeddingState:
        return EmbeddingState(self.e0, self.biases, self.num_users)

    def final_embeddings(self) -> FinalEmbeddings:
        if self.e_star is None:
            raise SnapshotError("snapshot has no cached final embeddings")
        return FinalEmbeddings(self.e_star, self.mode, self.num_users)

    @classmethod
    def from_state(cls, state: EmbeddingState, num_layers: int, lam: float, mode,
                   fe: FinalEmbeddings | None = None) -> "Snapshot":
        return cls(state.num_users, state.num_items, state.k, num_layers, float(lam), Mode(mode),
                   np.asarray(state.e0, dtype=np.float64), np.asarray(state.biases, dtype=np.float64),
                   None if fe is None else np.asarray(fe.e_star, dtype=np.float64))

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, VERSION, self.num_users, self.num_items, self.k,
                              self.num_layers, _MODES[self.mode], self.lam)
        parts = [header, self.e0.astype(_F64).tobytes(order="C"), self.biases.astype(_F64).tobytes()]
        if self.e_star is None:
            parts.append(b"\x00")
        else:
            parts += [b"\x01", self.e_star.astype(_F64).tobytes(order="C")]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, path: str = "<bytes>") -> "Snapshot":
        if len(data) < 4 or data[:4] != MAGIC:
            raise SnapshotFormatError(f"{path}: not a snapshot (bad magic)")
        if len(data) < _HEADER.size:
            raise SnapshotTruncatedError(f"{path}: truncated header")
        _, version, m, n, k, depth, mode_code, lam = _HEADER.unpack_from(data)
        if version != VERSION:
            raise SnapshotVersionError(f"{path}: unsupported version {version} (expected {VERSION})")
        if mode_code not in _MODE_CODES:
            raise SnapshotFormatError(f"{path}: unknown mode code {mode_code}")
        mode = _MODE_CODES[mode_code]
        rows = m + n
        offset = _HEADER.size

        def take(count: int) -> np.ndarray:
            nonlocal offset
            end = offset + 8 * count
            if end > len(data):
                raise SnapshotTruncatedError(f"{path}: truncated payload")
            arr = np.frombuffer(data, dtype=_F64, count=count, offset=offset).astype(np.float64)
            offset = end
            return arr

        e0 = take(rows * k).reshape(rows, k)
        biases = take(rows)
        if offset >= len(data):
            raise SnapshotTruncatedError(f"{path}: missing cache flag")
        flag = data[offset]
        offset += 1
        e_star = None
        if flag == 1:
            width = k * (depth + 1) if mode is Mode.CONCAT and depth else k
            e_star = take(rows * width).reshape(rows, width)
        elif flag != 0:
            raise SnapshotFormatError(f"{path}: bad cache flag {flag}")
        if offset != len(data):
            raise SnapshotFormatError(f"{path}: {len(data) - offset} trailing bytes")
        return cls(m, n, k, depth, lam, mode, e0, biases, e_star)


def _atomic_write(path: Path, payload: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload.encode("utf-8") if isinstance(payload, str) else payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_snapshot(path: str | os.PathLike, snapshot: Snapshot) -> None:
    """Write via a temp file and rename, so the target is never partial."""
    _atomic_write(Path(path), snapshot.to_bytes())


def load_snapshot(path: str | os.PathLike) -> Snapshot:
    path = Path(path)
    return Snapshot.from_bytes(path.read_bytes(), str(path))


def id_map_paths(snapshot_path: str | os.PathLike) -> tuple[Path, Path]:
    """Sidecar locations for the user and item ID maps."""
    base = Path(snapshot_path)
    return base.with_name(base.name + ".users.map"), base.with_name(base.name + ".items.map")


def save_id_maps(snapshot_path, user_map: IdMap, item_map: IdMap) -> None:
    upath, ipath = id_map_paths(snapshot_path)
    _atomic_write(upath, user_map.to_text())
    _atomic_write(ipath, item_map.to_text())


def load_id_maps(snapshot_path) -> tuple[IdMap, IdMap]:
    upath, ipath = id_map_paths(snapshot_path)
    return IdMap.load(upath), IdMap.load(ipath)
