"""Keyframe descriptor index: compact keys, exact nearest-key retrieval,
and the accept/reject match decision."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import FormatError
from .matching import best_shift_l1, circular_shift, row_cosine
from .pose import shift_to_rotation
from .spectrum import descriptor_from_bytes, descriptor_to_bytes

_MAGIC = b"FRIX"
_VERSION = 1


class DegenerateDescriptorError(Exception):
    """All-zero descriptor: the frame carries no usable structure."""


def make_key(desc: np.ndarray) -> np.ndarray:
    """Rotation-tolerant retrieval key: per-row means then per-row population
    standard deviations, each normalized by the global descriptor mean.

    Row statistics ignore column order entirely, so the key survives the
    circular shifts a scene rotation induces.
    """
    desc = np.asarray(desc, dtype=np.float64)
    g = desc.mean() if desc.size else 0.0
    if not g > 0.0:
        raise DegenerateDescriptorError("descriptor global mean is not positive")
    return np.concatenate([desc.mean(axis=1), desc.std(axis=1)]) / g


@dataclass
class MatchResult:
    candidate_id: int | None
    d_l1: float
    d_r: float
    best_shift: int
    rotation_deg: float
    accepted: bool


class KeyframeIndex:
    """Insertion-ordered store of (id, key, descriptor).

    Retrieval is exact nearest-neighbor over keys: a k-d tree is rebuilt
    every ``rebuild_every`` insertions and the unindexed tail is scanned
    linearly, so answers never depend on rebuild timing.  The most recent
    ``exclusion_horizon`` insertions are never returned, which keeps a
    vehicle from matching the scene it is still inside.
    """

    def __init__(self, exclusion_horizon: int = 30, rebuild_every: int = 64):
        if exclusion_horizon < 0:
            raise ValueError("exclusion_horizon must be >= 0")
        if rebuild_every < 1:
            raise ValueError("rebuild_every must be >= 1")
        self.exclusion_horizon = exclusion_horizon
        self.rebuild_every = rebuild_every
        self._ids: list[int] = []
        self._keys: list[np.ndarray] = []
        self._descs: list[np.ndarray] = []
        self._tree: cKDTree | None = None
        self._tree_size = 0

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[int]:
        return list(self._ids)

    def descriptor(self, frame_id: int) -> np.ndarray:
        return self._descs[self._ids.index(frame_id)]

    def insert(self, frame_id: int, desc: np.ndarray) -> None:
        """Add a frame; ids must be new and strictly increasing."""
        if self._ids and frame_id <= self._ids[-1]:
            raise ValueError(
                f"frame id {frame_id} not greater than last inserted {self._ids[-1]}"
            )
        key = make_key(desc)  # degenerate frames are rejected, not stored
        self._ids.append(int(frame_id))
        self._keys.append(key)
        self._descs.append(np.asarray(desc, dtype=np.float64))
        if len(self._ids) % self.rebuild_every == 0:
            self._rebuild()

    def _rebuild(self) -> None:
        self._tree = cKDTree(np.vstack(self._keys))
        self._tree_size = len(self._keys)

    def retrieve(self, desc: np.ndarray, num_candidates: int) -> list[tuple[int, float]]:
        """Up to ``num_candidates`` eligible (id, key distance) pairs, nearest first.

        Eligible means inserted earlier than the exclusion horizon.  Ties in
        distance break toward the smaller id so results are reproducible.
        """
        if num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        key = make_key(desc)
        eligible = len(self._ids) - self.exclusion_horizon
        if eligible <= 0:
            return []
        found: list[tuple[float, int]] = []
        tree_n = min(self._tree_size, eligible)
        if self._tree is not None and tree_n > 0:
            # over-fetch: at most exclusion_horizon tree entries are ineligible
            k = min(self._tree_size, num_candidates + self.exclusion_horizon)
            dist, pos = self._tree.query(key, k=k)
            for d, p in zip(np.atleast_1d(dist), np.atleast_1d(pos)):
                if p < tree_n:
                    found.append((float(d), self._ids[int(p)]))
        for p in range(self._tree_size, eligible):
            d = float(np.linalg.norm(self._keys[p] - key))
            found.append((d, self._ids[p]))
        found.sort()
        return [(fid, d) for d, fid in found[:num_candidates]]

    def match(
        self,
        desc: np.ndarray,
        num_candidates: int,
        l1_threshold: float,
        cosine_threshold: float,
    ) -> MatchResult:
        """Score retrieved candidates and decide acceptance.

        The candidate minimizing the shift-searched L1 distance is checked
        once against both thresholds; a cosine rejection is final (no
        fallback to the runner-up).  Scores are reported either way so
        callers can sweep thresholds afterwards.
        """
        desc = np.asarray(desc, dtype=np.float64)
        candidates = self.retrieve(desc, num_candidates)
        if not candidates:
            return MatchResult(None, np.inf, np.inf, 0, 0.0, False)
        best_id = None
        best = None
        for fid, _ in candidates:
            score = best_shift_l1(desc, self.descriptor(fid))
            if best is None or score.d_l1 < best.d_l1:
                best = score
                best_id = fid
        shifted = circular_shift(self.descriptor(best_id), best.best_shift)
        d_r = row_cosine(desc, shifted)
        width = desc.shape[1]
        accepted = best.d_l1 <= l1_threshold and d_r <= cosine_threshold
        return MatchResult(
            best_id,
            best.d_l1,
            d_r,
            best.best_shift,
            shift_to_rotation(best.best_shift, width),
            accepted,
        )

    def save(self, path) -> None:
        """Write all entries; little-endian, descriptors in the blob format."""
        if self._descs:
            rows, cols = self._descs[0].shape
        else:
            rows = cols = 0
        out = [_MAGIC, struct.pack("<IIIQ", _VERSION, rows, cols, len(self._ids))]
        for fid, key, desc in zip(self._ids, self._keys, self._descs):
            out.append(struct.pack("<Q", fid))
            out.append(np.ascontiguousarray(key, dtype="<f4").tobytes())
            out.append(descriptor_to_bytes(desc))
        Path(path).write_bytes(b"".join(out))

    @classmethod
    def load(cls, path, exclusion_horizon: int = 30, rebuild_every: int = 64) -> "KeyframeIndex":
        raw = Path(path).read_bytes()
        if len(raw) < 24 or raw[:4] != _MAGIC:
            raise FormatError(f"{path}: not an index file (bad magic)")
        version, rows, cols, count = struct.unpack("<IIIQ", raw[4:24])
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported index version {version}")
        idx = cls(exclusion_horizon=exclusion_horizon, rebuild_every=rebuild_every)
        off = 24
        key_bytes = 4 * 2 * rows
        blob_bytes = 12 + 4 * rows * cols
        for _ in range(count):
            if off + 8 + key_bytes + blob_bytes > len(raw):
                raise FormatError(f"{path}: truncated at byte offset {off}")
            (fid,) = struct.unpack_from("<Q", raw, off)
            off += 8
            key = np.frombuffer(raw, dtype="<f4", count=2 * rows, offset=off).astype(np.float64)
            off += key_bytes
            desc = descriptor_from_bytes(raw[off : off + blob_bytes])
            off += blob_bytes
            idx._ids.append(int(fid))
            idx._keys.append(key)
            idx._descs.append(desc)
        if off != len(raw):
            raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
        if idx._ids:
            idx._rebuild()
        return idx
