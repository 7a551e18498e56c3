"""Dataset access: KITTI odometry sequences and a generic cloud directory.

A dataset is a directory of scans plus optional ground-truth poses.

KITTI layout::

    <root>/velodyne/000000.bin ...   scans, 16-byte float32 records
    <root>/poses.txt                 12 numbers per line, row-major 3x4
    <root>/calib.txt                 "Tr:" line, sensor-to-camera transform

Generic layout::

    <root>/000000.txt|.xyz|.bin ...  scans, numeric file stems are frame ids
    <root>/poses.csv                 "frame,x,y,z,yaw_deg" or frame + 12
                                     row-major 3x4 numbers per line

Pose files are optional (index building needs none); evaluation refuses a
dataset without one.  KITTI pose rows map camera coordinates to world, so
the calib Tr is applied to express every pose in the sensor frame; when
calib.txt is absent the identity is used, which only offsets positions by
the fixed sensor lever arm.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import FormatError, PointCloud, load_ascii_cloud, load_kitti_bin

_SCAN_SUFFIXES = (".bin", ".txt", ".xyz")


@dataclass(frozen=True)
class TrajectoryPose:
    frame_id: int
    position: np.ndarray  # (3,) meters, world frame
    matrix: np.ndarray  # (4, 4) sensor-to-world


@dataclass
class Dataset:
    root: Path
    fmt: str  # "kitti" or "generic"
    scans: dict[int, Path]  # frame id -> scan file, insertion-ordered by id
    poses: list[TrajectoryPose] | None
    planar_axes: tuple[int, int]  # world axes spanning the driving plane

    def pose_by_id(self) -> dict[int, TrajectoryPose]:
        return {} if self.poses is None else {p.frame_id: p for p in self.poses}


def load_scan(path) -> PointCloud:
    """Read one scan file, dispatching on suffix; stem becomes the frame id."""
    path = Path(path)
    stem_id = int(path.stem) if path.stem.isdigit() else 0
    if path.suffix == ".bin":
        return load_kitti_bin(path, frame_id=stem_id)
    return load_ascii_cloud(path, frame_id=stem_id)


def _homogeneous(rows: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :] = rows.reshape(3, 4)
    return m


def load_kitti_calib(path) -> np.ndarray:
    """Extract the sensor-to-camera transform (the Tr line) as a 4x4 matrix."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("Tr:") or line.startswith("Tr "):
            try:
                vals = [float(v) for v in line.split()[1:]]
            except ValueError:
                raise FormatError(f"{path}: non-numeric value in Tr line") from None
            if len(vals) != 12:
                raise FormatError(f"{path}: Tr line has {len(vals)} values, expected 12")
            return _homogeneous(np.array(vals))
    raise FormatError(f"{path}: no Tr line found")


def load_kitti_poses(path, sensor_to_cam: np.ndarray | None = None) -> list[TrajectoryPose]:
    """Parse 12-number pose rows; frame ids are line numbers.

    Each row maps camera coordinates at that frame to world coordinates.
    When ``sensor_to_cam`` is given the returned matrices map sensor
    coordinates to world instead, so downstream distances and relative
    poses live in the sensor frame.
    """
    poses = []
    for lineno, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError:
            raise FormatError(f"{path}:{lineno + 1}: non-numeric field") from None
        if len(vals) != 12:
            raise FormatError(f"{path}:{lineno + 1}: {len(vals)} values, expected 12")
        m = _homogeneous(np.array(vals))
        if sensor_to_cam is not None:
            m = m @ sensor_to_cam
        if not np.isfinite(m).all():
            raise FormatError(f"{path}:{lineno + 1}: non-finite pose")
        poses.append(TrajectoryPose(lineno, m[:3, 3].copy(), m))
    return poses


def load_generic_poses(path) -> list[TrajectoryPose]:
    """Parse poses.csv rows: frame,x,y,z,yaw_deg or frame + 12 matrix numbers."""
    poses = []
    last_id = None
    seen_data = False
    for lineno, line in enumerate(Path(path).read_text().splitlines()):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in re.split(r"[,\s]+", text) if f.strip()]
        if not seen_data and not _is_number(fields[0]):
            continue  # header row
        seen_data = True
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise FormatError(f"{path}:{lineno + 1}: non-numeric field") from None
        if len(vals) == 5:
            fid = int(vals[0])
            yaw = np.radians(vals[4])
            c, s = np.cos(yaw), np.sin(yaw)
            m = np.eye(4)
            m[:2, :2] = [[c, -s], [s, c]]
            m[:3, 3] = vals[1:4]
        elif len(vals) == 13:
            fid = int(vals[0])
            m = _homogeneous(np.array(vals[1:]))
        else:
            raise FormatError(
                f"{path}:{lineno + 1}: {len(vals)} fields, expected 5 (frame,x,y,z,yaw_deg)"
                " or 13 (frame + 3x4 matrix)"
            )
        if not np.isfinite(m).all():
            raise FormatError(f"{path}:{lineno + 1}: non-finite pose")
        if last_id is not None and fid <= last_id:
            raise FormatError(f"{path}:{lineno + 1}: frame ids must be strictly increasing")
        last_id = fid
        poses.append(TrajectoryPose(fid, m[:3, 3].copy(), m))
    return poses


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _scan_files(directory: Path, suffixes) -> dict[int, Path]:
    found = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in suffixes and p.stem.isdigit():
            fid = int(p.stem)
            if fid in found:
                raise FormatError(f"{directory}: duplicate frame id {fid}")
            found[fid] = p
    return dict(sorted(found.items()))


def load_dataset(root, fmt: str) -> Dataset:
    """Discover scans and poses under a dataset root directory."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: not a directory")
    if fmt == "kitti":
        velodyne = root / "velodyne"
        if not velodyne.is_dir():
            raise FormatError(f"{root}: kitti dataset needs a velodyne/ directory")
        scans = _scan_files(velodyne, (".bin",))
        poses = None
        poses_path = root / "poses.txt"
        if poses_path.exists():
            calib_path = root / "calib.txt"
            tr = load_kitti_calib(calib_path) if calib_path.exists() else None
            poses = load_kitti_poses(poses_path, tr)
        return Dataset(root, fmt, scans, poses, planar_axes=(0, 2))
    if fmt == "generic":
        scans = _scan_files(root, _SCAN_SUFFIXES)
        poses_path = root / "poses.csv"
        poses = load_generic_poses(poses_path) if poses_path.exists() else None
        return Dataset(root, fmt, scans, poses, planar_axes=(0, 1))
    raise ValueError(f"unknown dataset format {fmt!r}")
