"""Shared fixtures: synthetic datasets on disk and default configuration."""

from __future__ import annotations

import numpy as np
import pytest

from fresco import synth
from fresco.config import Config


def write_bin(path, xyz) -> None:
    """Write points as little-endian float32 (x, y, z, intensity) records."""
    pts = np.column_stack([xyz, np.zeros(len(xyz))]).astype("<f4")
    pts.tofile(path)


@pytest.fixture
def cfg() -> Config:
    return Config()


def _line_scene(i: int):
    spec = synth.SceneSpec(
        seed=i,
        pillars=12 + (i % 8),
        walls=3,
        rings=i % 3,
        range_limit=30.0,
    )
    return synth.generate(spec)


@pytest.fixture(scope="session")
def loop_dataset(tmp_path_factory):
    """200 scans along a line; the last scan revisits the start.

    Every frame gets its own scene, so the only correct match in the whole
    sequence is the final frame against frame 0.  The revisit scan is the
    start scene re-observed from (0.4, 0.3) with a 140 degree heading change.
    """
    root = tmp_path_factory.mktemp("loop_ds")
    rows = []
    for i in range(200):
        if i == 199:
            x, y, yaw = 0.4, 0.3, 140.0
            cloud = synth.perturb(_line_scene(0), tx=x, ty=y, yaw_deg=yaw)
        else:
            x, y, yaw = 2.0 * i, 0.0, 0.0
            cloud = _line_scene(i)
        write_bin(root / f"{i:06d}.bin", cloud.xyz)
        rows.append(f"{i},{x},{y},0.0,{yaw}")
    (root / "poses.csv").write_text("frame,x,y,z,yaw_deg\n" + "\n".join(rows) + "\n")
    return root


@pytest.fixture(scope="session")
def trip_dataset(tmp_path_factory):
    """40 scans out and back: 20 along y=0, then the same stretch at y=4.

    Scene content is keyed to the rounded position, so the return leg
    re-observes the outbound scenes from 4 m away with a 180 degree heading
    change, giving a full mix of match labels.
    """
    root = tmp_path_factory.mktemp("trip_ds")
    rows = []
    for i in range(40):
        if i < 20:
            leg_x, leg_y, yaw = 2.0 * i, 0.0, 0.0
        else:
            leg_x, leg_y, yaw = 2.0 * (39 - i), 4.0, 180.0
        place = int(round(leg_x / 10.0))
        anchor = 10.0 * place  # scene frame origin in world coordinates
        base = synth.generate(
            synth.SceneSpec(seed=700 + place, pillars=14, walls=4, rings=2, range_limit=30.0)
        )
        # viewpoint within the scene frame; the pose row states the same
        # viewpoint in world coordinates so ground truth matches the scan
        tx, ty = leg_x - anchor, leg_y + 0.2 * np.cos(i)
        cloud = synth.perturb(base, tx=tx, ty=ty, yaw_deg=yaw)
        write_bin(root / f"{i:06d}.bin", cloud.xyz)
        rows.append(f"{i},{anchor + tx},{ty},0.0,{yaw}")
    (root / "poses.csv").write_text("frame,x,y,z,yaw_deg\n" + "\n".join(rows) + "\n")
    return root


@pytest.fixture(scope="session")
def trip_report(trip_dataset, tmp_path_factory):
    """One full evaluation over the out-and-back dataset, artifacts kept."""
    from fresco.datasets import load_dataset
    from fresco.evaluate import run_evaluation

    out = tmp_path_factory.mktemp("trip_eval")
    dataset = load_dataset(trip_dataset, "generic")
    cfg = Config(exclusion_horizon=5)
    report = run_evaluation(dataset, cfg, out, svg=True)
    return dataset, out, report
