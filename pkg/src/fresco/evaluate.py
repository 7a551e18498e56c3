"""Evaluation harness: keyframe sampling, match labeling, PR sweeps, pose
error statistics, runtime accounting, and the dataset-to-report driver.

The driver walks a dataset's keyframes in order, querying each descriptor
against the index of everything inserted so far, then labels the outcomes
against ground-truth positions.  Acceptance thresholds are swept afterwards
from the recorded scores, so one pass yields the full precision-recall
curve plus the operating point of the configured thresholds.
"""

from __future__ import annotations

import json
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bev import make_bev
from .cloud import FormatError, PointCloud
from .config import Config, thread_count, to_dict
from .datasets import Dataset, TrajectoryPose, load_scan
from .index import DegenerateDescriptorError, KeyframeIndex
from .pipeline import preprocess
from .pose import (
    InsufficientStructureError,
    Se3Pose,
    alignment_mse_3d,
    estimate_pose_stage1,
    extract_compact_2d,
    matrix_to_se3,
    refine_pose_3d,
    se2_to_matrix,
    wrap_angle,
)
from .spectrum import log_spectrum, polar_unroll


def sample_keyframes(poses: list[TrajectoryPose], spacing_m: float) -> list[int]:
    """Greedy arc-length sampling: keep a frame once the vehicle has moved
    at least ``spacing_m`` from the last kept frame.  First frame always kept."""
    if spacing_m <= 0:
        raise ValueError("spacing must be positive")
    kept: list[int] = []
    last = None
    for p in poses:
        if last is None or float(np.linalg.norm(p.position - last)) >= spacing_m:
            kept.append(p.frame_id)
            last = p.position
    return kept


def label_match(
    query_id: int,
    match_id: int | None,
    positions: dict[int, np.ndarray],
    radius: float = 10.0,
    eligible_ids=None,
) -> str:
    """Classify one query outcome as TP / FP / FN / TN.

    A returned match within ``radius`` of the query's ground-truth position
    is a TP, farther is an FP.  With no match returned, the outcome is an FN
    when some eligible prior keyframe (``eligible_ids``, default: every id
    smaller than the query's) was within radius, else a TN.
    """
    if query_id not in positions:
        raise KeyError(f"unknown frame id {query_id}")
    q = positions[query_id]
    if match_id is not None:
        if match_id not in positions:
            raise KeyError(f"unknown frame id {match_id}")
        near = float(np.linalg.norm(positions[match_id] - q)) <= radius
        return "TP" if near else "FP"
    if eligible_ids is None:
        eligible_ids = [i for i in positions if i < query_id]
    for i in eligible_ids:
        if i not in positions:
            raise KeyError(f"unknown frame id {i}")
        if float(np.linalg.norm(positions[i] - q)) <= radius:
            return "FN"
    return "TN"


@dataclass(frozen=True)
class QueryRecord:
    """Scores and ground truth for one query, enough to sweep thresholds."""

    query_id: int
    candidate_id: int | None
    d_l1: float
    d_r: float
    correct: bool  # candidate lies within the TP radius of the query
    has_positive: bool  # an eligible prior keyframe lies within the radius


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass
class PrSweep:
    points: list[PrPoint]
    best: PrPoint
    n_queries: int
    n_eligible: int  # queries for which a positive existed
    recall_eligible: float | None  # best-point TP over eligible queries
    recall_all: float | None  # best-point TP over all queries
    degenerate: bool  # no query had a positive; recall is undefined


def pr_sweep(records: list[QueryRecord], cosine_threshold: float = np.inf) -> PrSweep:
    """Sweep the L1 acceptance threshold over every observed score.

    The cosine gate stays fixed: a candidate only counts as returned when
    its d_r passes ``cosine_threshold`` and its d_l1 is below the swept
    threshold.  Precision is 1 by convention when nothing is returned.
    """
    n = len(records)
    n_pos = sum(r.has_positive for r in records)
    returnable = [
        r
        for r in records
        if r.candidate_id is not None and r.d_r <= cosine_threshold and np.isfinite(r.d_l1)
    ]
    returnable.sort(key=lambda r: r.d_l1)
    points = []
    tp = fp = returned_pos = 0
    i = 0
    thresholds = sorted({r.d_l1 for r in returnable}) or [0.0]
    for tau in thresholds:
        while i < len(returnable) and returnable[i].d_l1 <= tau:
            r = returnable[i]
            tp += r.correct
            fp += not r.correct
            returned_pos += r.has_positive
            i += 1
        fn = n_pos - returned_pos
        tn = n - tp - fp - fn
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        points.append(PrPoint(float(tau), precision, recall, f1, tp, fp, fn, tn))
    best = max(points, key=lambda p: p.f1)
    degenerate = n_pos == 0
    return PrSweep(
        points=points,
        best=best,
        n_queries=n,
        n_eligible=n_pos,
        recall_eligible=None if degenerate else best.tp / n_pos,
        recall_all=None if n == 0 else best.tp / n,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class PoseStats:
    rte_mean: float
    rte_std: float
    rre_mean: float
    rre_std: float
    success_rate: float
    count: int


def pose_metrics(estimates: list[Se3Pose], gt_matrices: list[np.ndarray]) -> PoseStats:
    """Relative translation / rotation errors against ground-truth pairs.

    RTE is the planar norm of the translation error, RRE the absolute yaw
    error in degrees.  Success follows each estimate's own flag (final 3D
    alignment error under the documented bound).  Estimates with non-finite
    components are excluded from the error means but still count against
    the success rate.
    """
    if not estimates:
        raise ValueError("pose_metrics needs at least one estimate")
    if len(estimates) != len(gt_matrices):
        raise ValueError("estimates and ground truth differ in length")
    rte, rre, success = [], [], []
    for est, m in zip(estimates, gt_matrices):
        gt_yaw = float(np.arctan2(m[1, 0], m[0, 0]))
        rte.append(float(np.hypot(est.tx - m[0, 3], est.ty - m[1, 3])))
        rre.append(abs(float(np.degrees(wrap_angle(est.yaw - gt_yaw)))))
        success.append(bool(est.success))
    rte_arr = np.array(rte)
    rre_arr = np.array(rre)
    with np.errstate(invalid="ignore"):
        return PoseStats(
            rte_mean=float(np.nanmean(rte_arr)),
            rte_std=float(np.nanstd(rte_arr)),
            rre_mean=float(np.nanmean(rre_arr)),
            rre_std=float(np.nanstd(rre_arr)),
            success_rate=float(np.mean(success)),
            count=len(estimates),
        )


class PhaseTimer:
    """Accumulates wall-clock samples per named phase."""

    def __init__(self):
        self._samples: dict[str, list[float]] = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, time.perf_counter() - t0)

    def add(self, name: str, seconds: float) -> None:
        self._samples.setdefault(name, []).append(seconds)


def runtime_report(timer: PhaseTimer) -> dict[str, float]:
    """Mean milliseconds per phase.  Phases that never ran are absent, not
    zero; absence and a measured zero mean different things."""
    return {
        name: 1000.0 * sum(vals) / len(vals)
        for name, vals in timer._samples.items()
        if vals
    }


def trajectory_svg(path_xy, tp_segments, fp_segments, out_path, size: float = 800.0) -> None:
    """Write the trajectory as an SVG: black path, green TP links, red FP links."""
    pts = np.asarray(path_xy, dtype=float).reshape(-1, 2)
    coords = [pts] + [np.asarray(s, dtype=float).reshape(-1, 2) for s in (tp_segments or [])]
    coords += [np.asarray(s, dtype=float).reshape(-1, 2) for s in (fp_segments or [])]
    stacked = np.vstack(coords) if coords else np.zeros((0, 2))
    if stacked.shape[0] == 0:
        lo = np.zeros(2)
        span = np.ones(2)
    else:
        lo = stacked.min(axis=0)
        span = np.maximum(stacked.max(axis=0) - lo, 1e-6)
    scale = size / span.max()
    pad = 0.04 * size
    width = span[0] * scale + 2 * pad
    height = span[1] * scale + 2 * pad

    def project(p):
        x = (p[0] - lo[0]) * scale + pad
        y = height - ((p[1] - lo[1]) * scale + pad)  # svg y grows downward
        return f"{x:.2f},{y:.2f}"

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.2f} {height:.2f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for segs, color in ((tp_segments or [], "green"), (fp_segments or [], "red")):
        for a, b in segs:
            pa, pb = project(a).split(","), project(b).split(",")
            lines.append(
                f'<line x1="{pa[0]}" y1="{pa[1]}" x2="{pb[0]}" y2="{pb[1]}" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
    if pts.shape[0] >= 2:
        joined = " ".join(project(p) for p in pts)
        lines.append(
            f'<polyline fill="none" stroke="black" stroke-width="1" points="{joined}"/>'
        )
    lines.append("</svg>")
    Path(out_path).write_text("\n".join(lines) + "\n")


class _CloudCache:
    """Keeps the most recently used preprocessed clouds; loads on miss."""

    def __init__(self, dataset: Dataset, cfg: Config, cap: int = 16):
        self._dataset = dataset
        self._cfg = cfg
        self._cap = cap
        self._store: OrderedDict[int, PointCloud] = OrderedDict()

    def get(self, fid: int) -> PointCloud:
        if fid in self._store:
            self._store.move_to_end(fid)
            return self._store[fid]
        cloud = preprocess(load_scan(self._dataset.scans[fid]), self._cfg)
        self._store[fid] = cloud
        if len(self._store) > self._cap:
            self._store.popitem(last=False)
        return cloud


def _fmt(v) -> str:
    return repr(float(v))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_evaluation(
    dataset: Dataset,
    cfg: Config,
    out_dir,
    svg: bool = False,
    log=None,
) -> dict:
    """Evaluate loop-closure detection over a dataset; write all artifacts.

    Produces pr_curve.csv, matches.csv, poses.csv, report.json and
    optionally trajectory.svg under ``out_dir``, and returns the report as
    a dictionary.  Scan loading is excluded from the phase timings.
    """
    if dataset.poses is None:
        raise FormatError(f"{dataset.root}: dataset has no pose file; evaluation needs ground truth")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    say = log if log is not None else lambda _m: None

    positions = {p.frame_id: p.position for p in dataset.poses}
    matrices = {p.frame_id: p.matrix for p in dataset.poses}
    sampled = sample_keyframes(dataset.poses, cfg.keyframe_spacing_m)
    kf = [fid for fid in sampled if fid in dataset.scans]
    missing = len(sampled) - len(kf)
    if missing:
        say(f"warning: {missing} keyframes have no scan file; skipped")
    say(f"{len(kf)} keyframes from {len(dataset.poses)} poses")

    timer = PhaseTimer()

    def compute_descriptor(fid: int):
        cloud = load_scan(dataset.scans[fid])  # IO outside the timed region
        t0 = time.perf_counter()
        pre = preprocess(cloud, cfg)
        bev = make_bev(pre, cfg.window_m, cfg.grid_size)
        desc = polar_unroll(
            log_spectrum(bev), cfg.crop_size, cfg.radial_bins, cfg.angular_bins
        )
        return desc, time.perf_counter() - t0

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            computed = list(pool.map(compute_descriptor, kf))
    else:
        computed = [compute_descriptor(fid) for fid in kf]
    descs = []
    for desc, seconds in computed:
        timer.add("descriptor", seconds)
        descs.append(desc)

    kf_pos = np.array([positions[fid] for fid in kf]) if kf else np.zeros((0, 3))
    radius = cfg.tp_radius_m
    clouds = _CloudCache(dataset, cfg)
    compacts: dict[int, object] = {}

    def compact_of(fid: int):
        if fid not in compacts:
            pre = clouds.get(fid)
            compacts[fid] = extract_compact_2d(
                pre,
                cfg.coarse_grid_m,
                cfg.cell_cap,
                cfg.voxel_m,
                cfg.normal_neighbors,
                cfg.max_flatness_ratio,
            )
        return compacts[fid]

    idx = KeyframeIndex(exclusion_horizon=cfg.exclusion_horizon)
    records: list[QueryRecord] = []
    match_rows: list[str] = []
    pose_rows: list[str] = []
    tp_estimates: list[Se3Pose] = []
    tp_ground_truth: list[np.ndarray] = []
    tp_segments: list[tuple] = []
    fp_segments: list[tuple] = []
    ax = list(dataset.planar_axes)

    degenerate_frames = 0
    for pos, fid in enumerate(kf):
        desc = descs[pos]
        try:
            with timer.phase("retrieval"):
                res = idx.match(desc, cfg.num_candidates, cfg.l1_threshold, cfg.cosine_threshold)
        except DegenerateDescriptorError:
            # structure-free frame: flagged and left out of the index
            degenerate_frames += 1
            say(f"warning: frame {fid} has a degenerate descriptor; skipped")
            continue
        n_eligible = max(0, pos - cfg.exclusion_horizon)
        if n_eligible:
            dists = np.linalg.norm(kf_pos[:n_eligible] - kf_pos[pos], axis=1)
            has_positive = bool((dists <= radius).any())
        else:
            has_positive = False
        correct = res.candidate_id is not None and (
            float(np.linalg.norm(positions[res.candidate_id] - kf_pos[pos])) <= radius
        )
        records.append(
            QueryRecord(fid, res.candidate_id, res.d_l1, res.d_r, correct, has_positive)
        )
        if res.accepted:
            label = "TP" if correct else "FP"
        else:
            label = "FN" if has_positive else "TN"
        match_rows.append(
            f"{fid},{'' if res.candidate_id is None else res.candidate_id},"
            f"{_fmt(res.d_l1)},{_fmt(res.d_r)},{res.best_shift},{label}"
        )
        idx.insert(fid, desc)

        if not res.accepted:
            continue
        cand = res.candidate_id
        try:
            with timer.phase("stage1"):
                est2 = estimate_pose_stage1(
                    compact_of(fid),
                    compact_of(cand),
                    res.best_shift,
                    cfg.angular_bins,
                    max_iters=cfg.nicp_max_iters,
                    gate_start_m=cfg.nicp_gate_start_m,
                    gate_end_m=cfg.nicp_gate_end_m,
                )
        except InsufficientStructureError:
            est3 = Se3Pose(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan)
        else:
            if cfg.stage2:
                with timer.phase("stage2"):
                    est3 = refine_pose_3d(
                        clouds.get(fid), clouds.get(cand), est2, cfg.voxel_m
                    )
            else:
                mse3 = alignment_mse_3d(
                    clouds.get(fid), clouds.get(cand), se2_to_matrix(est2), cfg.voxel_m
                )
                est3 = matrix_to_se3(
                    se2_to_matrix(est2),
                    mse=mse3,
                    converged=est2.converged,
                    success=bool(mse3 < 1.5),
                )
        pose_rows.append(
            f"{fid},{cand},{_fmt(est3.tx)},{_fmt(est3.ty)},{_fmt(est3.tz)},"
            f"{_fmt(np.degrees(est3.roll))},{_fmt(np.degrees(est3.pitch))},"
            f"{_fmt(np.degrees(est3.yaw))},{_fmt(est3.mse)},"
            f"{int(est3.converged)},{int(est3.success)}"
        )
        seg = (kf_pos[pos][ax], positions[cand][ax])
        if label == "TP":
            gt_rel = np.linalg.inv(matrices[cand]) @ matrices[fid]
            tp_estimates.append(est3)
            tp_ground_truth.append(gt_rel)
            tp_segments.append(seg)
        else:
            fp_segments.append(seg)
        if log is not None and (pos + 1) % 200 == 0:
            say(f"  {pos + 1}/{len(kf)} keyframes")

    sweep = pr_sweep(records, cfg.cosine_threshold)
    stats = pose_metrics(tp_estimates, tp_ground_truth) if tp_estimates else None

    (out_dir / "pr_curve.csv").write_text(
        "threshold,precision,recall,f1\n"
        + "".join(
            f"{_fmt(p.threshold)},{_fmt(p.precision)},{_fmt(p.recall)},{_fmt(p.f1)}\n"
            for p in sweep.points
        )
    )
    (out_dir / "matches.csv").write_text(
        "query,match,d_l1,d_r,shift,label\n" + "".join(r + "\n" for r in match_rows)
    )
    (out_dir / "poses.csv").write_text(
        "query,match,tx,ty,tz,roll_deg,pitch_deg,yaw_deg,mse,converged,success\n"
        + "".join(r + "\n" for r in pose_rows)
    )
    if svg:
        trajectory_svg(kf_pos[:, ax], tp_segments, fp_segments, out_dir / "trajectory.svg")

    report = {
        "dataset": {
            "root": str(dataset.root),
            "format": dataset.fmt,
            "scan_count": len(dataset.scans),
            "keyframes": len(kf),
            "keyframes_missing_scans": missing,
            "degenerate_frames": degenerate_frames,
            "queries": len(records),
        },
        "pr": {
            "max_f1": sweep.best.f1,
            "threshold": sweep.best.threshold,
            "precision": sweep.best.precision,
            "recall": sweep.best.recall,
            "tp": sweep.best.tp,
            "fp": sweep.best.fp,
            "fn": sweep.best.fn,
            "tn": sweep.best.tn,
            "eligible_queries": sweep.n_eligible,
            "recall_eligible_queries": sweep.recall_eligible,
            "recall_all_queries": sweep.recall_all,
            "degenerate": sweep.degenerate,
        },
        "pose": None
        if stats is None
        else {
            "rte_mean_m": stats.rte_mean,
            "rte_std_m": stats.rte_std,
            "rre_mean_deg": stats.rre_mean,
            "rre_std_deg": stats.rre_std,
            "success_rate": stats.success_rate,
            "count": stats.count,
        },
        "runtime_ms": runtime_report(timer),
        "config": to_dict(cfg),
    }
    (out_dir / "report.json").write_text(
        json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n"
    )
    return report
