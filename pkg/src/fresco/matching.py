"""Descriptor comparison: circular shift search and row-wise cosine check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class MatchScore:
    d_l1: float
    best_shift: int
    d_r: float = math.nan


def circular_shift(desc: np.ndarray, k: int) -> np.ndarray:
    """Shift columns right by k: output column j = input column (j - k) mod width."""
    return np.roll(np.asarray(desc), k, axis=1)


def best_shift_l1(query: np.ndarray, candidate: np.ndarray) -> MatchScore:
    """Minimize the per-element mean |shift(query, k) - candidate| over k.

    Equivalently the candidate is shifted by -k; so best_shift is the amount
    the candidate's columns lead the query's.  Because the underlying spectra
    are centro-symmetric the descriptor is periodic in half its width, so only
    shifts in [0, width/2) are searched.  Ties go to the smallest shift.
    """
    query = np.asarray(query, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if query.shape != candidate.shape:
        raise ValueError(f"descriptor shapes differ: {query.shape} vs {candidate.shape}")
    width = query.shape[1]
    half = width // 2
    cols = (np.arange(width)[None, :] + np.arange(half)[:, None]) % width
    shifted = candidate[:, cols]  # (rows, half, width); row k = candidate shifted by -k
    dists = np.abs(query[:, None, :] - shifted).mean(axis=(0, 2))
    k = int(np.argmin(dists))
    return MatchScore(float(dists[k]), k)


def row_cosine(query: np.ndarray, candidate_shifted: np.ndarray) -> float:
    """1 - mean over rows of cosine similarity; a zero-norm row contributes 0."""
    query = np.asarray(query, dtype=np.float64)
    candidate_shifted = np.asarray(candidate_shifted, dtype=np.float64)
    if query.shape != candidate_shifted.shape:
        raise ValueError("descriptor shapes differ")
    nq = np.linalg.norm(query, axis=1)
    nc = np.linalg.norm(candidate_shifted, axis=1)
    dots = (query * candidate_shifted).sum(axis=1)
    ok = (nq > 0) & (nc > 0)
    sims = np.zeros(query.shape[0])
    sims[ok] = dots[ok] / (nq[ok] * nc[ok])
    return float(1.0 - sims.mean())
