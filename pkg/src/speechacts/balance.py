"""SMOTE oversampling for one label's binary training set.

The smaller side is filled with synthetic points, each interpolated between
a minority example and one of its k nearest minority neighbors, until both
sides have equal counts. Real examples are never modified or removed, and
only training folds may ever pass through here.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

REAL = "real"
SYNTHETIC = "synthetic"


@dataclass
class DenseExample:
    """A dense feature row tagged with whether it was observed or synthesized."""

    values: np.ndarray
    origin: str = REAL


def derive_seed(base_seed: int, label: str) -> int:
    """Stable per-label seed: base XOR a sha256 prefix of the label name.

    Keeps per-label SMOTE streams independent of the order labels are
    processed in (and of Python's randomized str hash).
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (base_seed ^ int.from_bytes(digest[:4], "big")) & 0xFFFFFFFF


def nearest_neighbors(point: np.ndarray, candidates: np.ndarray, k: int) -> list[int]:
    """Indices of the k candidates closest to point (Euclidean).

    Ties break toward the lower index; fewer than k candidates means all of
    them are returned. The candidate set must not contain the query point's
    own row.
    """
    if candidates.shape[0] == 0:
        raise ValueError("empty candidate set")
    if k < 1:
        raise ValueError("k must be >= 1")
    dists = np.linalg.norm(candidates - point, axis=1)
    order = np.argsort(dists, kind="stable")
    return order[: min(k, len(order))].tolist()


def synthesize(x: np.ndarray, neighbor: np.ndarray, r: float) -> DenseExample:
    """Interpolate x + r * (neighbor - x) for r in [0, 1)."""
    if x.shape != neighbor.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {neighbor.shape}")
    return DenseExample(values=x + r * (neighbor - x), origin=SYNTHETIC)


def smote_balance(
    positives: list[DenseExample],
    negatives: list[DenseExample],
    k: int = 5,
    seed: int = 0,
) -> tuple[list[DenseExample], list[DenseExample]]:
    """Grow the smaller side with synthetic points until the counts match.

    Each synthetic point starts from a uniformly chosen minority example and
    interpolates toward one of its k nearest minority neighbors with a fresh
    r in [0, 1). The effective k is min(k, minority_count - 1); a singleton
    minority degenerates to duplication. The larger side is returned as is.
    """
    if not positives or not negatives:
        raise ValueError("smote_balance needs at least one example on each side")
    if k < 1:
        raise ValueError("k must be >= 1")

    if len(positives) == len(negatives):
        return positives, negatives
    if len(positives) < len(negatives):
        minority, majority, positives_minor = positives, negatives, True
    else:
        minority, majority, positives_minor = negatives, positives, False

    rng = np.random.default_rng(seed)
    m = len(minority)
    values = np.stack([ex.values for ex in minority])
    need = len(majority) - m

    if m == 1:
        synthetic = [DenseExample(values[0].copy(), SYNTHETIC) for _ in range(need)]
    else:
        eff_k = min(k, m - 1)
        # candidate row i excludes itself; neighbor ids map back past the gap
        neighborhoods = []
        for i in range(m):
            others = np.delete(values, i, axis=0)
            picked = nearest_neighbors(values[i], others, eff_k)
            neighborhoods.append([j if j < i else j + 1 for j in picked])
        synthetic = []
        for _ in range(need):
            i = int(rng.integers(0, m))
            hood = neighborhoods[i]
            j = hood[int(rng.integers(0, len(hood)))]
            r = float(rng.random())
            synthetic.append(synthesize(values[i], values[j], r))

    grown = minority + synthetic
    return (grown, majority) if positives_minor else (majority, grown)
