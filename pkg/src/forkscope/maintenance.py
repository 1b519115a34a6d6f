"""Maintenance activity features, clustering, and key-attribute selection.

Each repository is summarized by 32 numeric features: 5 engagement
counters, 3 developer-engagement ratios (trailing year split into 3/6/12
month periods), 6 popularity counters, and 6 code-update statistics for
each of the 3/6/12 month windows. Repositories are grouped with seeded
k-means (silhouette-scored), and the attributes that explain a grouping
are picked by a correlation-based best-first search.

Conventions: months are fixed 30-day spans, statistics use the population
standard deviation, windows are half-open ``(as_of - span, as_of]``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyHistory,
    InvalidInput,
    KTooLarge,
    KTooSmall,
    LabelLengthMismatch,
    TooFewVectors,
)
from .history import RepoHistory
from .hosting import HostingMetadata

MONTH_SECS = 30 * 86400
WINDOW_MONTHS = {"3m": 3, "6m": 6, "12m": 12}

_WINDOW_STAT_NAMES = (
    "mean_additions",
    "std_additions",
    "mean_deletions",
    "std_deletions",
    "mean_commit_interval_secs",
    "std_commit_interval_secs",
)

FEATURE_COLUMNS: tuple[str, ...] = (
    "commits",
    "branches",
    "releases",
    "contributors",
    "pull_requests",
    "mde_3m",
    "mde_6m",
    "mde_12m",
    "watch",
    "star",
    "fork",
    "issues",
    "open_issues",
    "closed_issues",
    *(f"{stat}_{w}" for w in ("3m", "6m", "12m") for stat in _WINDOW_STAT_NAMES),
)


@dataclass(frozen=True)
class WindowStats:
    mean_additions: float
    std_additions: float
    mean_deletions: float
    std_deletions: float
    mean_commit_interval_secs: float
    std_commit_interval_secs: float


@dataclass(frozen=True)
class EngagementCounts:
    commits: int
    branches: int
    releases: int
    contributors: int
    pull_requests: int


@dataclass(frozen=True)
class PopularityCounts:
    watch: int
    star: int
    fork: int
    issues: int
    open_issues: int
    closed_issues: int


@dataclass(frozen=True)
class MdeValues:
    mde_3m: float
    mde_6m: float
    mde_12m: float


@dataclass(frozen=True)
class FeatureVector:
    """The 32 maintenance features for one repository."""

    repo_id: str
    engagement: EngagementCounts
    mde: MdeValues
    popularity: PopularityCounts
    updates: dict[str, WindowStats]

    def flatten(self) -> dict[str, float]:
        row = {
            "commits": float(self.engagement.commits),
            "branches": float(self.engagement.branches),
            "releases": float(self.engagement.releases),
            "contributors": float(self.engagement.contributors),
            "pull_requests": float(self.engagement.pull_requests),
            "mde_3m": self.mde.mde_3m,
            "mde_6m": self.mde.mde_6m,
            "mde_12m": self.mde.mde_12m,
            "watch": float(self.popularity.watch),
            "star": float(self.popularity.star),
            "fork": float(self.popularity.fork),
            "issues": float(self.popularity.issues),
            "open_issues": float(self.popularity.open_issues),
            "closed_issues": float(self.popularity.closed_issues),
        }
        for w in ("3m", "6m", "12m"):
            stats = self.updates[w]
            for name in _WINDOW_STAT_NAMES:
                row[f"{name}_{w}"] = float(getattr(stats, name))
        assert len(row) == 32 and tuple(row) == FEATURE_COLUMNS
        return row


def _pop_std(values: Sequence[float]) -> float:
    n = len(values)
    if n == 0:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def compute_mde(contributors_per_period: Sequence[int], distinct_total: int) -> float:
    """Mean over periods of (distinct contributors in period / distinct
    contributors overall). 0 when nobody contributed at all."""
    if not contributors_per_period:
        raise InvalidInput("at least one period is required")
    if any(c < 0 for c in contributors_per_period) or distinct_total < 0:
        raise InvalidInput("contributor counts must be non-negative")
    if distinct_total < max(contributors_per_period):
        raise InvalidInput(
            "distinct_total cannot be smaller than any single period count"
        )
    if distinct_total == 0:
        return 0.0
    n = len(contributors_per_period)
    return sum(c / distinct_total for c in contributors_per_period) / n


def extract_features(
    history: RepoHistory, meta: HostingMetadata, as_of: int
) -> FeatureVector:
    """Compute the 32-feature summary of one repository as of a timestamp."""
    if not history.commits:
        raise EmptyHistory(f"{history.repo_id}: no commits")

    times = sorted(c.author_time for c in history.commits)
    by_time = sorted(history.commits, key=lambda c: c.author_time)

    updates: dict[str, WindowStats] = {}
    for label, months in WINDOW_MONTHS.items():
        lo = as_of - months * MONTH_SECS
        in_window = [c for c in by_time if lo < c.author_time <= as_of]
        if in_window:
            adds = [sum(len(fc.added_lines) for fc in c.file_changes) for c in in_window]
            dels = [sum(len(fc.deleted_lines) for fc in c.file_changes) for c in in_window]
            mean_add, std_add = sum(adds) / len(adds), _pop_std(adds)
            mean_del, std_del = sum(dels) / len(dels), _pop_std(dels)
        else:
            mean_add = std_add = mean_del = std_del = 0.0
        stamps = [c.author_time for c in in_window]
        gaps = [b - a for a, b in zip(stamps, stamps[1:])]
        if gaps:
            mean_gap, std_gap = sum(gaps) / len(gaps), _pop_std(gaps)
        else:
            mean_gap = std_gap = 0.0
        updates[label] = WindowStats(
            mean_additions=mean_add,
            std_additions=std_add,
            mean_deletions=mean_del,
            std_deletions=std_del,
            mean_commit_interval_secs=float(mean_gap),
            std_commit_interval_secs=float(std_gap),
        )

    mde_values = {}
    year_lo = as_of - 12 * MONTH_SECS
    year_commits = [c for c in by_time if year_lo < c.author_time <= as_of]
    union = {c.author_id for c in year_commits}
    for label, months in WINDOW_MONTHS.items():
        n_periods = 12 // months
        counts = []
        for p in range(n_periods):
            hi = as_of - p * months * MONTH_SECS
            lo = as_of - (p + 1) * months * MONTH_SECS
            counts.append(len({c.author_id for c in year_commits if lo < c.author_time <= hi}))
        mde_values[label] = compute_mde(counts, len(union))

    return FeatureVector(
        repo_id=history.repo_id,
        engagement=EngagementCounts(
            commits=len(history.commits),
            branches=meta.branches,
            releases=meta.releases,
            contributors=len({c.author_id for c in history.commits}),
            pull_requests=meta.pull_requests,
        ),
        mde=MdeValues(
            mde_3m=mde_values["3m"], mde_6m=mde_values["6m"], mde_12m=mde_values["12m"]
        ),
        popularity=PopularityCounts(
            watch=meta.watch,
            star=meta.star,
            fork=meta.fork_count,
            issues=meta.issues_total,
            open_issues=meta.issues_open,
            closed_issues=meta.issues_closed,
        ),
        updates=updates,
    )


# --- standardization ----------------------------------------------------------

@dataclass
class StandardizedMatrix:
    matrix: np.ndarray
    feature_names: tuple[str, ...]
    repo_ids: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    zero_variance: tuple[bool, ...]


def standardize_matrix(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[bool, ...]]:
    """Z-score columns (population std). Constant columns map to zeros."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise TooFewVectors("standardization needs at least two rows")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    flags = tuple(bool(s == 0.0) for s in std)
    safe = np.where(std == 0.0, 1.0, std)
    z = (matrix - mean) / safe
    z[:, np.array(flags, dtype=bool)] = 0.0
    return z, mean, std, flags


def standardize(vectors: Sequence[FeatureVector]) -> StandardizedMatrix:
    if len(vectors) < 2:
        raise TooFewVectors("standardization needs at least two feature vectors")
    rows = [v.flatten() for v in vectors]
    matrix = np.array([[r[c] for c in FEATURE_COLUMNS] for r in rows], dtype=float)
    z, mean, std, flags = standardize_matrix(matrix)
    return StandardizedMatrix(
        matrix=z,
        feature_names=FEATURE_COLUMNS,
        repo_ids=tuple(v.repo_id for v in vectors),
        mean=mean,
        std=std,
        zero_variance=flags,
    )


# --- k-means ------------------------------------------------------------------

@dataclass(frozen=True)
class SilhouettePoint:
    a: float
    b: float
    s: float


@dataclass
class ClusteringResult:
    k: int
    ids: tuple[str, ...]
    labels: tuple[int, ...]
    centroids: np.ndarray
    silhouette: float
    per_point: dict[str, SilhouettePoint]
    objective_trace: tuple[float, ...]

    @property
    def assignments(self) -> dict[str, int]:
        return dict(zip(self.ids, self.labels))


def kmeans(
    matrix: np.ndarray,
    k: int,
    seed: int,
    ids: Sequence[str] | None = None,
    max_iter: int = 300,
) -> ClusteringResult:
    """Seeded, deterministic k-means (k-means++ start, Lloyd iterations
    to an assignment fixpoint). Empty clusters are re-seeded from the
    point farthest from its assigned centroid."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    rows = matrix.shape[0]
    if k < 2:
        raise KTooSmall(f"k must be at least 2, got {k}")
    if k > rows:
        raise KTooLarge(f"k={k} exceeds the {rows} available points")
    point_ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(rows))
    if len(point_ids) != rows:
        raise LabelLengthMismatch("ids must align with matrix rows")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeans_pp(matrix, k, rng)
    labels = _assign(matrix, centroids)
    trace = [_objective(matrix, centroids, labels)]
    for _ in range(max_iter):
        centroids = _update_centroids(matrix, labels, centroids, k)
        new_labels = _assign(matrix, centroids)
        trace.append(_objective(matrix, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    sil_points = silhouette_points(matrix, labels)
    per_point = {pid: sp for pid, sp in zip(point_ids, sil_points)}
    overall = sum(sp.s for sp in sil_points) / rows
    return ClusteringResult(
        k=k,
        ids=point_ids,
        labels=tuple(int(x) for x in labels),
        centroids=centroids,
        silhouette=overall,
        per_point=per_point,
        objective_trace=tuple(trace),
    )


def _kmeans_pp(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    rows = matrix.shape[0]
    first = int(rng.integers(rows))
    centers = [matrix[first].copy()]
    d2 = ((matrix - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(rows, p=d2 / total))
        else:
            # every point coincides with a chosen center
            idx = int(rng.integers(rows))
        centers.append(matrix[idx].copy())
        d2 = np.minimum(d2, ((matrix - matrix[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(matrix: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def _objective(matrix: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((matrix - centroids[labels]) ** 2).sum())


def _update_centroids(
    matrix: np.ndarray, labels: np.ndarray, old: np.ndarray, k: int
) -> np.ndarray:
    centroids = old.copy()
    dist_to_own = ((matrix - old[labels]) ** 2).sum(axis=1)
    for c in range(k):
        members = labels == c
        if members.any():
            centroids[c] = matrix[members].mean(axis=0)
        else:
            far = int(dist_to_own.argmax())
            centroids[c] = matrix[far]
            dist_to_own[far] = -1.0
    return centroids


def silhouette_points(matrix: np.ndarray, labels: np.ndarray) -> list[SilhouettePoint]:
    """Per-point silhouette values; singletons score 0 by convention."""
    matrix = np.asarray(matrix, dtype=float)
    labels = np.asarray(labels)
    rows = matrix.shape[0]
    diff = matrix[:, None, :] - matrix[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    clusters = sorted(set(int(x) for x in labels))
    points: list[SilhouettePoint] = []
    for i in range(rows):
        own = labels[i]
        same = (labels == own) & (np.arange(rows) != i)
        size_own = int((labels == own).sum())
        if size_own <= 1:
            points.append(SilhouettePoint(a=0.0, b=0.0, s=0.0))
            continue
        a = float(dist[i, same].mean())
        b = min(
            float(dist[i, labels == c].mean()) for c in clusters if c != own
        )
        denom = max(a, b)
        s = (b - a) / denom if denom > 0 else 0.0
        points.append(SilhouettePoint(a=a, b=b, s=s))
    return points


@dataclass
class KSelection:
    best_k: int
    curve: tuple[tuple[int, float], ...]
    best: ClusteringResult


def select_k(
    matrix: np.ndarray,
    k_range: tuple[int, int],
    seed: int,
    ids: Sequence[str] | None = None,
) -> KSelection:
    """Run k-means over an inclusive k range; highest overall silhouette
    wins, ties going to the smaller k."""
    lo, hi = k_range
    if lo > hi:
        raise InvalidInput(f"empty k range [{lo}, {hi}]")
    best: ClusteringResult | None = None
    curve: list[tuple[int, float]] = []
    for k in range(lo, hi + 1):
        result = kmeans(matrix, k, seed, ids=ids)
        curve.append((k, result.silhouette))
        if best is None or result.silhouette > best.silhouette:
            best = result
    assert best is not None
    return KSelection(best_k=best.k, curve=tuple(curve), best=best)


# --- correlation-based attribute selection ------------------------------------

@dataclass
class AttributeSelection:
    selected: tuple[str, ...]
    merit: float
    trace: tuple[tuple[tuple[str, ...], float], ...]


def _safe_corr(x: np.ndarray, y: np.ndarray) -> float:
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def subset_merit(
    subset: Sequence[int], r_cf: np.ndarray, r_ff: np.ndarray
) -> float:
    """Correlation-based merit: rewards feature-label correlation,
    penalizes feature-feature redundancy."""
    k = len(subset)
    if k == 0:
        return 0.0
    rcf = float(r_cf[list(subset)].mean())
    if k == 1:
        rff = 0.0
    else:
        idx = list(subset)
        pair_sum = 0.0
        for a in range(k):
            for b in range(a + 1, k):
                pair_sum += r_ff[idx[a], idx[b]]
        rff = pair_sum / (k * (k - 1) / 2)
    return k * rcf / math.sqrt(k + k * (k - 1) * rff)


def label_correlations(matrix: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Mean absolute point-biserial correlation of each feature against
    the one-hot encoded cluster labels."""
    matrix = np.asarray(matrix, dtype=float)
    labels = np.asarray(labels)
    classes = sorted(set(int(x) for x in labels))
    cols = matrix.shape[1]
    out = np.zeros(cols)
    for j in range(cols):
        vals = [abs(_safe_corr(matrix[:, j], (labels == c).astype(float))) for c in classes]
        out[j] = sum(vals) / len(vals)
    return out


def best_first_attributes(
    matrix: np.ndarray,
    labels: Sequence[int],
    stop_after: int = 5,
    feature_names: Sequence[str] | None = None,
) -> AttributeSelection:
    """Greedy best-first search over feature subsets by correlation merit.

    Starts from the empty set, expands by single-feature additions, and
    stops after ``stop_after`` consecutive expansions that fail to improve
    the best merit seen. All tie-breaks are by feature name so the result
    does not depend on column order.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    rows, cols = matrix.shape if matrix.size else (len(labels), 0)
    if len(labels) != rows and cols:
        raise LabelLengthMismatch(
            f"{len(labels)} labels for {rows} matrix rows"
        )
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{i:02d}" for i in range(cols)
    )
    if len(names) != cols:
        raise InvalidInput("feature_names must match the matrix columns")
    if cols == 0:
        return AttributeSelection(selected=(), merit=0.0, trace=(((), 0.0),))

    order = sorted(range(cols), key=lambda i: names[i])
    r_cf = label_correlations(matrix, labels)
    r_ff = np.zeros((cols, cols))
    for a in range(cols):
        for b in range(a + 1, cols):
            r_ff[a, b] = r_ff[b, a] = abs(_safe_corr(matrix[:, a], matrix[:, b]))

    def key_of(subset: tuple[int, ...]) -> tuple[str, ...]:
        return tuple(sorted(names[i] for i in subset))

    start: tuple[int, ...] = ()
    best_subset, best_merit = start, 0.0
    heap: list[tuple[float, tuple[str, ...], tuple[int, ...]]] = [(0.0, (), start)]
    visited = {frozenset(start)}
    trace: list[tuple[tuple[str, ...], float]] = []
    stale = 0

    while heap and stale < stop_after:
        neg_merit, _, node = heapq.heappop(heap)
        trace.append((tuple(names[i] for i in node), -neg_merit))
        improved = False
        for idx in order:
            if idx in node:
                continue
            child = node + (idx,)
            fs = frozenset(child)
            if fs in visited:
                continue
            visited.add(fs)
            merit = subset_merit(child, r_cf, r_ff)
            if merit > best_merit:
                best_merit = merit
                best_subset = child
                improved = True
            heapq.heappush(heap, (-merit, key_of(child), child))
        stale = 0 if improved else stale + 1

    return AttributeSelection(
        selected=tuple(names[i] for i in best_subset),
        merit=best_merit,
        trace=tuple(trace),
    )
