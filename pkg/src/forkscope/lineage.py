"""Fork-lineage inference between a candidate parent and its children.

Heuristic 1 matches shared commit-id prefixes: a child whose first commits
reappear identically ordered in the parent was forked through the hosting
platform, and the first divergent child commit marks the fork time.

Heuristic 2 covers bulk uploads (no shared ids): the child commit touching
the most files is the hypothetical fork point, and the parent version is
whichever commit in the preceding six-month window maximizes snapshot
similarity. The verdict is Forked when that maximum clears the acceptance
threshold, which is derived from confirmed prefix forks as
``mean - 3 * std`` of their similarity scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

from .errors import EmptyHistory, InvalidInput, NoEligibleFiles, TooFewScores
from .history import STATUS_ADDED, STATUS_MODIFIED, RepoHistory, checkout_snapshot
from .similarity import SimilarityConfig, repo_similarity

HEURISTIC_PREFIX = "H1"
HEURISTIC_BULK_UPLOAD = "H2"
HEURISTIC_NONE = "None"

VERDICT_FORKED = "Forked"
VERDICT_NOT_FORKED = "NotForked"
VERDICT_IDENTICAL = "Identical"
VERDICT_UNDETERMINED = "Undetermined"

DEFAULT_PREFIX_PROBE = 10
DEFAULT_WINDOW_SECS = 6 * 30 * 86400
DEFAULT_THRESHOLD = 0.929


@dataclass(frozen=True)
class ForkReport:
    child_id: str
    parent_id: str
    heuristic: str
    verdict: str
    fork_commit_child: str | None = None
    parent_version: str | None = None
    fork_time: int | None = None
    similarity_at_fork: float | None = None
    sampled: bool = False


@dataclass(frozen=True)
class ThresholdDerivation:
    """Fork-acceptance threshold: mean of confirmed-fork similarity scores
    minus three standard deviations, clamped at zero. When fewer than two
    scores exist the configured default is used and flagged."""

    sample_scores: tuple[float, ...]
    mean: float | None
    three_sigma: float | None
    threshold: float
    fallback: bool = False


@dataclass(frozen=True)
class LineageConfig:
    prefix_probe: int = DEFAULT_PREFIX_PROBE
    window_secs: int = DEFAULT_WINDOW_SECS
    stride: int = 1
    default_threshold: float = DEFAULT_THRESHOLD
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)


def _snapshot_similarity(
    child: RepoHistory,
    child_commit: str,
    parent: RepoHistory,
    parent_commit: str,
    cfg: SimilarityConfig,
) -> float:
    try:
        return repo_similarity(
            checkout_snapshot(child, child_commit),
            checkout_snapshot(parent, parent_commit),
            cfg,
        ).score.value
    except NoEligibleFiles:
        return 0.0


def heuristic1(
    child: RepoHistory,
    parent: RepoHistory,
    prefix_probe: int = DEFAULT_PREFIX_PROBE,
    sim_cfg: SimilarityConfig | None = None,
) -> ForkReport:
    """Shared-commit-prefix fork detection.

    Probes the first ``prefix_probe`` ids of the child's root-ordered
    first-parent chain against the parent's chain. On success, the first
    child commit missing from the parent dates the fork; the similarity
    score compares the child's head against the parent at the fork point.
    """
    if not child.commits:
        raise EmptyHistory(f"{child.repo_id}: empty history")
    if not parent.commits:
        raise EmptyHistory(f"{parent.repo_id}: empty history")
    if prefix_probe < 1:
        raise InvalidInput("prefix_probe must be at least 1")
    sim_cfg = sim_cfg or SimilarityConfig()
    child_chain = child.first_parent_chain()
    parent_chain = parent.first_parent_chain()
    parent_ids = [c.id for c in parent_chain]
    parent_set = set(parent_ids)
    probe = min(prefix_probe, len(child_chain))

    cursor = 0
    for commit in child_chain[:probe]:
        try:
            cursor = parent_ids.index(commit.id, cursor) + 1
        except ValueError:
            return ForkReport(
                child_id=child.repo_id,
                parent_id=parent.repo_id,
                heuristic=HEURISTIC_PREFIX,
                verdict=VERDICT_NOT_FORKED,
            )

    child_set = {c.id for c in child_chain}
    if child_set <= parent_set or parent_set <= child_set:
        return ForkReport(
            child_id=child.repo_id,
            parent_id=parent.repo_id,
            heuristic=HEURISTIC_PREFIX,
            verdict=VERDICT_IDENTICAL,
        )

    divergent = next(i for i, c in enumerate(child_chain) if c.id not in parent_set)
    last_shared = child_chain[divergent - 1].id
    fork_time = child_chain[divergent].author_time
    similarity = _snapshot_similarity(
        child, child.head, parent, last_shared, sim_cfg
    )
    return ForkReport(
        child_id=child.repo_id,
        parent_id=parent.repo_id,
        heuristic=HEURISTIC_PREFIX,
        verdict=VERDICT_FORKED,
        fork_commit_child=last_shared,
        parent_version=last_shared,
        fork_time=fork_time,
        similarity_at_fork=similarity,
    )


def heuristic2(
    child: RepoHistory,
    parent: RepoHistory,
    threshold: float = DEFAULT_THRESHOLD,
    window_secs: int = DEFAULT_WINDOW_SECS,
    stride: int = 1,
    sim_cfg: SimilarityConfig | None = None,
) -> ForkReport:
    """Bulk-upload fork detection.

    The child commit with the most file additions/modifications (ties go
    to the earliest) is taken as the hypothetical fork point. Every
    ``stride``-th parent commit in the closed window
    ``[fork_time - window_secs, fork_time]`` is compared against the
    child snapshot at that commit; the best match decides.
    """
    if not child.commits:
        raise EmptyHistory(f"{child.repo_id}: empty history")
    if not parent.commits:
        raise EmptyHistory(f"{parent.repo_id}: empty history")
    if not 0.0 < threshold <= 1.0:
        raise InvalidInput(f"threshold must be in (0, 1], got {threshold}")
    sim_cfg = sim_cfg or SimilarityConfig()

    def change_weight(c):
        return sum(
            1 for fc in c.file_changes if fc.status in (STATUS_ADDED, STATUS_MODIFIED)
        )

    upload = min(
        child.commits,
        key=lambda c: (-change_weight(c), c.author_time),
    )
    fork_time = upload.author_time

    window = [
        c
        for c in sorted(parent.commits, key=lambda c: c.author_time)
        if fork_time - window_secs <= c.author_time <= fork_time
    ]
    visited = window[::stride]
    if not visited:
        return ForkReport(
            child_id=child.repo_id,
            parent_id=parent.repo_id,
            heuristic=HEURISTIC_BULK_UPLOAD,
            verdict=VERDICT_UNDETERMINED,
            fork_commit_child=upload.id,
            fork_time=fork_time,
            sampled=stride > 1,
        )

    best_score = -1.0
    best_commit = None
    for candidate in visited:
        score = _snapshot_similarity(child, upload.id, parent, candidate.id, sim_cfg)
        if score > best_score:
            best_score = score
            best_commit = candidate
    verdict = VERDICT_FORKED if best_score >= threshold else VERDICT_NOT_FORKED
    return ForkReport(
        child_id=child.repo_id,
        parent_id=parent.repo_id,
        heuristic=HEURISTIC_BULK_UPLOAD,
        verdict=verdict,
        fork_commit_child=upload.id,
        parent_version=best_commit.id,
        fork_time=fork_time,
        similarity_at_fork=best_score,
        sampled=stride > 1,
    )


def derive_threshold(h1_scores: list[float]) -> ThresholdDerivation:
    """Acceptance threshold from confirmed-fork similarity scores."""
    if len(h1_scores) < 2:
        raise TooFewScores("need at least two similarity scores")
    n = len(h1_scores)
    mean = sum(h1_scores) / n
    std = math.sqrt(sum((s - mean) ** 2 for s in h1_scores) / n)
    three_sigma = 3.0 * std
    return ThresholdDerivation(
        sample_scores=tuple(h1_scores),
        mean=mean,
        three_sigma=three_sigma,
        threshold=max(0.0, mean - three_sigma),
    )


def lineage_sweep(
    children: list[RepoHistory],
    parent: RepoHistory,
    cfg: LineageConfig | None = None,
) -> tuple[list[ForkReport], ThresholdDerivation]:
    """Run both heuristics over a corpus against one candidate parent.

    Prefix matching decides first; the similarity threshold for the
    bulk-upload pass is derived from the prefix-confirmed forks, falling
    back to the configured default when fewer than two exist.
    """
    cfg = cfg or LineageConfig()
    if not parent.commits:
        raise EmptyHistory(f"{parent.repo_id}: empty history")
    h1_reports = [
        heuristic1(child, parent, cfg.prefix_probe, cfg.similarity)
        for child in children
    ]
    h1_scores = [
        r.similarity_at_fork
        for r in h1_reports
        if r.verdict == VERDICT_FORKED and r.similarity_at_fork is not None
    ]
    if len(h1_scores) >= 2:
        derivation = derive_threshold(h1_scores)
    else:
        derivation = ThresholdDerivation(
            sample_scores=tuple(h1_scores),
            mean=None,
            three_sigma=None,
            threshold=cfg.default_threshold,
            fallback=True,
        )
    reports: list[ForkReport] = []
    for child, h1 in zip(children, h1_reports):
        if h1.verdict == VERDICT_NOT_FORKED:
            reports.append(
                heuristic2(
                    child,
                    parent,
                    threshold=derivation.threshold,
                    window_secs=cfg.window_secs,
                    stride=cfg.stride,
                    sim_cfg=cfg.similarity,
                )
            )
        else:
            reports.append(h1)
    return reports, derivation
