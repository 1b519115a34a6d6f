"""Survivability joins and the statistical summaries used in reports.

The survivability registry mirrors public listing/scam trackers as four
independent boolean flags per repository; ``inactive_any`` is their OR.
Cross-tabulations report, per group (cluster, vulnerability bucket,
similarity bucket), how many repositories carry each flag.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from scipy import special

from .errors import (
    DuplicateRegistryEntry,
    EmptyGroup,
    EmptyInput,
    InvalidInput,
    LengthMismatch,
    TooFewGroups,
    ZeroVariance,
)

log = logging.getLogger(__name__)

FLAG_FIELDS = ("delisted_market", "repo_unavailable", "scam_list_a", "scam_list_b")


@dataclass(frozen=True)
class SurvivabilityRecord:
    repo_id: str
    delisted_market: bool = False
    repo_unavailable: bool = False
    scam_list_a: bool = False
    scam_list_b: bool = False

    @property
    def inactive_any(self) -> bool:
        return (
            self.delisted_market
            or self.repo_unavailable
            or self.scam_list_a
            or self.scam_list_b
        )


def load_registry(path: str | Path) -> list[SurvivabilityRecord]:
    """Read the survivability registry CSV (true/false cells)."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for i, row in enumerate(reader):
            repo_id = (row.get("repo_id") or "").strip()
            if not repo_id:
                raise InvalidInput(f"{path}: row {i + 2} has no repo_id")
            flags = {}
            for name in FLAG_FIELDS:
                cell = (row.get(name) or "false").strip().lower()
                if cell not in ("true", "false"):
                    raise InvalidInput(
                        f"{path}: row {i + 2} field {name} must be true/false, got {cell!r}"
                    )
                flags[name] = cell == "true"
            records.append(SurvivabilityRecord(repo_id=repo_id, **flags))
    return records


@dataclass(frozen=True)
class CrossTabRow:
    group: str
    total: int
    counts: dict[str, int]
    pct: dict[str, float]


@dataclass(frozen=True)
class CrossTab:
    group_key: str
    rows: tuple[CrossTabRow, ...]
    all_row: CrossTabRow


def crosstab(
    groups: Mapping[str, object],
    registry: Sequence[SurvivabilityRecord],
    group_key: str = "group",
) -> CrossTab:
    """Per-group survivability counts with an All summary row.

    Repos missing from the registry count as all-false (warned once each);
    a repo listed twice in the registry is an error.
    """
    by_repo: dict[str, SurvivabilityRecord] = {}
    for record in registry:
        if record.repo_id in by_repo:
            raise DuplicateRegistryEntry(f"registry lists {record.repo_id!r} twice")
        by_repo[record.repo_id] = record

    flag_names = (*FLAG_FIELDS, "inactive_any")
    members: dict[object, list[SurvivabilityRecord]] = {}
    for repo_id, label in groups.items():
        record = by_repo.get(repo_id)
        if record is None:
            log.warning("repo %s missing from survivability registry; counted as active", repo_id)
            record = SurvivabilityRecord(repo_id=repo_id)
        members.setdefault(label, []).append(record)

    def row_for(label: str, records: Sequence[SurvivabilityRecord]) -> CrossTabRow:
        total = len(records)
        counts = {
            name: sum(1 for r in records if getattr(r, name)) for name in flag_names
        }
        pct = {
            name: (100.0 * counts[name] / total) if total else 0.0
            for name in flag_names
        }
        return CrossTabRow(group=label, total=total, counts=counts, pct=pct)

    try:
        ordered = sorted(members)
    except TypeError:
        ordered = sorted(members, key=str)
    rows = tuple(row_for(str(label), members[label]) for label in ordered)
    everyone = [r for label in ordered for r in members[label]]
    return CrossTab(group_key=group_key, rows=rows, all_row=row_for("All", everyone))


# --- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int


def pearson(x: Sequence[float], y: Sequence[float]) -> PearsonResult:
    """Product-moment correlation with a two-sided t-test p-value."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} samples")
    n = len(x)
    if n < 3:
        raise InvalidInput("pearson needs at least three pairs")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("pearson is undefined for a constant sample")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    dof = n - 2
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = abs(r) * math.sqrt(dof / (1.0 - r * r))
        p = 2.0 * float(special.stdtr(dof, -t))
    return PearsonResult(r=r, p=p, n=n)


@dataclass(frozen=True)
class KruskalResult:
    H: float
    p: float
    dof: int


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KruskalResult:
    """Rank test on mid-ranks with tie correction; chi-square p-value.

    When every value ties the corrected statistic is 0 by convention.
    """
    if len(groups) < 2:
        raise TooFewGroups("need at least two groups")
    for g in groups:
        if not g:
            raise EmptyGroup("groups must be non-empty")
    pooled = [v for g in groups for v in g]
    n = len(pooled)
    if n < 3:
        raise InvalidInput("need at least three observations overall")

    order = sorted(range(n), key=lambda i: pooled[i])
    ranks = [0.0] * n
    tie_sizes = []
    i = 0
    while i < n:
        j = i
        while j < n and pooled[order[j]] == pooled[order[i]]:
            j += 1
        mid = (i + 1 + j) / 2.0
        for k in range(i, j):
            ranks[order[k]] = mid
        tie_sizes.append(j - i)
        i = j

    idx = 0
    h = 0.0
    for g in groups:
        r_sum = sum(ranks[idx : idx + len(g)])
        h += r_sum * r_sum / len(g)
        idx += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)

    correction = 1.0 - sum(t**3 - t for t in tie_sizes) / (n**3 - n)
    h_corrected = 0.0 if correction == 0.0 else h / correction
    dof = len(groups) - 1
    p = float(special.chdtrc(dof, h_corrected))
    return KruskalResult(H=h_corrected, p=p, dof=dof)


@dataclass(frozen=True)
class SummaryStats:
    median: float
    mean: float
    std: float


def summary_stats(values: Sequence[float]) -> SummaryStats:
    """Median (lower-middle for even counts), mean, population std."""
    if not values:
        raise EmptyInput("summary_stats needs at least one value")
    ordered = sorted(values)
    n = len(ordered)
    median = ordered[(n - 1) // 2]
    mean = sum(ordered) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in ordered) / n)
    return SummaryStats(median=median, mean=mean, std=std)
