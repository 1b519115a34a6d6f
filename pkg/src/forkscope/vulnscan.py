"""Vulnerability-signature scanning over commit histories.

A signature pairs code fragments that identify the vulnerable region with
fragments that identify its fix. Matching is whitespace-insensitive string
containment over the concatenation of eligible source files.

Two scanners share one verdict definition:

* :func:`scan_history_oracle` checks out and searches every snapshot on
  the head's first-parent chain (the naive baseline).
* :func:`scan_history` replays diffs once and evaluates full presence only
  at commits that could flip it: the changed block, padded with at least a
  3-line context window (widened until it covers the longest fragment),
  matched some fragment; a file was added/deleted/renamed or turned
  binary; the edit sat too close to a file boundary to rule out a match
  spanning files; or the commit changed more files than
  ``fallback_file_limit`` (diff inspection is then skipped entirely in
  favor of the reconstructed snapshot, mirroring hosting-platform diff
  limits).

Both report identical statuses and timestamps; the diff path is just
cheaper.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DuplicateFinding, EmptyInput, InvalidInput
from .history import (
    STATUS_MODIFIED,
    CommitRecord,
    RepoHistory,
    SnapshotTree,
    apply_change,
    checkout_snapshot,
    locate_splice,
    split_lines,
)
from .similarity import DEFAULT_EXTENSIONS

STATUS_VULNERABLE = "Vulnerable"
STATUS_PATCHED = "Patched"
STATUS_NEVER_PRESENT = "NeverPresent"

DEFAULT_FALLBACK_FILE_LIMIT = 30
MIN_CONTEXT_LINES = 3


@dataclass(frozen=True)
class VulnSignature:
    """Fragment pair defining one vulnerability and its fix."""

    cve_id: str
    cvss: float
    category: str
    reference_patch_time: int
    vuln_fragments: tuple[str, ...]
    patch_fragments: tuple[str, ...]
    match_mode: str = "all"  # or "any"

    def __post_init__(self):
        if not self.vuln_fragments or not self.patch_fragments:
            raise InvalidInput(
                f"{self.cve_id}: need at least one vulnerable and one patch fragment"
            )
        for frag in (*self.vuln_fragments, *self.patch_fragments):
            if not normalize_code(frag):
                raise InvalidInput(f"{self.cve_id}: fragment is empty after stripping")
        if self.match_mode not in ("all", "any"):
            raise InvalidInput(f"{self.cve_id}: match_mode must be 'all' or 'any'")
        if not 0.0 <= self.cvss <= 10.0:
            raise InvalidInput(f"{self.cve_id}: cvss must be within 0..10")


@dataclass(frozen=True)
class VulnFinding:
    """Per-repository verdict for one signature."""

    repo_id: str
    cve_id: str
    status: str
    introduced_at: int | None = None
    patched_at: int | None = None
    time_to_patch_secs: int | None = None


def load_signatures(path: str | Path) -> list[VulnSignature]:
    """Read a signature file: ``{"signatures": [...]}`` (see README)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read signature file {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("signatures"), list):
        raise InvalidInput(f"{path}: expected an object with a 'signatures' array")
    out = []
    for i, entry in enumerate(doc["signatures"]):
        if not isinstance(entry, dict):
            raise InvalidInput(f"{path}: signatures[{i}] must be an object")
        try:
            out.append(
                VulnSignature(
                    cve_id=str(entry["cve_id"]),
                    cvss=float(entry["cvss"]),
                    category=str(entry.get("category", "")),
                    reference_patch_time=int(entry["reference_patch_time"]),
                    vuln_fragments=tuple(entry["vuln_fragments"]),
                    patch_fragments=tuple(entry["patch_fragments"]),
                    match_mode=str(entry.get("match_mode", "all")),
                )
            )
        except KeyError as exc:
            raise InvalidInput(f"{path}: signatures[{i}] missing field {exc}") from exc
    return out


def normalize_code(text: str) -> str:
    """Remove every Unicode whitespace character; nothing else."""
    return "".join(text.split())


# --- presence ------------------------------------------------------------------

def _eligible_texts(
    files: dict[str, str], binary_paths: set[str], extensions: tuple[str, ...]
) -> dict[str, str]:
    exts = tuple(e.lower() for e in extensions)
    return {
        p: t
        for p, t in files.items()
        if p not in binary_paths and p.lower().endswith(exts)
    }


def _fragments_present(
    corpus: str, fragments: Sequence[str], match_mode: str
) -> bool:
    hits = (normalize_code(f) in corpus for f in fragments)
    return all(hits) if match_mode == "all" else any(hits)


def scan_latest(
    snapshot: SnapshotTree,
    sig: VulnSignature,
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS,
) -> tuple[bool, list[str]]:
    """Match the signature's vulnerable fragments against one snapshot.

    Returns (matched per match_mode, files containing any fragment).
    """
    texts = _eligible_texts(snapshot.files, snapshot.binary_paths, extensions)
    normalized = {p: normalize_code(t) for p, t in sorted(texts.items())}
    corpus = "".join(normalized.values())
    matched = _fragments_present(corpus, sig.vuln_fragments, sig.match_mode)
    frags = [normalize_code(f) for f in sig.vuln_fragments]
    files = [p for p, t in normalized.items() if any(f in t for f in frags)]
    return matched, files


# --- verdict derivation ---------------------------------------------------------

def _derive_finding(
    repo_id: str,
    sig: VulnSignature,
    chain: Sequence[CommitRecord],
    vuln_present: Sequence[bool],
    patch_present: Sequence[bool],
) -> VulnFinding:
    n = len(chain)
    first_vuln = next((i for i in range(n) if vuln_present[i]), None)
    if first_vuln is None:
        return VulnFinding(repo_id=repo_id, cve_id=sig.cve_id, status=STATUS_NEVER_PRESENT)
    introduced_at = chain[first_vuln].author_time
    if vuln_present[n - 1]:
        return VulnFinding(
            repo_id=repo_id,
            cve_id=sig.cve_id,
            status=STATUS_VULNERABLE,
            introduced_at=introduced_at,
        )
    patched_idx = next(
        (i for i in range(first_vuln, n) if patch_present[i]), None
    )
    if patched_idx is None:
        # vulnerable code vanished without the canonical fix text; the
        # removal commit is the best patch-time estimate
        patched_idx = next(i for i in range(first_vuln + 1, n) if not vuln_present[i])
    patched_at = chain[patched_idx].author_time
    return VulnFinding(
        repo_id=repo_id,
        cve_id=sig.cve_id,
        status=STATUS_PATCHED,
        introduced_at=introduced_at,
        patched_at=patched_at,
        time_to_patch_secs=patched_at - sig.reference_patch_time,
    )


def scan_history_oracle(
    history: RepoHistory,
    sig: VulnSignature,
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS,
) -> VulnFinding:
    """Baseline scanner: reconstruct and search every snapshot."""
    if not history.commits:
        raise EmptyInput(f"{history.repo_id}: empty history")
    chain = history.first_parent_chain()
    vuln_present: list[bool] = []
    patch_present: list[bool] = []
    for commit in chain:
        snapshot = checkout_snapshot(history, commit.id)
        texts = _eligible_texts(snapshot.files, snapshot.binary_paths, extensions)
        corpus = "".join(normalize_code(t) for _, t in sorted(texts.items()))
        vuln_present.append(_fragments_present(corpus, sig.vuln_fragments, sig.match_mode))
        patch_present.append(_fragments_present(corpus, sig.patch_fragments, sig.match_mode))
    return _derive_finding(history.repo_id, sig, chain, vuln_present, patch_present)


def scan_history(
    history: RepoHistory,
    sig: VulnSignature,
    fallback_file_limit: int = DEFAULT_FALLBACK_FILE_LIMIT,
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS,
) -> VulnFinding:
    """Diff-driven scanner; see the module docstring for the trigger rules."""
    if not history.commits:
        raise EmptyInput(f"{history.repo_id}: empty history")
    chain = history.first_parent_chain()
    exts = tuple(e.lower() for e in extensions)
    all_fragments = [normalize_code(f) for f in (*sig.vuln_fragments, *sig.patch_fragments)]
    frag_reach = max(len(f) for f in all_fragments) - 1

    tree = SnapshotTree()
    vuln_present: list[bool] = []
    patch_present: list[bool] = []
    cur_vuln = False
    cur_patch = False

    for commit in chain:
        must_rescan = len(commit.file_changes) > fallback_file_limit
        for change in commit.file_changes:
            relevant = change.path.lower().endswith(exts) or (
                change.old_path or ""
            ).lower().endswith(exts)
            pos = nadd = 0
            if relevant and not must_rescan:
                if (
                    change.status != STATUS_MODIFIED
                    or change.binary
                    or change.path in tree.binary_paths
                ):
                    must_rescan = True
                else:
                    old_lines = split_lines(tree.files[change.path])
                    pos, ndel, nadd = locate_splice(old_lines, change)
                    if _window_hits(old_lines, pos, ndel, all_fragments, frag_reach):
                        must_rescan = True
            apply_change(tree, change)
            if relevant and not must_rescan and change.status == STATUS_MODIFIED:
                new_lines = split_lines(tree.files[change.path])
                if _window_hits(new_lines, pos, nadd, all_fragments, frag_reach):
                    must_rescan = True
        if must_rescan:
            texts = _eligible_texts(tree.files, tree.binary_paths, extensions)
            corpus = "".join(normalize_code(t) for _, t in sorted(texts.items()))
            cur_vuln = _fragments_present(corpus, sig.vuln_fragments, sig.match_mode)
            cur_patch = _fragments_present(corpus, sig.patch_fragments, sig.match_mode)
        vuln_present.append(cur_vuln)
        patch_present.append(cur_patch)

    return _derive_finding(history.repo_id, sig, chain, vuln_present, patch_present)


def _window_hits(
    lines: list[str],
    pos: int,
    run_len: int,
    fragments: list[str],
    frag_reach: int,
) -> bool:
    """Check fragments against the changed run, padded by at least
    MIN_CONTEXT_LINES and by enough text to cover the longest fragment.
    Reports a hit when the window is clipped by a file boundary, since a
    match could then continue into a neighboring file."""
    lo = pos
    chars = 0
    context = 0
    while lo > 0 and (context < MIN_CONTEXT_LINES or chars < frag_reach):
        lo -= 1
        context += 1
        chars += len(normalize_code(lines[lo]))
    clipped = lo == 0 and (chars < frag_reach)
    hi = pos + run_len
    chars = 0
    context = 0
    while hi < len(lines) and (context < MIN_CONTEXT_LINES or chars < frag_reach):
        context += 1
        chars += len(normalize_code(lines[hi]))
        hi += 1
    clipped = clipped or (hi == len(lines) and chars < frag_reach)
    if clipped:
        return True
    window = normalize_code("".join(lines[lo:hi]))
    return any(f in window for f in fragments)


# --- statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class PatchTimeStats:
    median_days: float
    mean_days: float
    std_days: float
    within_16_days_fraction: float
    count: int


def patch_time_stats(findings: Sequence[VulnFinding]) -> PatchTimeStats:
    """Days-to-patch statistics over patched findings (lower-middle
    median, population std)."""
    days = sorted(
        f.time_to_patch_secs / 86400.0
        for f in findings
        if f.status == STATUS_PATCHED and f.time_to_patch_secs is not None
    )
    if not days:
        raise EmptyInput("no patched findings with a patch time")
    n = len(days)
    median = days[(n - 1) // 2]
    mean = sum(days) / n
    std = math.sqrt(sum((d - mean) ** 2 for d in days) / n)
    within = sum(1 for d in days if d <= 16.0) / n
    return PatchTimeStats(
        median_days=median,
        mean_days=mean,
        std_days=std,
        within_16_days_fraction=within,
        count=n,
    )


@dataclass(frozen=True)
class VulnCensus:
    per_repo: tuple[tuple[str, int], ...]
    buckets: tuple[tuple[str, int], ...]


def vuln_census(findings: Sequence[VulnFinding]) -> VulnCensus:
    """Unpatched-vulnerability counts per repo plus cumulative buckets
    (0, >=1, >=2, >=3, >=4 unpatched)."""
    seen: set[tuple[str, str]] = set()
    counts: dict[str, int] = {}
    for f in findings:
        key = (f.repo_id, f.cve_id)
        if key in seen:
            raise DuplicateFinding(f"duplicate finding for {key}")
        seen.add(key)
        counts.setdefault(f.repo_id, 0)
        if f.status == STATUS_VULNERABLE:
            counts[f.repo_id] += 1
    per_repo = tuple(sorted(counts.items()))
    values = [c for _, c in per_repo]
    buckets = (
        ("0", sum(1 for v in values if v == 0)),
        (">=1", sum(1 for v in values if v >= 1)),
        (">=2", sum(1 for v in values if v >= 2)),
        (">=3", sum(1 for v in values if v >= 3)),
        (">=4", sum(1 for v in values if v >= 4)),
    )
    return VulnCensus(per_repo=per_repo, buckets=buckets)
