"""End-to-end pipeline: ingest -> features -> cluster -> select-features ->
similarity -> lineage -> vulnscan -> crosstab -> stats.

Every stage reads its inputs from and writes its reports into the output
directory, so stages can be re-run individually and diffed. Outputs are
deterministic for a fixed (config, inputs, seed); the run manifest records
a sha256 digest per written file. Per-repository failures skip that
repository (logged and listed in skipped.csv) without aborting the run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import yaml

from . import __version__
from .analytics import (
    CrossTab,
    SurvivabilityRecord,
    crosstab,
    kruskal_wallis,
    load_registry,
    pearson,
    summary_stats,
)
from .errors import (
    ConfigInvalid,
    ForkscopeError,
    StageDependencyMissing,
    ZeroVariance,
)
from .history import (
    IngestLimits,
    RepoHistory,
    checkout_snapshot,
    history_to_fixture,
    load_history,
)
from .hosting import ZERO_COUNTS, HostingMetadata, fetch_hosting_metadata, metadata_from_counts
from .lineage import LineageConfig, lineage_sweep
from .maintenance import (
    FEATURE_COLUMNS,
    extract_features,
    best_first_attributes,
    select_k,
    standardize_matrix,
)
from .report import (
    plot_patch_days,
    plot_silhouette_curve,
    plot_similarity_cdf,
    write_csv,
    write_json,
)
from .similarity import SimilarityConfig, repo_similarity, similarity_cdf
from .vulnscan import (
    STATUS_PATCHED,
    STATUS_VULNERABLE,
    load_signatures,
    patch_time_stats,
    scan_history,
    vuln_census,
)
from .errors import NoEligibleFiles

log = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "features",
    "cluster",
    "select-features",
    "similarity",
    "lineage",
    "vulnscan",
    "crosstab",
    "stats",
)

SIMILARITY_BUCKETS = ((">=0.95", 0.95), (">=0.90", 0.90), (">=0.80", 0.80), (">=0.60", 0.60))
VULN_BUCKETS = ((">=1", 1), (">=2", 2), (">=3", 3), (">=4", 4))


@dataclass
class RepoEntry:
    repo_id: str
    source: str
    metadata: str | None = None


@dataclass
class PipelineConfig:
    repos: list[RepoEntry]
    as_of: int
    output_dir: str = "out"
    parent_repo_id: str | None = None
    registry_file: str | None = None
    signature_file: str | None = None
    fallback_file_limit: int = 30
    k_range: tuple[int, int] = (2, 8)
    seed: int = 0
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    lineage: LineageConfig = field(default_factory=LineageConfig)
    max_commits: int | None = None
    metric_file: str | None = None

    def effective_dict(self) -> dict:
        return {
            "repos": [
                {"repo_id": r.repo_id, "source": r.source, "metadata": r.metadata}
                for r in self.repos
            ],
            "as_of": self.as_of,
            "parent_repo_id": self.parent_repo_id,
            "registry_file": self.registry_file,
            "signature_file": self.signature_file,
            "fallback_file_limit": self.fallback_file_limit,
            "k_range": list(self.k_range),
            "seed": self.seed,
            "similarity": {
                "min_match": self.similarity.min_match,
                "extensions": list(self.similarity.extensions),
                "pairing": self.similarity.pairing,
                "dialect": self.similarity.dialect,
            },
            "lineage": {
                "prefix_probe": self.lineage.prefix_probe,
                "window_secs": self.lineage.window_secs,
                "stride": self.lineage.stride,
                "default_threshold": self.lineage.default_threshold,
            },
            "max_commits": self.max_commits,
            "metric_file": self.metric_file,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.effective_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a YAML pipeline configuration file."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config root must be a mapping", "/")
    base = Path(path).parent

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    repos_raw = raw.get("repos")
    if not isinstance(repos_raw, list) or not repos_raw:
        raise ConfigInvalid("repos must be a non-empty list", "repos")
    repos: list[RepoEntry] = []
    seen_ids = set()
    for i, entry in enumerate(repos_raw):
        if not isinstance(entry, dict):
            raise ConfigInvalid("each repo must be a mapping", f"repos[{i}]")
        repo_id = entry.get("repo_id")
        source = entry.get("source")
        if not isinstance(repo_id, str) or not repo_id:
            raise ConfigInvalid("repo_id must be a non-empty string", f"repos[{i}].repo_id")
        if repo_id in seen_ids:
            raise ConfigInvalid(f"duplicate repo_id {repo_id!r}", f"repos[{i}].repo_id")
        seen_ids.add(repo_id)
        if not isinstance(source, str) or not source:
            raise ConfigInvalid("source must be a non-empty string", f"repos[{i}].source")
        repos.append(
            RepoEntry(
                repo_id=repo_id,
                source=resolve(source),
                metadata=resolve(entry.get("metadata")),
            )
        )

    as_of = raw.get("as_of")
    if not isinstance(as_of, int) or isinstance(as_of, bool) or as_of <= 0:
        raise ConfigInvalid("as_of must be a positive unix timestamp", "as_of")
    parent = raw.get("parent_repo_id")
    if parent is not None and parent not in seen_ids:
        raise ConfigInvalid(f"parent_repo_id {parent!r} is not a configured repo", "parent_repo_id")

    km = raw.get("kmeans", {}) or {}
    k_range_raw = km.get("k_range", [2, 8])
    if (
        not isinstance(k_range_raw, (list, tuple))
        or len(k_range_raw) != 2
        or not all(isinstance(v, int) for v in k_range_raw)
    ):
        raise ConfigInvalid("kmeans.k_range must be [lo, hi]", "kmeans.k_range")
    seed = km.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigInvalid("kmeans.seed must be an integer", "kmeans.seed")

    sim = raw.get("similarity", {}) or {}
    sim_cfg = SimilarityConfig(
        min_match=int(sim.get("min_match", 9)),
        extensions=tuple(sim.get("extensions", SimilarityConfig().extensions)),
        pairing=str(sim.get("pairing", "greedy")),
        dialect=str(sim.get("dialect", "c_like")),
    )
    if sim_cfg.pairing not in ("greedy", "optimal"):
        raise ConfigInvalid("similarity.pairing must be greedy or optimal", "similarity.pairing")
    if sim_cfg.min_match < 1:
        raise ConfigInvalid("similarity.min_match must be >= 1", "similarity.min_match")

    lin = raw.get("lineage", {}) or {}
    lin_cfg = LineageConfig(
        prefix_probe=int(lin.get("prefix_probe", 10)),
        window_secs=int(lin.get("window_secs", LineageConfig().window_secs)),
        stride=int(lin.get("stride", 1)),
        default_threshold=float(lin.get("default_threshold", LineageConfig().default_threshold)),
        similarity=sim_cfg,
    )
    if lin_cfg.stride < 1:
        raise ConfigInvalid("lineage.stride must be >= 1", "lineage.stride")

    vs = raw.get("vulnscan", {}) or {}
    ingest_raw = raw.get("ingest", {}) or {}
    analytics_raw = raw.get("analytics", {}) or {}

    return PipelineConfig(
        repos=repos,
        as_of=as_of,
        output_dir=resolve(raw.get("output_dir", "out")),
        parent_repo_id=parent,
        registry_file=resolve(raw.get("registry_file")),
        signature_file=resolve(vs.get("signature_file")),
        fallback_file_limit=int(vs.get("fallback_file_limit", 30)),
        k_range=(int(k_range_raw[0]), int(k_range_raw[1])),
        seed=seed,
        similarity=sim_cfg,
        lineage=lin_cfg,
        max_commits=ingest_raw.get("max_commits"),
        metric_file=resolve(analytics_raw.get("metric_file")),
    )


@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    stages: dict[str, dict]
    skipped: list[dict]

    def as_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
            "stages": self.stages,
            "skipped": self.skipped,
        }


class _RunContext:
    def __init__(self, config: PipelineConfig, outdir: Path, jobs: int | None):
        self.config = config
        self.outdir = outdir
        self.jobs = jobs or 1
        self.skipped: list[dict] = []
        self._histories: dict[str, RepoHistory] = {}

    def skip(self, stage: str, repo_id: str, reason: str) -> None:
        log.warning("%s: skipping %s: %s", stage, repo_id, reason)
        self.skipped.append({"stage": stage, "repo_id": repo_id, "reason": reason})

    def history_path(self, repo_id: str) -> Path:
        return self.outdir / "histories" / f"{repo_id}.json"

    def metadata_path(self, repo_id: str) -> Path:
        return self.outdir / "metadata" / f"{repo_id}.json"

    def load_ingested(self, repo_id: str) -> RepoHistory:
        if repo_id not in self._histories:
            path = self.history_path(repo_id)
            if not path.is_file():
                raise StageDependencyMissing(
                    f"no ingested history for {repo_id!r}; run the ingest stage first"
                )
            self._histories[repo_id] = load_history(path)
        return self._histories[repo_id]

    def ingested_ids(self) -> list[str]:
        hist_dir = self.outdir / "histories"
        if not hist_dir.is_dir():
            raise StageDependencyMissing("no histories/ directory; run the ingest stage first")
        return sorted(p.stem for p in hist_dir.glob("*.json"))

    def load_metadata(self, repo_id: str) -> HostingMetadata:
        path = self.metadata_path(repo_id)
        if not path.is_file():
            log.warning("no hosting metadata for %s; using zero counts", repo_id)
            return metadata_from_counts(repo_id, dict(ZERO_COUNTS))
        doc = json.loads(path.read_text(encoding="utf-8"))
        doc.pop("fetched_at", None)
        return metadata_from_counts(repo_id, doc)


# --- stages ------------------------------------------------------------------


def _stage_ingest(ctx: _RunContext) -> list[Path]:
    written: list[Path] = []
    limits = IngestLimits(max_commits=ctx.config.max_commits)

    def one(entry: RepoEntry):
        history = load_history(entry.source, limits)
        meta = None
        if entry.metadata:
            meta = fetch_hosting_metadata(entry.metadata, entry.repo_id)
        return entry.repo_id, history, meta

    results = {}
    with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
        futures = {pool.submit(one, entry): entry for entry in ctx.config.repos}
        for future, entry in futures.items():
            try:
                repo_id, history, meta = future.result()
                results[repo_id] = (history, meta)
            except ForkscopeError as exc:
                ctx.skip("ingest", entry.repo_id, str(exc))

    for repo_id in sorted(results):
        history, meta = results[repo_id]
        hist_path = ctx.history_path(repo_id)
        write_json(hist_path, history_to_fixture(history))
        written.append(hist_path)
        if meta is not None:
            meta_path = ctx.metadata_path(repo_id)
            payload = meta.as_dict()
            payload["fetched_at"] = meta.fetched_at
            write_json(meta_path, payload)
            written.append(meta_path)
    return written


def _stage_features(ctx: _RunContext) -> list[Path]:
    rows = []
    for repo_id in ctx.ingested_ids():
        try:
            history = ctx.load_ingested(repo_id)
            meta = ctx.load_metadata(repo_id)
            vector = extract_features(history, meta, ctx.config.as_of)
        except ForkscopeError as exc:
            ctx.skip("features", repo_id, str(exc))
            continue
        flat = vector.flatten()
        rows.append([repo_id, *(flat[c] for c in FEATURE_COLUMNS)])
    path = ctx.outdir / "features.csv"
    write_csv(path, ["repo_id", *FEATURE_COLUMNS], rows)
    return [path]


def _read_features(ctx: _RunContext) -> tuple[list[str], list[list[float]]]:
    path = ctx.outdir / "features.csv"
    if not path.is_file():
        raise StageDependencyMissing("features.csv not found; run the features stage first")
    ids: list[str] = []
    matrix: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ids.append(row["repo_id"])
            matrix.append([float(row[c]) for c in FEATURE_COLUMNS])
    return ids, matrix


def _stage_cluster(ctx: _RunContext) -> list[Path]:
    import numpy as np

    ids, matrix = _read_features(ctx)
    if len(ids) < 2:
        raise StageDependencyMissing("clustering needs at least two repositories")
    z, _, _, _ = standardize_matrix(np.array(matrix))
    lo, hi = ctx.config.k_range
    hi = min(hi, len(ids))
    lo = min(lo, hi)
    selection = select_k(z, (lo, hi), ctx.config.seed, ids=ids)
    result = selection.best

    out = ctx.outdir
    clusters_csv = out / "clusters.csv"
    write_csv(
        clusters_csv,
        ["repo_id", "cluster", "silhouette_point"],
        [
            [rid, result.assignments[rid], result.per_point[rid].s]
            for rid in sorted(result.ids)
        ],
    )
    summary_json = out / "cluster_summary.json"
    write_json(
        summary_json,
        {
            "k": result.k,
            "silhouette": result.silhouette,
            "centroids": [[float(v) for v in row] for row in result.centroids],
            "curve": [[k, s] for k, s in selection.curve],
            "seed": ctx.config.seed,
        },
    )
    curve_csv = out / "silhouette_by_k.csv"
    write_csv(curve_csv, ["k", "silhouette"], [[k, s] for k, s in selection.curve])
    curve_png = out / "silhouette_by_k.png"
    plot_silhouette_curve(selection.curve, selection.best_k, curve_png)
    return [clusters_csv, summary_json, curve_csv, curve_png]


def _read_clusters(ctx: _RunContext) -> dict[str, int]:
    path = ctx.outdir / "clusters.csv"
    if not path.is_file():
        raise StageDependencyMissing("clusters.csv not found; run the cluster stage first")
    out: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["repo_id"]] = int(row["cluster"])
    return out


def _stage_select_features(ctx: _RunContext) -> list[Path]:
    import numpy as np

    ids, matrix = _read_features(ctx)
    clusters = _read_clusters(ctx)
    labels = [clusters[rid] for rid in ids if rid in clusters]
    rows = [matrix[i] for i, rid in enumerate(ids) if rid in clusters]
    selection = best_first_attributes(
        np.array(rows), labels, feature_names=FEATURE_COLUMNS
    )
    path = ctx.outdir / "attributes.json"
    write_json(
        path,
        {
            "selected": list(selection.selected),
            "merit": selection.merit,
            "trace": [[list(subset), merit] for subset, merit in selection.trace],
        },
    )
    return [path]


def _stage_similarity(ctx: _RunContext) -> list[Path]:
    written: list[Path] = []
    ids = ctx.ingested_ids()
    snapshots = {}
    for repo_id in ids:
        history = ctx.load_ingested(repo_id)
        snapshots[repo_id] = checkout_snapshot(history, history.head)

    matrix_rows = []
    scores = []
    pair_dir = ctx.outdir / "similarity" / "pairs"
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            try:
                result = repo_similarity(snapshots[a], snapshots[b], ctx.config.similarity)
            except NoEligibleFiles as exc:
                ctx.skip("similarity", f"{a}|{b}", str(exc))
                matrix_rows.append([a, b, None, None, None, None])
                continue
            score = result.score
            matrix_rows.append(
                [a, b, score.value, score.matched_tokens, score.total_tokens_a, score.total_tokens_b]
            )
            scores.append(score.value)
            pair_csv = pair_dir / f"{a}__{b}.csv"
            write_csv(
                pair_csv,
                ["path_a", "path_b", "value", "matched_tokens"],
                [[p.path_a, p.path_b, p.value, p.matched_tokens] for p in result.file_pairs],
            )
            written.append(pair_csv)

    matrix_csv = ctx.outdir / "similarity" / "matrix.csv"
    write_csv(
        matrix_csv,
        ["repo_a", "repo_b", "value", "matched_tokens", "total_tokens_a", "total_tokens_b"],
        matrix_rows,
    )
    written.append(matrix_csv)
    summary_json = ctx.outdir / "similarity" / "summary.json"
    write_json(
        summary_json,
        {
            "pairs": len(matrix_rows),
            "scored": len(scores),
            "aggregation": f"per-file {ctx.config.similarity.pairing} pairing "
            "(not concatenated repositories)",
            "mean_value": (sum(scores) / len(scores)) if scores else None,
            "scores": [
                {
                    "repo_a": row[0],
                    "repo_b": row[1],
                    "value": row[2],
                    "matched_tokens": row[3],
                    "total_tokens_a": row[4],
                    "total_tokens_b": row[5],
                }
                for row in matrix_rows
            ],
        },
    )
    written.append(summary_json)
    if scores:
        cdf_points = similarity_cdf(scores)
        cdf_csv = ctx.outdir / "similarity" / "cdf.csv"
        write_csv(cdf_csv, ["score", "fraction"], [[s, f] for s, f in cdf_points])
        cdf_png = ctx.outdir / "similarity" / "cdf.png"
        plot_similarity_cdf(cdf_points, cdf_png)
        written.extend([cdf_csv, cdf_png])
    return written


def _stage_lineage(ctx: _RunContext) -> list[Path]:
    parent_id = ctx.config.parent_repo_id
    if not parent_id:
        raise ConfigInvalid("lineage stage needs parent_repo_id", "parent_repo_id")
    parent = ctx.load_ingested(parent_id)
    child_ids = [r for r in ctx.ingested_ids() if r != parent_id]
    children = [ctx.load_ingested(rid) for rid in child_ids]
    reports, derivation = lineage_sweep(children, parent, ctx.config.lineage)

    lineage_csv = ctx.outdir / "lineage.csv"
    write_csv(
        lineage_csv,
        ["child", "parent", "heuristic", "verdict", "fork_time", "parent_version", "similarity_at_fork"],
        [
            [r.child_id, r.parent_id, r.heuristic, r.verdict, r.fork_time, r.parent_version, r.similarity_at_fork]
            for r in sorted(reports, key=lambda r: r.child_id)
        ],
    )
    threshold_json = ctx.outdir / "lineage_threshold.json"
    write_json(
        threshold_json,
        {
            "sample_scores": list(derivation.sample_scores),
            "mean": derivation.mean,
            "three_sigma": derivation.three_sigma,
            "threshold": derivation.threshold,
            "fallback": derivation.fallback,
            "sampled_reports": sorted(r.child_id for r in reports if r.sampled),
        },
    )
    return [lineage_csv, threshold_json]


def _stage_vulnscan(ctx: _RunContext) -> list[Path]:
    if not ctx.config.signature_file:
        raise ConfigInvalid("vulnscan stage needs vulnscan.signature_file", "vulnscan.signature_file")
    signatures = load_signatures(ctx.config.signature_file)
    ids = ctx.ingested_ids()

    def scan_repo(repo_id: str):
        history = ctx.load_ingested(repo_id)
        return [
            scan_history(
                history,
                sig,
                fallback_file_limit=ctx.config.fallback_file_limit,
                extensions=ctx.config.similarity.extensions,
            )
            for sig in signatures
        ]

    findings = []
    with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
        futures = {pool.submit(scan_repo, rid): rid for rid in ids}
        for future, rid in futures.items():
            try:
                findings.extend(future.result())
            except ForkscopeError as exc:
                ctx.skip("vulnscan", rid, str(exc))

    findings.sort(key=lambda f: (f.repo_id, f.cve_id))
    findings_csv = ctx.outdir / "findings.csv"
    write_csv(
        findings_csv,
        ["repo_id", "cve_id", "status", "introduced_at", "patched_at", "time_to_patch_days"],
        [
            [
                f.repo_id,
                f.cve_id,
                f.status,
                f.introduced_at,
                f.patched_at,
                (f.time_to_patch_secs / 86400.0) if f.time_to_patch_secs is not None else None,
            ]
            for f in findings
        ],
    )
    written = [findings_csv]

    census = vuln_census(findings)
    census_csv = ctx.outdir / "census.csv"
    write_csv(census_csv, ["repo_id", "unpatched_count"], [list(r) for r in census.per_repo])
    buckets_csv = ctx.outdir / "census_buckets.csv"
    write_csv(buckets_csv, ["bucket", "repos"], [list(b) for b in census.buckets])
    written.extend([census_csv, buckets_csv])

    patched_days = [
        f.time_to_patch_secs / 86400.0
        for f in findings
        if f.status == STATUS_PATCHED and f.time_to_patch_secs is not None
    ]
    if patched_days:
        stats = patch_time_stats(findings)
        stats_json = ctx.outdir / "patch_stats.json"
        write_json(
            stats_json,
            {
                "median_days": stats.median_days,
                "mean_days": stats.mean_days,
                "std_days": stats.std_days,
                "within_16_days_fraction": stats.within_16_days_fraction,
                "count": stats.count,
            },
        )
        days_png = ctx.outdir / "patch_days.png"
        plot_patch_days(sorted(patched_days), days_png)
        written.extend([stats_json, days_png])
    return written


def _read_findings(ctx: _RunContext) -> list[dict]:
    path = ctx.outdir / "findings.csv"
    if not path.is_file():
        raise StageDependencyMissing("findings.csv not found; run the vulnscan stage first")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _read_lineage(ctx: _RunContext) -> list[dict]:
    path = ctx.outdir / "lineage.csv"
    if not path.is_file():
        raise StageDependencyMissing("lineage.csv not found; run the lineage stage first")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _crosstab_files(ctx: _RunContext, table: CrossTab, stem: str) -> list[Path]:
    flag_names = ("delisted_market", "repo_unavailable", "scam_list_a", "scam_list_b", "inactive_any")
    header = ["group", "total"]
    for name in flag_names:
        header.extend([name, f"{name}_pct"])
    rows = []
    for row in (*table.rows, table.all_row):
        cells = [row.group, row.total]
        for name in flag_names:
            cells.extend([row.counts[name], f"{row.pct[name]:.1f}"])
        rows.append(cells)
    csv_path = ctx.outdir / f"{stem}.csv"
    write_csv(csv_path, header, rows)
    json_path = ctx.outdir / f"{stem}.json"
    write_json(
        json_path,
        {
            "group_key": table.group_key,
            "rows": [
                {"group": r.group, "total": r.total, "counts": r.counts, "pct": r.pct}
                for r in (*table.rows, table.all_row)
            ],
        },
    )
    return [csv_path, json_path]


def _cumulative_crosstab(
    per_repo_value: dict[str, float],
    registry: list[SurvivabilityRecord],
    buckets: Sequence[tuple[str, float]],
    group_key: str,
    reverse: bool = False,
) -> CrossTab:
    """One row per cumulative bucket; a repo may appear in several rows."""
    rows = []
    totals: list[str] = []
    for label, threshold in buckets:
        selected = {
            rid: label
            for rid, v in per_repo_value.items()
            if (v <= threshold if reverse else v >= threshold)
        }
        sub = crosstab(selected, registry, group_key=group_key)
        rows.append(
            sub.all_row.__class__(
                group=label,
                total=sub.all_row.total,
                counts=sub.all_row.counts,
                pct=sub.all_row.pct,
            )
        )
    everyone = {rid: "All" for rid in per_repo_value}
    all_tab = crosstab(everyone, registry, group_key=group_key)
    return CrossTab(group_key=group_key, rows=tuple(rows), all_row=all_tab.all_row)


def _stage_crosstab(ctx: _RunContext) -> list[Path]:
    if not ctx.config.registry_file:
        raise ConfigInvalid("crosstab stage needs registry_file", "registry_file")
    registry = load_registry(ctx.config.registry_file)
    written: list[Path] = []
    produced = False

    try:
        clusters = _read_clusters(ctx)
        table = crosstab(clusters, registry, group_key="cluster")
        written.extend(_crosstab_files(ctx, table, "crosstab_clusters"))
        produced = True
    except StageDependencyMissing:
        pass

    try:
        findings = _read_findings(ctx)
        counts: dict[str, float] = {}
        for row in findings:
            counts.setdefault(row["repo_id"], 0)
            if row["status"] == STATUS_VULNERABLE:
                counts[row["repo_id"]] += 1
        zero = {rid: "0" for rid, v in counts.items() if v == 0}
        table = _cumulative_crosstab(counts, registry, VULN_BUCKETS, "vuln_count")
        zero_tab = crosstab(zero, registry, group_key="vuln_count")
        table = CrossTab(
            group_key="vuln_count",
            rows=tuple([*zero_tab.rows, *table.rows]),
            all_row=table.all_row,
        )
        written.extend(_crosstab_files(ctx, table, "crosstab_vulns"))
        produced = True
    except StageDependencyMissing:
        pass

    try:
        lineage_rows = _read_lineage(ctx)
        sims = {
            row["child"]: float(row["similarity_at_fork"])
            for row in lineage_rows
            if row["verdict"] == "Forked" and row["similarity_at_fork"]
        }
        if sims:
            table = _cumulative_crosstab(sims, registry, SIMILARITY_BUCKETS, "similarity")
            below = {rid: "<0.50" for rid, v in sims.items() if v < 0.50}
            below_tab = crosstab(below, registry, group_key="similarity")
            table = CrossTab(
                group_key="similarity",
                rows=tuple([*table.rows, *below_tab.rows]),
                all_row=table.all_row,
            )
            written.extend(_crosstab_files(ctx, table, "crosstab_similarity"))
            produced = True
    except StageDependencyMissing:
        pass

    if not produced:
        raise StageDependencyMissing(
            "crosstab needs at least one of clusters.csv, findings.csv, lineage.csv"
        )
    return written


def _stage_stats(ctx: _RunContext) -> list[Path]:
    payload: dict = {}
    findings = _read_findings(ctx)

    days = [
        float(row["time_to_patch_days"])
        for row in findings
        if row["status"] == STATUS_PATCHED and row["time_to_patch_days"]
    ]
    if days:
        stats = summary_stats(days)
        payload["patch_time_days"] = {
            "median": stats.median,
            "mean": stats.mean,
            "std": stats.std,
            "within_16_days_fraction": sum(1 for d in days if d <= 16.0) / len(days),
            "count": len(days),
        }
    else:
        payload["patch_time_days"] = None

    counts: dict[str, int] = {}
    for row in findings:
        counts.setdefault(row["repo_id"], 0)
        if row["status"] == STATUS_VULNERABLE:
            counts[row["repo_id"]] += 1

    try:
        clusters = _read_clusters(ctx)
        by_cluster: dict[int, list[float]] = {}
        for rid, cluster in clusters.items():
            if rid in counts:
                by_cluster.setdefault(cluster, []).append(float(counts[rid]))
        groups = [by_cluster[c] for c in sorted(by_cluster)]
        if len(groups) >= 2 and all(groups) and sum(len(g) for g in groups) >= 3:
            kw = kruskal_wallis(groups)
            payload["vulns_across_clusters"] = {"H": kw.H, "p": kw.p, "dof": kw.dof}
        else:
            payload["vulns_across_clusters"] = None
    except StageDependencyMissing:
        payload["vulns_across_clusters"] = None

    if ctx.config.metric_file:
        metric: dict[str, float] = {}
        with open(ctx.config.metric_file, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                metric[row["repo_id"]] = float(row["value"])
        shared = sorted(set(metric) & set(counts))
        if len(shared) >= 3:
            try:
                res = pearson(
                    [metric[r] for r in shared], [float(counts[r]) for r in shared]
                )
                payload["metric_vs_vuln_count"] = {"r": res.r, "p": res.p, "n": res.n}
            except (ZeroVariance, ForkscopeError) as exc:
                payload["metric_vs_vuln_count"] = {"error": str(exc)}
        else:
            payload["metric_vs_vuln_count"] = None

    path = ctx.outdir / "stats.json"
    write_json(path, payload)
    return [path]


_STAGE_FUNCS: dict[str, Callable[[_RunContext], list[Path]]] = {
    "ingest": _stage_ingest,
    "features": _stage_features,
    "cluster": _stage_cluster,
    "select-features": _stage_select_features,
    "similarity": _stage_similarity,
    "lineage": _stage_lineage,
    "vulnscan": _stage_vulnscan,
    "crosstab": _stage_crosstab,
    "stats": _stage_stats,
}


def _config_gap(stage: str, config: PipelineConfig) -> str | None:
    if stage == "lineage" and not config.parent_repo_id:
        return "parent_repo_id not configured"
    if stage in ("vulnscan", "stats") and not config.signature_file:
        return "vulnscan.signature_file not configured"
    if stage == "crosstab" and not config.registry_file:
        return "registry_file not configured"
    return None


def run_pipeline(
    config: PipelineConfig,
    stages: Sequence[str] | None = None,
    jobs: int | None = None,
) -> RunManifest:
    """Execute the selected stages in dependency order and write the
    manifest. Returns the manifest; skipped repos are listed on it.

    A full run (``stages=None``) leaves out stages whose config
    prerequisites are absent; naming a stage explicitly makes a missing
    prerequisite an error.
    """
    not_run: dict[str, str] = {}
    if stages is None:
        selected = []
        for name in STAGES:
            gap = _config_gap(name, config)
            if gap:
                log.warning("stage %s not run: %s", name, gap)
                not_run[name] = gap
            else:
                selected.append(name)
    else:
        selected = list(stages)
        for name in selected:
            if name not in _STAGE_FUNCS:
                raise ConfigInvalid(f"unknown stage {name!r}", "stages")
    ordered = [s for s in STAGES if s in selected]

    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = _RunContext(config, outdir, jobs)

    stage_records: dict[str, dict] = {}
    for name in ordered:
        start = time.perf_counter()
        written = _STAGE_FUNCS[name](ctx)
        elapsed = time.perf_counter() - start
        stage_records[name] = {
            "outputs": {
                str(p.relative_to(outdir)): _digest(p) for p in sorted(written)
            },
            "wall_clock_secs": round(elapsed, 6),
        }
        log.info("stage %s wrote %d files in %.3fs", name, len(written), elapsed)

    if ctx.skipped:
        skipped_csv = outdir / "skipped.csv"
        write_csv(
            skipped_csv,
            ["stage", "repo_id", "reason"],
            [[s["stage"], s["repo_id"], s["reason"]] for s in ctx.skipped],
        )

    if not_run:
        stage_records["_not_run"] = not_run
    manifest = RunManifest(
        tool_version=__version__,
        config_hash=config.config_hash(),
        stages=stage_records,
        skipped=ctx.skipped,
    )
    write_json(outdir / "manifest.json", manifest.as_dict())
    return manifest


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
