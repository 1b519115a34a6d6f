"""forkscope: repository forensics for families of forked codebases.

Measures maintenance activity, infers fork lineage, scores token-level
code similarity, and tracks vulnerability-patch propagation across local
repositories or portable history fixtures.
"""

__version__ = "0.1.0"

from .analytics import (
    CrossTab,
    KruskalResult,
    PearsonResult,
    SummaryStats,
    SurvivabilityRecord,
    crosstab,
    kruskal_wallis,
    load_registry,
    pearson,
    summary_stats,
)
from .errors import ForkscopeError
from .fixtures import CommitSpec, build_history, diff_trees, tree_from_directory
from .history import (
    CommitRecord,
    FileChange,
    IngestLimits,
    RepoHistory,
    SnapshotTree,
    checkout_snapshot,
    history_from_fixture,
    history_to_fixture,
    load_history,
    save_history,
)
from .hosting import HostingMetadata, MetadataClient, fetch_hosting_metadata
from .lineage import (
    ForkReport,
    LineageConfig,
    ThresholdDerivation,
    derive_threshold,
    heuristic1,
    heuristic2,
    lineage_sweep,
)
from .maintenance import (
    FEATURE_COLUMNS,
    AttributeSelection,
    ClusteringResult,
    FeatureVector,
    KSelection,
    best_first_attributes,
    compute_mde,
    extract_features,
    kmeans,
    select_k,
    standardize,
)
from .pipeline import PipelineConfig, RunManifest, load_config, run_pipeline
from .similarity import (
    SimilarityConfig,
    SimilarityScore,
    Tile,
    TokenStream,
    gst,
    repo_similarity,
    similarity_cdf,
    tokenize,
)
from .vulnscan import (
    PatchTimeStats,
    VulnCensus,
    VulnFinding,
    VulnSignature,
    load_signatures,
    normalize_code,
    patch_time_stats,
    scan_history,
    scan_history_oracle,
    scan_latest,
    vuln_census,
)
