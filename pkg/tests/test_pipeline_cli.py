from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from forkscope.cli import main
from forkscope.errors import ConfigInvalid, StageDependencyMissing
from forkscope.pipeline import load_config, run_pipeline

DEMO_CONFIG = Path(__file__).parent.parent / "demo" / "config.yaml"


def tree_digests(root: Path, skip: set[str] = frozenset()) -> dict[str, str]:
    out = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = str(path.relative_to(root))
        if rel in skip:
            continue
        out[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("demo-out")
    config = load_config(DEMO_CONFIG)
    config.output_dir = str(outdir)
    manifest = run_pipeline(config, jobs=2)
    return outdir, manifest


class TestConfigValidation:
    def _write(self, tmp_path, doc) -> Path:
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(doc))
        return path

    def test_missing_repos(self, tmp_path):
        with pytest.raises(ConfigInvalid) as err:
            load_config(self._write(tmp_path, {"as_of": 1}))
        assert "repos" in str(err.value)

    def test_duplicate_repo_ids(self, tmp_path):
        doc = {
            "as_of": 1,
            "repos": [
                {"repo_id": "a", "source": "x.json"},
                {"repo_id": "a", "source": "y.json"},
            ],
        }
        with pytest.raises(ConfigInvalid):
            load_config(self._write(tmp_path, doc))

    def test_parent_must_be_configured(self, tmp_path):
        doc = {
            "as_of": 1,
            "parent_repo_id": "ghost",
            "repos": [{"repo_id": "a", "source": "x.json"}],
        }
        with pytest.raises(ConfigInvalid) as err:
            load_config(self._write(tmp_path, doc))
        assert "parent_repo_id" in str(err.value)

    def test_bad_pairing(self, tmp_path):
        doc = {
            "as_of": 1,
            "repos": [{"repo_id": "a", "source": "x.json"}],
            "similarity": {"pairing": "quantum"},
        }
        with pytest.raises(ConfigInvalid):
            load_config(self._write(tmp_path, doc))

    def test_relative_paths_resolve_against_config(self, tmp_path):
        doc = {
            "as_of": 1,
            "repos": [{"repo_id": "a", "source": "fixtures/a.json"}],
        }
        config = load_config(self._write(tmp_path, doc))
        assert config.repos[0].source == str(tmp_path / "fixtures" / "a.json")


class TestFullRun:
    EXPECTED = [
        "features.csv",
        "clusters.csv",
        "cluster_summary.json",
        "silhouette_by_k.csv",
        "silhouette_by_k.png",
        "attributes.json",
        "similarity/matrix.csv",
        "similarity/cdf.csv",
        "similarity/cdf.png",
        "lineage.csv",
        "lineage_threshold.json",
        "findings.csv",
        "census.csv",
        "census_buckets.csv",
        "patch_stats.json",
        "patch_days.png",
        "crosstab_clusters.csv",
        "crosstab_vulns.csv",
        "crosstab_similarity.csv",
        "stats.json",
        "manifest.json",
    ]

    def test_all_reports_present(self, demo_run):
        outdir, manifest = demo_run
        for rel in self.EXPECTED:
            assert (outdir / rel).is_file(), rel
        assert not manifest.skipped

    def test_manifest_records_digests(self, demo_run):
        outdir, manifest = demo_run
        recorded = manifest.stages["features"]["outputs"]["features.csv"]
        actual = hashlib.sha256((outdir / "features.csv").read_bytes()).hexdigest()
        assert recorded == actual

    def test_lineage_verdicts(self, demo_run):
        outdir, _ = demo_run
        rows = (outdir / "lineage.csv").read_text().strip().split("\n")[1:]
        verdicts = {r.split(",")[0]: (r.split(",")[2], r.split(",")[3]) for r in rows}
        assert verdicts["alphacoin"] == ("H1", "Forked")
        assert verdicts["gammacoin"] == ("H2", "Forked")
        assert verdicts["deltacoin"][1] == "NotForked"

    def test_feature_header_has_32_columns(self, demo_run):
        outdir, _ = demo_run
        header = (outdir / "features.csv").read_text().split("\n")[0].split(",")
        assert len(header) == 33  # repo_id + 32 features


class TestReproducibility:
    def test_identical_runs_identical_trees(self, demo_run, tmp_path):
        first_out, first_manifest = demo_run
        config = load_config(DEMO_CONFIG)
        config.output_dir = str(tmp_path / "again")
        second_manifest = run_pipeline(config, jobs=1)
        first = tree_digests(first_out, skip={"manifest.json"})
        second = tree_digests(tmp_path / "again", skip={"manifest.json"})
        assert first == second
        for stage, record in first_manifest.stages.items():
            if stage.startswith("_"):
                continue
            assert record["outputs"] == second_manifest.stages[stage]["outputs"]

    def test_seed_change_touches_only_cluster_derived_outputs(self, demo_run, tmp_path):
        base_out, _ = demo_run
        config = load_config(DEMO_CONFIG)
        config.output_dir = str(tmp_path / "seeded")
        config.seed = 1234
        run_pipeline(config, jobs=1)
        base = tree_digests(base_out, skip={"manifest.json"})
        seeded = tree_digests(tmp_path / "seeded", skip={"manifest.json"})
        assert set(base) == set(seeded)
        cluster_derived = {
            "clusters.csv",
            "cluster_summary.json",
            "silhouette_by_k.csv",
            "silhouette_by_k.png",
            "attributes.json",
            "crosstab_clusters.csv",
            "crosstab_clusters.json",
            "stats.json",
        }
        for rel in base:
            if rel in cluster_derived:
                continue
            assert base[rel] == seeded[rel], f"{rel} changed with the seed"


class TestStageOrchestration:
    def test_features_without_ingest(self, tmp_path):
        config = load_config(DEMO_CONFIG)
        config.output_dir = str(tmp_path / "empty")
        with pytest.raises(StageDependencyMissing):
            run_pipeline(config, stages=["features"])

    def test_stagewise_run_matches_full_run(self, demo_run, tmp_path):
        outdir = tmp_path / "staged"
        config = load_config(DEMO_CONFIG)
        config.output_dir = str(outdir)
        run_pipeline(config, stages=["ingest"])
        run_pipeline(config, stages=["features"])
        run_pipeline(config, stages=["cluster"])
        full_out, _ = demo_run
        assert (outdir / "clusters.csv").read_bytes() == (
            full_out / "clusters.csv"
        ).read_bytes()

    def test_unknown_stage(self, tmp_path):
        config = load_config(DEMO_CONFIG)
        config.output_dir = str(tmp_path)
        with pytest.raises(ConfigInvalid):
            run_pipeline(config, stages=["decompile"])

    def test_unconfigured_stages_skipped_on_full_run(self, tmp_path):
        doc = {
            "as_of": 1_700_000_000,
            "repos": [
                {
                    "repo_id": "bitcore",
                    "source": str(DEMO_CONFIG.parent / "fixtures" / "bitcore.json"),
                },
                {
                    "repo_id": "alphacoin",
                    "source": str(DEMO_CONFIG.parent / "fixtures" / "alphacoin.json"),
                },
            ],
            "output_dir": str(tmp_path / "out"),
        }
        path = tmp_path / "minimal.yaml"
        path.write_text(yaml.safe_dump(doc))
        manifest = run_pipeline(load_config(path))
        assert "lineage" in manifest.stages["_not_run"]
        assert "vulnscan" in manifest.stages["_not_run"]
        assert "crosstab" in manifest.stages["_not_run"]
        assert (tmp_path / "out" / "features.csv").is_file()

    def test_partial_failure_skips_and_completes(self, tmp_path):
        doc = {
            "as_of": 1_700_000_000,
            "repos": [
                {
                    "repo_id": "bitcore",
                    "source": str(DEMO_CONFIG.parent / "fixtures" / "bitcore.json"),
                },
                {
                    "repo_id": "alphacoin",
                    "source": str(DEMO_CONFIG.parent / "fixtures" / "alphacoin.json"),
                },
                {"repo_id": "broken", "source": str(tmp_path / "nope.json")},
            ],
            "output_dir": str(tmp_path / "out"),
        }
        path = tmp_path / "partial.yaml"
        path.write_text(yaml.safe_dump(doc))
        manifest = run_pipeline(load_config(path), stages=["ingest", "features"])
        assert any(s["repo_id"] == "broken" for s in manifest.skipped)
        assert (tmp_path / "out" / "skipped.csv").is_file()
        assert (tmp_path / "out" / "features.csv").is_file()


class TestCli:
    def test_run_exits_zero(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["--config", str(DEMO_CONFIG), "--output", str(tmp_path / "o"), "--jobs", "1", "run"],
        )
        assert result.exit_code == 0, result.output
        assert "completed stages" in result.output

    def test_partial_failure_exit_code(self, tmp_path):
        doc = {
            "as_of": 1_700_000_000,
            "repos": [
                {
                    "repo_id": "bitcore",
                    "source": str(DEMO_CONFIG.parent / "fixtures" / "bitcore.json"),
                },
                {"repo_id": "broken", "source": str(tmp_path / "nope.json")},
            ],
        }
        path = tmp_path / "partial.yaml"
        path.write_text(yaml.safe_dump(doc))
        runner = CliRunner()
        result = runner.invoke(
            main, ["--config", str(path), "--output", str(tmp_path / "o"), "ingest"]
        )
        assert result.exit_code == 1

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("repos: []\nas_of: 1\n")
        runner = CliRunner()
        result = runner.invoke(main, ["--config", str(bad), "run"])
        assert result.exit_code == 2

    def test_missing_dependency_exit_code(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["--config", str(DEMO_CONFIG), "--output", str(tmp_path / "fresh"), "cluster"],
        )
        assert result.exit_code == 3

    def test_usage_error_without_config(self):
        runner = CliRunner()
        result = runner.invoke(main, ["run"])
        assert result.exit_code == 2

    def test_seed_flag_forwarded(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            main,
            [
                "--config", str(DEMO_CONFIG),
                "--output", str(tmp_path / "o"),
                "--seed", "99",
                "--jobs", "1",
                "run",
            ],
        )
        assert result.exit_code == 0
        summary = json.loads((tmp_path / "o" / "cluster_summary.json").read_text())
        assert summary["seed"] == 99
