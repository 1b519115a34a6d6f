from __future__ import annotations

import json

import pytest

from forkscope.errors import DuplicateFinding, EmptyInput, InvalidInput
from forkscope.history import checkout_snapshot
from forkscope.vulnscan import (
    STATUS_NEVER_PRESENT,
    STATUS_PATCHED,
    STATUS_VULNERABLE,
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

from vuln_corpus import (
    DAY,
    PATCH_FRAG,
    REF_TIME,
    SIG,
    T0,
    VULN_FRAG,
    full_corpus,
    scenario_bulk_fallback,
    scenario_patched,
    scenario_same_commit,
    scenario_straddle,
    scenario_vulnerable_at_head,
)


class TestNormalizeCode:
    def test_spaces_and_newline_removed(self):
        assert normalize_code("a = b + 1;\n") == "a=b+1;"

    def test_whitespace_only(self):
        assert normalize_code("\t \n") == ""

    def test_unicode_whitespace(self):
        assert normalize_code("a = 1; ") == "a=1;"

    def test_reflowed_fragment_matches(self):
        flowed = "if (x) {\n    y();\n}"
        squeezed = "if (x) {y();}"
        assert normalize_code(flowed) == normalize_code(squeezed)


class TestScanLatest:
    def test_verbatim_fragment(self):
        _, history, sig = scenario_vulnerable_at_head()
        snap = checkout_snapshot(history, history.head)
        matched, files = scan_latest(snap, sig)
        assert matched
        assert files == ["src/vuln0.c"]

    def test_reformatted_fragment_matches(self):
        _, history, sig = scenario_vulnerable_at_head()
        snap = checkout_snapshot(history, history.head)
        snap.files["src/vuln0.c"] = snap.files["src/vuln0.c"].replace(" ", "  ")
        matched, _ = scan_latest(snap, sig)
        assert matched

    def test_match_all_needs_every_fragment(self):
        _, history, _ = scenario_vulnerable_at_head()
        snap = checkout_snapshot(history, history.head)
        sig = VulnSignature(
            cve_id="X",
            cvss=5.0,
            category="t",
            reference_patch_time=REF_TIME,
            vuln_fragments=(VULN_FRAG, "not_present_anywhere(zz);"),
            patch_fragments=(PATCH_FRAG,),
            match_mode="all",
        )
        matched, _ = scan_latest(snap, sig)
        assert not matched


class TestScanHistoryVerdicts:
    def test_patched_timestamps(self):
        _, history, sig = scenario_patched()
        finding = scan_history(history, sig)
        assert finding.status == STATUS_PATCHED
        assert finding.introduced_at == T0 + 1 * DAY
        assert finding.patched_at == T0 + 3 * DAY
        assert finding.time_to_patch_secs == (T0 + 3 * DAY) - REF_TIME

    def test_vulnerable_at_head(self):
        _, history, sig = scenario_vulnerable_at_head()
        finding = scan_history(history, sig)
        assert finding.status == STATUS_VULNERABLE
        assert finding.introduced_at == T0 + 1 * DAY
        assert finding.patched_at is None

    def test_same_commit_introduction_and_patch(self):
        _, history, sig = scenario_same_commit()
        finding = scan_history(history, sig)
        assert finding.status == STATUS_PATCHED
        assert finding.introduced_at == finding.patched_at == T0 + 1 * DAY

    def test_straddling_fragment_found(self):
        _, history, sig = scenario_straddle()
        finding = scan_history(history, sig)
        assert finding.status == STATUS_VULNERABLE
        assert finding.introduced_at == T0 + 1 * DAY

    def test_bulk_commit_uses_snapshot_fallback(self):
        _, history, sig = scenario_bulk_fallback()
        finding = scan_history(history, sig, fallback_file_limit=30)
        assert finding.status == STATUS_PATCHED
        assert finding.introduced_at == T0 + 1 * DAY
        assert finding.patched_at == T0 + 2 * DAY

    def test_empty_history_rejected(self):
        from forkscope.history import RepoHistory

        empty = RepoHistory(repo_id="e", commits=(), head="", truncated=False)
        with pytest.raises(Exception):
            scan_history(empty, SIG)


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "name,history,sig", full_corpus(), ids=[c[0] for c in full_corpus()]
    )
    def test_fast_equals_oracle(self, name, history, sig):
        fast = scan_history(history, sig)
        slow = scan_history_oracle(history, sig)
        assert fast == slow

    def test_verdict_stable_under_reformat(self):
        _, history, sig = scenario_vulnerable_at_head()
        snap = checkout_snapshot(history, history.head)
        matched_before, _ = scan_latest(snap, sig)
        for path in list(snap.files):
            snap.files[path] = snap.files[path].replace(" ", "\t ").replace(";", " ;")
        matched_after, _ = scan_latest(snap, sig)
        assert matched_before == matched_after

    def test_timestamps_belong_to_history_commits(self):
        for name, history, sig in full_corpus():
            finding = scan_history(history, sig)
            times = {c.author_time for c in history.commits}
            for stamp in (finding.introduced_at, finding.patched_at):
                if stamp is not None:
                    assert stamp in times, name


class TestSignatures:
    def test_signature_file_round_trip(self, tmp_path):
        doc = {
            "signatures": [
                {
                    "cve_id": "CVE-1",
                    "cvss": 5.0,
                    "category": "DoS",
                    "reference_patch_time": 123,
                    "match_mode": "any",
                    "vuln_fragments": ["bad();"],
                    "patch_fragments": ["good();"],
                }
            ]
        }
        path = tmp_path / "sigs.json"
        path.write_text(json.dumps(doc))
        sigs = load_signatures(path)
        assert sigs[0].cve_id == "CVE-1"
        assert sigs[0].match_mode == "any"

    def test_fragmentless_signature_rejected(self):
        with pytest.raises(InvalidInput):
            VulnSignature(
                cve_id="X",
                cvss=5.0,
                category="t",
                reference_patch_time=0,
                vuln_fragments=(),
                patch_fragments=("p",),
            )

    def test_whitespace_only_fragment_rejected(self):
        with pytest.raises(InvalidInput):
            VulnSignature(
                cve_id="X",
                cvss=5.0,
                category="t",
                reference_patch_time=0,
                vuln_fragments=("  \n\t",),
                patch_fragments=("p",),
            )

    def test_bad_cvss_rejected(self):
        with pytest.raises(InvalidInput):
            VulnSignature(
                cve_id="X",
                cvss=11.0,
                category="t",
                reference_patch_time=0,
                vuln_fragments=("v",),
                patch_fragments=("p",),
            )


def _finding(repo, cve, status, ttp_days=None):
    return VulnFinding(
        repo_id=repo,
        cve_id=cve,
        status=status,
        introduced_at=1 if status != STATUS_NEVER_PRESENT else None,
        patched_at=2 if status == STATUS_PATCHED else None,
        time_to_patch_secs=int(ttp_days * 86400) if ttp_days is not None else None,
    )


class TestPatchTimeStats:
    def test_hand_arithmetic(self):
        findings = [
            _finding("a", "c1", STATUS_PATCHED, 16),
            _finding("b", "c1", STATUS_PATCHED, 16),
            _finding("c", "c1", STATUS_PATCHED, 700),
        ]
        stats = patch_time_stats(findings)
        assert stats.median_days == pytest.approx(16.0)
        assert stats.mean_days == pytest.approx(244.0)

    def test_single_zero_day(self):
        stats = patch_time_stats([_finding("a", "c1", STATUS_PATCHED, 0)])
        assert stats.median_days == 0.0
        assert stats.mean_days == 0.0
        assert stats.within_16_days_fraction == 1.0

    def test_within_16_fraction(self):
        findings = [
            _finding("a", "c1", STATUS_PATCHED, 10),
            _finding("b", "c1", STATUS_PATCHED, 20),
        ]
        assert patch_time_stats(findings).within_16_days_fraction == 0.5

    def test_negative_time_preserved(self):
        stats = patch_time_stats([_finding("a", "c1", STATUS_PATCHED, -3)])
        assert stats.median_days == pytest.approx(-3.0)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            patch_time_stats([_finding("a", "c1", STATUS_VULNERABLE)])

    def test_median_matches_recomputation(self):
        import random

        rng = random.Random(3)
        findings = [
            _finding(f"r{i}", "c1", STATUS_PATCHED, rng.uniform(-5, 900))
            for i in range(37)
        ]
        stats = patch_time_stats(findings)
        days = sorted(f.time_to_patch_secs / 86400.0 for f in findings)
        assert stats.median_days == pytest.approx(days[(len(days) - 1) // 2], abs=1e-9)
        assert stats.mean_days == pytest.approx(sum(days) / len(days), abs=1e-9)


class TestCensus:
    def test_counts_only_vulnerable(self):
        findings = [
            _finding("r", "c1", STATUS_VULNERABLE),
            _finding("r", "c2", STATUS_PATCHED, 5),
            _finding("r", "c3", STATUS_NEVER_PRESENT),
        ]
        census = vuln_census(findings)
        assert census.per_repo == (("r", 1),)

    def test_all_patched(self):
        findings = [_finding("r", "c1", STATUS_PATCHED, 5)]
        assert vuln_census(findings).per_repo == (("r", 0),)

    def test_bucket_rows(self):
        findings = []
        for i, count in enumerate([0, 1, 1, 2, 4]):
            for j in range(count):
                findings.append(_finding(f"repo{i}", f"c{j}", STATUS_VULNERABLE))
            findings.append(_finding(f"repo{i}", "cx", STATUS_NEVER_PRESENT))
        census = vuln_census(findings)
        buckets = dict(census.buckets)
        assert buckets[">=1"] == 4
        assert buckets[">=2"] == 2
        assert buckets[">=4"] == 1
        assert buckets["0"] == 1

    def test_duplicate_rejected(self):
        findings = [
            _finding("r", "c1", STATUS_VULNERABLE),
            _finding("r", "c1", STATUS_PATCHED, 1),
        ]
        with pytest.raises(DuplicateFinding):
            vuln_census(findings)
