from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, strategies as st

from forkscope.analytics import (
    SurvivabilityRecord,
    crosstab,
    kruskal_wallis,
    load_registry,
    pearson,
    summary_stats,
)
from forkscope.errors import (
    DuplicateRegistryEntry,
    EmptyGroup,
    EmptyInput,
    InvalidInput,
    LengthMismatch,
    TooFewGroups,
    ZeroVariance,
)


def record(repo, **flags):
    return SurvivabilityRecord(repo_id=repo, **flags)


class TestSurvivabilityRecord:
    def test_inactive_any_is_or(self):
        assert not record("a").inactive_any
        assert record("a", scam_list_b=True).inactive_any
        assert record("a", delisted_market=True, repo_unavailable=True).inactive_any

    def test_registry_csv(self, tmp_path):
        path = tmp_path / "registry.csv"
        path.write_text(
            "repo_id,delisted_market,repo_unavailable,scam_list_a,scam_list_b\n"
            "alpha,true,false,false,false\n"
            "beta,false,false,true,true\n"
        )
        records = load_registry(path)
        assert records[0].delisted_market and not records[0].scam_list_a
        assert records[1].inactive_any

    def test_registry_rejects_bad_cell(self, tmp_path):
        path = tmp_path / "registry.csv"
        path.write_text(
            "repo_id,delisted_market,repo_unavailable,scam_list_a,scam_list_b\n"
            "alpha,yes,false,false,false\n"
        )
        with pytest.raises(InvalidInput):
            load_registry(path)


class TestCrossTab:
    def test_hand_counted_group(self):
        registry = [
            record("a", delisted_market=True),
            record("b", scam_list_a=True),
            record("c", delisted_market=True, scam_list_b=True),
            record("d"),
        ]
        groups = {r: "G" for r in "abcd"}
        table = crosstab(groups, registry)
        row = table.rows[0]
        assert row.total == 4
        assert row.counts["inactive_any"] == 3
        assert row.pct["inactive_any"] == pytest.approx(75.0)
        assert table.all_row.total == 4

    def test_empty_groups(self):
        table = crosstab({}, [record("a")])
        assert table.rows == ()
        assert table.all_row.total == 0
        assert table.all_row.pct["inactive_any"] == 0.0

    def test_missing_repo_counts_as_active(self, caplog):
        table = crosstab({"ghost": "G"}, [])
        assert table.rows[0].counts["inactive_any"] == 0

    def test_duplicate_registry_entry(self):
        with pytest.raises(DuplicateRegistryEntry):
            crosstab({"a": "G"}, [record("a"), record("a")])

    def test_counts_sum_against_percentages(self):
        rng = random.Random(8)
        registry = [
            record(
                f"r{i}",
                delisted_market=rng.random() < 0.4,
                scam_list_a=rng.random() < 0.3,
            )
            for i in range(30)
        ]
        groups = {f"r{i}": f"G{i % 3}" for i in range(30)}
        table = crosstab(groups, registry)
        assert sum(r.total for r in table.rows) == table.all_row.total
        for row in (*table.rows, table.all_row):
            for name, count in row.counts.items():
                assert count <= row.total
                if row.total:
                    assert row.pct[name] == pytest.approx(100.0 * count / row.total)

    def test_similarity_buckets_hand_counted(self):
        # cumulative buckets over scores, mirroring the report table layout
        scores = {"a": 0.97, "b": 0.92, "c": 0.40, "d": 0.96}
        registry = [
            record("a", delisted_market=True),
            record("b"),
            record("c", scam_list_a=True),
            record("d", delisted_market=True),
        ]
        high = {r: ">=0.95" for r, s in scores.items() if s >= 0.95}
        table = crosstab(high, registry)
        assert table.rows[0].total == 2
        assert table.rows[0].counts["inactive_any"] == 2
        mid = {r: ">=0.90" for r, s in scores.items() if s >= 0.90}
        table = crosstab(mid, registry)
        assert table.rows[0].total == 3
        assert table.rows[0].counts["inactive_any"] == 2


class TestPearson:
    def test_perfect_linear(self):
        x = list(range(1, 11))
        result = pearson(x, [2 * v for v in x])
        assert result.r == pytest.approx(1.0)
        assert result.p == pytest.approx(0.0, abs=1e-12)

    def test_perfect_negative(self):
        x = list(range(1, 11))
        assert pearson(x, [-v for v in x]).r == pytest.approx(-1.0)

    def test_hand_computed_five_points(self):
        result = pearson([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
        assert result.r == pytest.approx(0.8, abs=1e-9)
        assert result.p == pytest.approx(0.104, abs=1e-3)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pearson([1, 2, 3], [1, 2])

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            pearson([1, 1, 1], [1, 2, 3])

    def test_too_few(self):
        with pytest.raises(InvalidInput):
            pearson([1, 2], [3, 4])

    @given(
        a=st.floats(min_value=0.1, max_value=5.0),
        b=st.floats(min_value=-10.0, max_value=10.0),
    )
    def test_affine_invariance(self, a, b):
        x = [1.0, 2.0, 4.0, 8.0, 9.0, 12.0]
        y = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0]
        base = pearson(x, y).r
        scaled = pearson([a * v + b for v in x], y).r
        assert abs(scaled - base) <= 1e-9


class TestKruskalWallis:
    def test_two_group_hand_rank_computation(self):
        result = kruskal_wallis([[1, 2, 3], [4, 5, 6]])
        assert result.H == pytest.approx(3.857142857142, abs=1e-6)
        assert result.dof == 1
        assert 0.0 < result.p < 1.0

    def test_all_values_tie(self):
        result = kruskal_wallis([[5, 5], [5, 5, 5]])
        assert result.H == 0.0

    def test_permuting_groups_invariant(self):
        groups = [[1.0, 4.0, 7.0], [2.0, 5.0], [9.0, 3.0, 6.0, 8.0]]
        base = kruskal_wallis(groups).H
        assert kruskal_wallis(groups[::-1]).H == pytest.approx(base, abs=1e-12)

    def test_monotone_transform_invariant(self):
        groups = [[1.0, 4.0, 7.0], [2.0, 5.0], [9.0, 3.0, 6.0]]
        base = kruskal_wallis(groups).H
        cubed = [[math.exp(v) for v in g] for g in groups]
        assert kruskal_wallis(cubed).H == pytest.approx(base, abs=1e-12)

    def test_tie_correction_matches_reference(self):
        # mid-ranks with ties; compare against scipy's implementation
        from scipy import stats as sps

        groups = [[1, 2, 2, 3], [2, 4, 4], [1, 5, 6, 6]]
        ours = kruskal_wallis(groups)
        ref = sps.kruskal(*groups)
        assert ours.H == pytest.approx(ref.statistic, abs=1e-9)
        assert ours.p == pytest.approx(ref.pvalue, abs=1e-9)

    def test_errors(self):
        with pytest.raises(TooFewGroups):
            kruskal_wallis([[1, 2, 3]])
        with pytest.raises(EmptyGroup):
            kruskal_wallis([[1], []])
        with pytest.raises(InvalidInput):
            kruskal_wallis([[1], [2]])


class TestSummaryStats:
    def test_hand_arithmetic(self):
        stats = summary_stats([16, 16, 700])
        assert stats.median == 16
        assert stats.mean == pytest.approx(244.0)

    def test_single_value(self):
        stats = summary_stats([5])
        assert (stats.median, stats.mean, stats.std) == (5, 5.0, 0.0)

    def test_lower_middle_median(self):
        assert summary_stats([1, 2, 3, 4]).median == 2

    def test_empty(self):
        with pytest.raises(EmptyInput):
            summary_stats([])

    def test_population_std(self):
        stats = summary_stats([10.0, 20.0])
        assert stats.std == pytest.approx(5.0)
