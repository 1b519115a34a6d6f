#!/usr/bin/env python3
"""Regenerate the bundled demo corpus.

Six synthetic repositories around one parent project ("bitcore"):
two platform forks, one bulk-upload fork, one independent project, and
one fork that back-ports the security fix on its own schedule. Output is
deterministic; run from the repository root:

    python demo/generate_demo.py
"""

from __future__ import annotations

import json
from pathlib import Path

from forkscope.fixtures import CommitSpec, build_history
from forkscope.history import RepoHistory, SnapshotTree, apply_change, save_history

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"

T0 = 1_640_000_000
DAY = 86_400
AS_OF = T0 + 500 * DAY
REF_PATCH_TIME = T0 + 355 * DAY

VULN = 'if (vMsg.size() > MAX_MESSAGE_SIZE)\n        return error("message too large");'
PATCH = 'if (GetSerializeSize(tx) > MAX_MESSAGE_SIZE)\n        return error("transaction too large");'

# the vuln fragment pins the brace before the unguarded call so the
# patched code (guard inserted between them) no longer matches
LEAK_VULN = "int user_len) {\n    memcpy(dst, src, user_len);"
LEAK_PATCH = "if (user_len <= sizeof(dst))\n        memcpy(dst, src, user_len);"

CORE = """\
static int subsidy(int height) {
    int value = 50;
    while (height >= 210000) {
        value = value / 2;
        height = height - 210000;
    }
    return value;
}
"""

NET = """\
int handle_message(int kind, int size) {
    if (size > 5000) {
        return -1;
    }
    return dispatch(kind);
}
"""


def helper(i: int) -> str:
    body = "\n".join("    acc = acc * 3 + seed;" for _ in range(i + 2))
    guard = "    if (acc > 100) { acc = acc - 7; }\n" * (i % 3)
    return (
        f"int helper_{i}(int seed) {{\n    int acc = seed;\n{body}\n{guard}"
        "    return acc;\n}"
    )


def tree_at(history: RepoHistory, commit_id: str) -> dict[str, str]:
    tree = SnapshotTree()
    for commit in history.first_parent_chain(commit_id):
        for change in commit.file_changes:
            apply_change(tree, change)
    return dict(tree.files)


def make_bitcore() -> RepoHistory:
    authors = ["satomi", "gwen", "finney"]
    trees = []
    tree = {
        "src/core.c": CORE,
        "src/net.c": NET,
        "src/util.h": "#define VERSION 0",
    }
    trees.append(dict(tree))
    for i in range(1, 16):
        tree = dict(tree)
        if i == 2:
            tree["src/net.c"] = tree["src/net.c"].replace(
                "return dispatch(kind);", VULN + "\n    return dispatch(kind);"
            )
        elif i == 12:
            tree["src/net.c"] = tree["src/net.c"].replace(VULN, PATCH)
        else:
            target = ("src/core.c", "src/net.c")[i % 2]
            tree[target] = tree[target] + "\n" + helper(i)
        trees.append(tree)
    steps = [
        CommitSpec(
            commit_id=f"btc-c{i}",
            author_time=T0 + i * 30 * DAY,
            tree=t,
            author_id=authors[i % 3],
        )
        for i, t in enumerate(trees)
    ]
    return build_history("bitcore", steps)


def fork_with(parent: RepoHistory, repo_id: str, shared: int,
              own: list[tuple[str, int, dict[str, str]]]) -> RepoHistory:
    """Child sharing the first ``shared`` parent commits plus its own steps.

    ``own`` entries are (commit_id, author_time, full tree).
    """
    prefix = parent.commits[:shared]
    steps = [
        CommitSpec(commit_id=cid, author_time=t, tree=tree, author_id=f"{repo_id}-dev")
        for cid, t, tree in own
    ]
    return build_history(repo_id, steps, parent_prefix=prefix)


def make_alphacoin(parent: RepoHistory) -> RepoHistory:
    base = tree_at(parent, parent.commits[12].id)  # post-patch fork
    t1 = dict(base, **{"src/alpha.c": "int alpha_reward(void) {\n    return 77;\n}"})
    t2 = dict(t1, **{"src/util.h": "#define VERSION 1001"})
    t3 = dict(t2, **{"src/alpha.c": t1["src/alpha.c"] + "\n" + helper(40)})
    start = T0 + 365 * DAY
    return fork_with(
        parent,
        "alphacoin",
        13,
        [("alpha-c0", start, t1), ("alpha-c1", start + 5 * DAY, t2), ("alpha-c2", start + 10 * DAY, t3)],
    )


def make_betacoin(parent: RepoHistory) -> RepoHistory:
    base = tree_at(parent, parent.commits[9].id)  # pre-patch fork, never fixed
    t1 = dict(base, **{"src/util.h": "#define VERSION 2001"})
    t2 = dict(t1, **{"src/beta.c": "int beta_fee(void) {\n    return 3;\n}"})
    start = T0 + 275 * DAY
    return fork_with(
        parent, "betacoin", 10, [("beta-c0", start, t1), ("beta-c1", start + 5 * DAY, t2)]
    )


def make_gammacoin(parent: RepoHistory) -> RepoHistory:
    base = tree_at(parent, parent.commits[9].id)
    upload_time = parent.commits[9].author_time + 7200
    t1 = dict(base, **{"src/util.h": "#define VERSION 3001"})
    t2 = dict(t1, **{"src/util.h": "#define VERSION 3002"})
    t3 = dict(t2, **{"src/gamma.c": "int gamma_pow(void) {\n    return 9;\n}"})
    steps = [
        CommitSpec("gamma-up", upload_time, base, author_id="gamma-dev"),
        CommitSpec("gamma-c1", T0 + 280 * DAY, t1, author_id="gamma-dev"),
        CommitSpec("gamma-c2", T0 + 300 * DAY, t2, author_id="gamma-dev"),
        CommitSpec("gamma-c3", T0 + 430 * DAY, t3, author_id="gamma-dev"),
    ]
    return build_history("gammacoin", steps)


def make_deltacoin() -> RepoHistory:
    trees = []
    tree = {
        "app/main.c": "int launch(void) {\n    return 42;\n}",
        "app/buf.c": "void copy_in(char *dst, const char *src, int user_len) {\n    (void) dst;\n}",
    }
    trees.append(dict(tree))
    tree = dict(tree)
    tree["app/buf.c"] = (
        "void copy_in(char *dst, const char *src, int user_len) {\n"
        "    memcpy(dst, src, user_len);\n}"
    )
    trees.append(tree)  # leak introduced
    for i in range(2, 8):
        tree = dict(tree)
        if i == 5:
            tree["app/buf.c"] = tree["app/buf.c"].replace(
                "memcpy(dst, src, user_len);",
                "if (user_len <= sizeof(dst))\n        memcpy(dst, src, user_len);",
            )
        else:
            tree["app/main.c"] = tree["app/main.c"] + "\n" + helper(20 + i)
        trees.append(tree)
    steps = [
        CommitSpec(
            commit_id=f"delta-c{i}",
            author_time=T0 + (100 + 40 * i) * DAY,
            tree=t,
            author_id=("delta-dev", "delta-ops")[i % 2],
        )
        for i, t in enumerate(trees)
    ]
    return build_history("deltacoin", steps)


def make_epsiloncoin(parent: RepoHistory) -> RepoHistory:
    base = tree_at(parent, parent.commits[10].id)  # pre-patch fork
    t1 = dict(base)
    t1["src/net.c"] = t1["src/net.c"].replace(VULN, PATCH)  # backports the fix
    t2 = dict(t1, **{"src/util.h": "#define VERSION 5001"})
    return fork_with(
        parent,
        "epsiloncoin",
        11,
        [("eps-c0", T0 + 330 * DAY, t1), ("eps-c1", T0 + 340 * DAY, t2)],
    )


METADATA = {
    "bitcore": dict(watch=820, star=4200, fork=1900, issues_open=120, issues_closed=3400,
                    branches=14, releases=32, pull_requests=2600),
    "alphacoin": dict(watch=40, star=180, fork=60, issues_open=12, issues_closed=88,
                      branches=4, releases=6, pull_requests=75),
    "betacoin": dict(watch=3, star=9, fork=4, issues_open=7, issues_closed=2,
                     branches=1, releases=1, pull_requests=3),
    "gammacoin": dict(watch=5, star=22, fork=11, issues_open=9, issues_closed=5,
                      branches=2, releases=2, pull_requests=6),
    "deltacoin": dict(watch=95, star=510, fork=130, issues_open=25, issues_closed=410,
                      branches=6, releases=12, pull_requests=300),
    "epsiloncoin": dict(watch=11, star=47, fork=15, issues_open=4, issues_closed=30,
                        branches=3, releases=4, pull_requests=22),
}

SIGNATURES = {
    "signatures": [
        {
            "cve_id": "CVE-9999-0001",
            "cvss": 5.0,
            "category": "DoS",
            "reference_patch_time": REF_PATCH_TIME,
            "match_mode": "all",
            "vuln_fragments": [VULN],
            "patch_fragments": [PATCH],
        },
        {
            "cve_id": "CVE-9999-0002",
            "cvss": 7.5,
            "category": "Overflow",
            "reference_patch_time": T0 + 290 * DAY,
            "match_mode": "all",
            "vuln_fragments": [LEAK_VULN],
            "patch_fragments": [LEAK_PATCH],
        },
    ]
}

REGISTRY = """\
repo_id,delisted_market,repo_unavailable,scam_list_a,scam_list_b
bitcore,false,false,false,false
alphacoin,false,false,false,false
betacoin,true,false,true,true
gammacoin,true,false,false,true
deltacoin,false,false,false,false
epsiloncoin,true,false,false,false
"""

METRICS = """\
repo_id,value
bitcore,9500000
alphacoin,420000
betacoin,1500
gammacoin,8000
deltacoin,2700000
epsiloncoin,56000
"""

CONFIG = f"""\
# forkscope demo pipeline
as_of: {AS_OF}
parent_repo_id: bitcore
output_dir: out
registry_file: registry.csv

repos:
  - repo_id: bitcore
    source: fixtures/bitcore.json
    metadata: fixtures/bitcore.meta.json
  - repo_id: alphacoin
    source: fixtures/alphacoin.json
    metadata: fixtures/alphacoin.meta.json
  - repo_id: betacoin
    source: fixtures/betacoin.json
    metadata: fixtures/betacoin.meta.json
  - repo_id: gammacoin
    source: fixtures/gammacoin.json
    metadata: fixtures/gammacoin.meta.json
  - repo_id: deltacoin
    source: fixtures/deltacoin.json
    metadata: fixtures/deltacoin.meta.json
  - repo_id: epsiloncoin
    source: fixtures/epsiloncoin.json
    metadata: fixtures/epsiloncoin.meta.json

kmeans:
  k_range: [2, 4]
  seed: 7

similarity:
  min_match: 9
  pairing: greedy

lineage:
  prefix_probe: 10
  stride: 1
  default_threshold: 0.929

vulnscan:
  signature_file: signatures.json
  fallback_file_limit: 30

analytics:
  metric_file: metrics.csv
"""


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    bitcore = make_bitcore()
    repos = [
        bitcore,
        make_alphacoin(bitcore),
        make_betacoin(bitcore),
        make_gammacoin(bitcore),
        make_deltacoin(),
        make_epsiloncoin(bitcore),
    ]
    for history in repos:
        save_history(history, FIXTURES / f"{history.repo_id}.json")
        meta = METADATA[history.repo_id]
        (FIXTURES / f"{history.repo_id}.meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    (HERE / "signatures.json").write_text(
        json.dumps(SIGNATURES, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (HERE / "registry.csv").write_text(REGISTRY, encoding="utf-8")
    (HERE / "metrics.csv").write_text(METRICS, encoding="utf-8")
    (HERE / "config.yaml").write_text(CONFIG, encoding="utf-8")
    print(f"wrote {len(repos)} fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
