"""Builders for synthetic history fixtures.

A fixture is described as a linear sequence of full directory states; each
step becomes one commit whose file changes are the single-block diffs
between consecutive states. Useful for tests, demos, and for snapshotting
real directory trees into the portable fixture format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .history import (
    STATUS_ADDED,
    STATUS_DELETED,
    STATUS_MODIFIED,
    CommitRecord,
    FileChange,
    RepoHistory,
    single_block_diff,
    split_lines,
)


@dataclass
class CommitSpec:
    """One step of a synthetic history: the full tree after the commit."""

    commit_id: str
    author_time: int
    tree: Mapping[str, str]
    author_id: str = "dev"
    binary_paths: frozenset[str] = frozenset()


def diff_trees(
    old: Mapping[str, str],
    new: Mapping[str, str],
    binary_paths: frozenset[str] = frozenset(),
) -> tuple[FileChange, ...]:
    """File changes (single-block diffs) turning tree ``old`` into ``new``."""
    changes: list[FileChange] = []
    for path in sorted(set(old) | set(new)):
        if path not in new:
            changes.append(
                FileChange(
                    path=path,
                    status=STATUS_DELETED,
                    deleted_lines=tuple(split_lines(old[path])),
                )
            )
        elif path not in old:
            if path in binary_paths:
                changes.append(FileChange(path=path, status=STATUS_ADDED, binary=True))
            else:
                changes.append(
                    FileChange(
                        path=path,
                        status=STATUS_ADDED,
                        added_lines=tuple(split_lines(new[path])),
                    )
                )
        elif old[path] != new[path]:
            if path in binary_paths:
                changes.append(FileChange(path=path, status=STATUS_MODIFIED, binary=True))
            else:
                deleted, added = single_block_diff(
                    split_lines(old[path]), split_lines(new[path])
                )
                changes.append(
                    FileChange(
                        path=path,
                        status=STATUS_MODIFIED,
                        added_lines=tuple(added),
                        deleted_lines=tuple(deleted),
                    )
                )
    return tuple(changes)


def build_history(
    repo_id: str,
    steps: Sequence[CommitSpec],
    parent_prefix: Sequence[CommitRecord] = (),
) -> RepoHistory:
    """Build a linear history from tree states.

    ``parent_prefix`` prepends already-built commits (e.g. a shared prefix
    with another repository to model a fork); the first step's diff is then
    taken against the tree those commits replay to.
    """
    if not steps:
        raise ValueError("at least one commit step is required")
    commits: list[CommitRecord] = list(parent_prefix)
    prev_tree: dict[str, str] = {}
    if parent_prefix:
        from .history import SnapshotTree, apply_change

        tree = SnapshotTree()
        for commit in parent_prefix:
            for change in commit.file_changes:
                apply_change(tree, change)
        prev_tree = dict(tree.files)
    prev_id = commits[-1].id if commits else None
    for step in steps:
        changes = diff_trees(prev_tree, step.tree, step.binary_paths)
        commits.append(
            CommitRecord(
                id=step.commit_id,
                parents=(prev_id,) if prev_id else (),
                author_time=step.author_time,
                author_id=step.author_id,
                file_changes=changes,
            )
        )
        prev_id = step.commit_id
        prev_tree = dict(step.tree)
    return RepoHistory(
        repo_id=repo_id,
        commits=tuple(commits),
        head=commits[-1].id,
        truncated=False,
    )


def tree_from_directory(root: str | Path) -> dict[str, str]:
    """Read a directory into a path->text tree (texts canonicalized
    without trailing newline, matching snapshot replay output)."""
    root = Path(root)
    tree: dict[str, str] = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        text = path.read_text(encoding="utf-8", errors="replace")
        tree[rel] = "\n".join(text.splitlines())
    return tree
