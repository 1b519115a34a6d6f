"""Commit-history ingestion and snapshot reconstruction.

Histories come from either a portable JSON fixture or a local git checkout
(see ``gitbackend``). Both are normalized to the same in-memory records:
commits in topological order, each carrying a line-based diff against its
first parent.

Modified files store a single contiguous block diff: ``deleted_lines`` is a
block removed from the pre-image and ``added_lines`` the block inserted at
the same position (located as the first occurrence of the deleted block;
an empty deleted block means append at end of file). Fixture writers built
on :func:`single_block_diff` always produce blocks that replay exactly.
File text is canonicalized without a trailing newline.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    CycleDetected,
    MalformedFixture,
    TruncatedAncestry,
    UnknownCommit,
    UnreadableSource,
)

STATUS_ADDED = "A"
STATUS_MODIFIED = "M"
STATUS_DELETED = "D"
STATUS_RENAMED = "R"
_STATUSES = {STATUS_ADDED, STATUS_MODIFIED, STATUS_DELETED, STATUS_RENAMED}


@dataclass(frozen=True)
class FileChange:
    """One file's change within a commit, diffed against the first parent."""

    path: str
    status: str
    added_lines: tuple[str, ...] = ()
    deleted_lines: tuple[str, ...] = ()
    old_path: str | None = None
    binary: bool = False


@dataclass(frozen=True)
class CommitRecord:
    """One commit: identity, parents, author info and per-file changes."""

    id: str
    parents: tuple[str, ...]
    author_time: int
    author_id: str
    file_changes: tuple[FileChange, ...] = ()


@dataclass(frozen=True)
class RepoHistory:
    """A repository's commits in topological order (parents first)."""

    repo_id: str
    commits: tuple[CommitRecord, ...]
    head: str
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {c.id: i for i, c in enumerate(self.commits)}
        )

    def commit(self, commit_id: str) -> CommitRecord:
        idx = self._index.get(commit_id)
        if idx is None:
            raise UnknownCommit(f"{self.repo_id}: no commit {commit_id!r}")
        return self.commits[idx]

    def __contains__(self, commit_id: str) -> bool:
        return commit_id in self._index

    def first_parent_chain(self, commit_id: str | None = None) -> list[CommitRecord]:
        """Root-to-tip chain following first parents from ``commit_id`` (default head)."""
        cur = self.commit(commit_id or self.head)
        chain = [cur]
        while cur.parents:
            first = cur.parents[0]
            if first not in self._index:
                if self.truncated:
                    break
                raise UnknownCommit(
                    f"{self.repo_id}: parent {first!r} missing from untruncated history"
                )
            cur = self.commit(first)
            chain.append(cur)
        chain.reverse()
        return chain


@dataclass
class SnapshotTree:
    """Full file texts at one commit. Binary paths carry empty text."""

    files: dict[str, str] = field(default_factory=dict)
    binary_paths: set[str] = field(default_factory=set)

    def text_files(self) -> dict[str, str]:
        return {p: t for p, t in self.files.items() if p not in self.binary_paths}


@dataclass(frozen=True)
class IngestLimits:
    """Bounds applied while loading a history.

    ``max_commits`` keeps only the newest N commits of the topological
    order and marks the history truncated when older ones are dropped.
    """

    max_commits: int | None = None


# --- single-block diffs -----------------------------------------------------

def split_lines(text: str) -> list[str]:
    return text.splitlines()


def join_lines(lines: Sequence[str]) -> str:
    return "\n".join(lines)


def single_block_diff(old: Sequence[str], new: Sequence[str]) -> tuple[list[str], list[str]]:
    """Minimal contiguous (deleted, added) block turning ``old`` into ``new``.

    The block spans from the first differing line to the last. Candidates
    are verified against the replay rule (first occurrence of the deleted
    block; empty block appends at EOF); when replay would land at the wrong
    spot the block is widened, falling back to a full replacement.
    """
    old = list(old)
    new = list(new)
    matcher = difflib.SequenceMatcher(a=old, b=new, autojunk=False)
    blocks = [op for op in matcher.get_opcodes() if op[0] != "equal"]
    if not blocks:
        return [], []
    i1 = blocks[0][1]
    i2 = blocks[-1][2]
    j1 = blocks[0][3]
    j2 = blocks[-1][4]
    deleted = old[i1:i2]
    added = new[j1:j2]
    if not deleted and old:
        # pure insertion: anchor on one neighboring line so the block is
        # locatable (costs one extra line in the added/deleted counts)
        if i1 > 0:
            deleted = old[i1 - 1 : i1]
            added = [old[i1 - 1], *new[j1:j2]]
        else:
            deleted = old[0:1]
            added = [*new[j1:j2], old[0]]
    if _replay_block(old, deleted, added) != new:
        deleted, added = list(old), list(new)
    return deleted, added


def _replay_block(old: list[str], deleted: list[str], added: list[str]) -> list[str] | None:
    if not deleted:
        return old + added
    pos = _find_block(old, deleted)
    if pos < 0:
        return None
    return old[:pos] + added + old[pos + len(deleted) :]


def _find_block(haystack: Sequence[str], needle: Sequence[str]) -> int:
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if list(haystack[i : i + n]) == list(needle):
            return i
    return -1


def locate_splice(old_lines: Sequence[str], change: FileChange) -> tuple[int, int, int]:
    """Where a Modified change lands in the pre-image: (position,
    deleted-line count, added-line count). Empty deleted blocks append at
    end of file."""
    deleted = list(change.deleted_lines)
    if not deleted:
        return len(old_lines), 0, len(change.added_lines)
    pos = _find_block(list(old_lines), deleted)
    if pos < 0:
        raise MalformedFixture(f"deleted block not found in {change.path!r}")
    return pos, len(deleted), len(change.added_lines)


def apply_change(tree: SnapshotTree, change: FileChange) -> None:
    """Replay one FileChange onto a snapshot in place."""
    path = change.path
    if change.status == STATUS_ADDED:
        if path in tree.files:
            raise MalformedFixture(f"add of existing file {path!r}")
        if change.binary:
            tree.files[path] = ""
            tree.binary_paths.add(path)
        else:
            tree.files[path] = join_lines(change.added_lines)
        return
    if change.status == STATUS_DELETED:
        if path not in tree.files:
            raise MalformedFixture(f"delete of missing file {path!r}")
        del tree.files[path]
        tree.binary_paths.discard(path)
        return
    if change.status == STATUS_RENAMED:
        old_path = change.old_path
        if old_path is None or old_path not in tree.files:
            raise MalformedFixture(f"rename of missing file {old_path!r}")
        tree.files[path] = tree.files.pop(old_path)
        if old_path in tree.binary_paths:
            tree.binary_paths.discard(old_path)
            tree.binary_paths.add(path)
    elif path not in tree.files:
        raise MalformedFixture(f"modify of missing file {path!r}")
    if change.binary:
        tree.files[path] = ""
        tree.binary_paths.add(path)
        return
    old_lines = split_lines(tree.files[path])
    pos, ndel, _ = locate_splice(old_lines, change)
    new_lines = old_lines[:pos] + list(change.added_lines) + old_lines[pos + ndel :]
    tree.files[path] = join_lines(new_lines)


# --- checkout ---------------------------------------------------------------

def checkout_snapshot(history: RepoHistory, commit_id: str) -> SnapshotTree:
    """Reconstruct all file texts at ``commit_id``.

    Replays each commit's diff along the first-parent lineage from the
    root. Raises TruncatedAncestry when the lineage crosses the truncation
    boundary and UnknownCommit for ids not in the history.
    """
    target = history.commit(commit_id)
    chain = history.first_parent_chain(target.id)
    root = chain[0]
    if root.parents and root.parents[0] not in history:
        raise TruncatedAncestry(
            f"{history.repo_id}: ancestry of {commit_id} crosses the truncation boundary"
        )
    tree = SnapshotTree()
    for commit in chain:
        for change in commit.file_changes:
            apply_change(tree, change)
    return tree


# --- fixture I/O -------------------------------------------------------------

def load_history(source: str | Path, limits: IngestLimits | None = None) -> RepoHistory:
    """Load a history from a fixture file or a local git repository directory."""
    limits = limits or IngestLimits()
    path = Path(source)
    if path.is_dir():
        from .gitbackend import load_git_history

        return load_git_history(path, limits)
    if not path.is_file():
        raise UnreadableSource(f"cannot read history source {str(path)!r}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableSource(f"cannot read fixture {str(path)!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFixture(f"invalid JSON: {exc}", "/") from exc
    return history_from_fixture(raw, limits=limits)


def history_from_fixture(raw: object, limits: IngestLimits | None = None) -> RepoHistory:
    """Validate and materialize a History Fixture document."""
    limits = limits or IngestLimits()
    if not isinstance(raw, dict):
        raise MalformedFixture("fixture root must be an object", "/")
    repo_id = raw.get("repo_id")
    if not isinstance(repo_id, str) or not repo_id:
        raise MalformedFixture("repo_id must be a non-empty string", "/repo_id")
    truncated = raw.get("truncated", False)
    if not isinstance(truncated, bool):
        raise MalformedFixture("truncated must be a boolean", "/truncated")
    commits_raw = raw.get("commits")
    if not isinstance(commits_raw, list) or not commits_raw:
        raise MalformedFixture("commits must be a non-empty array", "/commits")

    commits = [
        _parse_commit(entry, f"/commits/{i}") for i, entry in enumerate(commits_raw)
    ]
    _validate_graph(commits, truncated)

    if limits.max_commits is not None and len(commits) > limits.max_commits:
        commits = commits[-limits.max_commits :]
        truncated = True
        kept = {c.id for c in commits}
        # boundary parents now reference dropped commits; that is what
        # the truncated flag licenses
        del kept

    return RepoHistory(
        repo_id=repo_id,
        commits=tuple(commits),
        head=commits[-1].id,
        truncated=truncated,
    )


def _parse_commit(entry: object, ptr: str) -> CommitRecord:
    if not isinstance(entry, dict):
        raise MalformedFixture("commit must be an object", ptr)
    cid = entry.get("id")
    if not isinstance(cid, str) or not cid:
        raise MalformedFixture("id must be a non-empty string", f"{ptr}/id")
    parents = entry.get("parents", [])
    if not isinstance(parents, list) or not all(isinstance(p, str) and p for p in parents):
        raise MalformedFixture("parents must be an array of ids", f"{ptr}/parents")
    author_time = entry.get("author_time")
    if not isinstance(author_time, int) or isinstance(author_time, bool) or author_time <= 0:
        raise MalformedFixture("author_time must be a positive integer", f"{ptr}/author_time")
    author_id = entry.get("author_id")
    if not isinstance(author_id, str) or not author_id:
        raise MalformedFixture("author_id must be a non-empty string", f"{ptr}/author_id")
    files_raw = entry.get("files", [])
    if not isinstance(files_raw, list):
        raise MalformedFixture("files must be an array", f"{ptr}/files")
    changes = tuple(
        _parse_file(f, f"{ptr}/files/{i}") for i, f in enumerate(files_raw)
    )
    return CommitRecord(
        id=cid,
        parents=tuple(parents),
        author_time=author_time,
        author_id=author_id,
        file_changes=changes,
    )


def _parse_file(entry: object, ptr: str) -> FileChange:
    if not isinstance(entry, dict):
        raise MalformedFixture("file change must be an object", ptr)
    path = entry.get("path")
    _check_path(path, f"{ptr}/path")
    status = entry.get("status")
    if status not in _STATUSES:
        raise MalformedFixture("status must be one of A, M, D, R", f"{ptr}/status")
    old_path = entry.get("old_path")
    if status == STATUS_RENAMED:
        _check_path(old_path, f"{ptr}/old_path")
    elif old_path is not None:
        raise MalformedFixture("old_path is only valid with status R", f"{ptr}/old_path")
    binary = entry.get("binary", False)
    if not isinstance(binary, bool):
        raise MalformedFixture("binary must be a boolean", f"{ptr}/binary")
    added = entry.get("added", [])
    deleted = entry.get("deleted", [])
    for name, value in (("added", added), ("deleted", deleted)):
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise MalformedFixture(f"{name} must be an array of strings", f"{ptr}/{name}")
    if status == STATUS_ADDED and deleted:
        raise MalformedFixture("added file must not carry deleted lines", f"{ptr}/deleted")
    if status == STATUS_DELETED and added:
        raise MalformedFixture("deleted file must not carry added lines", f"{ptr}/added")
    if binary and (added or deleted):
        raise MalformedFixture("binary change must carry empty line lists", ptr)
    return FileChange(
        path=path,
        status=status,
        added_lines=tuple(added),
        deleted_lines=tuple(deleted),
        old_path=old_path,
        binary=binary,
    )


def _check_path(path: object, ptr: str) -> None:
    if not isinstance(path, str) or not path:
        raise MalformedFixture("path must be a non-empty string", ptr)
    if path.startswith("/") or path.startswith("\\"):
        raise MalformedFixture("path must be repository-relative", ptr)
    if any(part == ".." for part in path.replace("\\", "/").split("/")):
        raise MalformedFixture("path must not escape the repository", ptr)


def _validate_graph(commits: Sequence[CommitRecord], truncated: bool) -> None:
    seen: dict[str, int] = {}
    all_ids = set()
    for i, c in enumerate(commits):
        if c.id in seen:
            raise MalformedFixture(f"duplicate commit id {c.id!r}", f"/commits/{i}/id")
        seen[c.id] = i
        all_ids.add(c.id)

    # iterative three-color DFS over parent edges between known ids
    color: dict[str, int] = {}
    for start in commits:
        if color.get(start.id, 0):
            continue
        stack: list[tuple[str, int]] = [(start.id, 0)]
        color[start.id] = 1
        while stack:
            cid, edge = stack[-1]
            parents = [p for p in commits[seen[cid]].parents if p in all_ids]
            if edge < len(parents):
                stack[-1] = (cid, edge + 1)
                p = parents[edge]
                state = color.get(p, 0)
                if state == 1:
                    raise CycleDetected(f"commit graph contains a cycle through {p!r}")
                if state == 0:
                    color[p] = 1
                    stack.append((p, 0))
            else:
                color[cid] = 2
                stack.pop()

    for i, c in enumerate(commits):
        for p in c.parents:
            if p in seen:
                if seen[p] >= i:
                    raise MalformedFixture(
                        f"parent {p!r} does not precede commit {c.id!r}",
                        f"/commits/{i}/parents",
                    )
            elif not truncated:
                raise MalformedFixture(
                    f"unknown parent {p!r} in untruncated history",
                    f"/commits/{i}/parents",
                )


def history_to_fixture(history: RepoHistory) -> dict:
    """Serialize a history back to the fixture document structure."""
    commits = []
    for c in history.commits:
        files = []
        for ch in c.file_changes:
            entry: dict[str, object] = {
                "path": ch.path,
                "status": ch.status,
                "added": list(ch.added_lines),
                "deleted": list(ch.deleted_lines),
            }
            if ch.old_path is not None:
                entry["old_path"] = ch.old_path
            if ch.binary:
                entry["binary"] = True
            files.append(entry)
        commits.append(
            {
                "id": c.id,
                "parents": list(c.parents),
                "author_time": c.author_time,
                "author_id": c.author_id,
                "files": files,
            }
        )
    return {
        "repo_id": history.repo_id,
        "truncated": history.truncated,
        "commits": commits,
    }


def save_history(history: RepoHistory, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(history_to_fixture(history), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
