"""Local git repository ingestion via plumbing commands.

Reads the commit graph with ``rev-list --topo-order`` and materializes
per-commit diffs against the first parent by comparing blob contents, so
modified files carry the same single-block diffs the fixture format uses.
Rename detection is whatever ``-M`` reports; nothing is inferred.
"""

from __future__ import annotations

import shutil
import subprocess
from pathlib import Path

from .errors import UnreadableSource
from .history import (
    STATUS_ADDED,
    STATUS_DELETED,
    STATUS_MODIFIED,
    STATUS_RENAMED,
    CommitRecord,
    FileChange,
    IngestLimits,
    RepoHistory,
    single_block_diff,
)


def _git(repo: Path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        text=False,
        check=False,
    )
    if proc.returncode != 0:
        raise UnreadableSource(
            f"git {' '.join(args)} failed in {repo}: "
            + proc.stderr.decode("utf-8", "replace").strip()
        )
    return proc.stdout.decode("utf-8", "replace")


def _blob_lines(repo: Path, commit: str, path: str) -> list[str]:
    out = _git(repo, "show", f"{commit}:{path}")
    return out.splitlines()


def load_git_history(repo: str | Path, limits: IngestLimits | None = None) -> RepoHistory:
    """Ingest a local git checkout into a RepoHistory."""
    limits = limits or IngestLimits()
    repo = Path(repo)
    if shutil.which("git") is None:
        raise UnreadableSource(
            "the 'git' tool is not installed; install git or export the "
            "repository to a history fixture first"
        )
    if not (repo / ".git").exists() and not (repo / "HEAD").exists():
        raise UnreadableSource(f"{repo} is not a git repository")

    ids = _git(repo, "rev-list", "--topo-order", "--reverse", "HEAD").split()
    if not ids:
        raise UnreadableSource(f"{repo} has no commits on HEAD")
    truncated = False
    if limits.max_commits is not None and len(ids) > limits.max_commits:
        ids = ids[-limits.max_commits :]
        truncated = True
    kept = set(ids)

    commits: list[CommitRecord] = []
    for cid in ids:
        meta = _git(repo, "show", "-s", "--format=%P%x1f%at%x1f%ae", cid)
        parents_raw, at_raw, author = meta.rstrip("\n").split("\x1f")
        parents = tuple(p for p in parents_raw.split() if p)
        changes = _commit_changes(repo, cid, parents[0] if parents else None)
        commits.append(
            CommitRecord(
                id=cid,
                parents=tuple(p for p in parents if p in kept or truncated),
                author_time=int(at_raw),
                author_id=author,
                file_changes=changes,
            )
        )
    return RepoHistory(
        repo_id=repo.name,
        commits=tuple(commits),
        head=ids[-1],
        truncated=truncated,
    )


def _commit_changes(repo: Path, cid: str, first_parent: str | None) -> tuple[FileChange, ...]:
    if first_parent is None:
        status_out = _git(repo, "diff-tree", "--root", "--no-commit-id", "-r", "-M", "--name-status", cid)
        numstat_out = _git(repo, "diff-tree", "--root", "--no-commit-id", "-r", "-M", "--numstat", cid)
    else:
        status_out = _git(repo, "diff-tree", "-r", "-M", "--name-status", first_parent, cid)
        numstat_out = _git(repo, "diff-tree", "-r", "-M", "--numstat", first_parent, cid)

    binary_paths = set()
    for line in numstat_out.splitlines():
        parts = line.split("\t")
        if len(parts) >= 3 and parts[0] == "-" and parts[1] == "-":
            binary_paths.add(parts[-1])

    changes: list[FileChange] = []
    for line in status_out.splitlines():
        parts = line.split("\t")
        code = parts[0]
        if code.startswith("R") and len(parts) == 3:
            old_path, path = parts[1], parts[2]
            if path in binary_paths or f"{old_path} => {path}" in binary_paths:
                changes.append(
                    FileChange(path=path, status=STATUS_RENAMED, old_path=old_path, binary=True)
                )
                continue
            old_lines = _blob_lines(repo, f"{cid}^", old_path) if first_parent else []
            new_lines = _blob_lines(repo, cid, path)
            deleted, added = single_block_diff(old_lines, new_lines)
            changes.append(
                FileChange(
                    path=path,
                    status=STATUS_RENAMED,
                    old_path=old_path,
                    added_lines=tuple(added),
                    deleted_lines=tuple(deleted),
                )
            )
            continue
        path = parts[-1]
        if path in binary_paths:
            status = {"A": STATUS_ADDED, "D": STATUS_DELETED}.get(code[0], STATUS_MODIFIED)
            changes.append(FileChange(path=path, status=status, binary=True))
            continue
        if code[0] == "A":
            changes.append(
                FileChange(
                    path=path,
                    status=STATUS_ADDED,
                    added_lines=tuple(_blob_lines(repo, cid, path)),
                )
            )
        elif code[0] == "D":
            changes.append(
                FileChange(
                    path=path,
                    status=STATUS_DELETED,
                    deleted_lines=tuple(_blob_lines(repo, first_parent, path)),
                )
            )
        else:
            old_lines = _blob_lines(repo, first_parent, path) if first_parent else []
            new_lines = _blob_lines(repo, cid, path)
            deleted, added = single_block_diff(old_lines, new_lines)
            changes.append(
                FileChange(
                    path=path,
                    status=STATUS_MODIFIED,
                    added_lines=tuple(added),
                    deleted_lines=tuple(deleted),
                )
            )
    return tuple(changes)
