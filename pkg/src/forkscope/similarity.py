"""Token-level code similarity via greedy string tiling.

Source files are lexed into abstract token classes (all identifiers map to
one class, literal contents are dropped) so that renames and reformatting
cannot hide reuse. Two token streams are then covered with maximal
non-overlapping common runs ("tiles") of at least ``min_match`` tokens and
scored as ``2 * matched / (len_a + len_b)``.

Tiling contract: the shorter stream is always used as the pattern (ties
broken by lexicographic token order), maximal matches are enumerated by
ascending pattern index then text index, and equal-length matches are
tiled in that order skipping occluded ones. This fixes the greedy choices,
making scores exactly symmetric and reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EmptyInput, InvalidInput, NoEligibleFiles
from .history import SnapshotTree

DEFAULT_MIN_MATCH = 9
DEFAULT_EXTENSIONS = (".c", ".cc", ".cpp", ".cxx", ".h", ".hpp")

C_KEYWORDS = frozenset(
    """
    auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    bool catch class delete explicit false friend mutable namespace new
    operator private protected public template this throw true try typeid
    typename using virtual wchar_t
    """.split()
)

_MULTI_OPS = (
    "<<=", ">>=", "...", "->*", "::", "->", "++", "--", "<<", ">>",
    "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "##",
)


@dataclass(frozen=True)
class TokenStream:
    """Abstract token classes of one source file plus a token->line map."""

    origin: str
    tokens: tuple[str, ...]
    line_map: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Tile:
    """One matched common run: start offsets in both streams and its length."""

    a_start: int
    b_start: int
    length: int


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    matched_tokens: int
    total_tokens_a: int
    total_tokens_b: int


@dataclass(frozen=True)
class FilePairScore:
    path_a: str
    path_b: str
    value: float
    matched_tokens: int


@dataclass(frozen=True)
class RepoSimilarity:
    score: SimilarityScore
    file_pairs: tuple[FilePairScore, ...]


@dataclass(frozen=True)
class SimilarityConfig:
    min_match: int = DEFAULT_MIN_MATCH
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS
    pairing: str = "greedy"  # or "optimal"
    dialect: str = "c_like"


# --- tokenizer ---------------------------------------------------------------

def tokenize(source: str, dialect: str = "c_like", origin: str = "") -> TokenStream:
    """Lex ``source`` into abstract token classes.

    ``c_like`` strips comments, drops string/char literal contents,
    abstracts identifiers to one class and numbers to another, keeps
    keywords distinct, and gives each operator/punctuator its own class.
    ``plain`` falls back to whitespace-separated words kept verbatim.
    """
    tokens, lines = _scan_cached(source, dialect)
    return TokenStream(origin=origin, tokens=tokens, line_map=lines)


@lru_cache(maxsize=8192)
def _scan_cached(source: str, dialect: str) -> tuple[tuple[str, ...], tuple[int, ...]]:
    if dialect == "plain":
        return _scan_plain(source)
    if dialect == "c_like":
        return _scan_c_like(source)
    raise InvalidInput(f"unknown tokenizer dialect {dialect!r}")


def _scan_plain(source: str) -> tuple[tuple[str, ...], tuple[int, ...]]:
    tokens: list[str] = []
    lines: list[int] = []
    for lineno, line in enumerate(source.split("\n"), start=1):
        for word in line.split():
            tokens.append(word)
            lines.append(lineno)
    return tuple(tokens), tuple(lines)


def _scan_c_like(source: str) -> tuple[tuple[str, ...], tuple[int, ...]]:
    tokens: list[str] = []
    lines: list[int] = []
    n = len(source)
    i = 0
    line = 1

    def emit(tok: str) -> None:
        tokens.append(tok)
        lines.append(line)

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        nxt = source[i + 1] if i + 1 < n else ""
        if ch == "/" and nxt == "/":
            end = source.find("\n", i)
            i = n if end < 0 else end
            continue
        if ch == "/" and nxt == "*":
            end = source.find("*/", i + 2)
            stop = n if end < 0 else end + 2
            line += source.count("\n", i, stop)
            i = stop
            continue
        if ch in "\"'":
            emit("str" if ch == '"' else "chr")
            i += 1
            while i < n:
                c = source[i]
                if c == "\\" and i + 1 < n:
                    line += source.count("\n", i, i + 2)
                    i += 2
                    continue
                if c == "\n":
                    line += 1
                i += 1
                if c == ch:
                    break
            continue
        if ch.isdigit() or (ch == "." and nxt.isdigit()):
            j = i + 1
            while j < n:
                c = source[j]
                if c.isalnum() or c in "._":
                    j += 1
                elif c in "+-" and source[j - 1] in "eEpP":
                    j += 1
                else:
                    break
            emit("num")
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            emit(f"kw:{word}" if word in C_KEYWORDS else "ident")
            i = j
            continue
        op = None
        for cand in _MULTI_OPS:
            if source.startswith(cand, i):
                op = cand
                break
        if op is None:
            op = ch
        emit(f"op:{op}")
        i += len(op)
    return tuple(tokens), tuple(lines)


# --- greedy string tiling -----------------------------------------------------

def gst(
    a: TokenStream, b: TokenStream, min_match: int = DEFAULT_MIN_MATCH
) -> tuple[SimilarityScore, list[Tile]]:
    """Tile two token streams and score their similarity."""
    if min_match < 1:
        raise InvalidInput("min_match must be at least 1")
    swap = _should_swap(a.tokens, b.tokens)
    pattern, text = (b, a) if swap else (a, b)
    raw_tiles = _tile(pattern.tokens, text.tokens, min_match)
    if swap:
        tiles = [Tile(a_start=t, b_start=p, length=ln) for p, t, ln in raw_tiles]
    else:
        tiles = [Tile(a_start=p, b_start=t, length=ln) for p, t, ln in raw_tiles]
    matched = sum(t.length for t in tiles)
    total = len(a) + len(b)
    value = (2.0 * matched / total) if total else 0.0
    return (
        SimilarityScore(
            value=value,
            matched_tokens=matched,
            total_tokens_a=len(a),
            total_tokens_b=len(b),
        ),
        tiles,
    )


def _should_swap(ta: tuple[str, ...], tb: tuple[str, ...]) -> bool:
    if len(ta) != len(tb):
        return len(ta) > len(tb)
    return ta > tb


def _tile(
    pattern: tuple[str, ...], text: tuple[str, ...], min_match: int
) -> list[tuple[int, int, int]]:
    n, m = len(pattern), len(text)
    if n == 0 or m == 0:
        return []
    vocab: dict[str, int] = {}
    pa = np.fromiter((vocab.setdefault(t, len(vocab)) for t in pattern), np.int64, n)
    tb = np.fromiter((vocab.setdefault(t, len(vocab)) for t in text), np.int64, m)
    marked_p = np.zeros(n, dtype=bool)
    marked_t = np.zeros(m, dtype=bool)
    tiles: list[tuple[int, int, int]] = []

    while True:
        best = _sweep(pa, tb, marked_p, marked_t, None)
        if best < min_match:
            break
        rows: dict[int, np.ndarray] = {}
        _sweep(pa, tb, marked_p, marked_t, (best, rows))
        for i in sorted(rows):
            for j in rows[i]:
                j = int(j)
                if marked_p[i : i + best].any() or marked_t[j : j + best].any():
                    continue
                marked_p[i : i + best] = True
                marked_t[j : j + best] = True
                tiles.append((i, j, best))
    return tiles


def _sweep(pa, tb, marked_p, marked_t, collect) -> int:
    """One bottom-up pass of the common-run-length recurrence.

    With ``collect`` unset, returns the longest common unmarked run.
    With ``collect=(length, rows)``, fills ``rows`` with the start columns
    of every run of exactly that length, keyed by pattern index.
    """
    n, m = pa.size, tb.size
    unmarked_t = ~marked_t
    nxt = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    best = 0
    for i in range(n - 1, -1, -1):
        if marked_p[i]:
            cur[:m] = 0
        else:
            eq = (tb == pa[i]) & unmarked_t
            cur[:m] = 0
            np.add(nxt[1 : m + 1], 1, out=cur[:m], where=eq)
        if collect is None:
            row_max = int(cur[:m].max()) if m else 0
            if row_max > best:
                best = row_max
        else:
            js = np.nonzero(cur[:m] == collect[0])[0]
            if js.size:
                collect[1][i] = js
        nxt, cur = cur, nxt
    return best


# --- repository-level aggregation ---------------------------------------------

def eligible_files(snapshot: SnapshotTree, extensions: tuple[str, ...]) -> dict[str, str]:
    exts = tuple(e.lower() for e in extensions)
    out = {}
    for path, text in snapshot.files.items():
        if path in snapshot.binary_paths:
            continue
        if path.lower().endswith(exts):
            out[path] = text
    return out


def repo_similarity(
    snap_a: SnapshotTree,
    snap_b: SnapshotTree,
    cfg: SimilarityConfig | None = None,
) -> RepoSimilarity:
    """Score two snapshots: tokenize eligible files, pair them one-to-one
    by descending tile score, and pool matched tokens over all files.

    Unpaired files still count toward the denominator, so the value is the
    fraction of all tokens covered by tiles. Pairing is per-file (not a
    concatenated-repository comparison); reports label it as such.
    """
    cfg = cfg or SimilarityConfig()
    files_a = eligible_files(snap_a, cfg.extensions)
    files_b = eligible_files(snap_b, cfg.extensions)
    if not files_a or not files_b:
        raise NoEligibleFiles(
            "both snapshots need at least one eligible source file "
            f"(allow-list: {', '.join(cfg.extensions)})"
        )
    streams_a = {p: tokenize(t, cfg.dialect, origin=p) for p, t in sorted(files_a.items())}
    streams_b = {p: tokenize(t, cfg.dialect, origin=p) for p, t in sorted(files_b.items())}
    total_a = sum(len(s) for s in streams_a.values())
    total_b = sum(len(s) for s in streams_b.values())

    scored: list[tuple[float, int, str, str]] = []
    for pa, sa in streams_a.items():
        for pb, sb in streams_b.items():
            score, _ = gst(sa, sb, cfg.min_match)
            if score.matched_tokens > 0:
                scored.append((score.value, score.matched_tokens, pa, pb))

    if cfg.pairing == "optimal":
        chosen = _optimal_pairs(scored)
    else:
        chosen = _greedy_pairs(scored)

    pairs = tuple(
        FilePairScore(path_a=pa, path_b=pb, value=val, matched_tokens=m)
        for val, m, pa, pb in chosen
    )
    matched = sum(p.matched_tokens for p in pairs)
    denom = total_a + total_b
    value = (2.0 * matched / denom) if denom else 0.0
    return RepoSimilarity(
        score=SimilarityScore(
            value=value,
            matched_tokens=matched,
            total_tokens_a=total_a,
            total_tokens_b=total_b,
        ),
        file_pairs=pairs,
    )


def _pair_sort_key(entry: tuple[float, int, str, str]):
    val, _, pa, pb = entry
    return (-val, min(pa, pb), max(pa, pb), pa)


def _greedy_pairs(scored):
    used_a: set[str] = set()
    used_b: set[str] = set()
    chosen = []
    for entry in sorted(scored, key=_pair_sort_key):
        _, _, pa, pb = entry
        if pa in used_a or pb in used_b:
            continue
        used_a.add(pa)
        used_b.add(pb)
        chosen.append(entry)
    return chosen


def _optimal_pairs(scored):
    from scipy.optimize import linear_sum_assignment

    paths_a = sorted({pa for _, _, pa, _ in scored})
    paths_b = sorted({pb for _, _, _, pb in scored})
    if not paths_a or not paths_b:
        return []
    idx_a = {p: i for i, p in enumerate(paths_a)}
    idx_b = {p: i for i, p in enumerate(paths_b)}
    matched = np.zeros((len(paths_a), len(paths_b)), dtype=np.int64)
    by_cell = {}
    for entry in scored:
        val, m, pa, pb = entry
        matched[idx_a[pa], idx_b[pb]] = m
        by_cell[(idx_a[pa], idx_b[pb])] = entry
    rows, cols = linear_sum_assignment(matched, maximize=True)
    chosen = [
        by_cell[(r, c)] for r, c in zip(rows, cols) if (r, c) in by_cell and matched[r, c] > 0
    ]
    return sorted(chosen, key=_pair_sort_key)


def similarity_cdf(scores: list[float]) -> list[tuple[float, float]]:
    """Empirical CDF points (score, fraction <= score), ascending."""
    if not scores:
        raise EmptyInput("similarity_cdf needs at least one score")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise InvalidInput(f"score {s} outside [0, 1]")
    ordered = sorted(scores)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, s in enumerate(ordered, start=1):
        if i == n or ordered[i] != s:
            points.append((s, i / n))
    return points


def token_fingerprint(text: str) -> str:
    """Stable digest of file content, for cache keys and reports."""
    return hashlib.sha256(text.encode("utf-8", "replace")).hexdigest()[:16]
