"""Interaction data: parsing, k-core filtering, ID remapping and splits.

Interaction files use the adjacency-list layout of the public NGCF data
release: one line per user, ``uid iid1 iid2 ...``.
"""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Malformed interaction file."""


class DatasetError(ValueError):
    """Splits violate the dataset invariants."""


class InteractionSet:
    """Deduplicated set of (user, item) pairs.

    Pairs are kept sorted by user, then item, in two parallel int64 arrays.
    """

    __slots__ = ("users", "items")

    def __init__(self, users=(), items=()):
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise ValueError("users and items must have equal length")
        if users.size and (users.min() < 0 or items.min() < 0):
            raise ValueError("interaction IDs must be non-negative")
        if users.size:
            pairs = np.unique(np.stack([users, items], axis=1), axis=0)
            users, items = pairs[:, 0].copy(), pairs[:, 1].copy()
        users.flags.writeable = False
        items.flags.writeable = False
        self.users = users
        self.items = items

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "InteractionSet":
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def __len__(self) -> int:
        return int(self.users.size)

    def __iter__(self):
        return zip(self.users.tolist(), self.items.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return np.array_equal(self.users, other.users) and np.array_equal(self.items, other.items)

    def __repr__(self) -> str:
        return f"InteractionSet({len(self)} pairs)"

    def pairs(self) -> set[tuple[int, int]]:
        return set(iter(self))

    def codes(self, num_items: int) -> np.ndarray:
        """Scalar key ``u * num_items + i`` per pair (sorted, since pairs are)."""
        return self.users * np.int64(num_items) + self.items

    def union(self, other: "InteractionSet") -> "InteractionSet":
        return InteractionSet(np.concatenate([self.users, other.users]),
                              np.concatenate([self.items, other.items]))

    def neighbors(self, num_users: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-user item lists as CSR arrays ``(indptr, items)``."""
        counts = np.bincount(self.users, minlength=num_users)
        indptr = np.zeros(num_users + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, self.items


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_interactions(text: str) -> InteractionSet:
    """Parse adjacency-list text into an interaction set.

    Duplicate pairs are dropped; their count is logged as a warning.
    """
    users: list[int] = []
    items: list[int] = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            ids = [int(tok) for tok in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_int(t))
            raise DataFormatError(f"line {lineno}: non-integer token {bad!r}") from None
        if any(v < 0 for v in ids):
            raise DataFormatError(f"line {lineno}: negative ID")
        users.extend([ids[0]] * (len(ids) - 1))
        items.extend(ids[1:])
    result = InteractionSet(users, items)
    duplicates = len(users) - len(result)
    if duplicates:
        logger.warning("dropped %d duplicate interaction pairs", duplicates)
    return result


def _is_int(tok: str) -> bool:
    try:
        int(tok)
    except ValueError:
        return False
    return True


def parse_interaction_file(source: str | os.PathLike | TextIO) -> InteractionSet:
    """Read an adjacency-list file (path or open text stream)."""
    if hasattr(source, "read"):
        return parse_interactions(source.read())
    # newline=None folds CRLF into LF
    with open(source, encoding="utf-8", newline=None) as fh:
        return parse_interactions(fh.read())


def format_interactions(s: InteractionSet) -> str:
    """Serialize to adjacency-list text, one line per user with items."""
    lines = []
    if len(s):
        bounds = np.flatnonzero(np.diff(s.users)) + 1
        for chunk_u, chunk_i in zip(np.split(s.users, bounds), np.split(s.items, bounds)):
            lines.append(" ".join(map(str, [int(chunk_u[0]), *chunk_i.tolist()])))
    return "".join(line + "\n" for line in lines)


def write_interaction_file(s: InteractionSet, path: str | os.PathLike) -> None:
    Path(path).write_text(format_interactions(s), encoding="utf-8")


def read_pair_csv(path: str | os.PathLike, delimiter: str = ",",
                  skip_header: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Read ``user,item`` rows with arbitrary external IDs.

    Returns the raw external ID columns as string arrays; pass them through
    :func:`remap_ids` to get an :class:`InteractionSet`. Extra columns
    (ratings, timestamps) are ignored.
    """
    users, items = [], []
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) < 2:
                raise DataFormatError(f"{path}: line {lineno}: expected at least two columns")
            users.append(parts[0].strip())
            items.append(parts[1].strip())
    return np.array(users, dtype=str), np.array(items, dtype=str)


def convert_pair_csv(csv_path, out_path, delimiter: str = ",", skip_header: bool = False):
    """Convert a pair CSV to an adjacency-list file; returns the ID maps."""
    users, items = read_pair_csv(csv_path, delimiter, skip_header)
    user_map = IdMap.build([users])
    item_map = IdMap.build([items])
    s = InteractionSet(user_map.to_internal(users), item_map.to_internal(items))
    write_interaction_file(s, out_path)
    return user_map, item_map


# ---------------------------------------------------------------------------
# ID remapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdMap:
    """Bijection between external IDs and contiguous internal IDs.

    ``external[internal_id]`` is the external ID, stored as a string.
    """

    external: np.ndarray

    @classmethod
    def build(cls, columns: Iterable[np.ndarray]) -> "IdMap":
        columns = [np.asarray(c) for c in columns]
        if all(np.issubdtype(c.dtype, np.integer) for c in columns):
            # numeric order, not lexicographic
            uniq = np.unique(np.concatenate(columns)) if columns else np.array([], dtype=np.int64)
            return cls(uniq.astype(str))
        uniq = np.unique(np.concatenate([c.astype(str) for c in columns]))
        return cls(uniq)

    @classmethod
    def identity(cls, size: int) -> "IdMap":
        return cls(np.arange(size).astype(str))

    def __len__(self) -> int:
        return int(self.external.size)

    def to_internal(self, ids) -> np.ndarray:
        keys = np.asarray(ids).astype(str)
        lookup = {ext: i for i, ext in enumerate(self.external.tolist())}
        try:
            return np.array([lookup[k] for k in keys.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"unknown external ID {exc.args[0]!r}") from None

    def lookup(self, external_id) -> int:
        return int(self.to_internal([external_id])[0])

    def to_external(self, ids) -> np.ndarray:
        return self.external[np.asarray(ids, dtype=np.int64)]

    def to_text(self) -> str:
        return "".join(f"{ext} {i}\n" for i, ext in enumerate(self.external.tolist()))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "IdMap":
        pairs = []
        with open(path, encoding="utf-8", newline=None) as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 2:
                    raise DataFormatError(f"{path}: line {lineno}: expected 'external_id internal_id'")
                pairs.append((int(parts[1]), parts[0]))
        pairs.sort()
        if [p[0] for p in pairs] != list(range(len(pairs))):
            raise DataFormatError(f"{path}: internal IDs are not contiguous from 0")
        return cls(np.array([p[1] for p in pairs], dtype=str))


def remap_ids(*sets: InteractionSet) -> tuple[list[InteractionSet], IdMap, IdMap]:
    """Remap users and items of several splits onto shared contiguous IDs.

    Order is preserved, so already-contiguous inputs map to themselves.
    """
    user_map = IdMap.build([s.users for s in sets])
    item_map = IdMap.build([s.items for s in sets])
    uniq_u = user_map.external.astype(np.int64)
    uniq_i = item_map.external.astype(np.int64)
    out = [InteractionSet(np.searchsorted(uniq_u, s.users), np.searchsorted(uniq_i, s.items))
           for s in sets]
    return out, user_map, item_map


# ---------------------------------------------------------------------------
# filtering and splitting
# ---------------------------------------------------------------------------

def k_core_filter(s: InteractionSet, k: int) -> InteractionSet:
    """Largest subset where every user and item has at least ``k`` interactions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    users, items = s.users, s.items
    while users.size:
        udeg = np.bincount(users)
        ideg = np.bincount(items)
        keep = (udeg[users] >= k) & (ideg[items] >= k)
        if keep.all():
            break
        users, items = users[keep], items[keep]
    return InteractionSet(users, items)


def split_holdout(s: InteractionSet, fraction: float, seed) -> tuple[InteractionSet, InteractionSet]:
    """Move a uniformly random ``floor(fraction * |N_u|)`` items of each user out.

    Returns ``(kept, held_out)``; deterministic for a given seed.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    if not len(s) or fraction == 0.0:
        return s, InteractionSet()
    rng = np.random.default_rng(seed)
    keys = rng.random(len(s))
    order = np.lexsort((keys, s.users))
    users = s.users[order]
    deg = np.bincount(users)
    start = np.concatenate([[0], np.cumsum(deg)[:-1]])
    rank = np.arange(users.size) - start[users]
    quota = np.floor(fraction * deg).astype(np.int64)
    moved = np.zeros(len(s), dtype=bool)
    moved[order] = rank < quota[users]
    return (InteractionSet(s.users[~moved], s.items[~moved]),
            InteractionSet(s.users[moved], s.items[moved]))


def split_validation(train: InteractionSet, fraction: float, seed) -> tuple[InteractionSet, InteractionSet]:
    """Resample a per-user validation subset from the training pairs."""
    return split_holdout(train, fraction, seed)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionDataset:
    num_users: int
    num_items: int
    train: InteractionSet
    validation: InteractionSet
    test: InteractionSet
    cold_start_users: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_users, self.num_items

    def user_items(self, split: str = "train") -> list[np.ndarray]:
        s: InteractionSet = getattr(self, split)
        indptr, items = s.neighbors(self.num_users)
        return [items[indptr[u]:indptr[u + 1]] for u in range(self.num_users)]


def _overlap(a: InteractionSet, b: InteractionSet, num_items: int) -> int:
    return int(np.intersect1d(a.codes(num_items), b.codes(num_items), assume_unique=True).size)


def build_dataset(train: InteractionSet, validation: InteractionSet | None,
                  test: InteractionSet) -> InteractionDataset:
    """Assemble and validate a dataset from three splits on one ID space."""
    validation = validation if validation is not None else InteractionSet()
    parts = [p for p in (train, validation, test) if len(p)]
    m = 1 + max((int(p.users.max()) for p in parts), default=-1)
    n = 1 + max((int(p.items.max()) for p in parts), default=-1)
    for name, other in (("test", test), ("validation", validation)):
        clash = _overlap(train, other, n)
        if clash:
            raise DatasetError(f"{clash} pairs appear in both train and {name}")
    if _overlap(validation, test, n):
        raise DatasetError("validation and test share pairs")
    cold = np.setdiff1d(np.unique(test.users), np.unique(train.users))
    if cold.size:
        logger.warning("%d test users have no training interactions; excluded from evaluation",
                       cold.size)
    return InteractionDataset(m, n, train, validation, test, cold)


def load_dataset(data_dir: str | os.PathLike, valid_fraction: float = 0.1,
                 seed=0) -> tuple[InteractionDataset, IdMap, IdMap]:
    """Load ``train.txt``/``test.txt`` (and optional ``valid.txt``) from a directory.

    IDs are remapped to contiguous ranges. Without ``valid.txt`` a per-user
    validation subset of ``valid_fraction`` is resampled from train.
    """
    data_dir = Path(data_dir)
    for required in ("train.txt", "test.txt"):
        if not (data_dir / required).is_file():
            raise FileNotFoundError(f"missing {data_dir / required}")
    train = parse_interaction_file(data_dir / "train.txt")
    test = parse_interaction_file(data_dir / "test.txt")
    valid_path = data_dir / "valid.txt"
    if valid_path.is_file():
        validation = parse_interaction_file(valid_path)
        (train, validation, test), user_map, item_map = remap_ids(train, validation, test)
    else:
        (train, test), user_map, item_map = remap_ids(train, test)
        train, validation = split_validation(train, valid_fraction, seed)
    return build_dataset(train, validation, test), user_map, item_map
