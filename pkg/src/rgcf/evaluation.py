"""Full-ranking top-K evaluation (recall@K, ndcg@K) with train-item masking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import InteractionDataset, InteractionSet
from .propagation import FinalEmbeddings, score_all_items, score_users


def recall_at_k(ranked_items: Sequence[int], test_items, k: int) -> float:
    test = set(np.asarray(test_items).tolist())
    if not test:
        raise ValueError("empty test set")
    hits = sum(1 for item in list(ranked_items)[:k] if item in test)
    return hits / len(test)


def _idcg(k: int, n_relevant: int) -> float:
    return sum(1.0 / math.log2(r + 1) for r in range(1, min(k, n_relevant) + 1))


def ndcg_at_k(ranked_items: Sequence[int], test_items, k: int) -> float:
    """Binary-relevance NDCG with the ideal ranking truncated at ``min(k, |test|)``."""
    test = set(np.asarray(test_items).tolist())
    if not test:
        raise ValueError("empty test set")
    dcg = sum(1.0 / math.log2(r + 1)
              for r, item in enumerate(list(ranked_items)[:k], start=1) if item in test)
    return dcg / _idcg(k, len(test))


def _stable_order(scores: np.ndarray) -> np.ndarray:
    """Descending score, ascending item ID among ties (row-wise)."""
    return np.argsort(-scores, axis=-1, kind="stable")


def top_k_rows(scores: np.ndarray, k: int) -> np.ndarray:
    """First ``k`` columns of :func:`_stable_order` for a 2-D score block.

    Partitions at the k-th largest value, then stably sorts only the
    candidates at or above it; those are already in ascending ID order, so
    the result equals the full-sort prefix including tie-breaks.
    """
    rows, n = scores.shape
    if k >= n:
        return _stable_order(scores)
    if k <= 0:
        return np.empty((rows, 0), dtype=np.int64)
    neg = -scores
    kth = np.partition(neg, k - 1, axis=1)[:, k - 1]
    out = np.empty((rows, k), dtype=np.int64)
    for r in range(rows):
        cand = np.flatnonzero(neg[r] <= kth[r])
        out[r] = cand[np.argsort(neg[r, cand], kind="stable")][:k]
    return out


def rank_top_k(fe: FinalEmbeddings, biases: np.ndarray, u: int, k: int, exclude=()) -> list[int]:
    """Up to ``k`` highest-scoring items not in ``exclude``."""
    scores = score_all_items(fe, biases, u, exclude)
    order = _stable_order(scores)
    available = int(np.count_nonzero(scores != -np.inf))
    return order[:min(k, available)].tolist()


@dataclass
class UserRecord:
    user: int
    recall: dict[int, float]
    ndcg: dict[int, float]
    top_items: list[int]


@dataclass
class RankingReport:
    recall: dict[int, float]
    ndcg: dict[int, float]
    evaluated_users: int
    skipped_users: int
    split: str = "test"
    per_user: list[UserRecord] = field(default_factory=list)

    @property
    def ks(self) -> list[int]:
        return sorted(self.recall)

    def to_text(self) -> str:
        lines = [f"split = {self.split}",
                 f"evaluated_users = {self.evaluated_users}",
                 f"skipped_users = {self.skipped_users}"]
        for k in self.ks:
            lines += [f"[K={k}]", f"recall = {self.recall[k]!r}", f"ndcg = {self.ndcg[k]!r}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RankingReport":
        head: dict[str, str] = {}
        recall: dict[int, float] = {}
        ndcg: dict[int, float] = {}
        current = None
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[K=") and line.endswith("]"):
                current = int(line[3:-1])
                continue
            key, _, value = (part.strip() for part in line.partition("="))
            if current is None:
                head[key] = value
            elif key == "recall":
                recall[current] = float(value)
            elif key == "ndcg":
                ndcg[current] = float(value)
        return cls(recall, ndcg, int(head["evaluated_users"]), int(head["skipped_users"]),
                   head.get("split", "test"))

    def per_user_tsv(self) -> str:
        ks = self.ks
        header = ["user"] + [f"recall@{k}" for k in ks] + [f"ndcg@{k}" for k in ks] + ["top_items"]
        rows = ["\t".join(header)]
        for rec in self.per_user:
            cells = [str(rec.user)]
            cells += [repr(rec.recall[k]) for k in ks]
            cells += [repr(rec.ndcg[k]) for k in ks]
            cells.append(",".join(map(str, rec.top_items)))
            rows.append("\t".join(cells))
        return "\n".join(rows) + "\n"


def _metrics_from_hits(hits: list[bool], n_relevant: int, ks: Sequence[int],
                       discounts: list[float]) -> tuple[dict[int, float], dict[int, float]]:
    recall, ndcg = {}, {}
    for k in ks:
        h = hits[:k]
        dcg = 0.0
        for rank, hit in enumerate(h):
            if hit:
                dcg += discounts[rank]
        idcg = 0.0
        for rank in range(min(k, n_relevant)):
            idcg += discounts[rank]
        recall[k] = sum(h) / n_relevant
        ndcg[k] = dcg / idcg
    return recall, ndcg


def evaluate(fe: FinalEmbeddings, biases: np.ndarray, dataset: InteractionDataset,
             ks: Sequence[int] = (20,), split: str = "test", per_user: bool = False,
             chunk_size: int = 1024) -> RankingReport:
    """Average recall@K / ndcg@K over users with held-out items in ``split``.

    Candidates exclude the user's train items; for ``split="test"`` the
    validation items are excluded as well. Users without any train item are
    skipped and counted.
    """
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise ValueError("K values must be positive")
    if fe.num_users != dataset.num_users or fe.num_items != dataset.num_items:
        raise ValueError(f"model shape ({fe.num_users}, {fe.num_items}) does not match "
                         f"dataset shape ({dataset.num_users}, {dataset.num_items})")
    if split not in ("test", "validation"):
        raise ValueError("split must be 'test' or 'validation'")

    target: InteractionSet = getattr(dataset, split)
    seen = dataset.train if split == "validation" else dataset.train.union(dataset.validation)
    m = dataset.num_users
    t_ptr, t_items = target.neighbors(m)
    s_ptr, s_items = seen.neighbors(m)
    train_deg = np.bincount(dataset.train.users, minlength=m)

    users = np.unique(target.users)
    evaluated_users = users[train_deg[users] > 0]
    skipped = int(users.size - evaluated_users.size)
    kmax = ks[-1]
    discounts = [1.0 / math.log2(r + 1) for r in range(1, kmax + 1)]

    recall_vals: dict[int, list[float]] = {k: [] for k in ks}
    ndcg_vals: dict[int, list[float]] = {k: [] for k in ks}
    records: list[UserRecord] = []
    for start in range(0, evaluated_users.size, chunk_size):
        block = evaluated_users[start:start + chunk_size]
        scores = np.asarray(score_users(fe, biases, block), dtype=np.float64)
        for row, u in enumerate(block):
            scores[row, s_items[s_ptr[u]:s_ptr[u + 1]]] = -np.inf
        order = top_k_rows(scores, kmax)
        for row, u in enumerate(block):
            available = int(np.count_nonzero(scores[row] != -np.inf))
            top = order[row, :min(kmax, available)]
            relevant = t_items[t_ptr[u]:t_ptr[u + 1]]
            hits = np.isin(top, relevant).tolist()
            rec, nd = _metrics_from_hits(hits, relevant.size, ks, discounts)
            for k in ks:
                recall_vals[k].append(rec[k])
                ndcg_vals[k].append(nd[k])
            if per_user:
                records.append(UserRecord(int(u), rec, nd, top.tolist()))

    count = int(evaluated_users.size)
    mean = (lambda xs: math.fsum(xs) / count) if count else (lambda xs: 0.0)
    return RankingReport({k: mean(recall_vals[k]) for k in ks},
                         {k: mean(ndcg_vals[k]) for k in ks},
                         count, skipped, split, records)
