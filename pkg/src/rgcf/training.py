"""BPR training with analytic gradients through the linear propagation chain."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np
from scipy.special import expit

from .config import ModelConfig
from .data import InteractionDataset
from .evaluation import evaluate
from .graph import PropagationOperator, SparseMatrix, build_adjacency, build_propagation, spmm
from .propagation import EmbeddingState, FinalEmbeddings, LayerStack, Mode, forward, score_pairs

logger = logging.getLogger(__name__)

INIT_STD = 0.01
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def seed_streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for parameter init and triple sampling."""
    init_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(sample_ss)


def init_embeddings(m: int, n: int, k: int, seed, dtype=np.float64) -> EmbeddingState:
    """N(0, 0.01^2) embedding table and zero biases."""
    if m < 1 or n < 1 or k < 1:
        raise ValueError("sizes must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else seed_streams(seed)[0]
    e0 = rng.normal(0.0, INIT_STD, size=(m + n, k)).astype(dtype, copy=False)
    return EmbeddingState(e0, np.zeros(m + n, dtype=dtype), m)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TripleBatch:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self) -> int:
        return int(self.users.size)


class TripleSampler:
    """Draws (u, i, j): a uniform train pair (u, i) and a rejected-uniform negative j."""

    def __init__(self, dataset: InteractionDataset):
        train = dataset.train
        self.num_items = dataset.num_items
        self.codes = train.codes(self.num_items)
        deg = np.bincount(train.users, minlength=dataset.num_users)
        # users owning every item have no negative to draw
        eligible = deg[train.users] < self.num_items
        self.users = train.users[eligible]
        self.items = train.items[eligible]
        if not self.users.size:
            raise ValueError("no user has both a positive and a negative item")

    def is_positive(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        keys = users * np.int64(self.num_items) + items
        pos = np.searchsorted(self.codes, keys)
        pos = np.minimum(pos, self.codes.size - 1)
        return self.codes[pos] == keys

    def sample(self, batch_size: int, rng: np.random.Generator) -> TripleBatch:
        idx = rng.integers(self.users.size, size=batch_size)
        users, pos = self.users[idx], self.items[idx]
        neg = rng.integers(self.num_items, size=batch_size)
        bad = np.flatnonzero(self.is_positive(users, neg))
        while bad.size:
            neg[bad] = rng.integers(self.num_items, size=bad.size)
            bad = bad[self.is_positive(users[bad], neg[bad])]
        return TripleBatch(users, pos, neg)


def sample_batch(dataset: InteractionDataset | TripleSampler, batch_size: int,
                 rng: np.random.Generator) -> TripleBatch:
    sampler = dataset if isinstance(dataset, TripleSampler) else TripleSampler(dataset)
    return sampler.sample(batch_size, rng)


# ---------------------------------------------------------------------------
# loss and gradients
# ---------------------------------------------------------------------------

def bpr_loss(pos_scores, neg_scores, reg_embed_sq: float = 0.0, reg_bias_sq: float = 0.0,
             alpha: float = 0.0, beta: float = 0.0) -> float:
    """Batch-mean of ``-ln sigmoid(pos - neg)`` plus the weighted L2 terms."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.shape != neg_scores.shape:
        raise ValueError("score arrays differ in length")
    if not (np.isfinite(pos_scores).all() and np.isfinite(neg_scores).all()):
        raise FloatingPointError("non-finite score")
    ranking = float(np.mean(np.logaddexp(0.0, neg_scores - pos_scores))) if pos_scores.size else 0.0
    return ranking + alpha * reg_embed_sq + beta * reg_bias_sq


def regularizers(fe: FinalEmbeddings, biases: np.ndarray, batch: TripleBatch,
                 scope: str) -> tuple[float, float]:
    """Squared-norm penalties before weighting.

    ``batch`` scope sums over the u, i, j rows of each triple, divided by the
    batch size; ``full`` takes the norms of the whole tables.
    """
    if scope == "full":
        return float(np.sum(fe.e_star.astype(np.float64) ** 2)), float(np.sum(biases.astype(np.float64) ** 2))
    m = fe.num_users
    rows = np.concatenate([batch.users, m + batch.pos, m + batch.neg])
    b = len(batch)
    e_sq = float(np.sum(fe.e_star[rows].astype(np.float64) ** 2)) / b
    b_sq = float(np.sum(biases[rows].astype(np.float64) ** 2)) / b
    return e_sq, b_sq


def backward(p: PropagationOperator, stack: LayerStack, fe: FinalEmbeddings, biases: np.ndarray,
             batch: TripleBatch, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the batch loss w.r.t. the layer-0 table and the biases."""
    m = fe.num_users
    b = len(batch)
    u, i, j = batch.users, m + batch.pos, m + batch.neg
    e = fe.e_star
    diff = score_pairs(fe, biases, batch.users, batch.pos) - score_pairs(fe, biases, batch.users, batch.neg)
    coef = (expit(-diff) / b).astype(e.dtype)

    grad = np.zeros_like(e)
    np.add.at(grad, u, -coef[:, None] * (e[i] - e[j]))
    np.add.at(grad, i, -coef[:, None] * e[u])
    np.add.at(grad, j, coef[:, None] * e[u])
    grad_b = np.zeros_like(biases)
    # b_u cancels in the score difference, so user rows get nothing here
    np.add.at(grad_b, i, -coef)
    np.add.at(grad_b, j, coef)

    if config.reg_scope == "full":
        grad += (2.0 * config.alpha) * e
        grad_b += (2.0 * config.beta) * biases
    else:
        a, c = 2.0 * config.alpha / b, 2.0 * config.beta / b
        for rows in (u, i, j):
            np.add.at(grad, rows, a * e[rows])
            np.add.at(grad_b, rows, c * biases[rows])

    return _chain(p, grad, stack.depth, Mode(config.mode)), grad_b


def _chain(p: PropagationOperator, grad: np.ndarray, depth: int, mode: Mode) -> np.ndarray:
    # P is symmetric, so the transposed chain is forward application
    if mode is Mode.LAST_LAYER or depth == 0:
        out = grad
        for _ in range(depth):
            out = spmm(p, out)
        return out
    k = grad.shape[1] // (depth + 1)
    out = grad[:, depth * k:]
    for layer in range(depth - 1, -1, -1):
        out = spmm(p, out) + grad[:, layer * k:(layer + 1) * k]
    return out


def batch_loss(p: PropagationOperator, state: EmbeddingState, batch: TripleBatch,
               config: ModelConfig) -> float:
    _, fe = forward(p, state, config.num_layers, config.mode)
    return _loss_from(fe, state.biases, batch, config)


def _loss_from(fe, biases, batch, config) -> float:
    pos = score_pairs(fe, biases, batch.users, batch.pos)
    neg = score_pairs(fe, biases, batch.users, batch.neg)
    e_sq, b_sq = regularizers(fe, biases, batch, config.reg_scope)
    return bpr_loss(pos, neg, e_sq, b_sq, config.alpha, config.beta)


def loss_and_grad(p: PropagationOperator, state: EmbeddingState, batch: TripleBatch,
                  config: ModelConfig) -> tuple[float, np.ndarray, np.ndarray]:
    stack, fe = forward(p, state, config.num_layers, config.mode)
    loss = _loss_from(fe, state.biases, batch, config)
    grad_e0, grad_b = backward(p, stack, fe, state.biases, batch, config)
    return loss, grad_e0, grad_b


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(q) for q in params], [np.zeros_like(q) for q in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("parameter/gradient count mismatch")
    for g in grads:
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient")
    state.step += 1
    t = state.step
    corr1 = 1.0 - ADAM_BETA1 ** t
    corr2 = 1.0 - ADAM_BETA2 ** t
    for q, g, m1, m2 in zip(params, grads, state.first_moment, state.second_moment):
        if q.shape != g.shape:
            raise ValueError(f"shape mismatch: {q.shape} vs {g.shape}")
        m1 *= ADAM_BETA1
        m1 += (1.0 - ADAM_BETA1) * g
        m2 *= ADAM_BETA2
        m2 += (1.0 - ADAM_BETA2) * (g * g)
        q -= lr * (m1 / corr1) / (np.sqrt(m2 / corr2) + ADAM_EPS)
    return params, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    evaluations: list[tuple[int, float, float]] = field(default_factory=list)
    stopping_epoch: int = 0
    best_epoch: int = 0

    def log_lines(self) -> list[str]:
        evals = {e: (r, n) for e, r, n in self.evaluations}
        lines = []
        for epoch, loss in enumerate(self.losses, start=1):
            cells = [str(epoch), f"{loss:.10f}"]
            if epoch in evals:
                cells += [f"{evals[epoch][0]:.10f}", f"{evals[epoch][1]:.10f}"]
            lines.append("\t".join(cells))
        return lines


def train(config: ModelConfig, dataset: InteractionDataset, *,
          operator: PropagationOperator | None = None,
          adjacency: SparseMatrix | None = None,
          log: TextIO | None = None,
          on_epoch: Callable[[int, EmbeddingState], None] | None = None
          ) -> tuple[EmbeddingState, TrainReport]:
    """Mini-batch BPR + Adam with validation-recall@20 early stopping.

    Returns the parameters of the best validation round (or the final ones
    when no validation pairs exist).
    """
    if not len(dataset.train):
        raise ValueError("empty training set")
    if operator is None:
        adjacency = adjacency if adjacency is not None else build_adjacency(dataset)
        operator = build_propagation(adjacency, config.lam)
    m, n = dataset.num_users, dataset.num_items
    init_rng, sample_rng = seed_streams(config.seed)
    state = init_embeddings(m, n, config.k, init_rng, config.dtype)
    report = TrainReport()
    if config.max_epochs == 0:
        return state, report

    sampler = TripleSampler(dataset)
    params = [state.e0, state.biases]
    adam = AdamState.zeros_like(params)
    batches = math.ceil(len(dataset.train) / config.batch_size)
    validate = len(dataset.validation) > 0
    best, best_recall, stale = None, -1.0, 0

    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for _ in range(batches):
            batch = sampler.sample(config.batch_size, sample_rng)
            loss, g_e0, g_b = loss_and_grad(operator, state, batch, config)
            total += loss
            adam_step(params, [g_e0, g_b], adam, config.learning_rate)
        report.losses.append(total / batches)
        report.stopping_epoch = epoch
        line = [str(epoch), f"{report.losses[-1]:.10f}"]

        if validate and epoch % config.eval_every == 0:
            _, fe = forward(operator, state, config.num_layers, config.mode)
            rr = evaluate(fe, state.biases, dataset, ks=(20,), split="validation")
            recall, ndcg = rr.recall[20], rr.ndcg[20]
            report.evaluations.append((epoch, recall, ndcg))
            line += [f"{recall:.10f}", f"{ndcg:.10f}"]
            if recall > best_recall:
                best, best_recall, stale = state.copy(), recall, 0
                report.best_epoch = epoch
            else:
                stale += 1
        if log is not None:
            log.write("\t".join(line) + "\n")
        logger.debug("epoch %s", "\t".join(line))
        if on_epoch is not None:
            on_epoch(epoch, state)
        if config.patience and stale >= config.patience:
            break

    if best is None:
        report.best_epoch = report.stopping_epoch
        best = state
    return best, report
