"""Layer propagation, final-embedding selection and biased inner-product scoring."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import PropagationOperator, spmm


class Mode(str, Enum):
    LAST_LAYER = "last_layer"
    CONCAT = "concat"


@dataclass
class EmbeddingState:
    """Trainable parameters: layer-0 table ``e0`` of shape (m+n, k) and node biases."""

    e0: np.ndarray
    biases: np.ndarray
    num_users: int

    def __post_init__(self):
        if self.e0.ndim != 2 or self.biases.shape != (self.e0.shape[0],):
            raise ValueError(f"inconsistent shapes: e0 {self.e0.shape}, biases {self.biases.shape}")
        if not (0 <= self.num_users <= self.e0.shape[0]):
            raise ValueError("num_users exceeds table height")

    @property
    def num_items(self) -> int:
        return self.e0.shape[0] - self.num_users

    @property
    def k(self) -> int:
        return self.e0.shape[1]

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(self.e0.copy(), self.biases.copy(), self.num_users)

    def check_finite(self) -> None:
        if not (np.isfinite(self.e0).all() and np.isfinite(self.biases).all()):
            raise FloatingPointError("non-finite parameters")


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1


@dataclass(frozen=True)
class FinalEmbeddings:
    e_star: np.ndarray
    mode: Mode
    num_users: int

    @property
    def users(self) -> np.ndarray:
        return self.e_star[:self.num_users]

    @property
    def items(self) -> np.ndarray:
        return self.e_star[self.num_users:]

    @property
    def num_items(self) -> int:
        return self.e_star.shape[0] - self.num_users


def propagate(p: PropagationOperator, state: EmbeddingState | np.ndarray, num_layers: int) -> LayerStack:
    """Apply the operator ``num_layers`` times, caching every layer.

    ``layers[l] == P^l @ e0``; layer 0 is the input table itself.
    """
    if num_layers < 0:
        raise ValueError("layer count must be non-negative")
    e = state.e0 if isinstance(state, EmbeddingState) else np.asarray(state)
    layers = [e]
    for _ in range(num_layers):
        layers.append(spmm(p, layers[-1]))
    return LayerStack(tuple(layers))


def finalize(stack: LayerStack, mode: Mode | str, num_users: int) -> FinalEmbeddings:
    mode = Mode(mode)
    if not stack.layers:
        raise ValueError("empty layer stack")
    if mode is Mode.LAST_LAYER or stack.depth == 0:
        e_star = stack.layers[-1]
    else:
        e_star = np.concatenate(stack.layers, axis=1)
    return FinalEmbeddings(e_star, mode, num_users)


def forward(p: PropagationOperator, state: EmbeddingState, num_layers: int,
            mode: Mode | str) -> tuple[LayerStack, FinalEmbeddings]:
    stack = propagate(p, state, num_layers)
    return stack, finalize(stack, mode, state.num_users)


def _check_user(fe: FinalEmbeddings, u: int) -> None:
    if not 0 <= u < fe.num_users:
        raise IndexError(f"user {u} out of range [0, {fe.num_users})")


def score(fe: FinalEmbeddings, biases: np.ndarray, u: int, i: int) -> float:
    """Biased inner product ``<e*_u, e*_i> + b_u + b_i``."""
    _check_user(fe, u)
    if not 0 <= i < fe.num_items:
        raise IndexError(f"item {i} out of range [0, {fe.num_items})")
    row_i = fe.num_users + i
    return float(fe.e_star[u] @ fe.e_star[row_i] + biases[row_i] + biases[u])


def score_pairs(fe: FinalEmbeddings, biases: np.ndarray, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    """Vectorized :func:`score` for aligned user/item arrays."""
    rows_i = fe.num_users + items
    return (np.einsum("ij,ij->i", fe.e_star[users], fe.e_star[rows_i])
            + biases[rows_i] + biases[users])


def score_users(fe: FinalEmbeddings, biases: np.ndarray, users: np.ndarray) -> np.ndarray:
    """Dense (len(users), n) score block."""
    m = fe.num_users
    return fe.e_star[users] @ fe.items.T + biases[m:][None, :] + biases[users, None]


def score_all_items(fe: FinalEmbeddings, biases: np.ndarray, u: int, exclude=()) -> np.ndarray:
    """Scores of user ``u`` against every item; excluded items get ``-inf``."""
    _check_user(fe, u)
    m = fe.num_users
    # user bias added last: a constant shift, so rounding stays monotone
    out = fe.items @ fe.e_star[u] + biases[m:] + biases[u]
    out = np.asarray(out, dtype=np.float64)
    excl = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude, dtype=np.int64)
    if excl.size:
        out[excl] = -np.inf
    return out
