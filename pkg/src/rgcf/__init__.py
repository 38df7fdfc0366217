"""Refined graph-convolution collaborative filtering on numpy/scipy."""
from .config import ConfigError, ModelConfig, format_config, load_config, parse_config
from .data import (
    DataFormatError,
    DatasetError,
    IdMap,
    InteractionDataset,
    InteractionSet,
    build_dataset,
    k_core_filter,
    load_dataset,
    parse_interactions,
    split_holdout,
)
from .evaluation import RankingReport, evaluate, ndcg_at_k, rank_top_k, recall_at_k
from .graph import (
    PropagationOperator,
    SparseMatrix,
    build_adjacency,
    build_propagation,
    build_unnormalized,
    spmm,
)
from .propagation import (
    EmbeddingState,
    FinalEmbeddings,
    LayerStack,
    Mode,
    finalize,
    forward,
    propagate,
    score,
    score_all_items,
)
from .snapshot import (
    Snapshot,
    SnapshotError,
    SnapshotFormatError,
    SnapshotTruncatedError,
    SnapshotVersionError,
    load_snapshot,
    save_snapshot,
)
from .training import TrainReport, bpr_loss, init_embeddings, train

__version__ = "0.1.0"
