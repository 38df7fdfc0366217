"""Synthetic implicit-feedback datasets for experiments and tests."""
from __future__ import annotations

import numpy as np

from .data import InteractionDataset, InteractionSet, build_dataset, k_core_filter, remap_ids, split_holdout


def planted_blocks(num_users: int = 20, num_items: int = 20, num_blocks: int = 2,
                   observed: float = 0.5, seed=0) -> InteractionDataset:
    """Users in block b interact with every item of block b.

    A per-user ``observed`` share of each block becomes train, the rest test.
    """
    rng = np.random.default_rng(seed)
    ub = np.array_split(np.arange(num_users), num_blocks)
    ib = np.array_split(np.arange(num_items), num_blocks)
    train, test = [], []
    for users, items in zip(ub, ib):
        n_obs = int(round(observed * items.size))
        for u in users:
            perm = rng.permutation(items)
            train += [(int(u), int(i)) for i in perm[:n_obs]]
            test += [(int(u), int(i)) for i in perm[n_obs:]]
    return build_dataset(InteractionSet.from_pairs(train), None, InteractionSet.from_pairs(test))


def latent_community_interactions(num_users: int = 6000, num_items: int = 4000,
                                  num_communities: int = 24, mean_degree: float = 28.0,
                                  concentration: float = 0.15, popularity_exponent: float = 0.9,
                                  noise: float = 0.05, seed=0) -> InteractionSet:
    """Raw interactions with community structure and long-tail item popularity.

    Each item belongs to one community and carries a Zipf-like popularity
    weight; each user has a sparse Dirichlet mixture over communities and a
    log-normal activity level. Users pick distinct items with probability
    proportional to ``popularity * (affinity + noise)``.
    """
    rng = np.random.default_rng(seed)
    community = rng.integers(num_communities, size=num_items)
    rank = rng.permutation(num_items) + 1
    popularity = rank.astype(np.float64) ** -popularity_exponent
    mixture = rng.dirichlet(np.full(num_communities, concentration), size=num_users)
    sigma = 0.6
    degree = rng.lognormal(np.log(mean_degree) - sigma ** 2 / 2, sigma, size=num_users)
    degree = np.clip(np.round(degree).astype(np.int64), 1, num_items // 4)

    users, items = [], []
    for u in range(num_users):
        w = popularity * (mixture[u, community] + noise / num_communities)
        w /= w.sum()
        chosen = rng.choice(num_items, size=degree[u], replace=False, p=w)
        users.append(np.full(chosen.size, u))
        items.append(chosen)
    return InteractionSet(np.concatenate(users), np.concatenate(items))


def make_benchmark(core: int = 10, test_fraction: float = 0.2, valid_fraction: float = 0.1,
                   seed=0, **generator_kwargs) -> InteractionDataset:
    """k-core filtered synthetic data split per user into train/validation/test."""
    ss = np.random.SeedSequence(seed)
    gen_seed, test_seed, valid_seed = ss.spawn(3)
    raw = latent_community_interactions(seed=gen_seed, **generator_kwargs)
    (kept,), _, _ = remap_ids(k_core_filter(raw, core))
    train, test = split_holdout(kept, test_fraction, test_seed)
    train, validation = split_holdout(train, valid_fraction, valid_seed)
    return build_dataset(train, validation, test)
