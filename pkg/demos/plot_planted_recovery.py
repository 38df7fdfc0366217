"""
Recovering planted blocks
=========================

Half of each block's pairs are observed. A two-layer model should rank
the hidden half of the user's own block first.
"""

from rgcf import ModelConfig, build_adjacency, build_propagation, evaluate, forward, train
from rgcf.synthetic import planted_blocks

dataset = planted_blocks(num_users=20, num_items=20, num_blocks=2, observed=0.5, seed=0)
print(f"{len(dataset.train)} train pairs, {len(dataset.test)} held out")

config = ModelConfig(k=16, num_layers=2, lam=1.0, learning_rate=0.01, batch_size=32,
                     max_epochs=200, patience=0, valid_fraction=0.0)
state, report = train(config, dataset)
print("loss every 40 epochs:", [round(x, 4) for x in report.losses[::40]])

_, fe = forward(build_propagation(build_adjacency(dataset), config.lam), state, config.num_layers, config.mode)
print(evaluate(fe, state.biases, dataset, ks=(5, 10)).to_text())
