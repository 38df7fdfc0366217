"""
Propagation on a toy bipartite graph
====================================

Build the normalized operator with self-loops and watch embeddings mix
over a few layers.
"""

import numpy as np

from rgcf import InteractionSet, build_adjacency, build_dataset, build_propagation, propagate

# two users, three items; user 0 likes items 0 and 1, user 1 likes items 1 and 2
train = InteractionSet.from_pairs([(0, 0), (0, 1), (1, 1), (1, 2)])
dataset = build_dataset(train, None, InteractionSet())
adjacency = build_adjacency(dataset)
print(adjacency.toarray())

# lam weighs a node's own previous embedding
for lam in (0.0, 1.0, 2.0):
    p = build_propagation(adjacency, lam)
    print(f"lambda={lam}")
    print(np.round(p.toarray(), 3))

# one-hot start: each row of layer l is where a node's mass went after l hops
e0 = np.eye(5)
stack = propagate(build_propagation(adjacency, 1.0), e0, 3)
for level, layer in enumerate(stack.layers):
    print(f"layer {level}, user 0 row:", np.round(layer[0], 3))
