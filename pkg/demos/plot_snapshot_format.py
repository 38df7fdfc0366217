"""
Inside a snapshot
=================

Snapshots are a fixed little-endian layout, so they can be read without
this package. Here the header is decoded with ``struct`` alone.
"""

import struct

import numpy as np

from rgcf import EmbeddingState, Snapshot

rng = np.random.default_rng(0)
state = EmbeddingState(rng.normal(size=(5, 2)), rng.normal(size=5), num_users=2)
data = Snapshot.from_state(state, num_layers=3, lam=1.2, mode="last_layer").to_bytes()

magic, version, m, n, k, depth, mode, lam = struct.unpack_from("<4sIIIIIBd", data)
print(magic, version, (m, n, k), depth, mode, lam)
e0 = np.frombuffer(data, "<f8", count=(m + n) * k, offset=33).reshape(m + n, k)
print("layer-0 table round-trips bit-exactly:", e0.tobytes() == state.e0.tobytes())
print("cached embeddings present:", data[33 + 8 * (m + n) * (k + 1)] == 1)
