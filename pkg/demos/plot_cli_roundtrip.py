"""
Command-line workflow
=====================

Write a dataset to disk, then train, evaluate, recommend and sweep through
the ``rgcf`` entry point. Each step is the same call a shell user would make.
"""

import tempfile
from pathlib import Path

from rgcf import InteractionSet, ModelConfig, format_config
from rgcf.cli import main
from rgcf.data import write_interaction_file
from rgcf.synthetic import planted_blocks

work = Path(tempfile.mkdtemp())
dataset = planted_blocks(seed=0)
# external IDs need not be contiguous
write_interaction_file(InteractionSet(dataset.train.users + 100, dataset.train.items + 5000), work / "train.txt")
write_interaction_file(InteractionSet(dataset.test.users + 100, dataset.test.items + 5000), work / "test.txt")
(work / "model.cfg").write_text(format_config(ModelConfig(k=16, num_layers=2, learning_rate=0.01,
                                                          batch_size=32, max_epochs=50, eval_every=5)))

snap = str(work / "model.snap")
main(["train", "--config", str(work / "model.cfg"), "--data-dir", str(work), "--out", snap])
print((work / "model.snap.log").read_text().splitlines()[-1])

main(["evaluate", "--snapshot", snap, "--data-dir", str(work), "--k", "5", "--k", "20"])

print("top 5 for user 103:")
main(["recommend", "--snapshot", snap, "--user", "103", "--k", "5", "--data-dir", str(work)])

print("lambda sweep:")
main(["sweep", "--param", "lambda", "--values", "0,0.5,1.0", "--config", str(work / "model.cfg"),
      "--data-dir", str(work)])
