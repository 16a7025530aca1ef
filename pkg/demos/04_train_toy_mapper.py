"""Train the editing mapper on a synthesized toy dataset, then resume it.

Shows the full loop: synthesize -> ingest -> train -> checkpoint -> resume,
and that the resumed run reproduces the uninterrupted loss sequence exactly.
"""

from pathlib import Path

import torch

from fashiontex import ingest_dataset, load_backbones, synthesize_dataset, train
from fashiontex.backbones import BackbonesConfig
from fashiontex.training import TrainConfig

out = Path(__file__).parent / "out" / "train"
out.mkdir(parents=True, exist_ok=True)

bb = load_backbones(BackbonesConfig())
data = synthesize_dataset(out / "data", 24, bb, seed=0)
index = ingest_dataset(data, bb)
print(f"dataset: {len(index.records)} records, "
      f"{len(index.train)} train / {len(index.test)} test")

cfg = TrainConfig(steps=60, batch_size=4, out_dir=str(out / "run"), checkpoint_every=30)
result = train(cfg, index, bb)
print(f"loss {result.reports[0].total:.4f} -> {result.reports[-1].total:.4f}")
print(f"checkpoint: {result.checkpoint_path}")

# Resume from the midpoint checkpoint; the tail matches the straight run.
half_ckpt = out / "run" / "mapper-step000030.ckpt"
resumed = train(cfg, index, bb, resume=half_ckpt)
tail_matches = all(
    a.total == b.total for a, b in zip(result.reports[30:], resumed.reports)
)
print(f"resumed tail reproduces steps 30..60 exactly: {tail_matches}")

params_a = dict(result.mapper.named_parameters())
params_b = dict(resumed.mapper.named_parameters())
print("final weights bit-identical:",
      all(torch.equal(params_a[k], params_b[k]) for k in params_a))
