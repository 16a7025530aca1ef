"""Run the metric suite (distribution distance, type accuracy, perceptual
mean) on a freshly trained toy checkpoint."""

from pathlib import Path

from fashiontex import (EvalConfig, evaluate, ingest_dataset, load_backbones,
                        synthesize_dataset, train)
from fashiontex.backbones import BackbonesConfig
from fashiontex.training import TrainConfig

out = Path(__file__).parent / "out" / "evaluate"
out.mkdir(parents=True, exist_ok=True)

bb = load_backbones(BackbonesConfig())
data = synthesize_dataset(out / "data", 24, bb, seed=0)
index = ingest_dataset(data, bb)

cfg = TrainConfig(steps=40, batch_size=4, out_dir=str(out / "run"))
result = train(cfg, index, bb)

report = evaluate(result.checkpoint_path, index, bb, EvalConfig(num_samples=12))
print(report.serialize())
(out / "report.txt").write_text(report.serialize())
(out / "per_sample.csv").write_text(report.csv())
print(f"wrote {out / 'report.txt'} and {out / 'per_sample.csv'}")
