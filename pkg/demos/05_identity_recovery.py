"""Identity recovery: fuse the edit with the original, fine-tune a private
generator copy toward the fusion, and verify the shared generator is
untouched."""

from pathlib import Path

import torch

from fashiontex import load_backbones, recover, fuse_guided
from fashiontex.backbones import BackbonesConfig
from fashiontex.imaging import load_image_file, save_image_file
from fashiontex.latent import LatentCode
from fashiontex.mapper import EditCondition, edit
from fashiontex.recovery import RecoveryConfig, recovery_objective
from fashiontex.training import TrainConfig, ingest_dataset, new_mapper, synthesize_dataset

out = Path(__file__).parent / "out" / "recovery"
out.mkdir(parents=True, exist_ok=True)

bb = load_backbones(BackbonesConfig())
g = bb.generator

# A dataset portrait sits slightly off the generator's range, so projection
# loses some identity detail and recovery has real work to do.
data = synthesize_dataset(out / "data", 8, bb, seed=0)
index = ingest_dataset(data, bb)
portrait = load_image_file(index.records[0].path)
save_image_file(portrait, out / "portrait.png")

w = bb.inverter.invert(portrait)
mapper = new_mapper(TrainConfig(), bb)
gen = torch.Generator().manual_seed(11)
with torch.no_grad():
    for p in mapper.parameters():
        p += 0.05 * torch.randn(*p.shape, generator=gen)

cond = EditCondition(text_upper="hoodie", text_lower="pants",
                     patch_upper=torch.rand(16, 16, 3, generator=gen),
                     patch_lower=torch.rand(16, 16, 3, generator=gen))
w_edit, edited = edit(w, cond, mapper, bb)
save_image_file(edited, out / "edited.png")

guided = fuse_guided(edited, portrait, bb.parser)
save_image_file(guided, out / "guided.png")

start = float(recovery_objective(guided, g.generate(LatentCode(w_edit.layers.detach(), g.bounds)),
                                 portrait, bb.parser, bb.perceptual))
recovered, _ = recover(w_edit, portrait, edited, bb, RecoveryConfig(steps=100),
                       log=print)
save_image_file(recovered, out / "recovered.png")

final = float(recovery_objective(guided, recovered, portrait, bb.parser, bb.perceptual))
print(f"objective {start:.4f} -> {final:.4f}")
print(f"outputs in {out}")
