"""One full edit: invert a portrait, apply a text+texture condition, render.

Uses an untrained mapper, so the edit is small and unfocused; demo
04 trains a mapper and demo 05 adds identity recovery.
"""

from pathlib import Path

import torch

from fashiontex import load_backbones, split_text
from fashiontex.backbones import BackbonesConfig
from fashiontex.imaging import save_image_file
from fashiontex.latent import LatentCode
from fashiontex.mapper import EditCondition, compute_offsets, edit, embed_condition
from fashiontex.training import TrainConfig, new_mapper

out = Path(__file__).parent / "out" / "edit"
out.mkdir(parents=True, exist_ok=True)

bb = load_backbones(BackbonesConfig())
g = bb.generator
rng = torch.Generator().manual_seed(1)

w_true = LatentCode(torch.randn(g.num_layers, g.dim, generator=rng) * 0.3, g.bounds)
portrait = g.generate(w_true)
save_image_file(portrait, out / "portrait.png")

# Projection: the latent the editing pipeline actually works on.
w = bb.inverter.invert(portrait)
print(f"inversion error: {float((g.generate(w) - portrait).abs().max()):.2e}")

# A prompt names both garments; patches give the target textures.
upper, lower = split_text("hoodie, pleated skirt")
patch = torch.rand(16, 16, 3, generator=rng)
cond = EditCondition(text_upper=upper, text_lower=lower,
                     patch_upper=patch, patch_lower=patch)

mapper = new_mapper(TrainConfig(), bb)
offsets = compute_offsets(w, embed_condition(cond, bb), mapper)
print(f"offset norm from the untrained mapper: {float(offsets.norm().detach()):.4f}")

w_edit, edited = edit(w, cond, mapper, bb)
save_image_file(edited, out / "edited.png")
print(f"coarse group bit-identical after edit: {torch.equal(w_edit.coarse, w.coarse)}")
print(f"wrote {out / 'portrait.png'} and {out / 'edited.png'}")
