"""Tour of the six training loss terms with hand-checkable inputs."""

import numpy as np
import torch

from fashiontex import load_backbones
from fashiontex.backbones import BackbonesConfig
from fashiontex.latent import LatentCode, zero_offset
from fashiontex.losses import (LossWeights, background_loss, cosine_distance, gram,
                               identity_loss, norm_loss, skin_loss, srgb_to_lab,
                               texture_loss, total_loss, type_loss)
from fashiontex.mapper import EditCondition, modulate_rows

bb = load_backbones(BackbonesConfig())
g = bb.generator
rng = torch.Generator().manual_seed(2)

# Modulation: normalize a row, then condition-derived scale and shift.
v = torch.tensor([[1.0, 3.0]])
print("modulate([1,3], gamma=2, beta=0) =", modulate_rows(v, 2 * torch.ones(1, 2), torch.zeros(1, 2), eps=0.0))

# Type loss: cosine distance to a calibrated target embedding.
e = torch.randn(4, 32, generator=rng)
print("type_loss with target == source tag reduces to plain cosine distance:",
      float(type_loss(e[0], e[1], e[2], e[2])) == float(cosine_distance(e[0], e[1])))

# Gram matrix: channel correlations, the texture signature.
f = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
print("gram([[1,2],[3,4]]) unnormalized =", gram(f, normalized=False).tolist())

# Texture loss: gram of a cloth crop vs gram of the donor patch, 4 levels.
w = LatentCode(torch.randn(g.num_layers, g.dim, generator=rng) * 0.3, g.bounds)
img = g.generate(w)
patch = torch.rand(16, 16, 3, generator=rng)
txr = texture_loss(img, "upper", patch, bb.parser, bb.texture_extractor,
                   np.random.default_rng(0))
print(f"texture_loss vs a random patch: {float(txr):.4f}")

# LAB colorimetry behind the skin loss.
print("LAB(red) =", [round(float(x), 2) for x in srgb_to_lab(torch.tensor([[[1.0, 0.0, 0.0]]]))[0, 0]])

# Zero cases: identical images and zero offsets cost exactly nothing.
print("identity/background/skin/norm at the fixed point:",
      float(identity_loss(img, img, bb.identity_embedder)),
      float(background_loss(img, img, bb.parser)),
      float(skin_loss(img, img, bb.parser)),
      float(norm_loss(zero_offset(w))))

# The weighted total, as the trainer logs it.
cond = EditCondition(text_upper="hoodie", text_lower="pants",
                     patch_upper=patch, patch_lower=patch)
report = total_loss(img, img, zero_offset(w), cond, ("t shirt", "jeans"),
                    bb, LossWeights(), np.random.default_rng(1))
print(report.log_line(step=0))
