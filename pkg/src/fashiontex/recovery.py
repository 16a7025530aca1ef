"""Identity recovery: fuse the edit with the original, then fine-tune a
private generator copy until its output matches the fusion where it should
and the original everywhere else.

The fusion (guided image) takes cloth pixels from the edited image and
everything else from the original portrait. Direct compositing is not the
final output, because type edits change garment silhouettes; instead the
guided image is the optimization target for a per-result fine-tune of a
cloned generator parameter set. The shared generator is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .backbones import BackboneSet, Image
from .latent import LatentCode
from .losses import euclidean_norm
from .optim import Adam


class RecoveryError(RuntimeError):
    """Recovery optimization failed (non-finite objective)."""


@dataclass(frozen=True)
class RecoveryConfig:
    steps: int = 350
    learning_rate: float = 3e-4
    log_every: int = 50
    # The candidate output is re-parsed this often; set to 1 to re-parse
    # every step.
    mask_refresh_every: int = 25

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.log_every < 1 or self.mask_refresh_every < 1:
            raise ValueError("log_every and mask_refresh_every must be at least 1")


def fuse_guided(i_e: Image, i_i: Image, parser) -> Image:
    """Cloth pixels from the edit, everything else from the original, bit-exact."""
    if tuple(i_e.shape) != tuple(i_i.shape):
        raise ValueError(f"image shapes differ: {tuple(i_e.shape)} vs {tuple(i_i.shape)}")
    cloth = parser.parse(i_e).cloth
    return torch.where(cloth.unsqueeze(-1) > 0.5, i_e, i_i)


def recovery_objective(i_guided: Image, i_o: Image, i_i: Image, parser,
                       perceptual) -> torch.Tensor:
    """Perceptual distance to the guided image plus the non-cloth reconstruction norm."""
    shapes = {tuple(i_guided.shape), tuple(i_o.shape), tuple(i_i.shape)}
    if len(shapes) != 1:
        raise ValueError(f"image shapes differ: {shapes}")
    bg = parser.parse(i_o).background_noncloth.unsqueeze(-1)
    return perceptual.distance(i_guided, i_o) + euclidean_norm(bg * (i_i - i_o))


def recover(w_edit: LatentCode, i_i: Image, i_e: Image, backbones: BackboneSet,
            cfg: RecoveryConfig,
            log: Callable[[str], None] | None = None) -> tuple[Image, dict[str, torch.Tensor]]:
    """Fine-tune a cloned generator so generate(w_edit) approaches the guided image.

    Returns the final output image and the tuned private parameter set. With
    steps == 0 this is a pure function of (w_edit, shared parameters).
    """
    w_edit = LatentCode(w_edit.layers.detach(), w_edit.bounds)
    gen = backbones.generator.clone()
    params = gen.trainable_parameters()
    if cfg.steps == 0:
        with torch.no_grad():
            return gen.generate(w_edit), params

    guided = fuse_guided(i_e, i_i, backbones.parser).detach()
    i_i = torch.as_tensor(i_i).detach()
    opt = Adam(params, lr=cfg.learning_rate)
    bg = None
    for step in range(cfg.steps):
        i_o = gen.generate(w_edit)
        if step % cfg.mask_refresh_every == 0:
            bg = backbones.parser.parse(i_o.detach()).background_noncloth.unsqueeze(-1)
        objective = backbones.perceptual.distance(guided, i_o) + euclidean_norm(bg * (i_i - i_o))
        if not torch.isfinite(objective):
            raise RecoveryError(
                f"non-finite objective {float(objective.detach())} at step {step}; "
                f"lr={cfg.learning_rate}, steps={cfg.steps}"
            )
        opt.zero_grad()
        objective.backward()
        opt.step()
        if log is not None and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            log(f"step={step} objective={float(objective.detach())!r}")
    with torch.no_grad():
        return gen.generate(w_edit), params
