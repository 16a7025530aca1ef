"""Adaptive-moment gradient descent with checkpointable state.

The optimizer works on a name-to-tensor parameter dict and exposes its full
state (step count and both moment buffers) as named tensors, so a training
run serialized mid-flight resumes bit-exactly: the update rule sees the same
moments, the same step count, and therefore produces the same parameters.
"""

from __future__ import annotations

import math

import torch


class Adam:
    def __init__(self, params: dict[str, torch.Tensor], lr: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not params:
            raise ValueError("no parameters to optimize")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.params = dict(sorted(params.items()))
        self.step_count = 0
        self.m = {name: torch.zeros_like(p) for name, p in self.params.items()}
        self.v = {name: torch.zeros_like(p) for name, p in self.params.items()}

    @torch.no_grad()
    def step(self) -> None:
        self.step_count += 1
        bias1 = 1.0 - self.beta1**self.step_count
        bias2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p -= self.lr * m_hat / (torch.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_tensors(self, prefix: str = "opt.") -> dict[str, torch.Tensor]:
        out = {f"{prefix}step": torch.tensor([float(self.step_count)], dtype=torch.float64)}
        for name in self.params:
            out[f"{prefix}m.{name}"] = self.m[name]
            out[f"{prefix}v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, torch.Tensor], prefix: str = "opt.") -> None:
        step_key = f"{prefix}step"
        if step_key not in tensors:
            raise ValueError(f"optimizer state is missing {step_key!r}")
        count = float(tensors[step_key].reshape(-1)[0])
        if count < 0 or count != math.floor(count):
            raise ValueError(f"invalid optimizer step count {count}")
        self.step_count = int(count)
        for name, p in self.params.items():
            for buf, label in ((self.m, "m"), (self.v, "v")):
                key = f"{prefix}{label}.{name}"
                if key not in tensors:
                    raise ValueError(f"optimizer state is missing {key!r}")
                buf[name] = tensors[key].reshape(p.shape).to(p.dtype).clone()
