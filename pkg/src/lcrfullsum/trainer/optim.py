"""Learning-rate schedules and the Nesterov-Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _interp(x: float, x0: float, x1: float, y0: float, y1: float) -> float:
    if x1 == x0:
        return y1
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def oclr_schedule(step: int, total_steps: int, peak_lr: float = 6e-4, final_lr: float = 1e-6,
                  warmup_frac: float = 0.45, cycle_frac: float = 0.9, start_div: float = 10.0) -> float:
    """One-cycle LR: peak/div -> peak (warmup_frac) -> peak/div (cycle_frac) -> final_lr."""
    if not 0 <= step <= total_steps or total_steps <= 0:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if not 0 < warmup_frac < cycle_frac < 1:
        raise ValueError("need 0 < warmup_frac < cycle_frac < 1")
    low = peak_lr / start_div
    x = step / total_steps
    if x <= warmup_frac:
        return _interp(x, 0.0, warmup_frac, low, peak_lr)
    if x <= cycle_frac:
        return _interp(x, warmup_frac, cycle_frac, peak_lr, low)
    return _interp(x, cycle_frac, 1.0, low, final_lr)


def constant_then_decay(step: int, total_steps: int, lr: float = 5e-5, final_lr: float = 1e-6,
                        cycle_frac: float = 0.9) -> float:
    """Constant LR for ``cycle_frac`` of training, then linear decay to ``final_lr``."""
    if not 0 <= step <= total_steps or total_steps <= 0:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    x = step / total_steps
    if x <= cycle_frac:
        return lr
    return _interp(x, cycle_frac, 1.0, lr, final_lr)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for g in grads.values():
            g *= s
    return norm


@dataclass
class NAdam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def reset(self) -> None:
        self.step_count = 0
        self.m.clear()
        self.v.clear()

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = b1 * m / (1 - b1 ** (t + 1)) + (1 - b1) * g / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
