"""Forward/reverse diffusion steps over raw float arrays.

The forward step is x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) eps_t
with eps_t drawn once per call from a seeded generator.  The reverse step
is the noise-free x_{t-1} = (x_t - sqrt(1 - alpha_t) eps_hat) / sqrt(alpha_t).
States are plain ndarrays shaped (channels, h, w); only the attack layer
converts to and from Image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import gaussian_blur

__all__ = [
    "NoiseSchedule",
    "forward_step",
    "reverse_step",
    "guide_pull_denoiser",
    "GuidePullDenoiser",
    "reverse_chain",
]

GUIDANCE_CEILING = 15.0  # gs at and beyond this pins the guide blend at 1


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta schedule with alpha_bar[t] = prod_{s<=t} (1 - beta_s), alpha_bar[0] = 1.

    The default subsamples the standard linear 1e-4..0.02 training schedule
    (train_steps points) down to T inference steps, so a full T-step forward
    pass actually reaches the near-pure-noise state (alpha_bar_T ~ 4e-5).
    Pass train_steps=None for a raw linear schedule over the T steps
    themselves, which is mainly useful for toy and degenerate cases.
    """

    T: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    train_steps: int | None = 1000
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("schedule needs at least one step")
        if self.train_steps is None:
            betas = np.linspace(self.beta_start, self.beta_end, self.T)
        else:
            if self.train_steps < self.T:
                raise ValueError("train_steps must be at least T")
            base = np.linspace(self.beta_start, self.beta_end, self.train_steps)
            base_bars = np.cumprod(1.0 - base)
            idx = ((np.arange(1, self.T + 1) * self.train_steps) // self.T) - 1
            bars = base_bars[idx]
            prev = np.concatenate([[1.0], bars[:-1]])
            betas = 1.0 - bars / prev
        # beta = 0 admitted for the degenerate identity step; strict decrease
        # of alpha_bar is only meaningful where beta > 0
        if np.any(betas < 0) or np.any(betas >= 1):
            raise ValueError("betas must lie in [0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
        if np.any(np.diff(alpha_bars) > 0):
            raise ValueError("alpha_bar must be non-increasing")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if not (0 <= t <= self.T):
            raise ValueError(f"t must be in [0, {self.T}], got {t}")
        return float(self.alpha_bars[t])

    def _check_t(self, t: int) -> None:
        if not (1 <= t <= self.T):
            raise ValueError(f"step index must be in [1, {self.T}], got {t}")


def forward_step(x_prev: np.ndarray, t: int, schedule: NoiseSchedule,
                 generator: np.random.Generator) -> np.ndarray:
    alpha_t = schedule.alpha(t)
    eps = generator.standard_normal(x_prev.shape)
    return np.sqrt(alpha_t) * x_prev + np.sqrt(1.0 - alpha_t) * eps


def reverse_step(x_t: np.ndarray, t: int, denoiser, guide: np.ndarray | None,
                 gs: float, schedule: NoiseSchedule) -> np.ndarray:
    alpha_t = schedule.alpha(t)
    eps_hat = denoiser(x_t, t, guide, gs)
    if eps_hat.shape != x_t.shape:
        raise ValueError("denoiser output shape must match the state")
    return (x_t - np.sqrt(1.0 - alpha_t) * eps_hat) / np.sqrt(alpha_t)


class GuidePullDenoiser:
    """Analytic denoiser: predicts x0 as a blend of low-passed state and guide.

    x0_hat = (1 - lam) * lowpass(x_t) + lam * guide, lam = clamp(gs / 15, 0, 1),
    then eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t).
    """

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    def __call__(self, x_t: np.ndarray, t: int, guide: np.ndarray | None, gs: float) -> np.ndarray:
        lam = min(max(gs / GUIDANCE_CEILING, 0.0), 1.0)
        if guide is not None and guide.shape != x_t.shape:
            raise ValueError(f"guide shape {guide.shape} does not match state {x_t.shape}")
        low = np.stack([gaussian_blur(p, sigma=1.5, radius=2) for p in x_t])
        if guide is None or lam == 0.0:
            x0_hat = low
        else:
            x0_hat = (1.0 - lam) * low + lam * guide
        abar = self.schedule.alpha_bar(t)
        denom = np.sqrt(max(1.0 - abar, 1e-12))
        return (x_t - np.sqrt(abar) * x0_hat) / denom


def guide_pull_denoiser(x_t: np.ndarray, t: int, guide: np.ndarray, gs: float,
                        schedule: NoiseSchedule) -> np.ndarray:
    return GuidePullDenoiser(schedule)(x_t, t, guide, gs)


def reverse_chain(x_start: np.ndarray, t_start: int, denoiser, guide: np.ndarray | None,
                  gs: float, schedule: NoiseSchedule) -> np.ndarray:
    x = x_start
    for t in range(t_start, 0, -1):
        x = reverse_step(x, t, denoiser, guide, gs, schedule)
    return x
