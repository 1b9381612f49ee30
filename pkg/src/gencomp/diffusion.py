"""Noise schedules, forward noising, and the deterministic (eta=0) sampler."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

SCHEDULE_KINDS = ("linear", "cosine")

# Linear endpoints are defined at a 1000-step reference resolution and
# rescaled to the requested step count, so short schedules still destroy
# nearly all signal by the final step.
_LINEAR_REF_STEPS = 1000
_LINEAR_BETA_START = 1e-4
_LINEAR_BETA_END = 2e-2
_COSINE_S = 0.008
_BETA_MAX = 0.999
# first-step noise is capped so alpha_bar[0] stays >= 0.99 at any T
_BETA0_MAX = 0.01


@dataclass(frozen=True)
class Schedule:
    kind: str
    T: int
    betas: np.ndarray       # (T,) float64
    alphas: np.ndarray      # (T,) float64
    alpha_bar: np.ndarray   # (T,) float64  cumulative product of alphas


def make_schedule(T: int = 100, kind: str = "linear") -> Schedule:
    if kind not in SCHEDULE_KINDS:
        raise InvalidInputError(f"unknown schedule kind {kind!r}, expected one of {SCHEDULE_KINDS}")
    if T < 2:
        raise InvalidInputError(f"T must be >= 2, got {T}")
    if kind == "linear":
        scale = _LINEAR_REF_STEPS / T
        start = scale * _LINEAR_BETA_START
        end = scale * _LINEAR_BETA_END
        betas = np.linspace(start, end, T, dtype=np.float64)
    else:
        s = _COSINE_S
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + s) / (1.0 + s) * np.pi / 2.0) ** 2
        betas = 1.0 - f[1:] / f[:-1]
    betas = np.clip(betas, 0.0, _BETA_MAX)
    betas[0] = min(betas[0], _BETA0_MAX)
    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas)
    return Schedule(kind=kind, T=T, betas=betas, alphas=alphas, alpha_bar=alpha_bar)


def add_noise(x0: np.ndarray, eps: np.ndarray, t: np.ndarray, sched: Schedule) -> np.ndarray:
    """z_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, per-sample t."""
    t = np.asarray(t)
    if x0.shape != eps.shape:
        raise InvalidInputError(f"x0 {x0.shape} and eps {eps.shape} must match")
    if np.any(t < 0) or np.any(t >= sched.T):
        raise InvalidInputError(f"t out of range [0, {sched.T}): {t}")
    ab = sched.alpha_bar[t].reshape((-1,) + (1,) * (x0.ndim - 1))
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype)


def mse_and_grad(eps_hat: np.ndarray, eps: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element, and its gradient wrt eps_hat."""
    diff = eps_hat.astype(np.float64) - eps.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(eps_hat.dtype)


def training_loss(model, sched: Schedule, batch: dict, rng: np.random.Generator) -> float:
    """One objective evaluation: draw per-sample steps and Gaussian noise,
    noise the clean videos, and score the model's noise prediction by MSE.

    batch holds z0 (B,F,H,W,C), masked_video, mask, fg."""
    z0 = batch["z0"]
    if z0.shape[0] < 1:
        raise InvalidInputError("batch must be nonempty")
    t = rng.integers(0, sched.T, size=z0.shape[0])
    eps = rng.standard_normal(z0.shape, dtype=np.float32)
    z_t = add_noise(z0, eps, t, sched)
    eps_hat = model.predict_noise(z_t, t, batch["masked_video"], batch["mask"], batch["fg"])
    loss, _ = mse_and_grad(eps_hat, eps)
    return loss


def ddim_timesteps(T: int, steps: int) -> np.ndarray:
    """Strictly decreasing timestep sequence from T-1 down to 0."""
    if not 1 <= steps <= T:
        raise InvalidInputError(f"steps must be in [1, {T}], got {steps}")
    return np.round(np.linspace(T - 1, 0, steps)).astype(np.int64)


def sample(model, sched: Schedule, masked_video: np.ndarray, mask: np.ndarray,
           fg: np.ndarray, steps: int = 20, seed: int = 0,
           clip_x0: bool = True) -> np.ndarray:
    """Deterministic reverse process: at each step predict the noise, form the
    implied clean video, and re-noise it to the previous level with zero
    stochasticity. Returns the final clean estimate (B,F,H,W,C)."""
    taus = ddim_timesteps(sched.T, steps)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(masked_video.shape, dtype=np.float32)
    b = masked_video.shape[0]
    x0_hat = None
    for i, t in enumerate(taus):
        t_batch = np.full(b, int(t), dtype=np.int64)
        eps = model.predict_noise(z, t_batch, masked_video, mask, fg)
        ab_t = sched.alpha_bar[t]
        x0_hat = (z - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        if clip_x0:
            x0_hat = np.clip(x0_hat, 0.0, 1.0)
        ab_prev = sched.alpha_bar[taus[i + 1]] if i + 1 < len(taus) else 1.0
        z = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps
        z = z.astype(np.float32, copy=False)
    return x0_hat.astype(np.float32, copy=False)
