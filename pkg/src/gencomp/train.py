"""Training loop, ablation variants, and evaluation over a synthetic corpus."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import diffusion
from .checkpoint import save_checkpoint
from .convert import gamma_correct, inflate_mask, make_masked_video
from .errors import ConfigError, InvalidInputError, NonFiniteLossError
from .metrics import psnr, ssim, trajectory_adherence
from .model import ABLATIONS, Denoiser, ModelConfig, center_crop_fg
from .synth import Sample

EMA_DECAY = 0.99


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ablation: str = "full"
    seed: int = 0
    eval_every: int = 0          # 0 disables mid-run evaluation
    eval_samples: int = 4
    schedule_kind: str = "linear"
    gamma_range: tuple[float, float] = (0.4, 1.9)
    # fraction of draws trained as removal: blank foreground, clean plate target
    removal_prob: float = 0.2
    # decay for a Polyak average of the weights; the returned model carries
    # the averaged weights (the raw ones keep training), 0 disables. Averaging
    # smooths single-batch Adam noise out of the final checkpoint, which
    # matters for sampling far more than for the loss curve.
    weight_ema: float = 0.0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}, expected one of {ABLATIONS}")
        if not 0.0 <= self.removal_prob < 1.0:
            raise ConfigError(f"removal_prob must be in [0, 1), got {self.removal_prob}")
        if not 0.0 <= self.weight_ema < 1.0:
            raise ConfigError(f"weight_ema must be in [0, 1), got {self.weight_ema}")
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_range"] = list(self.gamma_range)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "gamma_range" in d:
            d["gamma_range"] = tuple(d["gamma_range"])
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


def ablation_variant(cfg: TrainConfig) -> Denoiser:
    """Build the denoiser wired for cfg.ablation; all variants share the
    same construction order, so full and shared_rope draw identical initial
    weights and differ only in grid extension."""
    mc = ModelConfig(**{**cfg.model.to_dict(), "ablation": cfg.ablation})
    return Denoiser(mc, seed=cfg.seed)


@dataclass
class LossCurve:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    emas: list[float] = field(default_factory=list)

    def append(self, step: int, loss: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise InvalidInputError("curve steps must be strictly increasing")
        ema = loss if not self.emas else EMA_DECAY * self.emas[-1] + (1 - EMA_DECAY) * loss
        self.steps.append(step)
        self.losses.append(loss)
        self.emas.append(ema)

    @property
    def final_ema(self) -> float:
        return self.emas[-1]

    def save_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("step,loss,ema\n")
            for s, l, e in zip(self.steps, self.losses, self.emas):
                fh.write(f"{s},{l:.10g},{e:.10g}\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "LossCurve":
        curve = cls()
        with open(path) as fh:
            next(fh)
            for line in fh:
                s, l, e = line.strip().split(",")
                curve.steps.append(int(s))
                curve.losses.append(float(l))
                curve.emas.append(float(e))
        return curve


class Adam:
    def __init__(self, params: list, lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= (self.lr / b1c) * m / (np.sqrt(v / b2c) + self.eps)


def _prepare(samples: list[Sample], crop) -> list[dict]:
    """Precompute the per-sample tensors that do not change across steps."""
    prepped = []
    for s in samples:
        inflated = inflate_mask(s.mask)
        prepped.append({
            "z0": s.source,
            "bg": s.background,
            "mask": inflated,
            "masked_video": make_masked_video(s.source, inflated),
            "fg": center_crop_fg(s.fg_centered, crop),
        })
    return prepped


def train(cfg: TrainConfig, corpus: list[Sample],
          progress=None) -> tuple[Denoiser, LossCurve]:
    """Optimize the denoising objective over a corpus of synthetic scenes.

    Each draw noises the clean video and regresses the injected noise; a
    removal_prob fraction of draws instead pairs a blank foreground with the
    clean background plate, teaching the blank-condition fill-in used by
    object removal. Fully deterministic for a fixed cfg and corpus."""
    if not corpus:
        raise InvalidInputError("corpus must be nonempty")
    rng = np.random.default_rng(cfg.seed)
    if cfg.model.head_output != "eps" and cfg.model.schedule_kind != cfg.schedule_kind:
        raise InvalidInputError(
            f"model converts its {cfg.model.head_output} head with the "
            f"{cfg.model.schedule_kind!r} schedule but training uses "
            f"{cfg.schedule_kind!r}; the two must agree")
    model = ablation_variant(cfg)
    sched = diffusion.make_schedule(cfg.model.T_diffusion, cfg.schedule_kind)
    data = _prepare(corpus, cfg.model.fg_crop)
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    curve = LossCurve()
    fg_zero = np.zeros_like(data[0]["fg"])
    avg = None
    if cfg.weight_ema > 0.0:
        avg = [p.value.copy() for p in model.parameters()]
    for step in range(cfg.steps):
        idx = rng.integers(0, len(data), size=cfg.batch_size)
        z0s, fgs, masks, masked = [], [], [], []
        for j in idx:
            d = data[j]
            # both draws always happen so the stream stays aligned across branches
            removal = rng.random() < cfg.removal_prob
            gamma = float(rng.uniform(*cfg.gamma_range))
            if removal:
                z0s.append(d["bg"])
                fgs.append(fg_zero)
            else:
                z0s.append(d["z0"])
                fgs.append(gamma_correct(d["fg"], gamma))
            masks.append(d["mask"])
            masked.append(d["masked_video"])
        z0 = np.stack(z0s)
        t = rng.integers(0, sched.T, size=cfg.batch_size)
        eps = rng.standard_normal(z0.shape, dtype=np.float32)
        z_t = diffusion.add_noise(z0, eps, t, sched)
        model.zero_grads()
        eps_hat, cache = model.fwd(z_t, t, np.stack(masked), np.stack(masks), np.stack(fgs))
        loss, d_eps = diffusion.mse_and_grad(eps_hat, eps)
        if not math.isfinite(loss):
            raise NonFiniteLossError(
                f"loss became {loss} at step {step}, t={t.tolist()}, batch={idx.tolist()}")
        model.bwd(d_eps, cache)
        opt.step()
        if avg is not None:
            for a, p in zip(avg, model.parameters()):
                a *= cfg.weight_ema
                a += (1.0 - cfg.weight_ema) * p.value
        curve.append(step, loss)
        if progress is not None:
            progress(step, loss, curve.emas[-1])
    if avg is not None:
        for a, p in zip(avg, model.parameters()):
            p.value[...] = a
    return model, curve


def evaluate(model: Denoiser, samples: list[Sample], steps: int = 20,
             seed: int = 0, schedule_kind: str = "linear") -> dict:
    """Reconstruct each scene from its own mask/foreground and score against
    the ground-truth composite."""
    sched = diffusion.make_schedule(model.cfg.T_diffusion, schedule_kind)
    rows = []
    for i, s in enumerate(samples):
        inflated = inflate_mask(s.mask)
        masked = make_masked_video(s.source, inflated)
        fg = center_crop_fg(s.fg_centered, model.cfg.fg_crop)
        out = diffusion.sample(model, sched, masked[None], inflated[None], fg[None],
                               steps=steps, seed=seed)[0]
        rows.append({
            "id": i,
            "psnr": psnr(out, s.source),
            "ssim": ssim(out, s.source),
            "adherence": trajectory_adherence(out, s.path_truth, s.spec.sprite_color),
        })
    return {
        "n": len(rows),
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
        "adherence": float(np.mean([r["adherence"] for r in rows])),
        "per_sample": rows,
    }


def run_ablation_matrix(base: TrainConfig, corpus: list[Sample],
                        variants: tuple[str, ...], seeds: tuple[int, ...],
                        out_dir: str | Path | None = None,
                        progress=None) -> dict:
    """Train every (variant, seed) pair and collect final EMA losses plus the
    mean/standard-error statistics used to compare variants."""
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    results: dict[str, dict] = {}
    for variant in variants:
        finals = []
        for seed in seeds:
            cfg = TrainConfig.from_dict({**base.to_dict(), "ablation": variant, "seed": seed})
            model, curve = train(cfg, corpus, progress=progress)
            finals.append(curve.final_ema)
            if out_dir is not None:
                curve.save_csv(Path(out_dir) / f"curve_{variant}_seed{seed}.csv")
                save_checkpoint(Path(out_dir) / f"ckpt_{variant}_seed{seed}.gcmp", model,
                                schedule_kind=cfg.schedule_kind, seed=seed, step=cfg.steps)
            del model
        arr = np.array(finals, dtype=np.float64)
        results[variant] = {
            "final_ema": finals,
            "mean": float(arr.mean()),
            # sample standard deviation; single-seed runs get 0 spread
            "std": float(arr.std(ddof=1)) if len(finals) > 1 else 0.0,
            "sem": float(arr.std(ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0,
        }
    report = {"variants": results, "seeds": list(seeds), "steps": base.steps}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation_report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report


def pooled_se(a: dict, b: dict) -> float:
    """Pooled standard error of the difference between two variants' means."""
    na, nb = len(a["final_ema"]), len(b["final_ema"])
    return math.sqrt(a["std"] ** 2 / na + b["std"] ** 2 / nb)
