"""Trajectory-controlled generative video compositing.

A denoising transformer composites a foreground clip into a background
video along a user-drawn trajectory. Foreground tokens join the sequence
through shared attention with extended rotary coordinates, and a
background-preservation branch re-injects known pixels after every block.
"""
from .checkpoint import load_checkpoint, save_checkpoint
from .control import ControlSpec
from .convert import (
    center_foreground,
    densify_trajectory,
    derive_fg_mask,
    gamma_correct,
    inflate_mask,
    make_masked_video,
    retarget_mask,
    track_point,
)
from .diffusion import Schedule, add_noise, ddim_timesteps, make_schedule, sample, training_loss
from .errors import (
    ConfigError,
    ContractViolationError,
    EmptyRegionError,
    EmptyVideoError,
    GencompError,
    InvalidInputError,
    NonFiniteLossError,
    NothingToInsertError,
    SpecViolationError,
)
from .metrics import psnr, ssim, trajectory_adherence
from .model import Denoiser, ModelConfig, downsample_mask, inject_background
from .pipeline import ComposeResult, compose, remove
from .synth import SceneSpec, build_corpus, generate_sample, load_corpus, make_training_example, random_scene
from .train import LossCurve, TrainConfig, ablation_variant, evaluate, pooled_se, run_ablation_matrix, train
from .video import load_video, read_frames, read_raw_tensor, write_frames, write_raw_tensor

__version__ = "0.1.0"

__all__ = [
    "ComposeResult",
    "ConfigError",
    "ContractViolationError",
    "ControlSpec",
    "Denoiser",
    "EmptyRegionError",
    "EmptyVideoError",
    "GencompError",
    "InvalidInputError",
    "LossCurve",
    "ModelConfig",
    "NonFiniteLossError",
    "NothingToInsertError",
    "SceneSpec",
    "Schedule",
    "SpecViolationError",
    "TrainConfig",
    "ablation_variant",
    "add_noise",
    "build_corpus",
    "center_foreground",
    "compose",
    "ddim_timesteps",
    "densify_trajectory",
    "derive_fg_mask",
    "downsample_mask",
    "evaluate",
    "gamma_correct",
    "generate_sample",
    "inflate_mask",
    "inject_background",
    "load_checkpoint",
    "load_corpus",
    "load_video",
    "make_masked_video",
    "make_schedule",
    "make_training_example",
    "pooled_se",
    "psnr",
    "random_scene",
    "read_frames",
    "read_raw_tensor",
    "remove",
    "retarget_mask",
    "sample",
    "save_checkpoint",
    "ssim",
    "track_point",
    "train",
    "training_loss",
    "trajectory_adherence",
    "write_frames",
    "write_raw_tensor",
]
