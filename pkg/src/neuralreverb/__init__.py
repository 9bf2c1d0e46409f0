"""Neural modeling of plate and spring reverberators.

A signal-processing-informed network learns the effect end to end from
dry/wet audio pairs: a trainable filter-bank front-end, a recurrent latent
space emitting per-band sparse FIR filters and envelopes, and a synthesis
back-end with learned waveshaping and time-varying channel gains.
"""

from .audio_io import (
    AudioClip,
    ClipPair,
    PairedDataset,
    apply_fadeout,
    load_manifest,
    load_wav,
    normalize_amplitude,
    read_manifest,
    save_wav,
    split_dataset,
)
from .autodiff import Adam, AdamState, Tensor, backward, finite_diff_check, no_grad
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainSettings, parse_config_file
from .dsp import (
    FrameStack,
    frame_signal,
    log_power_spectrum,
    make_context,
    overlap_add,
    pre_emphasis,
    velvet_noise_ir,
)
from .model import ReverbModel
from .training import (
    LossBreakdown,
    compute_loss,
    evaluate,
    model_from_checkpoint,
    pretrain,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "ClipPair",
    "PairedDataset",
    "apply_fadeout",
    "load_manifest",
    "load_wav",
    "normalize_amplitude",
    "read_manifest",
    "save_wav",
    "split_dataset",
    "Adam",
    "AdamState",
    "Tensor",
    "backward",
    "finite_diff_check",
    "no_grad",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "ModelConfig",
    "TrainSettings",
    "parse_config_file",
    "FrameStack",
    "frame_signal",
    "log_power_spectrum",
    "make_context",
    "overlap_add",
    "pre_emphasis",
    "velvet_noise_ir",
    "ReverbModel",
    "LossBreakdown",
    "compute_loss",
    "evaluate",
    "model_from_checkpoint",
    "pretrain",
    "train",
]
