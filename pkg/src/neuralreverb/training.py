"""Loss, two-stage training schedule and objective evaluation.

The loss is a pre-emphasized time-domain mean absolute error plus a
log-power-spectrum mean squared error, weighted 1.0 and 1e-4. Training
runs one optimizer step per clip (the batch is every frame of that clip),
with early stopping per phase and a single 25% learning-rate reduction
for the fine-tune phase; the best-validation parameters are returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .audio_io import PairedDataset
from .autodiff import Adam, Tensor
from .checkpoint import Checkpoint
from .config import ModelConfig, TrainSettings
from .errors import ConfigError, NumericError
from .model import ReverbModel, STREAM_SHUFFLE, derive_rng

ALPHA_TIME = 1.0
ALPHA_SPECTRAL = 1e-4
PRE_EMPHASIS_COEFF = 0.95


@dataclass
class LossBreakdown:
    """Scalar graph nodes for the two loss terms and their weighted total."""

    mae_time: Tensor
    mse_spec: Tensor
    total: Tensor
    alpha1: float = ALPHA_TIME
    alpha2: float = ALPHA_SPECTRAL

    def floats(self) -> tuple:
        return (self.mae_time.item(), self.mse_spec.item(), self.total.item())


def pre_emphasis_graph(x: Tensor, coeff: float = PRE_EMPHASIS_COEFF) -> Tensor:
    """Differentiable y[0]=x[0], y[n]=x[n]-coeff*x[n-1] along the last axis."""
    head = x[..., :1]
    tail = ad.add(x[..., 1:], ad.mul(x[..., :-1], -coeff))
    return ad.concat([head, tail], axis=-1)


def log_power_spectrum_graph(x: Tensor, eps: float = dsp.SPECTRAL_FLOOR) -> Tensor:
    """Differentiable log(|FFT|^2 + eps) over the non-redundant bins.

    x: [..., T] -> [..., T/2+1]. The backward pass applies the exact
    adjoint of the real FFT.
    """
    x = ad.as_tensor(x)
    n = x.shape[-1]
    spec = np.fft.rfft(x.data, axis=-1)
    power = spec.real**2 + spec.imag**2 + eps
    out = np.log(power).astype(x.dtype, copy=False)

    def back(g):
        if x.requires_grad:
            gc = (g / power) * 2.0 * (spec.real + 1j * spec.imag)
            full = np.zeros(x.shape[:-1] + (n,), dtype=complex)
            full[..., : n // 2 + 1] = gc
            gx = np.real(n * np.fft.ifft(full, axis=-1))
            ad._accumulate(x, gx.astype(x.dtype, copy=False))

    return ad._node(out, (x,), back, "log_power_spectrum")


def compute_loss(target, output) -> LossBreakdown:
    """Weighted sum of pre-emphasized-waveform MAE and log-spectrum MSE.

    target: array [.., T]; output: Tensor of the same shape. Differentiable
    with respect to the output; total == alpha1*mae + alpha2*mse exactly.
    """
    output = ad.as_tensor(output)
    target = np.asarray(target, dtype=output.dtype)
    if target.shape != output.shape:
        raise ConfigError(f"loss shapes differ: {target.shape} vs {output.shape}")

    emphasized = pre_emphasis_graph(output)
    target_emphasized = dsp.pre_emphasis(target, PRE_EMPHASIS_COEFF).astype(output.dtype)
    mae = ad.mean(ad.absolute(ad.add(emphasized, -target_emphasized)))

    spec_out = log_power_spectrum_graph(output)
    spec_target = dsp.log_power_spectrum(target).astype(output.dtype)
    mse = ad.mean(ad.square(ad.add(spec_out, -spec_target)))

    total = ad.add(ad.mul(mae, ALPHA_TIME), ad.mul(mse, ALPHA_SPECTRAL))
    return LossBreakdown(mae_time=mae, mse_spec=mse, total=total)


# --- per-clip helpers ---------------------------------------------------------


def clip_frames(clip, cfg: ModelConfig) -> np.ndarray:
    return dsp.frame_signal(clip.samples, cfg.frame_size, cfg.hop)


def clip_stacks(clip, cfg: ModelConfig) -> np.ndarray:
    return dsp.stack_all(clip_frames(clip, cfg), cfg.context_k)


def _check_finite(value: float, where: str) -> float:
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss during {where}")
    return value


def reverb_clip_loss(model: ReverbModel, pair, training: bool, rng=None) -> LossBreakdown:
    """Eq-style loss of the model output against the wet frames of one pair."""
    cfg = model.config
    out = model.forward(clip_stacks(pair.dry, cfg), training=training, rng=rng)
    return compute_loss(clip_frames(pair.wet, cfg), out)


def reconstruction_clip_loss(model: ReverbModel, pair) -> LossBreakdown:
    """Joint front-end reconstruction loss of both the dry and wet frames."""
    cfg = model.config
    dry = clip_frames(pair.dry, cfg)
    wet = clip_frames(pair.wet, cfg)
    loss_dry = compute_loss(dry, model.reconstruct(dry))
    loss_wet = compute_loss(wet, model.reconstruct(wet))
    return LossBreakdown(
        mae_time=ad.add(loss_dry.mae_time, loss_wet.mae_time),
        mse_spec=ad.add(loss_dry.mse_spec, loss_wet.mse_spec),
        total=ad.add(loss_dry.total, loss_wet.total),
    )


# --- schedule ---------------------------------------------------------------


class EarlyStopper:
    """Stops a phase `patience` epochs after its best validation loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.since_best = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when the phase should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.since_best = 0
            return False
        self.since_best += 1
        return self.since_best >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    lr: float
    train_loss: float
    val_loss: float


def _validation_loss(model: ReverbModel, pairs, loss_fn) -> float:
    with_losses = []
    with ad.no_grad():
        for pair in pairs:
            with_losses.append(loss_fn(model, pair).total.item())
    return float(np.mean(with_losses))


def _run_phase(
    model: ReverbModel,
    phase: str,
    train_pairs,
    val_pairs,
    optimizer: Adam,
    settings: TrainSettings,
    max_epochs: int,
    log: list,
    epoch_offset: int,
    step_fn,
    val_fn,
    best_tracker: dict,
) -> tuple:
    """Shared epoch loop; returns (epochs_run, early_stopped)."""
    stopper = EarlyStopper(settings.patience)
    shuffle_rng = derive_rng(settings.seed, STREAM_SHUFFLE)
    for epoch in range(1, max_epochs + 1):
        order = shuffle_rng.permutation(len(train_pairs))
        train_losses = []
        for idx in order:
            train_losses.append(_check_finite(step_fn(train_pairs[idx], optimizer), phase))
        val_loss = _check_finite(val_fn(val_pairs), phase)
        record = EpochRecord(
            epoch=epoch_offset + epoch,
            phase=phase,
            lr=optimizer.lr,
            train_loss=float(np.mean(train_losses)),
            val_loss=val_loss,
        )
        log.append(record)
        if val_loss < best_tracker["loss"]:
            best_tracker.update(
                loss=val_loss, state=model.state(), epoch=record.epoch, phase=phase
            )
        if stopper.update(epoch, val_loss):
            return epoch, True
    return max_epochs, False


def pretrain(
    dataset: PairedDataset,
    cfg: ModelConfig,
    settings: TrainSettings = TrainSettings(),
    log: list | None = None,
) -> Checkpoint:
    """Unsupervised front-end initialization.

    Every dry and wet clip is reconstructed as its own target; only the
    filter-bank parameters receive updates. Early stopping watches the
    validation reconstruction loss.
    """
    settings.validate()
    train_pairs = dataset.subset("train")
    val_pairs = dataset.subset("validation")
    if not train_pairs or not val_pairs:
        raise ValueError("pretraining needs non-empty train and validation splits")

    model = ReverbModel(cfg, seed=settings.seed)
    params = model.parameters()
    frontend = [params[name] for name in model.frontend_parameter_names()]
    optimizer = Adam(frontend, lr=settings.initial_lr)

    def step(pair, opt) -> float:
        loss = reconstruction_clip_loss(model, pair)
        ad.backward(loss.total)
        opt.step()
        return loss.total.item()

    def val(pairs) -> float:
        return _validation_loss(model, pairs, lambda m, p: reconstruction_clip_loss(m, p))

    log = log if log is not None else []
    best = {"loss": float("inf"), "state": model.state(), "epoch": 0, "phase": "pretrain"}
    epochs, _ = _run_phase(
        model, "pretrain", train_pairs, val_pairs, optimizer, settings,
        settings.max_epochs_pretrain, log, 0, step, val, best,
    )
    model.load_state(best["state"])
    return Checkpoint(
        config=cfg,
        params=best["state"],
        phase="pretrain",
        epoch=best["epoch"],
        best_val_loss=best["loss"],
        extra={"epochs_run": epochs, "seed": settings.seed},
    )


def train(
    dataset: PairedDataset,
    cfg: ModelConfig,
    init: Checkpoint,
    settings: TrainSettings = TrainSettings(),
    log: list | None = None,
) -> Checkpoint:
    """Supervised end-to-end training: main phase at the initial learning
    rate, then a fine-tune phase at 75% of it starting from the best main
    parameters. Returns the checkpoint with the lowest validation loss seen
    anywhere; the adaptive activations contribute their Lipschitz penalty
    to the optimized objective (not to the reported loss)."""
    settings.validate()
    if init.config != cfg:
        raise ConfigError("initial checkpoint was built with a different configuration")
    train_pairs = dataset.subset("train")
    val_pairs = dataset.subset("validation")
    if not train_pairs or not val_pairs:
        raise ValueError("training needs non-empty train and validation splits")

    model = ReverbModel(cfg, seed=settings.seed)
    model.load_state(init.params)
    params = model.parameters()
    dropout_rng = derive_rng(settings.seed, 1)

    def step(pair, opt) -> float:
        loss = reverb_clip_loss(model, pair, training=True, rng=dropout_rng)
        objective = ad.add(loss.total, ad.mul(model.saaf_penalty(), cfg.lipschitz_weight))
        ad.backward(objective)
        for p in opt.params:
            if p.grad is None:  # parameters untouched by this graph still step
                p.grad = np.zeros_like(p.data)
        opt.step()
        return loss.total.item()

    def val(pairs) -> float:
        return _validation_loss(model, pairs, lambda m, p: reverb_clip_loss(m, p, training=False))

    log = log if log is not None else []
    best = {"loss": float("inf"), "state": model.state(), "epoch": 0, "phase": "main"}

    optimizer = Adam(list(params.values()), lr=settings.initial_lr)
    main_epochs, main_stopped = _run_phase(
        model, "main", train_pairs, val_pairs, optimizer, settings,
        settings.max_epochs_main, log, 0, step, val, best,
    )

    # Fine-tune from the best main-phase parameters with the reduced rate.
    model.load_state(best["state"])
    finetune_lr = settings.initial_lr * settings.finetune_lr_factor
    optimizer = Adam(list(model.parameters().values()), lr=finetune_lr)
    _run_phase(
        model, "finetune", train_pairs, val_pairs, optimizer, settings,
        settings.max_epochs_finetune, log, main_epochs, step, val, best,
    )

    model.load_state(best["state"])
    return Checkpoint(
        config=cfg,
        params=best["state"],
        phase=best["phase"],
        epoch=best["epoch"],
        best_val_loss=best["loss"],
        extra={
            "seed": settings.seed,
            "main_epochs": main_epochs,
            "main_early_stopped": main_stopped,
            "finetune_lr": finetune_lr,
        },
    )


# --- evaluation ----------------------------------------------------------------

METRIC_COLUMNS = ("mae", "mse", "loss")


def evaluate(dataset: PairedDataset, split: str, model: ReverbModel) -> list:
    """Frame-aggregated metrics per clip plus a mean row.

    Returns [(id, mae, mse, loss), ..., ("mean", ...)] with the loss
    columns exactly as computed by compute_loss.
    """
    pairs = dataset.subset(split)
    if not pairs:
        raise ValueError(f"split {split!r} is empty")
    rows = []
    with ad.no_grad():
        for pair in pairs:
            mae, mse, total = reverb_clip_loss(model, pair, training=False).floats()
            rows.append((pair.id, mae, mse, total))
    means = tuple(float(np.mean([r[i] for r in rows])) for i in (1, 2, 3))
    rows.append(("mean",) + means)
    return rows


def model_from_checkpoint(ck: Checkpoint, seed: int | None = None) -> ReverbModel:
    model = ReverbModel(ck.config, seed=seed if seed is not None else ck.extra.get("seed", 0))
    model.load_state(ck.params)
    return model
