"""Model architecture configuration and the flat key=value config file."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict

from .errors import ConfigError

FIR_DENSITY_PER_S = 2000  # taps per second implied by the interval size


@dataclass(frozen=True)
class ModelConfig:
    """Every architecture dimension; the defaults are the full-scale model.

    desk() returns a proportionally scaled-down variant so the whole test
    suite can train models in seconds.
    """

    frame_size: int = 4096
    hop: int = 2048
    context_k: int = 4
    n_bands: int = 32
    kernel1: int = 64
    kernel2: int = 128
    pool: int = 64
    bilstm_shared: tuple = (64, 32)
    bilstm_branch: int = 16
    saaf_intervals: int = 25
    sfir_units: int = 1024
    ts: int = 8
    dnn_saaf: tuple = (32, 16, 16, 32)
    se_lstm: tuple = (32, 512, 32)
    dropout: float = 0.1
    sample_rate: int = 16000
    precision: str = "float32"
    lipschitz: float = 1.0
    lipschitz_weight: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "bilstm_shared", tuple(self.bilstm_shared))
        object.__setattr__(self, "dnn_saaf", tuple(self.dnn_saaf))
        object.__setattr__(self, "se_lstm", tuple(self.se_lstm))
        self.validate()

    def validate(self) -> None:
        c = self
        checks = [
            (c.frame_size == 2 * c.hop, "frame_size must equal 2*hop"),
            (c.frame_size % c.pool == 0, "frame_size must be divisible by pool"),
            (c.sample_rate == FIR_DENSITY_PER_S * c.ts,
             f"sample_rate/ts must equal {FIR_DENSITY_PER_S}"),
            (2 * c.bilstm_branch == c.n_bands,
             "branch Bi-LSTM output (2*width) must equal n_bands"),
            (len(c.dnn_saaf) == 4 and c.dnn_saaf[0] == c.dnn_saaf[-1] == c.n_bands,
             "waveshaper widths must start and end at n_bands"),
            (len(c.se_lstm) == 3 and c.se_lstm[-1] == c.n_bands,
             "gain block must emit n_bands gains"),
            (len(c.bilstm_shared) >= 1, "need at least one shared Bi-LSTM layer"),
            (c.kernel1 >= 1 and c.kernel2 >= 1, "kernel sizes must be positive"),
            (c.sfir_units >= 1, "sfir_units must be positive"),
            (c.saaf_intervals >= 1, "saaf_intervals must be positive"),
            (c.context_k >= 0, "context_k must be non-negative"),
            (0.0 <= c.dropout < 1.0, "dropout must lie in [0, 1)"),
            (c.precision in ("float32", "float64"), "precision must be float32 or float64"),
            (c.lipschitz > 0.0, "lipschitz bound must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def n_frames(self) -> int:
        return 2 * self.context_k + 1

    @property
    def pooled_steps(self) -> int:
        return self.frame_size // self.pool

    @property
    def fir_length(self) -> int:
        return self.sfir_units * self.ts

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Small configuration for fast tests and examples."""
        values = dict(
            frame_size=512,
            hop=256,
            context_k=4,
            n_bands=8,
            kernel1=16,
            kernel2=32,
            pool=8,
            bilstm_shared=(16, 8),
            bilstm_branch=4,
            saaf_intervals=25,
            sfir_units=128,
            ts=8,
            dnn_saaf=(8, 4, 4, 8),
            se_lstm=(8, 64, 8),
            dropout=0.1,
            sample_rate=16000,
        )
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, mapping: dict) -> "ModelConfig":
        return cls(**mapping)


@dataclass(frozen=True)
class TrainSettings:
    """Optimization schedule: one optimizer step per clip, early stopping per
    phase, one 25% learning-rate reduction for the fine-tune phase."""

    initial_lr: float = 1e-4
    patience: int = 25
    finetune_lr_factor: float = 0.75
    max_epochs_pretrain: int = 1000
    max_epochs_main: int = 1000
    max_epochs_finetune: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if not 0.0 < self.finetune_lr_factor <= 1.0:
            raise ConfigError("finetune_lr_factor must lie in (0, 1]")


_MODEL_KEYS = {f.name: f for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name: f for f in fields(TrainSettings)}
_TUPLE_KEYS = {"bilstm_shared", "dnn_saaf", "se_lstm"}


def parse_config_file(path) -> tuple:
    """Read a flat `key = value` file into (ModelConfig, TrainSettings).

    Tuple-valued keys use comma-separated integers; '#' starts a comment.
    Unknown keys raise ConfigError. Both objects use their defaults for
    keys the file omits.
    """
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _MODEL_KEYS:
                model_kwargs[key] = _parse_value(key, value, path, lineno)
            elif key in _TRAIN_KEYS:
                train_kwargs[key] = _parse_value(key, value, path, lineno)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    model = ModelConfig(**model_kwargs)
    train = TrainSettings(**train_kwargs)
    train.validate()
    return model, train


def _parse_value(key: str, value: str, path, lineno: int):
    try:
        if key in _TUPLE_KEYS:
            return tuple(int(v.strip()) for v in value.split(","))
        if key == "precision":
            return value
        if key in ("dropout", "lipschitz", "lipschitz_weight", "initial_lr", "finetune_lr_factor"):
            return float(value)
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
