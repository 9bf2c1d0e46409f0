"""Model assembly: analysis front-end, recurrent latent encoding, sparse-FIR
synthesis back-end, plus whole-clip processing through windowed overlap-add.

Two forward modes: `forward` runs the full reverberation graph on a batch
of frame stacks; `reconstruct` runs the front-end autoencoder path
(analysis -> unpool at recorded positions -> tied synthesis) used to
initialize the filter bank.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import layers as ly
from .audio_io import AudioClip
from .autodiff import Tensor
from .config import ModelConfig
from .dsp import FrameStack, frame_signal, overlap_add, stack_all
from .errors import ConfigError

# Stream ids for deriving independent RNGs from one root seed.
STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_SHUFFLE = 2
STREAM_FIXTURE = 3


def derive_rng(root_seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=root_seed, spawn_key=(stream,)))


class ReverbModel:
    """All trainable state plus the forward compositions."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(config.precision)
        rng = derive_rng(seed, STREAM_INIT)
        c = config

        self.bank = ly.init_conv_bank(rng, c.n_bands, c.kernel1, c.kernel2, self.dtype)

        shared = []
        width_in = c.n_bands
        for hidden in c.bilstm_shared:
            shared.append(ly.init_bilstm(rng, width_in, hidden, self.dtype))
            width_in = 2 * hidden
        self.recurrent = ly.RecurrentStack(
            shared=shared,
            branch_env=ly.init_bilstm(rng, width_in, c.bilstm_branch, self.dtype),
            branch_fir=ly.init_bilstm(rng, width_in, c.bilstm_branch, self.dtype),
            saaf_env=ly.init_saaf(c.n_bands, c.saaf_intervals, self.dtype),
            saaf_fir=ly.init_saaf(c.n_bands, c.saaf_intervals, self.dtype),
            dropout=c.dropout,
        )

        self.sfir = ly.SfirParams(
            value_fc=ly.init_dense(rng, c.pooled_steps, c.sfir_units, self.dtype),
            position_fc=ly.init_dense(rng, c.pooled_steps, c.sfir_units, self.dtype),
            ts=c.ts,
        )

        w0, w1, w2, w3 = c.dnn_saaf
        self.waveshaper = ly.DnnSaafParams(
            layers=[
                ly.init_dense(rng, c.n_bands, w0, self.dtype),
                ly.init_dense(rng, w0, w1, self.dtype),
                ly.init_dense(rng, w1, w2, self.dtype),
                ly.init_dense(rng, w2, w3, self.dtype),
            ],
            saaf=ly.init_saaf(c.n_bands, c.saaf_intervals, self.dtype),
        )

        def init_gain_block():
            hidden, mid, out = c.se_lstm
            return ly.SeLstmParams(
                lstm=ly.init_lstm(rng, c.n_bands, hidden, self.dtype),
                fc_mid=ly.init_dense(rng, hidden, mid, self.dtype),
                fc_gate=ly.init_dense(rng, mid, out, self.dtype),
                dropout=c.dropout,
            )

        self.se_shaped = init_gain_block()
        self.se_reverb = init_gain_block()

    # -- parameter census -------------------------------------------------

    def parameters(self) -> dict:
        """Name -> Tensor for every trainable parameter.

        The synthesis layer is absent by design: it reuses
        frontend.kernels storage and is not trainable.
        """
        params = {
            "frontend.kernels": self.bank.kernels,
            "frontend.local_kernels": self.bank.local_kernels,
            "frontend.local_bias": self.bank.local_bias,
        }
        for i, bi in enumerate(self.recurrent.shared):
            params.update(_lstm_entries(f"latent.shared{i}", bi))
        params.update(_lstm_entries("latent.branch_env", self.recurrent.branch_env))
        params.update(_lstm_entries("latent.branch_fir", self.recurrent.branch_fir))
        params.update(_saaf_entries("latent.saaf_env", self.recurrent.saaf_env))
        params.update(_saaf_entries("latent.saaf_fir", self.recurrent.saaf_fir))
        params.update(_dense_entries("sfir.values", self.sfir.value_fc))
        params.update(_dense_entries("sfir.positions", self.sfir.position_fc))
        for i, layer in enumerate(self.waveshaper.layers):
            params.update(_dense_entries(f"shaper.fc{i}", layer))
        params.update(_saaf_entries("shaper.saaf", self.waveshaper.saaf))
        for name, block in (("se_shaped", self.se_shaped), ("se_reverb", self.se_reverb)):
            params[f"{name}.lstm.w"] = block.lstm.w
            params[f"{name}.lstm.u"] = block.lstm.u
            params[f"{name}.lstm.b"] = block.lstm.b
            params.update(_dense_entries(f"{name}.mid", block.fc_mid))
            params.update(_dense_entries(f"{name}.gate", block.fc_gate))
        return params

    def frontend_parameter_names(self) -> tuple:
        return ("frontend.kernels", "frontend.local_kernels", "frontend.local_bias")

    def load_state(self, state: dict) -> None:
        params = self.parameters()
        if set(state) != set(params):
            missing = set(params) - set(state)
            extra = set(state) - set(params)
            raise ConfigError(f"checkpoint incompatible: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, tensor in params.items():
            arr = np.asarray(state[name])
            if arr.shape != tensor.data.shape:
                raise ConfigError(f"parameter {name}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.astype(self.dtype)

    def state(self) -> dict:
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def saaf_penalty(self) -> Tensor:
        """Summed Lipschitz penalty of every adaptive activation."""
        c = self.config
        total = ly.saaf_lipschitz_penalty(self.recurrent.saaf_env, c.lipschitz)
        total = ad.add(total, ly.saaf_lipschitz_penalty(self.recurrent.saaf_fir, c.lipschitz))
        return ad.add(total, ly.saaf_lipschitz_penalty(self.waveshaper.saaf, c.lipschitz))

    # -- forward modes ------------------------------------------------------

    def forward(self, stacks, training: bool = False, rng=None) -> Tensor:
        """Full reverberation graph on [B, 2k+1, T] frame stacks -> [B, T].

        The center-frame filters and envelopes are applied to every context
        frame's band decomposition so the gain blocks see a feature-map
        sequence; the center maps are mixed and synthesized.
        """
        c = self.config
        x = ad.as_tensor(np.asarray(stacks, dtype=self.dtype) if not isinstance(stacks, Tensor) else stacks)
        batch, n_frames, t = x.shape
        if n_frames != c.n_frames or t != c.frame_size:
            raise ConfigError(f"stacks shaped {x.shape} do not match the configuration")
        if training and rng is None:
            rng = derive_rng(self.seed, STREAM_DROPOUT)

        pooled, band_maps, _, _ = ly.frontend_forward(x, self.bank, c.pool)
        env, fir_code = ly.latent_forward(pooled, self.recurrent, c.context_k, training, rng)

        values, slots = ly.sfir_build(fir_code, self.sfir)
        dense = ly.sfir_dense(values, slots, c.ts)                       # [B, C, M]
        dense_b = ad.reshape(dense, (batch, 1, c.n_bands, c.fir_length))
        reverb_all = ly.sfir_apply(band_maps, dense_b)                   # [B, F, C, T]

        env_up = ly.envelope_upsample(env, c.pool)                       # [B, C, T]
        env_b = ad.reshape(env_up, (batch, 1, c.n_bands, c.frame_size))
        enveloped_all = ad.mul(reverb_all, env_b)

        shaped_all = ly.dnn_saaf(band_maps, self.waveshaper)             # [B, F, C, T]

        g_shaped = ly.se_lstm_gain(shaped_all, self.se_shaped, c.context_k, training, rng)
        g_reverb = ly.se_lstm_gain(enveloped_all, self.se_reverb, c.context_k, training, rng)

        center = c.context_k
        mixed = ly.backend_mix(shaped_all[:, center], enveloped_all[:, center], g_shaped, g_reverb)
        return ly.deconv(mixed, self.bank)

    def reconstruct(self, frames) -> Tensor:
        """Front-end autoencoder on [B, T] frames: analysis, pooling, unpool
        at the recorded positions, tied synthesis. Only the filter bank
        parameters participate."""
        c = self.config
        x = ad.as_tensor(np.asarray(frames, dtype=self.dtype) if not isinstance(frames, Tensor) else frames)
        band_maps = ly.bank_analyze(x, self.bank.kernels, (c.kernel1 - 1) // 2)
        local = ly.channel_conv(ad.absolute(band_maps), self.bank.local_kernels, (c.kernel2 - 1) // 2)
        local = ad.add(local, ad.reshape(self.bank.local_bias, (1, -1, 1)))
        pooled, indices = ly.maxpool_with_indices(ad.softplus(local), c.pool)
        restored = ly.unpool(pooled, indices, c.frame_size)
        return ly.deconv(restored, self.bank)

    # -- spec-facing single-stack surfaces ------------------------------------

    def model_forward(self, stack: FrameStack, mode: str = "infer") -> np.ndarray:
        """One frame stack -> one output frame. mode 'train' enables dropout."""
        if mode not in ("train", "infer"):
            raise ValueError("mode must be 'train' or 'infer'")
        training = mode == "train"
        if training:
            out = self.forward(stack.frames[None], training=True)
            return out.data[0]
        with ad.no_grad():
            return self.forward(stack.frames[None], training=False).data[0]

    def pretrain_forward(self, stack: FrameStack) -> np.ndarray:
        with ad.no_grad():
            return self.reconstruct(stack.center[None]).data[0]

    def process_clip(self, clip: AudioClip, batch_size: int = 8) -> AudioClip:
        """Frame, run the model per stack, hann overlap-add, trim to length."""
        c = self.config
        if clip.sample_rate != c.sample_rate:
            raise ValueError(
                f"clip at {clip.sample_rate} Hz but the model expects {c.sample_rate} Hz"
            )
        frames = frame_signal(clip.samples, c.frame_size, c.hop)
        stacks = stack_all(frames, c.context_k)
        outputs = np.zeros_like(frames)
        with ad.no_grad():
            for lo in range(0, stacks.shape[0], batch_size):
                chunk = stacks[lo : lo + batch_size]
                outputs[lo : lo + chunk.shape[0]] = self.forward(chunk, training=False).data
        synthesized = overlap_add(outputs, c.hop)
        return AudioClip(synthesized[: len(clip)], c.sample_rate)


def _lstm_entries(prefix: str, bi: ly.BiLstm) -> dict:
    out = {}
    for direction, p in (("fwd", bi.fwd), ("bwd", bi.bwd)):
        out[f"{prefix}.{direction}.w"] = p.w
        out[f"{prefix}.{direction}.u"] = p.u
        out[f"{prefix}.{direction}.b"] = p.b
    return out


def _dense_entries(prefix: str, d: ly.Dense) -> dict:
    return {f"{prefix}.w": d.w, f"{prefix}.b": d.b}


def _saaf_entries(prefix: str, p: ly.SaafParams) -> dict:
    return {
        f"{prefix}.left_value": p.left_value,
        f"{prefix}.left_slope": p.left_slope,
        f"{prefix}.curvature": p.curvature,
    }
