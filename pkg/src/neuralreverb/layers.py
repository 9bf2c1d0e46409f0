"""Network layers: learned filter-bank analysis/synthesis, pooling with
recorded indices, LSTM/Bi-LSTM recurrences, smooth adaptive (piecewise
quadratic) activations, the sparse-FIR filter layer with its
straight-through slot quantizer, squeeze-excitation gain blocks and the
time-distributed waveshaper.

All ops take a leading batch dimension and build on the autodiff graph;
fused ops define exact vector-Jacobian products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, StateError


# --- initializers -----------------------------------------------------------


def glorot_uniform(rng, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal(rng, n: int, dtype) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.sign(np.diag(r))).astype(dtype)


# --- filter bank (analysis / tied synthesis) ---------------------------------


@dataclass
class ConvBank:
    """Front-end filter bank; `kernels` storage is shared with synthesis."""

    kernels: Tensor        # [C, K1], no bias (kept linear for the adjoint)
    local_kernels: Tensor  # [C, K2], one filter per band
    local_bias: Tensor     # [C]

    @property
    def n_bands(self) -> int:
        return self.kernels.shape[0]


def init_conv_bank(rng, n_bands: int, kernel1: int, kernel2: int, dtype) -> ConvBank:
    return ConvBank(
        kernels=Tensor(glorot_uniform(rng, (n_bands, kernel1), kernel1, n_bands, dtype), requires_grad=True),
        local_kernels=Tensor(glorot_uniform(rng, (n_bands, kernel2), kernel2, 1, dtype), requires_grad=True),
        local_bias=Tensor(np.zeros(n_bands, dtype=dtype), requires_grad=True),
    )


def _fold_windows(gwin: np.ndarray, padded_len: int) -> np.ndarray:
    """Adjoint of sliding_window_view: scatter-add window grads back."""
    *lead, t, k = gwin.shape
    out = np.zeros((*lead, padded_len), dtype=gwin.dtype)
    for j in range(k):
        out[..., j : j + t] += gwin[..., :, j]
    return out


def _sum_except(x: np.ndarray, keep_axis: int) -> tuple:
    return tuple(i for i in range(x.ndim) if i != keep_axis % x.ndim)


def bank_analyze(x, kernels, pad_left: int) -> Tensor:
    """Same-length correlation of each signal with every bank kernel.

    x: [..., T] -> [..., C, T] with y[...,c,n] = sum_k w[c,k] x[n+k-pad_left]
    (zero padded).
    """
    x, w = ad.as_tensor(x), ad.as_tensor(kernels)
    k = w.shape[1]
    t = x.shape[-1]
    pad = ((0, 0),) * (x.ndim - 1) + ((pad_left, k - 1 - pad_left),)
    xp = np.pad(x.data, pad)
    win = sliding_window_view(xp, k, axis=-1)  # [..., T, K]
    out = np.einsum("...tk,ck->...ct", win, w.data)

    def back(g):
        if w.requires_grad:
            lead = list(range(g.ndim - 2))
            gw = np.tensordot(g, win, axes=(lead + [g.ndim - 1], lead + [win.ndim - 2]))
            ad._accumulate(w, gw)
        if x.requires_grad:
            gwin = np.einsum("...ct,ck->...tk", g, w.data)
            gxp = _fold_windows(gwin, xp.shape[-1])
            ad._accumulate(x, gxp[..., pad_left : pad_left + t])

    return ad._node(out, (x, w), back, "bank_analyze")


def bank_synthesize(y, kernels, pad_left: int) -> Tensor:
    """Exact adjoint of bank_analyze: [..., C, T] -> [..., T].

    The kernels are used as constants here (the synthesis layer is tied to
    the analysis kernels and is itself untrainable), but gradients still
    flow through to the inputs.
    """
    y, w = ad.as_tensor(y), ad.as_tensor(kernels)
    k = w.shape[1]
    t = y.shape[-1]
    contrib = np.einsum("...ct,ck->...tk", y.data, w.data)
    sp = _fold_windows(contrib, t + k - 1)
    out = sp[..., pad_left : pad_left + t]

    def back(g):
        if y.requires_grad:
            pad = ((0, 0),) * (g.ndim - 1) + ((pad_left, k - 1 - pad_left),)
            gp = np.pad(g, pad)
            gwin = sliding_window_view(gp, k, axis=-1)
            ad._accumulate(y, np.einsum("...tk,ck->...ct", gwin, w.data))

    return ad._node(out, (y,), back, "bank_synthesize")


def channel_conv(x, kernels, pad_left: int) -> Tensor:
    """Locally connected same-length correlation: band c only sees row c.

    x: [..., C, T], kernels: [C, K] -> [..., C, T].
    """
    x, w = ad.as_tensor(x), ad.as_tensor(kernels)
    k = w.shape[1]
    t = x.shape[-1]
    pad = ((0, 0),) * (x.ndim - 1) + ((pad_left, k - 1 - pad_left),)
    xp = np.pad(x.data, pad)
    win = sliding_window_view(xp, k, axis=-1)  # [..., C, T, K]
    out = np.einsum("...ctk,ck->...ct", win, w.data)

    def back(g):
        if w.requires_grad:
            gw = np.empty_like(w.data)
            axes = _sum_except(g, g.ndim - 2)
            for j in range(k):  # loop keeps the strided window view uncopied
                gw[:, j] = (g * win[..., j]).sum(axis=axes)
            ad._accumulate(w, gw)
        if x.requires_grad:
            gwin = np.einsum("...ct,ck->...ctk", g, w.data)
            gxp = _fold_windows(gwin, xp.shape[-1])
            ad._accumulate(x, gxp[..., pad_left : pad_left + t])

    return ad._node(out, (x, w), back, "channel_conv")


def causal_fir(x, h) -> Tensor:
    """Causal convolution of each band with its FIR filter, truncated to T.

    x: [..., C, T], h: [..., C, M] (leading dims broadcast against x);
    y[..., n] = sum_k h[k] x[n-k]. Computed by FFT; gradients are the
    exact adjoints.
    """
    x, h = ad.as_tensor(x), ad.as_tensor(h)
    t = x.shape[-1]
    m = h.shape[-1]
    length = 1 << int(np.ceil(np.log2(t + m - 1)))
    xf = np.fft.rfft(x.data, length)
    hf = np.fft.rfft(h.data, length)
    out = np.fft.irfft(xf * hf, length)[..., :t].astype(x.dtype, copy=False)

    def back(g):
        gf = np.fft.rfft(g, length)
        if x.requires_grad:
            gx = np.fft.irfft(gf * np.conj(hf), length)[..., :t]
            ad._accumulate(x, ad._unbroadcast(gx.astype(x.dtype, copy=False), x.shape))
        if h.requires_grad:
            gh = np.fft.irfft(gf * np.conj(xf), length)[..., :m]
            ad._accumulate(h, ad._unbroadcast(gh.astype(h.dtype, copy=False), h.shape))

    return ad._node(out, (x, h), back, "causal_fir")


# --- pooling ------------------------------------------------------------------


def maxpool_with_indices(x, window: int):
    """Non-overlapping max pooling along the last axis.

    Returns ([..., T/window], absolute argmax positions). Ties break to the
    lowest index; gradient is routed to the argmax only.
    """
    x = ad.as_tensor(x)
    t = x.shape[-1]
    if t % window != 0:
        raise ShapeError(f"time axis {t} not divisible by pool window {window}")
    s = t // window
    xr = ad.reshape(x, x.shape[:-1] + (s, window))
    pooled, idx = ad.reduce_max(xr, axis=-1)
    return pooled, idx + np.arange(s) * window


def unpool(pooled, indices: np.ndarray, t: int) -> Tensor:
    """Scatter pooled values back to their recorded positions, zero elsewhere."""
    pooled = ad.as_tensor(pooled)
    if indices.shape != pooled.shape:
        raise ShapeError("indices shape must match pooled shape")
    if indices.min() < 0 or indices.max() >= t:
        raise StateError("unpool index out of range")
    out = np.zeros(pooled.shape[:-1] + (t,), dtype=pooled.dtype)
    np.put_along_axis(out, indices, pooled.data, axis=-1)

    def back(g):
        ad._accumulate(pooled, np.take_along_axis(g, indices, axis=-1))

    return ad._node(out, (pooled,), back, "unpool")


# --- envelope upsampling --------------------------------------------------------


_UPSAMPLE_CACHE: dict = {}


def _upsample_matrix(s: int, factor: int, dtype) -> np.ndarray:
    key = (s, factor, np.dtype(dtype).str)
    mat = _UPSAMPLE_CACHE.get(key)
    if mat is None:
        t = s * factor
        mat = np.zeros((s, t), dtype=dtype)
        for p in range(t):
            k = p // factor
            if k >= s - 1:
                mat[s - 1, p] = 1.0
            else:
                frac = (p - k * factor) / factor
                mat[k, p] = 1.0 - frac
                mat[k + 1, p] = frac
        _UPSAMPLE_CACHE[key] = mat
    return mat


def linear_upsample(x, factor: int) -> Tensor:
    """Linear interpolation along the last axis with knots every `factor`
    samples; the tail past the last knot holds the final value."""
    x = ad.as_tensor(x)
    mat = _upsample_matrix(x.shape[-1], factor, x.dtype)
    return ad.matmul(x, Tensor(mat))


# --- smooth adaptive activation ---------------------------------------------------


@dataclass
class SaafParams:
    """C1 piecewise-quadratic map per channel over fixed breakpoints in [-1, 1].

    Parameterized by value and slope at the left edge plus one curvature
    per interval (integrated twice), so continuity of f and f' holds by
    construction. Outside [-1, 1] the boundary segments extend linearly.
    """

    left_value: Tensor  # [C], f(-1)
    left_slope: Tensor  # [C], f'(-1)
    curvature: Tensor   # [C, J], f'' on each interval

    @property
    def intervals(self) -> int:
        return self.curvature.shape[1]


def init_saaf(n_channels: int, intervals: int, dtype) -> SaafParams:
    """Identity initialization: f(x) = x."""
    return SaafParams(
        left_value=Tensor(np.full(n_channels, -1.0, dtype=dtype), requires_grad=True),
        left_slope=Tensor(np.ones(n_channels, dtype=dtype), requires_grad=True),
        curvature=Tensor(np.zeros((n_channels, intervals), dtype=dtype), requires_grad=True),
    )


def saaf_apply(x, p: SaafParams) -> Tensor:
    """Apply the per-channel adaptive activation; channels on the last axis."""
    x, v0, s0, curv = ad.as_tensor(x), p.left_value, p.left_slope, p.curvature
    j = curv.shape[1]
    width = 2.0 / j
    starts = (-1.0 + width * np.arange(j)).astype(x.dtype)

    diff = x.data[..., None] - starts          # [..., C, J]
    ramp = np.clip(diff, 0.0, width)           # phi'_j(x)
    basis = 0.5 * ramp * ramp + width * np.maximum(diff - width, 0.0)  # phi_j(x)
    out = (
        v0.data
        + s0.data * (x.data + 1.0)
        + np.einsum("...cj,cj->...c", basis, curv.data)
    ).astype(x.dtype, copy=False)

    def back(g):
        if x.requires_grad:
            slope = s0.data + np.einsum("...cj,cj->...c", ramp, curv.data)
            ad._accumulate(x, g * slope)
        lead = tuple(range(g.ndim - 1))
        if v0.requires_grad:
            ad._accumulate(v0, g.sum(axis=lead))
        if s0.requires_grad:
            ad._accumulate(s0, (g * (x.data + 1.0)).sum(axis=lead))
        if curv.requires_grad:
            gcurv = np.empty_like(curv.data)
            for i in range(j):
                gcurv[:, i] = (g * basis[..., i]).sum(axis=lead)
            ad._accumulate(curv, gcurv)

    return ad._node(out, (x, v0, s0, curv), back, "saaf")


def saaf_breakpoint_slopes(p: SaafParams) -> Tensor:
    """f' at every breakpoint (the extremes of the realized slope): [C, J+1]."""
    j = p.intervals
    width = 2.0 / j
    prefix = np.zeros((j, j + 1), dtype=p.curvature.dtype)
    for i in range(j):
        prefix[i, i + 1 :] = width
    extra = ad.matmul(p.curvature, Tensor(prefix))
    return ad.add(extra, ad.reshape(p.left_slope, (-1, 1)))


def saaf_lipschitz_penalty(p: SaafParams, lipschitz: float = 1.0) -> Tensor:
    """Squared hinge on |slope| extremes above the Lipschitz bound.

    Zero exactly when the realized function (including the linear
    extensions) is `lipschitz`-Lipschitz.
    """
    if lipschitz <= 0:
        raise ValueError("lipschitz bound must be positive")
    excess = ad.relu(ad.absolute(saaf_breakpoint_slopes(p)) - lipschitz)
    return ad.tsum(ad.square(excess))


# --- sparse FIR layer -------------------------------------------------------------


def quantize_slots(u, ts: int) -> Tensor:
    """floor(u*ts) clamped to ts-1, with an identity straight-through backward:
    the upstream gradient reaches u unchanged (no ts scaling)."""
    u = ad.as_tensor(u)
    out = np.clip(np.floor(u.data * ts), 0, ts - 1).astype(u.dtype)

    def back(g):
        ad._accumulate(u, g)

    return ad._node(out, (u,), back, "quantize_slots")


def sparse_place(values, slots, ts: int) -> Tensor:
    """Expand (value, slot) pairs to dense filters: one tap per ts-sample
    interval at position i*ts + slot[i].

    values, slots: [..., U] -> [..., U*ts]. Gradients: taps gather back to
    values; slots receive a neighbor-difference surrogate (the sensitivity
    of the loss to shifting each tap by one sample) so the position path
    keeps training through the quantizer.
    """
    values, slots = ad.as_tensor(values), ad.as_tensor(slots)
    u = values.shape[-1]
    islots = slots.data.astype(np.int64)
    pos = np.arange(u) * ts + islots
    out = np.zeros(values.shape[:-1] + (u * ts,), dtype=values.dtype)
    np.put_along_axis(out, pos, values.data, axis=-1)

    def back(g):
        if values.requires_grad:
            ad._accumulate(values, np.take_along_axis(g, pos, axis=-1))
        if slots.requires_grad and ts > 1:
            at_edge = islots == ts - 1
            hi = np.where(at_edge, pos, pos + 1)
            lo = np.where(at_edge, pos - 1, pos)
            gs = values.data * (
                np.take_along_axis(g, hi, axis=-1) - np.take_along_axis(g, lo, axis=-1)
            )
            ad._accumulate(slots, gs)

    return ad._node(out, (values, slots), back, "sparse_place")


# --- dense / LSTM ---------------------------------------------------------------


@dataclass
class Dense:
    w: Tensor  # [in, out]
    b: Tensor  # [out]

    def __call__(self, x) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


def init_dense(rng, n_in: int, n_out: int, dtype) -> Dense:
    return Dense(
        w=Tensor(glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype), requires_grad=True),
        b=Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True),
    )


@dataclass
class LstmParams:
    """Gate order i, f, g, o stacked on the output axis; forget bias starts at 1."""

    w: Tensor  # [F, 4H]
    u: Tensor  # [H, 4H]
    b: Tensor  # [4H]

    @property
    def hidden(self) -> int:
        return self.u.shape[0]


def init_lstm(rng, n_in: int, hidden: int, dtype) -> LstmParams:
    w = glorot_uniform(rng, (n_in, 4 * hidden), n_in, 4 * hidden, dtype)
    u = np.concatenate([orthogonal(rng, hidden, dtype) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = 1.0
    return LstmParams(Tensor(w, requires_grad=True), Tensor(u, requires_grad=True), Tensor(b, requires_grad=True))


def dropout_mask(rng, shape, rate: float, dtype) -> Tensor:
    """Inverted-dropout mask, constant for the whole sequence."""
    keep = (rng.random(shape) >= rate).astype(dtype) / (1.0 - rate)
    return Tensor(keep)


def lstm_run(
    x,
    p: LstmParams,
    reverse: bool = False,
    training: bool = False,
    dropout: float = 0.0,
    rng=None,
) -> Tensor:
    """Run an LSTM over x: [B, S, F] -> [B, S, H] (output aligned with input
    order even when scanning in reverse).

    In training mode, input and recurrent dropout use one mask per
    sequence, applied identically at every step. The whole scan is one
    fused graph node with a hand-rolled backward-through-time pass.
    """
    x, w, u, b = ad.as_tensor(x), p.w, p.u, p.b
    batch, steps, n_in = x.shape
    hd = p.hidden
    dtype = x.dtype

    if training and dropout > 0.0:
        in_mask = (rng.random((batch, 1, n_in)) >= dropout).astype(dtype) / (1.0 - dropout)
        rec_mask = (rng.random((batch, hd)) >= dropout).astype(dtype) / (1.0 - dropout)
    else:
        in_mask = rec_mask = None

    xm = x.data * in_mask if in_mask is not None else x.data
    xw = xm.reshape(batch * steps, n_in) @ w.data + b.data
    xw = xw.reshape(batch, steps, 4 * hd)

    order = range(steps - 1, -1, -1) if reverse else range(steps)
    h = np.zeros((batch, hd), dtype=dtype)
    c = np.zeros((batch, hd), dtype=dtype)
    outputs = np.zeros((batch, steps, hd), dtype=dtype)
    # saved activations for backprop through time
    gates_i = np.zeros((batch, steps, hd), dtype=dtype)
    gates_f = np.zeros_like(gates_i)
    gates_g = np.zeros_like(gates_i)
    gates_o = np.zeros_like(gates_i)
    c_prev = np.zeros_like(gates_i)
    c_tanh = np.zeros_like(gates_i)
    h_prev = np.zeros_like(gates_i)

    def logistic(a):
        return 0.5 * (1.0 + np.tanh(0.5 * a))

    for t in order:
        hr = h * rec_mask if rec_mask is not None else h
        a = xw[:, t] + hr @ u.data
        i = logistic(a[:, :hd])
        f = logistic(a[:, hd : 2 * hd])
        g = np.tanh(a[:, 2 * hd : 3 * hd])
        o = logistic(a[:, 3 * hd :])
        gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
        c_prev[:, t] = c
        h_prev[:, t] = hr
        c = f * c + i * g
        tc = np.tanh(c)
        c_tanh[:, t] = tc
        h = o * tc
        outputs[:, t] = h

    def back(gout):
        dxw = np.zeros_like(xw)
        du = np.zeros_like(u.data) if u.requires_grad else None
        dh_next = np.zeros((batch, hd), dtype=dtype)
        dc_next = np.zeros((batch, hd), dtype=dtype)
        for t in reversed(list(order)):
            i, f, g, o = gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t]
            tc = c_tanh[:, t]
            dh = gout[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev[:, t]
            dg = dc * i
            da = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dxw[:, t] = da
            dhr = da @ u.data.T
            dh_next = dhr * rec_mask if rec_mask is not None else dhr
            dc_next = dc * f
            if du is not None:
                du += h_prev[:, t].T @ da
        if du is not None:
            ad._accumulate(u, du)
        if b.requires_grad:
            ad._accumulate(b, dxw.sum(axis=(0, 1)))
        flat = dxw.reshape(batch * steps, 4 * hd)
        if w.requires_grad:
            ad._accumulate(w, xm.reshape(batch * steps, n_in).T @ flat)
        if x.requires_grad:
            dxm = (flat @ w.data.T).reshape(batch, steps, n_in)
            ad._accumulate(x, dxm * in_mask if in_mask is not None else dxm)

    return ad._node(outputs, (x, w, u, b), back, "lstm")


@dataclass
class BiLstm:
    fwd: LstmParams
    bwd: LstmParams

    def __call__(self, x, training=False, dropout=0.0, rng=None) -> Tensor:
        a = lstm_run(x, self.fwd, reverse=False, training=training, dropout=dropout, rng=rng)
        b = lstm_run(x, self.bwd, reverse=True, training=training, dropout=dropout, rng=rng)
        return ad.concat([a, b], axis=-1)


def init_bilstm(rng, n_in: int, hidden: int, dtype) -> BiLstm:
    return BiLstm(init_lstm(rng, n_in, hidden, dtype), init_lstm(rng, n_in, hidden, dtype))


# --- composite blocks ------------------------------------------------------------


@dataclass
class RecurrentStack:
    """Shared Bi-LSTM trunk feeding two adaptive-activation branches."""

    shared: list          # [BiLstm, ...]
    branch_env: BiLstm
    branch_fir: BiLstm
    saaf_env: SaafParams
    saaf_fir: SaafParams
    dropout: float


@dataclass
class SfirParams:
    """Shared per-band projections to tap values and interval slots."""

    value_fc: Dense
    position_fc: Dense
    ts: int


@dataclass
class DnnSaafParams:
    layers: list          # [Dense x 4]
    saaf: SaafParams


@dataclass
class SeLstmParams:
    lstm: LstmParams
    fc_mid: Dense
    fc_gate: Dense
    dropout: float


def frontend_forward(stacks, bank: ConvBank, pool: int):
    """Filter-bank analysis of a batch of frame stacks.

    stacks: [B, F, T] -> (pooled features [B, F, C, T/pool],
    band maps [B, F, C, T], center band map [B, C, T], pool indices).
    """
    x = ad.as_tensor(stacks)
    n_frames = x.shape[1]
    k1 = bank.kernels.shape[1]
    k2 = bank.local_kernels.shape[1]
    band_maps = bank_analyze(x, bank.kernels, (k1 - 1) // 2)           # [B, F, C, T]
    residual = band_maps[:, n_frames // 2]                             # [B, C, T]
    local = channel_conv(ad.absolute(band_maps), bank.local_kernels, (k2 - 1) // 2)
    local = ad.add(local, ad.reshape(bank.local_bias, (1, 1, -1, 1)))
    pooled, indices = maxpool_with_indices(ad.softplus(local), pool)
    return pooled, band_maps, residual, indices


def latent_forward(pooled, stack: RecurrentStack, center: int, training=False, rng=None):
    """Recurrent encoding of pooled features into envelope and filter codes.

    pooled: [B, F, C, S]. The sequence axis is every pooled step of every
    frame (F*S steps, C features); both branch outputs are sliced to the
    center frame's steps and returned as [B, C, S].
    """
    b, f, c, s = pooled.shape
    seq = ad.reshape(ad.transpose(pooled, (0, 1, 3, 2)), (b, f * s, c))
    for layer in stack.shared:
        seq = ad.tanh(layer(seq, training=training, dropout=stack.dropout, rng=rng))
    env = saaf_apply(stack.branch_env(seq, training=training, dropout=stack.dropout, rng=rng), stack.saaf_env)
    fir = saaf_apply(stack.branch_fir(seq, training=training, dropout=stack.dropout, rng=rng), stack.saaf_fir)
    lo, hi = center * s, (center + 1) * s
    env = ad.transpose(env[:, lo:hi, :], (0, 2, 1))
    fir = ad.transpose(fir[:, lo:hi, :], (0, 2, 1))
    return env, fir


def sfir_build(fir_code, p: SfirParams):
    """Map each band's code to tap values in [-1,1] and integer slots in [0, ts).

    fir_code: [B, C, S] -> (values [B, C, U], slots [B, C, U]). The slot
    quantizer backward is the identity straight-through estimator.
    """
    values = ad.tanh(p.value_fc(fir_code))
    fractions = ad.sigmoid(p.position_fc(fir_code))
    slots = quantize_slots(fractions, p.ts)
    return values, slots


def sfir_dense(values, slots, ts: int) -> Tensor:
    """Dense [..., U*ts] filters with exactly one tap per ts-sample interval."""
    return sparse_place(values, slots, ts)


def sfir_apply(band_maps, dense) -> Tensor:
    """Per-band causal filtering of the band decomposition, truncated to the
    frame length. dense broadcasts over a frame axis when present."""
    return causal_fir(band_maps, dense)


def envelope_upsample(env, factor: int) -> Tensor:
    """[B, C, S] -> [B, C, S*factor] by linear interpolation (knots held)."""
    return linear_upsample(env, factor)


def dnn_saaf(band_maps, p: DnnSaafParams) -> Tensor:
    """Time-distributed waveshaper across the band axis.

    band_maps: [..., C, T]; an FC chain (tanh between layers) followed by a
    per-channel adaptive activation, applied independently at every time
    step. Shape is preserved.
    """
    ndim = band_maps.ndim
    perm = tuple(range(ndim - 2)) + (ndim - 1, ndim - 2)
    h = ad.transpose(band_maps, perm)  # [..., T, C]
    n = len(p.layers)
    for i, layer in enumerate(p.layers):
        h = layer(h)
        if i < n - 1:
            h = ad.tanh(h)
    h = saaf_apply(h, p.saaf)
    return ad.transpose(h, perm)


def se_lstm_gain(feature_frames, p: SeLstmParams, center: int, training=False, rng=None) -> Tensor:
    """Per-channel gains in (0,1) from a sequence of per-frame feature maps.

    feature_frames: [B, F, C, T]. Per frame: abs -> mean over time gives a
    [C] descriptor; the descriptor sequence runs through the LSTM, and the
    center step (rectified) drives the two FC layers ending in a sigmoid.
    """
    desc = ad.mean(ad.absolute(feature_frames), axis=-1)  # [B, F, C]
    h = lstm_run(desc, p.lstm, training=training, dropout=p.dropout, rng=rng)
    hc = ad.relu(h[:, center])
    return ad.sigmoid(p.fc_gate(ad.relu(p.fc_mid(hc))))


def backend_mix(x_shaped, x_reverb, gain_shaped, gain_reverb) -> Tensor:
    """Channel-wise gained sum of the waveshaped and reverberant maps.

    x_*: [B, C, T]; gain_*: [B, C] broadcast along time.
    """
    if x_shaped.shape != x_reverb.shape:
        raise ShapeError("mix operands must share a shape")
    g2 = ad.reshape(gain_shaped, gain_shaped.shape + (1,))
    g3 = ad.reshape(gain_reverb, gain_reverb.shape + (1,))
    return ad.add(ad.mul(g2, x_shaped), ad.mul(g3, x_reverb))


def deconv(x0, bank: ConvBank) -> Tensor:
    """Synthesis back to a waveform: the adjoint of the analysis bank summed
    over bands. Uses the tied analysis kernels, which stay untrainable
    through this op."""
    k1 = bank.kernels.shape[1]
    return bank_synthesize(x0, bank.kernels, (k1 - 1) // 2)
