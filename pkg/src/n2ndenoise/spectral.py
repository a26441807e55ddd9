"""STFT and inverse STFT with exact energy bookkeeping.

Analysis frames hop across a zero-padded copy of the signal so that every
input sample sits under a full set of overlapping squared windows. When hop
divides fft_size and fft_size/hop >= 3, the squared periodic-Hann overlap sum
is the exact constant C = sum(w^2)/hop, and two identities hold down to float
rounding:

    istft(stft(x)) == x                      (after slicing off the pad)
    sum_f c_f * (re^2 + im^2) == sum_t x^2   (c_f = 1 at DC and Nyquist,
                                              c_f = 2 at interior bins)

The forward transform scales each frame spectrum by 1/sqrt(fft_size * C); the
inverse multiplies frames by the synthesis window and divides the overlap-add
by the accumulated window power. spectrogram_energy() applies exactly the
c_f weighting above, which is what the energy identity is stated against.

The torch tensor entry points (stft_tensor / istft_tensor) are differentiable
and are what the training loop uses; stft()/istft() wrap them for Waveforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .audio_io import Waveform


def validate_stft_config(cfg: "StftConfig") -> None:
    if cfg.window != "hann":
        raise ValueError("only the periodic hann window is supported")
    if cfg.fft_size <= 0 or cfg.fft_size % 2:
        raise ValueError("fft_size must be a positive even integer")
    if not 1 <= cfg.hop <= cfg.fft_size:
        raise ValueError("hop must lie in [1, fft_size]")
    if cfg.fft_size % cfg.hop:
        raise ValueError("hop must divide fft_size (constant overlap-add)")
    if cfg.fft_size // cfg.hop < 3:
        raise ValueError(
            "fft_size/hop must be >= 3 so the squared-window overlap sum is constant"
        )


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 128
    window: str = "hann"
    center_pad: bool = True

    def __post_init__(self):
        validate_stft_config(self)

    @property
    def freq_rows(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class ComplexSpectrogram:
    """One-sided complex spectrogram, [F x T] with F = fft_size/2 + 1."""

    real: np.ndarray
    imag: np.ndarray
    fft_size: int
    hop: int
    sample_rate: int
    original_length: int
    center_pad: bool = True

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ValueError("real/imag shapes differ")
        if self.real.ndim != 2 or self.real.shape[0] != self.fft_size // 2 + 1:
            raise ValueError("expected [F x T] with F = fft_size/2 + 1")
        if not (np.isfinite(self.real).all() and np.isfinite(self.imag).all()):
            raise ValueError("spectrogram entries must be finite")

    @property
    def config(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop, "hann", self.center_pad)


def hop_from_ms(ms: float, rate: int) -> int:
    if ms <= 0:
        raise ValueError("hop length must be positive")
    return int(round(ms * rate / 1000.0))


def _hann_periodic(n: int, dtype, device=None) -> torch.Tensor:
    t = torch.arange(n, dtype=dtype, device=device)
    return 0.5 - 0.5 * torch.cos(2.0 * math.pi * t / n)


def _scale(window: torch.Tensor, fft_size: int, hop: int) -> float:
    cola = float((window * window).sum()) / hop
    return 1.0 / math.sqrt(fft_size * cola)


def stft_tensor(x: torch.Tensor, cfg: StftConfig):
    """Forward transform of real [..., L] into ([..., F, T], [..., F, T])."""
    n, hop = cfg.fft_size, cfg.hop
    length = x.shape[-1]
    if length < 1:
        raise ValueError("cannot transform an empty signal")
    w = _hann_periodic(n, x.dtype, x.device)
    scale = _scale(w, n, hop)

    if cfg.center_pad:
        left = n - hop
        frames = (left + length - 1) // hop + 1
        total = (frames - 1) * hop + n
        xp = F.pad(x, (left, total - left - length))
    else:
        if length < n:
            raise ValueError("signal shorter than fft_size with center_pad off")
        frames = (length - n) // hop + 1
        total = (frames - 1) * hop + n
        xp = x[..., :total]

    framed = xp.unfold(-1, n, hop) * w  # [..., T, N]
    spec = torch.fft.rfft(framed, dim=-1) * scale
    re = spec.real.transpose(-2, -1).contiguous()
    im = spec.imag.transpose(-2, -1).contiguous()
    return re, im


def istft_tensor(re: torch.Tensor, im: torch.Tensor, cfg: StftConfig, length: int):
    """Inverse of stft_tensor, truncated/padded back to the given length."""
    n, hop = cfg.fft_size, cfg.hop
    if re.shape != im.shape:
        raise ValueError("real/imag shapes differ")
    w = _hann_periodic(n, re.dtype, re.device)
    scale = _scale(w, n, hop)

    spec = torch.complex(re, im).transpose(-2, -1) / scale  # [..., T, F]
    framed = torch.fft.irfft(spec, n=n, dim=-1) * w  # [..., T, N]

    lead = framed.shape[:-2]
    t_frames = framed.shape[-2]
    total = (t_frames - 1) * hop + n
    cols = framed.reshape(-1, t_frames, n).transpose(1, 2)  # [B, N, T]
    acc = F.fold(cols, output_size=(1, total), kernel_size=(1, n), stride=(1, hop))
    wsq = (w * w).reshape(1, n, 1).expand(1, n, t_frames)
    den = F.fold(wsq, output_size=(1, total), kernel_size=(1, n), stride=(1, hop))
    # the periodic hann has w[0] == 0, so coverage can vanish inside the pad
    tiny = torch.finfo(re.dtype).tiny
    out = acc.reshape(-1, total) / den.reshape(1, total).clamp_min(tiny)

    start = (n - hop) if cfg.center_pad else 0
    out = out[:, start : start + length]
    if out.shape[-1] < length:
        out = F.pad(out, (0, length - out.shape[-1]))
    return out.reshape(*lead, length)


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    x = torch.from_numpy(np.ascontiguousarray(w.samples))
    re, im = stft_tensor(x, cfg)
    return ComplexSpectrogram(
        re.numpy(),
        im.numpy(),
        cfg.fft_size,
        cfg.hop,
        w.sample_rate,
        len(w),
        cfg.center_pad,
    )


def istft(s: ComplexSpectrogram) -> Waveform:
    re = torch.from_numpy(np.ascontiguousarray(s.real))
    im = torch.from_numpy(np.ascontiguousarray(s.imag))
    x = istft_tensor(re, im, s.config, s.original_length)
    return Waveform(x.numpy(), s.sample_rate)


def spectrogram_energy(s: ComplexSpectrogram) -> float:
    """Energy under the one-sided weighting: 1 at DC/Nyquist, 2 elsewhere."""
    weights = np.full(s.real.shape[0], 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    power = s.real * s.real + s.imag * s.imag
    return float(np.sum(weights[:, None] * power))


def signal_energy(w: Waveform) -> float:
    return float(np.sum(w.samples * w.samples))
