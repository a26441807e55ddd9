"""Complex U-net denoiser: strided complex encoder, transposed-conv decoder
with skip concatenation, and a bounded polar mask head (the DCUnet family of
Choi et al., sized here by a JSON architecture config).

Each encoder stage is complex conv -> complex batch norm -> leaky CReLU. The
decoder mirrors the encoder in reverse with transposed convs; stage i
receives the previous decoder output concatenated channel-wise with the
matching encoder activation (the first decoder stage takes the bottleneck
alone), and the final stage emits one complex channel with no norm or
activation. Per-call output padding restores each encoder stage's exact
input dims, so any input length the stride chain supports round-trips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from .audio_io import Waveform
from .cxnn import (
    ComplexBatchNorm,
    ComplexConvLayer,
    ComplexTensor,
    complex_batch_norm,
    complex_conv2d,
    complex_conv_transpose2d,
    lecrelu,
)
from .spectral import StftConfig, istft_tensor, stft_tensor

MASK_PHASE_EPS = 1e-12


def _conv_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


@dataclass(frozen=True)
class ArchitectureSpec:
    """Encoder layer list; the decoder is implied as its reverse mirror."""

    channels: tuple
    kernels: tuple
    strides: tuple
    freq_rows: int
    leaky_slope: float = 0.01
    name: str = "custom"

    def __post_init__(self):
        n = len(self.channels)
        if n < 1 or len(self.kernels) != n or len(self.strides) != n:
            raise ValueError("channels, kernels, strides must be equally sized")
        for ch, (kh, kw), (sh, sw) in zip(self.channels, self.kernels, self.strides):
            if ch < 1 or kh < 1 or kw < 1 or sh < 1 or sw < 1:
                raise ValueError("channel, kernel, and stride entries must be >= 1")
        if self.freq_rows < 1:
            raise ValueError("freq_rows must be positive")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in [0, 1)")
        # frequency axis is known at build time; the whole chain must survive
        f = self.freq_rows
        for i in range(n):
            f = _conv_out(f, self.kernels[i][0], self.strides[i][0], self.padding(i)[0])
            if f < 1:
                raise ValueError(
                    f"freq_rows {self.freq_rows} collapses at encoder stage {i}"
                )

    def padding(self, i: int) -> tuple:
        kh, kw = self.kernels[i]
        return ((kh - 1) // 2, (kw - 1) // 2)

    @property
    def n_layers(self) -> int:
        return len(self.channels)

    def min_time_steps(self) -> int:
        """Smallest T the time-axis stride chain survives."""
        t = 1
        while True:
            ok = True
            cur = t
            for i in range(self.n_layers):
                cur = _conv_out(cur, self.kernels[i][1], self.strides[i][1], self.padding(i)[1])
                if cur < 1:
                    ok = False
                    break
            if ok:
                return t
            t += 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "freq_rows": self.freq_rows,
            "leaky_slope": self.leaky_slope,
            "layers": [
                {"out_channels": c, "kernel": list(k), "stride": list(s)}
                for c, k, s in zip(self.channels, self.kernels, self.strides)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        layers = d["layers"]
        return cls(
            channels=tuple(int(l["out_channels"]) for l in layers),
            kernels=tuple((int(l["kernel"][0]), int(l["kernel"][1])) for l in layers),
            strides=tuple((int(l["stride"][0]), int(l["stride"][1])) for l in layers),
            freq_rows=int(d["freq_rows"]),
            leaky_slope=float(d.get("leaky_slope", 0.01)),
            name=str(d.get("name", "custom")),
        )

    @classmethod
    def from_json_file(cls, path) -> "ArchitectureSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def load_preset(cls, name: str) -> "ArchitectureSpec":
        ref = resources.files("n2ndenoise").joinpath(f"configs/{name}.json")
        try:
            text = ref.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ValueError(f"unknown architecture preset {name!r}") from None
        return cls.from_dict(json.loads(text))


class DCUnet:
    """The assembled model. Parameters live in plain named tensor dicts so
    the optimizer and the checkpoint container stay framework-free."""

    def __init__(self, arch: ArchitectureSpec, dtype=torch.float32, seed: int = 0):
        self.arch = arch
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0)))
        n = arch.n_layers

        self.encoder = []
        c_in = 1
        for i in range(n):
            conv = ComplexConvLayer.new(
                c_in, arch.channels[i], arch.kernels[i], arch.strides[i],
                arch.padding(i), rng, dtype,
            )
            bn = ComplexBatchNorm.new(arch.channels[i], dtype)
            self.encoder.append((conv, bn))
            c_in = arch.channels[i]

        self.decoder = []
        prev_out = None
        for i in range(n):
            j = n - 1 - i  # mirrored encoder stage
            dec_in = arch.channels[n - 1] if i == 0 else prev_out + arch.channels[j]
            dec_out = 1 if j == 0 else arch.channels[j - 1]
            tconv = ComplexConvLayer.new(
                dec_in, dec_out, arch.kernels[j], arch.strides[j],
                arch.padding(j), rng, dtype,
            )
            bn = ComplexBatchNorm.new(dec_out, dtype) if i < n - 1 else None
            self.decoder.append((tconv, bn))
            prev_out = dec_out

    def named_parameters(self) -> dict:
        out = {}
        for i, (conv, bn) in enumerate(self.encoder):
            for k, v in conv.parameters().items():
                out[f"enc{i}.conv.{k}"] = v
            for k, v in bn.parameters().items():
                out[f"enc{i}.bn.{k}"] = v
        for i, (tconv, bn) in enumerate(self.decoder):
            for k, v in tconv.parameters().items():
                out[f"dec{i}.tconv.{k}"] = v
            if bn is not None:
                for k, v in bn.parameters().items():
                    out[f"dec{i}.bn.{k}"] = v
        return out

    def named_buffers(self) -> dict:
        out = {}
        for i, (_, bn) in enumerate(self.encoder):
            for k, v in bn.buffers().items():
                out[f"enc{i}.bn.{k}"] = v
        for i, (_, bn) in enumerate(self.decoder):
            if bn is not None:
                for k, v in bn.buffers().items():
                    out[f"dec{i}.bn.{k}"] = v
        return out

    def export_tensors(self) -> dict:
        tensors = {n: t.detach().numpy().copy() for n, t in self.named_parameters().items()}
        tensors.update({n: t.numpy().copy() for n, t in self.named_buffers().items()})
        return tensors

    def load_tensors(self, tensors: dict) -> None:
        named = {**self.named_parameters(), **self.named_buffers()}
        missing = sorted(set(named) - set(tensors))
        if missing:
            raise ValueError(f"checkpoint is missing tensors: {missing[:4]}...")
        with torch.no_grad():
            for name, tensor in named.items():
                arr = tensors[name]
                if tuple(arr.shape) != tuple(tensor.shape):
                    raise ValueError(
                        f"{name}: shape {arr.shape} does not match {tuple(tensor.shape)}"
                    )
                tensor.copy_(torch.from_numpy(np.ascontiguousarray(arr)).to(tensor.dtype))

    def forward(self, x: ComplexTensor, training: bool = False) -> ComplexTensor:
        arch = self.arch
        n = arch.n_layers
        if x.real.ndim != 4 or x.real.shape[1] != 1:
            raise ValueError("expected input of shape [B, 1, F, T]")
        if x.real.shape[2] != arch.freq_rows:
            raise ValueError(
                f"input has {x.real.shape[2]} frequency rows, "
                f"model was built for {arch.freq_rows}"
            )

        entry_dims = []
        skips = []
        h = x
        for i, (conv, bn) in enumerate(self.encoder):
            fh, fw = h.real.shape[-2:]
            kw, sw, pw = arch.kernels[i][1], arch.strides[i][1], arch.padding(i)[1]
            if _conv_out(fw, kw, sw, pw) < 1:
                raise ValueError(
                    f"time axis too short at encoder stage {i} "
                    f"(need at least {arch.min_time_steps()} input steps)"
                )
            entry_dims.append((fh, fw))
            h = complex_conv2d(h, conv)
            h = complex_batch_norm(h, bn, training)
            h = lecrelu(h, arch.leaky_slope)
            skips.append(h)

        for i, (tconv, bn) in enumerate(self.decoder):
            j = n - 1 - i
            if i == 0:
                inp = skips[n - 1]
            else:
                skip = skips[j]
                inp = ComplexTensor(
                    torch.cat([h.real, skip.real], dim=1),
                    torch.cat([h.imag, skip.imag], dim=1),
                )
            (kh, kw), (sh, sw) = arch.kernels[j], arch.strides[j]
            ph, pw = arch.padding(j)
            ih, iw = inp.real.shape[-2:]
            th, tw = entry_dims[j]
            op = (
                th - ((ih - 1) * sh - 2 * ph + kh),
                tw - ((iw - 1) * sw - 2 * pw + kw),
            )
            h = complex_conv_transpose2d(inp, tconv, op)
            if bn is not None:
                h = complex_batch_norm(h, bn, training)
                h = lecrelu(h, arch.leaky_slope)
        return h


def estimate_mask(o: ComplexTensor) -> ComplexTensor:
    """Polar bounded mask: magnitude tanh(|O|), phase O/|O|, zero at O = 0."""
    mag = torch.sqrt(o.real * o.real + o.imag * o.imag + 1e-24)
    scale = torch.tanh(mag) / (mag + MASK_PHASE_EPS)
    return ComplexTensor(o.real * scale, o.imag * scale)


def apply_mask(mask: ComplexTensor, x: ComplexTensor) -> ComplexTensor:
    """Elementwise complex product: magnitudes multiply, phases add."""
    if mask.real.shape != x.real.shape:
        raise ValueError("mask and spectrogram shapes differ")
    return ComplexTensor(
        mask.real * x.real - mask.imag * x.imag,
        mask.real * x.imag + mask.imag * x.real,
    )


def denoise(w: Waveform, model: DCUnet, stft_cfg: StftConfig) -> Waveform:
    """stft -> forward -> mask -> apply -> istft, preserving length."""
    if stft_cfg.freq_rows != model.arch.freq_rows:
        raise ValueError(
            f"transform yields {stft_cfg.freq_rows} rows, model wants "
            f"{model.arch.freq_rows}"
        )
    x = torch.from_numpy(np.ascontiguousarray(w.samples)).to(model.dtype)
    with torch.no_grad():
        re, im = stft_tensor(x.unsqueeze(0), stft_cfg)
        spec = ComplexTensor(re.unsqueeze(1), im.unsqueeze(1))
        logits = model.forward(spec, training=False)
        masked = apply_mask(estimate_mask(logits), spec)
        out = istft_tensor(
            masked.real.squeeze(1), masked.imag.squeeze(1), stft_cfg, len(w)
        )
    return Waveform(out.squeeze(0).to(torch.float64).numpy(), w.sample_rate)
