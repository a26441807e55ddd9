"""Mono WAV reading/writing and linear resampling.

The RIFF parsing is hand-rolled because the stdlib wave module rejects
IEEE float32 payloads, and both PCM16 and float32 must round-trip here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM16_SCALE = 32768  # 1.0 maps to 32768 before clamping to the int16 range

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


class FormatError(ValueError):
    """File is not a well-formed RIFF/WAVE container."""


class UnsupportedError(ValueError):
    """Well-formed WAV using an encoding or channel layout we do not handle."""


@dataclass
class Waveform:
    """A mono clip: float64 samples with nominal range [-1, 1] plus a rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be 1-D mono")
        if self.samples.size == 0:
            raise ValueError("waveform must contain at least one sample")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> Waveform:
    """Read a mono PCM16 or IEEE float32 WAV file.

    Raises FormatError for malformed containers and UnsupportedError for
    valid WAVs we do not decode (multi-channel, other codecs/bit depths).
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        # chunks are word-aligned; odd sizes carry one pad byte
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise FormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels != 1:
        raise UnsupportedError(f"{path}: {channels} channels, only mono is supported")
    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        if len(payload) % 2:
            raise FormatError(f"{path}: data chunk not a whole number of samples")
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / PCM16_SCALE
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        if len(payload) % 4:
            raise FormatError(f"{path}: data chunk not a whole number of samples")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedError(
            f"{path}: format {audio_format} at {bits} bits is not supported"
        )
    if samples.size == 0:
        raise FormatError(f"{path}: empty data chunk")
    if rate <= 0:
        raise FormatError(f"{path}: non-positive sample rate in header")
    return Waveform(samples, rate)


def write_wav(w: Waveform, path, encoding: str = "pcm16") -> None:
    """Write a Waveform as mono little-endian WAV.

    pcm16 clamps to [-1, 1 - 1/32768] and rounds to the nearest code;
    float32 stores the samples cast to float32, so values that are exactly
    representable in float32 round-trip bit-identically through read_wav.
    """
    if encoding == "pcm16":
        top = (PCM16_SCALE - 1) / PCM16_SCALE
        clamped = np.clip(w.samples, -1.0, top)
        payload = np.rint(clamped * PCM16_SCALE).astype("<i2").tobytes()
        audio_format, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        payload = w.samples.astype("<f4").tobytes()
        audio_format, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    chunks = b"fmt " + struct.pack(
        "<IHHIIHH",
        16,
        audio_format,
        1,
        w.sample_rate,
        w.sample_rate * block_align,
        block_align,
        bits,
    )
    if audio_format == _WAVE_FORMAT_IEEE_FLOAT:
        # non-PCM containers carry a fact chunk with the frame count
        chunks += b"fact" + struct.pack("<II", 4, w.samples.size)
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    blob = b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks
    Path(path).write_bytes(blob)


def resample_linear(w: Waveform, target_rate: int) -> Waveform:
    """Resample by linear interpolation between neighboring input samples.

    Output length is round(n * target/source), which preserves duration to
    within one output sample. Linear interpolation attenuates content as it
    approaches the Nyquist rate, so this is a utility for rate unification,
    not a high-fidelity converter.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    target_rate = int(target_rate)
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), target_rate)
    n = w.samples.size
    new_len = max(1, int(round(n * target_rate / w.sample_rate)))
    # output instant k/target lands at input index k*source/target
    positions = np.arange(new_len) * (w.sample_rate / target_rate)
    samples = np.interp(positions, np.arange(n), w.samples)
    return Waveform(samples, target_rate)
