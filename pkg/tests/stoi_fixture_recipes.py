"""Deterministic (clean, degraded) pair constructions for the STOI fixture
suite. scripts/make_stoi_fixtures.py bakes oracle scores for these recipes;
the test regenerates the same signals and compares the production metric."""

import numpy as np

from n2ndenoise.audio_io import Waveform, resample_linear
from n2ndenoise.mixgen import scale_noise_to_snr, synthetic_speech

RATE = 10_000

RECIPES = [
    {"kind": "white", "snr_db": 20.0, "seed": 0},
    {"kind": "white", "snr_db": 10.0, "seed": 1},
    {"kind": "white", "snr_db": 5.0, "seed": 2},
    {"kind": "white", "snr_db": 0.0, "seed": 3},
    {"kind": "white", "snr_db": -5.0, "seed": 4},
    {"kind": "hum", "snr_db": 5.0, "seed": 5},
    {"kind": "crackle", "snr_db": 5.0, "seed": 6},
    {"kind": "lowpass", "seed": 7},
    {"kind": "clip", "seed": 8},
    {"kind": "gain_noise", "snr_db": 8.0, "seed": 9},
]


def _fit(samples: np.ndarray, n: int) -> np.ndarray:
    if len(samples) >= n:
        return samples[:n]
    return np.concatenate([samples, np.zeros(n - len(samples))])


def build_pair(recipe: dict):
    """Returns (clean, degraded) Waveforms at 10 kHz for one recipe."""
    seed = int(recipe["seed"])
    clean = synthetic_speech(1.2, RATE, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF1)))
    kind = recipe["kind"]

    if kind == "white":
        noise = Waveform(rng.standard_normal(len(clean)), RATE)
        scaled = scale_noise_to_snr(clean, noise, recipe["snr_db"])
        degraded = clean.samples + scaled.samples
    elif kind == "hum":
        t = np.arange(len(clean)) / RATE
        hum = (
            np.sin(2 * np.pi * 50.0 * t)
            + 0.5 * np.sin(2 * np.pi * 100.0 * t)
            + 0.25 * np.sin(2 * np.pi * 150.0 * t)
        )
        scaled = scale_noise_to_snr(clean, Waveform(hum, RATE), recipe["snr_db"])
        degraded = clean.samples + scaled.samples
    elif kind == "crackle":
        impulses = np.zeros(len(clean))
        hits = rng.integers(0, len(clean), 200)
        impulses[hits] = rng.standard_normal(200) * 4.0
        scaled = scale_noise_to_snr(clean, Waveform(impulses, RATE), recipe["snr_db"])
        degraded = clean.samples + scaled.samples
    elif kind == "lowpass":
        down = resample_linear(clean, 3000)
        up = resample_linear(down, RATE)
        degraded = _fit(up.samples, len(clean))
    elif kind == "clip":
        level = 0.3 * float(np.max(np.abs(clean.samples)))
        degraded = np.clip(clean.samples, -level, level)
    elif kind == "gain_noise":
        noise = Waveform(rng.standard_normal(len(clean)), RATE)
        scaled = scale_noise_to_snr(clean, noise, recipe["snr_db"])
        degraded = 0.5 * clean.samples + scaled.samples
    else:
        raise ValueError(f"unknown recipe kind {kind!r}")

    return clean, Waveform(np.asarray(degraded, dtype=np.float64), RATE)
