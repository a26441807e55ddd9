"""Dataset synthesis: overlay categorized noise onto clean speech at drawn SNRs.

Pairs come in three modes. "n2c" pairs a noisy input with the clean signal,
"n2n" pairs it with a second, independently-noised copy of the same clean
signal (different noise category, or an independent draw for white noise),
and "test" records the clean reference as the target for evaluation.

Every pair owns a single 64-bit seed derived from (dataset seed, pair index),
so any record in a manifest can be regenerated in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform, read_wav, resample_linear, write_wav

SNR_RANGE_DB = (0.0, 10.0)
WHITE_CATEGORY = "white"
PAIR_MODES = ("n2n", "n2c", "test")

# pcm16 representable range; mixtures outside it are flagged, never rescaled
_CLIP_LO = -1.0
_CLIP_HI = (32768 - 1) / 32768


def _power(samples: np.ndarray) -> float:
    return float(np.sum(samples * samples))


def compute_snr_db(signal: Waveform, noise: Waveform) -> float:
    """10*log10 of signal power over noise power."""
    if len(signal) != len(noise):
        raise ValueError("signal and noise lengths differ")
    p_noise = _power(noise.samples)
    if p_noise == 0.0:
        raise ValueError("noise power is zero")
    return 10.0 * np.log10(_power(signal.samples) / p_noise)


def scale_noise_to_snr(clean: Waveform, noise: Waveform, target_db: float) -> Waveform:
    """Rescale noise so that compute_snr_db(clean, result) == target_db."""
    if len(clean) != len(noise):
        raise ValueError("clean and noise lengths differ")
    p_clean = _power(clean.samples)
    p_noise = _power(noise.samples)
    if p_clean == 0.0 or p_noise == 0.0:
        raise ValueError("silent clean or noise")
    gain = np.sqrt(p_clean / (p_noise * 10.0 ** (target_db / 10.0)))
    return Waveform(noise.samples * gain, clean.sample_rate)


def overlay_repeat(clean: Waveform, noise: Waveform) -> Waveform:
    """Tile the noise end-to-end and truncate it to the clean length."""
    if noise.sample_rate != clean.sample_rate:
        raise ValueError("align sample rates before overlaying")
    if len(noise) < 1:
        raise ValueError("noise must contain at least one sample")
    return Waveform(np.resize(noise.samples, len(clean)), clean.sample_rate)


@dataclass
class NoiseBank:
    """Category id -> list of noise file paths. Paths stay sorted for determinism."""

    categories: dict[str, list[Path]]

    def __post_init__(self):
        cleaned = {}
        for cat, paths in self.categories.items():
            paths = sorted(Path(p) for p in paths)
            if not paths:
                raise ValueError(f"noise category {cat!r} is empty")
            cleaned[str(cat)] = paths
        if not cleaned:
            raise ValueError("noise bank has no categories")
        self.categories = cleaned

    @classmethod
    def from_dir(cls, root) -> "NoiseBank":
        """Each subdirectory of root is one category of WAV files."""
        root = Path(root)
        cats = {}
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            wavs = sorted(sub.glob("*.wav"))
            if wavs:
                cats[sub.name] = wavs
        if not cats:
            raise ValueError(f"{root}: no category subdirectories with WAV files")
        return cls(cats)

    def load(self, category: str, index: int, sample_rate: int) -> Waveform:
        paths = self.categories[category]
        w = read_wav(paths[index % len(paths)])
        if w.sample_rate != sample_rate:
            w = resample_linear(w, sample_rate)
        return w


@dataclass
class TrainingPair:
    input: Waveform
    target: Waveform
    clean_ref: Waveform
    input_noise_category: str
    target_noise_category: str  # "clean" when the target is the clean signal
    input_snr_db: float
    target_snr_db: float | None
    seed: int

    def __post_init__(self):
        same_len = len(self.input) == len(self.target) == len(self.clean_ref)
        same_rate = (
            self.input.sample_rate
            == self.target.sample_rate
            == self.clean_ref.sample_rate
        )
        if not (same_len and same_rate):
            raise ValueError("pair members must share length and sample rate")


def pair_seed(dataset_seed: int, pair_index: int) -> int:
    """Stable 64-bit per-pair seed derived from the dataset seed."""
    ss = np.random.SeedSequence((int(dataset_seed), int(pair_index)))
    return int(ss.generate_state(1, np.uint64)[0])


def _draw_noise(clean, bank, category, rng, sample_rate):
    """Returns (length-matched unscaled noise, category id)."""
    if category == WHITE_CATEGORY:
        return Waveform(rng.standard_normal(len(clean)), sample_rate), WHITE_CATEGORY
    names = sorted(bank.categories)
    if category == "random":
        category = names[int(rng.integers(0, len(names)))]
    elif category not in bank.categories:
        raise ValueError(f"unknown noise category {category!r}")
    idx = int(rng.integers(0, len(bank.categories[category])))
    noise = bank.load(category, idx, sample_rate)
    return overlay_repeat(clean, noise), category


def make_pair(
    clean: Waveform,
    bank: NoiseBank | None,
    mode: str,
    input_category: str = "random",
    seed: int = 0,
) -> TrainingPair:
    """Build one pair. Draw order is fixed: input SNR, input noise, then
    (n2n only) target SNR and target noise, so a seed pins the whole pair.

    White noise ("white" category, or bank is None) uses two independent
    Gaussian draws for input and target; their cross-correlation is zero in
    expectation, which is exactly what the noisy-target objective needs.
    """
    if mode not in PAIR_MODES:
        raise ValueError(f"mode must be one of {PAIR_MODES}")
    if bank is None:
        input_category = WHITE_CATEGORY
    if mode == "n2n" and input_category != WHITE_CATEGORY:
        if bank is None or len(bank.categories) < 2:
            raise ValueError("n2n with categorized noise needs at least 2 categories")

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    lo, hi = SNR_RANGE_DB

    input_snr = float(rng.uniform(lo, hi))
    noise_in, cat_in = _draw_noise(clean, bank, input_category, rng, clean.sample_rate)
    mixture = Waveform(
        clean.samples + scale_noise_to_snr(clean, noise_in, input_snr).samples,
        clean.sample_rate,
    )

    if mode == "n2n":
        target_snr = float(rng.uniform(lo, hi))
        if cat_in == WHITE_CATEGORY:
            # independent second draw from the same stream
            tgt_cat_request = WHITE_CATEGORY
        else:
            others = sorted(set(bank.categories) - {cat_in})
            tgt_cat_request = others[int(rng.integers(0, len(others)))]
        noise_tgt, cat_tgt = _draw_noise(
            clean, bank, tgt_cat_request, rng, clean.sample_rate
        )
        target = Waveform(
            clean.samples + scale_noise_to_snr(clean, noise_tgt, target_snr).samples,
            clean.sample_rate,
        )
        return TrainingPair(
            mixture, target, clean, cat_in, cat_tgt, input_snr, target_snr, seed
        )

    target = Waveform(clean.samples.copy(), clean.sample_rate)
    return TrainingPair(mixture, target, clean, cat_in, "clean", input_snr, None, seed)


@dataclass
class DatasetManifest:
    """JSON-lines manifest plus the directory its relative paths resolve against."""

    records: list[dict]
    root: Path = field(default_factory=Path)

    @property
    def path(self) -> Path:
        return self.root / "manifest.jsonl"

    def resolve(self, record: dict, key: str) -> Path:
        return self.root / record[key]

    def modes(self) -> set:
        return {r["mode"] for r in self.records}

    def write(self) -> Path:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        self.path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return self.path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls(records, path.parent)


def _achieved_snr_f32(clean32: np.ndarray, mixed32: np.ndarray) -> float:
    """SNR recomputed from the float32 arrays that actually hit the disk."""
    c = clean32.astype(np.float64)
    r = mixed32.astype(np.float64) - c
    return 10.0 * float(np.log10(np.sum(c * c) / np.sum(r * r)))


def generate_dataset(
    clean_dir,
    bank: NoiseBank | None,
    mode: str,
    count: int,
    out_dir,
    seed: int,
    input_category: str = "random",
    sample_rate: int = 16000,
) -> DatasetManifest:
    """Write count WAV triples plus a JSON-lines manifest under out_dir.

    Audio is stored as float32 (no clipping applied; the manifest flags pairs
    that would clamp in pcm16), and the manifest SNR fields hold the SNR
    recomputed from those float32 samples, so re-reading the files reproduces
    the recorded values exactly. Pairs cycle through the sorted clean files.
    """
    if mode not in PAIR_MODES:
        raise ValueError(f"mode must be one of {PAIR_MODES}")
    if count < 0:
        raise ValueError("count must be non-negative")
    clean_files = sorted(Path(clean_dir).glob("*.wav"))
    if not clean_files and count > 0:
        raise ValueError(f"{clean_dir}: no clean WAV files")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(count):
        clean = read_wav(clean_files[i % len(clean_files)])
        if clean.sample_rate != sample_rate:
            clean = resample_linear(clean, sample_rate)
        pseed = pair_seed(seed, i)
        pair = make_pair(clean, bank, mode, input_category, pseed)

        in32 = pair.input.samples.astype(np.float32)
        tgt32 = pair.target.samples.astype(np.float32)
        cl32 = pair.clean_ref.samples.astype(np.float32)
        clipped = bool(
            (in32.min() < _CLIP_LO or in32.max() > _CLIP_HI)
            or (tgt32.min() < _CLIP_LO or tgt32.max() > _CLIP_HI)
        )

        pair_id = f"pair_{i:05d}"
        names = {
            "input_path": f"{pair_id}_input.wav",
            "target_path": f"{pair_id}_target.wav",
            "clean_path": f"{pair_id}_clean.wav",
        }
        write_wav(Waveform(in32, sample_rate), out_dir / names["input_path"], "float32")
        write_wav(Waveform(tgt32, sample_rate), out_dir / names["target_path"], "float32")
        write_wav(Waveform(cl32, sample_rate), out_dir / names["clean_path"], "float32")

        record = {
            "pair_id": pair_id,
            "mode": mode,
            "input_category": pair.input_noise_category,
            "target_category": pair.target_noise_category,
            "input_snr_db": _achieved_snr_f32(cl32, in32),
            "target_snr_db": (
                _achieved_snr_f32(cl32, tgt32) if mode == "n2n" else None
            ),
            "seed": pseed,
            "clipped": clipped,
            **names,
        }
        records.append(record)

    manifest = DatasetManifest(records, out_dir)
    manifest.write()
    return manifest


def synthetic_speech(duration_s: float = 1.0, sample_rate: int = 16000, seed: int = 0) -> Waveform:
    """Harmonic pseudo-speech: a glided fundamental, formant-weighted
    partials under slow per-partial amplitude modulation, and a syllabic
    on/off envelope. The modulation matters: without it the within-syllable
    band envelopes are flat, which makes intelligibility scores against
    unrelated noise read unrealistically high."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5EEC)))
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    f0_start = rng.uniform(95.0, 210.0)
    f0_end = f0_start * rng.uniform(0.8, 1.25)
    f0 = np.linspace(f0_start, f0_end, n)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate

    centers = np.array([
        rng.uniform(400.0, 650.0),
        rng.uniform(1200.0, 1800.0),
        rng.uniform(2300.0, 2900.0),
    ])
    widths = np.array([90.0, 140.0, 200.0])
    f0_mean = float(f0.mean())
    # syllabic-rate (~6 Hz) random gain track per partial
    n_nodes = max(3, int(duration_s * 6.0) + 1)
    node_pos = np.linspace(0, n - 1, n_nodes)
    sample_pos = np.arange(n)
    sig = np.zeros(n)
    k = 1
    while k * max(f0_start, f0_end) < 4000.0:
        freq = k * f0_mean
        formant_gain = np.sum(np.exp(-0.5 * ((freq - centers) / widths) ** 2))
        amp = (0.15 + formant_gain) / k  # 1/f tilt under the formant bumps
        tremor = np.interp(sample_pos, node_pos, np.exp(rng.normal(0.0, 0.8, n_nodes)))
        sig += amp * tremor * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        k += 1

    # syllables: voiced stretches with raised-cosine edges, short gaps between
    env = np.zeros(n)
    pos = 0
    while pos < n:
        voiced = int(rng.uniform(0.15, 0.30) * sample_rate)
        gap = int(rng.uniform(0.03, 0.10) * sample_rate)
        seg = min(voiced, n - pos)
        if seg > 8:
            ramp = max(4, seg // 8)
            shape = np.ones(seg)
            edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
            shape[:ramp] = edge
            shape[-ramp:] = edge[::-1]
            env[pos : pos + seg] = shape
        pos += voiced + gap
    if not env.any():
        env[:] = 1.0

    sig *= env
    rms = float(np.sqrt(np.mean(sig * sig)))
    if rms == 0.0:
        sig[:] = 1e-3
        rms = 1e-3
    return Waveform(sig * (0.1 / rms), sample_rate)
