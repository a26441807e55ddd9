"""Objective speech-quality metrics and test-set evaluation reports.

Three reference-based measures, each comparing an estimate against the clean
signal:

  * snr_metric: broadband log energy ratio, capped at 99 dB so identical
    signals aggregate finitely.
  * ssnr_metric: frame-wise SNR clamped to [-10, 35] dB and averaged, the
    usual segmental variant.
  * stoi_metric: short-time objective intelligibility (Taal et al., 2011),
    the mean correlation of one-third-octave temporal envelopes over
    30-frame segments at 10 kHz.

PESQ is deliberately not computed here (ITU-T P.862 licensing); externally
produced scores can be attached to a report from a CSV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform, read_wav, resample_linear
from .mixgen import DatasetManifest

SNR_CAP_DB = 99.0

_STOI_RATE = 10_000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_BANDS = 15
_STOI_MIN_FREQ = 150.0
_STOI_SEG = 30  # frames per intelligibility segment, 384 ms
_STOI_BETA = -15.0  # lower SDR bound, dB
_STOI_DYN_RANGE = 40.0  # silence threshold below peak frame energy, dB
_EPS = np.finfo(np.float64).eps


def _pair(clean, estimate):
    c = clean.samples if isinstance(clean, Waveform) else np.asarray(clean, np.float64)
    e = (
        estimate.samples
        if isinstance(estimate, Waveform)
        else np.asarray(estimate, np.float64)
    )
    if c.ndim != 1 or e.ndim != 1:
        raise ValueError("expected 1-D signals")
    if len(c) != len(e):
        raise ValueError(f"length mismatch: clean {len(c)} vs estimate {len(e)}")
    if isinstance(clean, Waveform) and isinstance(estimate, Waveform):
        if clean.sample_rate != estimate.sample_rate:
            raise ValueError("sample rates differ")
    return c, e


def snr_metric(clean, estimate) -> float:
    """10 log10 of clean energy over residual energy, in dB, capped at 99."""
    c, e = _pair(clean, estimate)
    c_energy = float(np.sum(c * c))
    if c_energy == 0.0:
        raise ValueError("clean reference is silent")
    r = c - e
    r_energy = float(np.sum(r * r))
    if r_energy == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * float(np.log10(c_energy / r_energy)))


def ssnr_metric(
    clean,
    estimate,
    frame_ms: float = 32.0,
    hop_ms: float = 16.0,
    floor_db: float = -10.0,
    ceil_db: float = 35.0,
) -> float:
    """Per-frame SNR clamped to [floor, ceil] and averaged over full frames.

    Frames with a zero residual clamp to the ceiling (perfectly
    reconstructed silence counts as perfect), remaining silent-clean frames
    clamp to the floor, so the average is always defined.
    """
    c, e = _pair(clean, estimate)
    if not isinstance(clean, Waveform):
        raise ValueError("segmental SNR needs a Waveform clean reference for timing")
    rate = clean.sample_rate
    frame = int(round(frame_ms * 1e-3 * rate))
    hop = int(round(hop_ms * 1e-3 * rate))
    if frame < 1 or hop < 1:
        raise ValueError("frame and hop must cover at least one sample")
    if len(c) < frame:
        raise ValueError("signal shorter than one frame")
    if float(np.sum(c * c)) == 0.0:
        raise ValueError("clean reference is silent")

    total = 0.0
    count = 0
    for start in range(0, len(c) - frame + 1, hop):
        cf = c[start : start + frame]
        rf = cf - e[start : start + frame]
        ce = float(np.sum(cf * cf))
        re = float(np.sum(rf * rf))
        if re == 0.0:
            snr = ceil_db
        elif ce == 0.0:
            snr = floor_db
        else:
            snr = min(ceil_db, max(floor_db, 10.0 * np.log10(ce / re)))
        total += snr
        count += 1
    return total / count


# ------------------------------------------------------------------- STOI

def _stoi_window() -> np.ndarray:
    # periodic-like Hann with both endpoints dropped
    return np.hanning(_STOI_FRAME + 2)[1:-1]


def _frame_matrix(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Windowed frames at starts range(0, len-frame, hop), one per row.

    The final start is exclusive of len - frame, so a signal of exactly
    k full frames yields k - 1 rows; kept this way to stay bin-compatible
    with the reference implementation the fixtures were produced against.
    """
    n = len(x)
    if n <= _STOI_FRAME:
        return np.empty((0, _STOI_FRAME))
    starts = np.arange(0, n - _STOI_FRAME, _STOI_HOP)
    idx = starts[:, None] + np.arange(_STOI_FRAME)[None, :]
    return x[idx] * window[None, :]


def _remove_silent_frames(c: np.ndarray, e: np.ndarray):
    """Drop frames whose clean energy sits 40 dB below the loudest frame,
    then overlap-add the survivors back into a shorter signal pair."""
    w = _stoi_window()
    cf = _frame_matrix(c, w)
    ef = _frame_matrix(e, w)
    if cf.shape[0] == 0:
        raise ValueError("signal too short for intelligibility analysis")
    norms = np.linalg.norm(cf, axis=1)
    if float(np.max(norms)) == 0.0:
        # every frame sits at the eps floor, so the relative mask below
        # would keep all of them; catch digital silence explicitly
        raise ValueError("clean reference is entirely silent")
    energies = 20.0 * np.log10(norms + _EPS)
    mask = energies > np.max(energies) - _STOI_DYN_RANGE
    cf, ef = cf[mask], ef[mask]

    n_out = (cf.shape[0] - 1) * _STOI_HOP + _STOI_FRAME
    c_out = np.zeros(n_out)
    e_out = np.zeros(n_out)
    for i in range(cf.shape[0]):
        sl = slice(i * _STOI_HOP, i * _STOI_HOP + _STOI_FRAME)
        c_out[sl] += cf[i]
        e_out[sl] += ef[i]
    return c_out, e_out


def _third_octave_bands() -> np.ndarray:
    """0/1 matrix [bands, bins] pooling DFT bins into one-third octaves.

    Band edges are center * 2^(±1/6) snapped to the nearest DFT bin, with
    the lowest center at 150 Hz; 15 bands cover roughly 150-4300 Hz.
    """
    f = np.linspace(0, _STOI_RATE, _STOI_NFFT + 1)[: _STOI_NFFT // 2 + 1]
    k = np.arange(_STOI_BANDS, dtype=np.float64)
    low = _STOI_MIN_FREQ * 2.0 ** ((2.0 * k - 1.0) / 6.0)
    high = _STOI_MIN_FREQ * 2.0 ** ((2.0 * k + 1.0) / 6.0)
    obm = np.zeros((_STOI_BANDS, len(f)))
    for i in range(_STOI_BANDS):
        lo = int(np.argmin(np.square(f - low[i])))
        hi = int(np.argmin(np.square(f - high[i])))
        obm[i, lo:hi] = 1.0
    return obm


def _band_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    """[bands, frames] root band energies of the windowed short-time DFT."""
    frames = _frame_matrix(x, _stoi_window())
    spec = np.fft.rfft(frames, n=_STOI_NFFT, axis=1)
    power = np.abs(spec) ** 2
    return np.sqrt(obm @ power.T)


def stoi_metric(clean: Waveform, estimate: Waveform) -> float:
    """Short-time objective intelligibility score, typically within [0, 1].

    Both signals are resampled to 10 kHz, frames where the clean reference
    is silent are removed, and per-band 30-frame envelope segments of the
    estimate are scaled to the clean energy, clipped at the -15 dB SDR
    bound, and correlated against the clean envelopes.
    """
    if not isinstance(clean, Waveform) or not isinstance(estimate, Waveform):
        raise ValueError("stoi_metric needs Waveform inputs to know sample rates")
    _pair(clean, estimate)
    if clean.sample_rate != _STOI_RATE:
        clean = resample_linear(clean, _STOI_RATE)
        estimate = resample_linear(estimate, _STOI_RATE)

    c, e = _remove_silent_frames(clean.samples, estimate.samples)
    obm = _third_octave_bands()
    cb = _band_envelopes(c, obm)
    eb = _band_envelopes(e, obm)
    n_frames = cb.shape[1]
    if n_frames < _STOI_SEG:
        raise ValueError(
            f"only {n_frames} voiced frames, need {_STOI_SEG} for one segment"
        )

    # sliding 30-frame segments: [segments, bands, seg]
    c_seg = np.lib.stride_tricks.sliding_window_view(cb, _STOI_SEG, axis=1)
    c_seg = np.transpose(c_seg, (1, 0, 2)).copy()
    e_seg = np.lib.stride_tricks.sliding_window_view(eb, _STOI_SEG, axis=1)
    e_seg = np.transpose(e_seg, (1, 0, 2)).copy()

    norm = np.linalg.norm(c_seg, axis=2, keepdims=True) / (
        np.linalg.norm(e_seg, axis=2, keepdims=True) + _EPS
    )
    e_seg = e_seg * norm
    clip = 10.0 ** (-_STOI_BETA / 20.0)
    e_seg = np.minimum(e_seg, c_seg * (1.0 + clip))

    c_seg = c_seg - np.mean(c_seg, axis=2, keepdims=True)
    e_seg = e_seg - np.mean(e_seg, axis=2, keepdims=True)
    c_seg = c_seg / (np.linalg.norm(c_seg, axis=2, keepdims=True) + _EPS)
    e_seg = e_seg / (np.linalg.norm(e_seg, axis=2, keepdims=True) + _EPS)

    n_segments = c_seg.shape[0]
    return float(np.sum(c_seg * e_seg) / (n_segments * _STOI_BANDS))


# ------------------------------------------------------------------ reports

_METRIC_NAMES = ("snr_db", "ssnr_db", "stoi")
_PESQ_NAMES = ("pesq_nb", "pesq_wb")


@dataclass
class MetricRow:
    pair_id: str
    condition: str
    snr_db: float
    ssnr_db: float
    stoi: float
    pesq_nb: float | None = None
    pesq_wb: float | None = None

    def to_dict(self) -> dict:
        d = {
            "pair_id": self.pair_id,
            "condition": self.condition,
            "snr_db": self.snr_db,
            "ssnr_db": self.ssnr_db,
            "stoi": self.stoi,
        }
        for name in _PESQ_NAMES:
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d


@dataclass
class MetricReport:
    """Per-file metric rows plus recomputable mean/std aggregates."""

    rows: list = field(default_factory=list)

    def conditions(self) -> list:
        seen = []
        for r in self.rows:
            if r.condition not in seen:
                seen.append(r.condition)
        return seen

    def aggregates(self) -> dict:
        out = {}
        for cond in self.conditions():
            rows = [r for r in self.rows if r.condition == cond]
            stats = {}
            for name in _METRIC_NAMES + _PESQ_NAMES:
                vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
                if not vals:
                    continue
                arr = np.asarray(vals, dtype=np.float64)
                stats[name] = {
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                    "count": len(vals),
                }
            out[cond] = stats
        return out

    def to_json(self) -> str:
        doc = {
            "rows": [r.to_dict() for r in self.rows],
            "aggregates": self.aggregates(),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        doc = json.loads(text)
        rows = [
            MetricRow(
                pair_id=d["pair_id"],
                condition=d["condition"],
                snr_db=d["snr_db"],
                ssnr_db=d["ssnr_db"],
                stoi=d["stoi"],
                pesq_nb=d.get("pesq_nb"),
                pesq_wb=d.get("pesq_wb"),
            )
            for d in doc["rows"]
        ]
        return cls(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = ["pair_id", "condition"] + list(_METRIC_NAMES) + list(_PESQ_NAMES)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: r.to_dict().get(k, "") for k in names})
        return buf.getvalue()

    def attach_pesq(self, csv_path) -> int:
        """Merge externally computed PESQ columns from {pair_id, pesq_nb,
        pesq_wb}. The CSV carries no condition column, so the scores attach
        to every row of the pair; returns the number of rows updated."""
        table = {}
        with open(csv_path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                table[rec["pair_id"]] = (
                    float(rec["pesq_nb"]),
                    float(rec["pesq_wb"]),
                )
        updated = 0
        for row in self.rows:
            if row.pair_id in table:
                row.pesq_nb, row.pesq_wb = table[row.pair_id]
                updated += 1
        return updated


def evaluate_testset(manifest: DatasetManifest, models: dict | None = None) -> MetricReport:
    """Score a held-out testset: a baseline condition with estimate = input,
    plus one condition per named denoiser callable (Waveform -> Waveform).

    Rows are ordered by pair_id, baseline first within each pair, so two
    evaluations of the same inputs produce identical reports.
    """
    if manifest.modes() != {"test"}:
        raise ValueError(f"expected a test manifest, found modes {sorted(manifest.modes())}")
    models = models or {}
    rows = []
    for record in sorted(manifest.records, key=lambda r: r["pair_id"]):
        clean = read_wav(manifest.resolve(record, "clean_path"))
        noisy = read_wav(manifest.resolve(record, "input_path"))
        estimates = [("baseline", noisy)]
        estimates += [(name, fn(noisy)) for name, fn in models.items()]
        for condition, est in estimates:
            rows.append(
                MetricRow(
                    pair_id=record["pair_id"],
                    condition=condition,
                    snr_db=snr_metric(clean, est),
                    ssnr_db=ssnr_metric(clean, est),
                    stoi=stoi_metric(clean, est),
                )
            )
    return MetricReport(rows)
