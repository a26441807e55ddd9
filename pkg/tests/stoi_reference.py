"""Loop-based transcription of the short-time objective intelligibility
measure (Taal et al., 2011), written independently of the production code:
explicit per-frame, per-band, per-segment loops, no shared helpers. Used as
the cross-implementation oracle and to bake the fixture values."""

import numpy as np

FS = 10_000
FRAME = 256
HOP = 128
NFFT = 512
N_BANDS = 15
MIN_FREQ = 150.0
SEG = 30
BETA = -15.0
DYN_RANGE = 40.0
EPS = np.finfo(np.float64).eps


def _window():
    full = np.hanning(FRAME + 2)
    return full[1:-1]


def _frames(x):
    out = []
    start = 0
    while start < len(x) - FRAME:
        out.append(np.array(x[start : start + FRAME], dtype=np.float64))
        start += HOP
    return out


def remove_silent_frames_reference(clean, degraded):
    w = _window()
    cf = [w * f for f in _frames(clean)]
    ef = [w * f for f in _frames(degraded)]
    if not cf:
        raise ValueError("too short")
    energies = []
    for f in cf:
        total = 0.0
        for v in f:
            total += v * v
        energies.append(20.0 * np.log10(np.sqrt(total) + EPS))
    peak = max(energies)
    keep = [i for i, e in enumerate(energies) if e > peak - DYN_RANGE]
    if not keep:
        raise ValueError("all silent")
    n_out = (len(keep) - 1) * HOP + FRAME
    c_out = np.zeros(n_out)
    e_out = np.zeros(n_out)
    for row, i in enumerate(keep):
        for j in range(FRAME):
            c_out[row * HOP + j] += cf[i][j]
            e_out[row * HOP + j] += ef[i][j]
    return c_out, e_out


def third_octave_matrix_reference():
    f = np.linspace(0.0, FS, NFFT + 1)[: NFFT // 2 + 1]
    obm = np.zeros((N_BANDS, len(f)))
    for band in range(N_BANDS):
        low = MIN_FREQ * 2.0 ** ((2.0 * band - 1.0) / 6.0)
        high = MIN_FREQ * 2.0 ** ((2.0 * band + 1.0) / 6.0)
        lo_bin = 0
        hi_bin = 0
        best_lo = None
        best_hi = None
        for i, freq in enumerate(f):
            d_lo = (freq - low) ** 2
            d_hi = (freq - high) ** 2
            if best_lo is None or d_lo < best_lo:
                best_lo, lo_bin = d_lo, i
            if best_hi is None or d_hi < best_hi:
                best_hi, hi_bin = d_hi, i
        for i in range(lo_bin, hi_bin):
            obm[band, i] = 1.0
    return obm


def band_envelopes_reference(x, obm):
    w = _window()
    cols = []
    for frame in _frames(x):
        spec = np.fft.rfft(w * frame, n=NFFT)
        power = np.abs(spec) ** 2
        col = np.zeros(N_BANDS)
        for band in range(N_BANDS):
            total = 0.0
            for k in range(len(power)):
                if obm[band, k] > 0:
                    total += power[k]
            col[band] = np.sqrt(total)
        cols.append(col)
    return np.array(cols).T if cols else np.zeros((N_BANDS, 0))


def stoi_reference(clean, degraded):
    """clean, degraded: equal-length float arrays already at 10 kHz."""
    clean = np.asarray(clean, dtype=np.float64)
    degraded = np.asarray(degraded, dtype=np.float64)
    if clean.shape != degraded.shape:
        raise ValueError("length mismatch")
    c, e = remove_silent_frames_reference(clean, degraded)
    obm = third_octave_matrix_reference()
    cb = band_envelopes_reference(c, obm)
    eb = band_envelopes_reference(e, obm)
    n = cb.shape[1]
    if n < SEG:
        raise ValueError("too few frames")

    clip = 10.0 ** (-BETA / 20.0)
    total = 0.0
    count = 0
    for m in range(SEG, n + 1):
        for band in range(N_BANDS):
            x_seg = cb[band, m - SEG : m]
            y_seg = eb[band, m - SEG : m]
            nx = np.sqrt(float(np.sum(x_seg * x_seg)))
            ny = np.sqrt(float(np.sum(y_seg * y_seg)))
            y_scaled = y_seg * (nx / (ny + EPS))
            y_prime = np.minimum(y_scaled, x_seg * (1.0 + clip))

            xm = x_seg - x_seg.mean()
            ym = y_prime - y_prime.mean()
            xm = xm / (np.sqrt(float(np.sum(xm * xm))) + EPS)
            ym = ym / (np.sqrt(float(np.sum(ym * ym))) + EPS)
            corr = 0.0
            for j in range(SEG):
                corr += xm[j] * ym[j]
            total += corr
            count += 1
    return total / count
