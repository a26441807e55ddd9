"""Training losses and the noisy-target equivalence experiments.

The weighted SDR loss blends two cosine similarities, one between the target
and the estimate and one between the residual noises, weighted by the energy
ratio alpha = ||y||^2 / (||y||^2 + ||x - y||^2):

    loss = -alpha * cos(y, y_hat) - (1 - alpha) * cos(x - y, x - y_hat)

It is bounded to [-1, 1] and every norm below 1e-8 zeroes its term instead
of dividing by it, so clean inputs (x == y) and silent targets stay finite
in both the forward value and the gradient.

The Monte-Carlo harnesses quantify why training against a second
independently-noised copy of the target works: for any predictor f fixed
with respect to the target noise m (zero mean, independent of the input),

    E[(f(x) - (y + m))^2] = E[(f(x) - y)^2] + Var(m),

so the noisy-target squared loss is the clean-target loss plus a constant
the optimizer cannot influence. The experiments estimate both sides and
report the residual gap, which shrinks as 1/sqrt(draws).
"""

from __future__ import annotations

import json

import numpy as np
import torch

from .audio_io import Waveform

NORM_EPS = 1e-8

# fixed deterministic target used by the identity-predictor experiment; its
# value cancels out of every expectation, it only has to be reproducible
_EXPERIMENT_LEN = 16


def _experiment_target() -> np.ndarray:
    t = np.arange(_EXPERIMENT_LEN, dtype=np.float64)
    return 0.5 * np.sin(2.0 * np.pi * t / _EXPERIMENT_LEN) + 0.1


def _safe_cosine(a: torch.Tensor, b: torch.Tensor, eps: float) -> torch.Tensor:
    """Row-wise cosine similarity; rows where either norm < eps give 0.

    The invalid branch divides by one instead of the true denominator so no
    NaN or infinity ever enters the graph (a zero grad through torch.where
    times an infinite local grad would poison the backward pass otherwise).
    """
    num = (a * b).sum(dim=-1)
    aa = (a * a).sum(dim=-1)
    bb = (b * b).sum(dim=-1)
    valid = (aa >= eps * eps) & (bb >= eps * eps)
    one = torch.ones_like(aa)
    den = torch.sqrt(torch.where(valid, aa, one)) * torch.sqrt(
        torch.where(valid, bb, one)
    )
    return torch.where(valid, num / den, torch.zeros_like(num))


def wsdr_loss_tensor(
    x: torch.Tensor, y: torch.Tensor, y_hat: torch.Tensor, eps: float = NORM_EPS
) -> torch.Tensor:
    """Weighted SDR loss on [L] or [B, L] tensors; batches average per row."""
    if x.shape != y.shape or x.shape != y_hat.shape:
        raise ValueError("x, y, y_hat must share a shape")
    if x.ndim == 1:
        x, y, y_hat = x.unsqueeze(0), y.unsqueeze(0), y_hat.unsqueeze(0)
    elif x.ndim != 2:
        raise ValueError("expected [L] or [B, L] tensors")

    noise = x - y
    noise_hat = x - y_hat
    y_energy = (y * y).sum(dim=-1)
    n_energy = (noise * noise).sum(dim=-1)
    tiny = torch.finfo(x.dtype).tiny
    alpha = y_energy / torch.clamp(y_energy + n_energy, min=tiny)

    term_target = _safe_cosine(y, y_hat, eps)
    term_noise = _safe_cosine(noise, noise_hat, eps)
    return (-alpha * term_target - (1.0 - alpha) * term_noise).mean()


def _as_samples(w) -> np.ndarray:
    a = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("expected a 1-D signal")
    return a


def wsdr_loss(x, y, y_hat) -> float:
    """Scalar wrapper over waveforms or 1-D arrays; validates finiteness."""
    ax, ay, ah = _as_samples(x), _as_samples(y), _as_samples(y_hat)
    if not (len(ax) == len(ay) == len(ah)):
        raise ValueError("inputs must share a length")
    stacked = np.concatenate([ax, ay, ah])
    if not np.isfinite(stacked).all():
        raise ValueError("inputs must be finite")
    t = lambda a: torch.from_numpy(np.ascontiguousarray(a))
    return float(wsdr_loss_tensor(t(ax), t(ay), t(ah)).item())


def l2_loss(a, b) -> float:
    """Mean squared difference."""
    xa, xb = _as_samples(a), _as_samples(b)
    if len(xa) != len(xb):
        raise ValueError("inputs must share a length")
    d = xa - xb
    return float(np.mean(d * d))


def l1_loss(a, b) -> float:
    """Mean absolute difference."""
    xa, xb = _as_samples(a), _as_samples(b)
    if len(xa) != len(xb):
        raise ValueError("inputs must share a length")
    return float(np.mean(np.abs(xa - xb)))


def _check_zero_mean(draws: np.ndarray, sigma: float, label: str) -> None:
    # guardrail on the independence argument: the constant-offset term only
    # vanishes for zero-mean noise, so reject samplers that are visibly biased
    n = draws.size
    if n == 0 or sigma == 0.0:
        return
    bound = 4.0 * sigma / np.sqrt(n)
    mean = float(draws.mean())
    if abs(mean) > bound:
        raise ValueError(
            f"{label} noise mean {mean:.6g} exceeds the zero-mean bound "
            f"{bound:.6g}; noisy-target training needs zero-mean noise"
        )


def n2n_equivalence_experiment(
    sigma: float,
    trials: int,
    seed: int = 0,
    noise_sampler=None,
    check_zero_mean: bool = True,
) -> dict:
    """Estimate the noisy-target vs clean-target squared losses for f = identity.

    Each trial draws an input noise vector n and an independent target noise
    vector m (length 16, iid with std sigma) around a fixed target y, then
    accumulates the two losses; with the identity predictor the expectations
    are 2*sigma^2 and sigma^2 analytically. Trial counts get independent
    streams, so estimates at different counts are uncorrelated. Returns the
    JSON-ready report {l2_n2c, l2_n2n, var_m, gap, trials, sigma}.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), trials)))
    shape = (trials, _EXPERIMENT_LEN)
    if noise_sampler is None:
        n_all = rng.normal(0.0, sigma, shape)
        m_all = rng.normal(0.0, sigma, shape)
    else:
        n_all = np.asarray(noise_sampler(rng, shape), dtype=np.float64)
        m_all = np.asarray(noise_sampler(rng, shape), dtype=np.float64)
        if n_all.shape != shape or m_all.shape != shape:
            raise ValueError("noise_sampler returned the wrong shape")
    if check_zero_mean:
        _check_zero_mean(n_all, sigma, "input")
        _check_zero_mean(m_all, sigma, "target")

    y = _experiment_target()
    x1 = y + n_all  # f(x1) = x1
    l2_n2c = float(np.mean((x1 - y) ** 2))
    l2_n2n = float(np.mean((x1 - (y + m_all)) ** 2))
    var_m = float(np.var(m_all))
    return {
        "l2_n2c": l2_n2c,
        "l2_n2n": l2_n2n,
        "var_m": var_m,
        "gap": l2_n2n - l2_n2c - var_m,
        "trials": trials,
        "sigma": float(sigma),
    }


def l1_minimizer_experiment(
    sigma: float = 1.0,
    trials: int = 100_000,
    seed: int = 0,
    grid_halfwidth: float = 1.0,
    grid_points: int = 401,
) -> dict:
    """Show the constant minimizing E|c - (y + m)| sits at the noise median.

    For symmetric zero-mean m the median of y + m is y, so the best constant
    under absolute loss against noisy targets is the clean value itself; the
    grid search recovers it to within the grid step plus Monte-Carlo error.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(trials), 1)))
    y = 0.7
    targets = y + rng.normal(0.0, sigma, trials)
    grid = y + np.linspace(-grid_halfwidth, grid_halfwidth, grid_points)
    mean_abs = np.abs(grid[:, None] - targets[None, :]).mean(axis=1)
    best = int(np.argmin(mean_abs))
    return {
        "minimizer": float(grid[best]),
        "target": y,
        "offset": float(grid[best] - y),
        "grid_step": float(grid[1] - grid[0]),
        "trials": int(trials),
        "sigma": float(sigma),
    }


def frozen_model_gap_experiment(
    sigma: float = 0.1, trials: int = 200, seed: int = 0
) -> dict:
    """Same gap structure with a frozen random denoiser instead of identity.

    The additive-constant argument never used anything about f beyond its
    independence from the target noise, so a fixed untrained network shows
    the same l2_n2n ~ l2_n2c + var_m decomposition. Qualitative: the report
    carries no tolerance, callers eyeball that gap is small next to var_m.
    """
    from .dcunet import ArchitectureSpec, DCUnet, denoise
    from .spectral import StftConfig

    if trials < 1:
        raise ValueError("trials must be >= 1")
    arch = ArchitectureSpec(
        channels=(4, 6),
        kernels=((3, 3), (3, 3)),
        strides=((2, 1), (2, 2)),
        freq_rows=17,
        name="frozen-tiny",
    )
    model = DCUnet(arch, dtype=torch.float32, seed=seed)
    cfg = StftConfig(fft_size=32, hop=8)
    rate = 8000
    length = 1600
    t = np.arange(length, dtype=np.float64) / rate
    y = 0.2 * np.sin(2.0 * np.pi * 220.0 * t) + 0.1 * np.sin(2.0 * np.pi * 421.0 * t)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(trials), 2)))
    sq_n2c = 0.0
    sq_n2n = 0.0
    m_moment1 = 0.0
    m_moment2 = 0.0
    for _ in range(trials):
        n = rng.normal(0.0, sigma, length)
        m = rng.normal(0.0, sigma, length)
        fx = denoise(Waveform(y + n, rate), model, cfg).samples
        sq_n2c += float(np.mean((fx - y) ** 2))
        sq_n2n += float(np.mean((fx - (y + m)) ** 2))
        m_moment1 += float(np.mean(m))
        m_moment2 += float(np.mean(m * m))
    l2_n2c = sq_n2c / trials
    l2_n2n = sq_n2n / trials
    var_m = m_moment2 / trials - (m_moment1 / trials) ** 2
    return {
        "l2_n2c": l2_n2c,
        "l2_n2n": l2_n2n,
        "var_m": var_m,
        "gap": l2_n2n - l2_n2c - var_m,
        "trials": int(trials),
        "sigma": float(sigma),
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
