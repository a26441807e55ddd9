"""Optimization loop for the two training regimes.

Both regimes minimize the weighted SDR loss between the network estimate and
a target waveform; the only difference is what the dataset put in the target
slot (the clean signal, or a second independently-noised copy). The trainer
itself never opens a pair's clean reference, so the noisy-target regime is
isolated by construction, not by convention.

Every random choice (weight init, epoch shuffles, crop offsets) is a pure
function of (seed, epoch, step), which buys two things: bitwise-identical
reruns in 64-bit mode, and resume-from-checkpoint without serializing RNG
state. The optimizer is a plain Adam on named tensor dicts, so checkpoints
are just the tensor container plus JSON counters.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio_io import read_wav
from .checkpoint import load_tensors, save_tensors
from .cxnn import ComplexTensor
from .dcunet import ArchitectureSpec, DCUnet, apply_mask, estimate_mask
from .mixgen import DatasetManifest
from .objective import wsdr_loss_tensor
from .spectral import StftConfig, istft_tensor, stft_tensor

TRAIN_MODES = ("n2c", "n2n")


@dataclass
class TrainConfig:
    mode: str
    batch_size: int = 2
    epochs: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: int = 32
    checkpoint_every: int = 0  # steps between periodic checkpoints; 0 = final only
    crop_len: int = 16384
    max_steps: int | None = None
    optimizer: str = "adam"

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        if self.crop_len < 1:
            raise ValueError("crop_len must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 when set")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is implemented")

    @property
    def dtype(self):
        return torch.float64 if self.precision == 64 else torch.float32


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def new(cls, params: dict) -> "AdamState":
        zeros = lambda: {n: torch.zeros_like(p) for n, p in params.items()}
        return cls(m=zeros(), v=zeros(), t=0)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    """One in-place bias-corrected Adam update over named tensors."""
    if set(params) != set(grads):
        raise ValueError("params and grads must carry the same names")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state.m[name]
            v = state.v[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            denom = (v / bc2).sqrt_().add_(cfg.adam_eps)
            p.addcdiv_(m, denom, value=-cfg.learning_rate / bc1)


@dataclass
class TrainState:
    model: DCUnet
    adam: AdamState
    config: TrainConfig
    stft: StftConfig
    step: int = 0
    epoch: int = 0
    loss_history: list = field(default_factory=list)  # (step, epoch, loss) rows

    def running_loss(self, window: int = 50) -> float:
        tail = self.loss_history[-window:]
        if not tail:
            return float("nan")
        return float(np.mean([row[2] for row in tail]))


def save_checkpoint(state: TrainState, path) -> None:
    tensors = {f"model.{n}": a for n, a in state.model.export_tensors().items()}
    for name, t in state.adam.m.items():
        tensors[f"adam.m.{name}"] = t.numpy().copy()
    for name, t in state.adam.v.items():
        tensors[f"adam.v.{name}"] = t.numpy().copy()
    meta = {
        "arch": state.model.arch.to_dict(),
        "stft": asdict(state.stft),
        "config": asdict(state.config),
        "step": state.step,
        "epoch": state.epoch,
        "adam_t": state.adam.t,
        "loss_history": state.loss_history,
    }
    save_tensors(path, tensors, meta)


def load_checkpoint(path) -> TrainState:
    tensors, meta = load_tensors(path)
    cfg = TrainConfig(**meta["config"])
    arch = ArchitectureSpec.from_dict(meta["arch"])
    stft_cfg = StftConfig(**meta["stft"])
    model = DCUnet(arch, dtype=cfg.dtype, seed=cfg.seed)
    model.load_tensors(
        {n[len("model."):]: a for n, a in tensors.items() if n.startswith("model.")}
    )
    adam = AdamState.new(model.named_parameters())
    adam.t = int(meta["adam_t"])
    with torch.no_grad():
        for name in adam.m:
            adam.m[name].copy_(torch.from_numpy(tensors[f"adam.m.{name}"]))
            adam.v[name].copy_(torch.from_numpy(tensors[f"adam.v.{name}"]))
    return TrainState(
        model=model,
        adam=adam,
        config=cfg,
        stft=stft_cfg,
        step=int(meta["step"]),
        epoch=int(meta["epoch"]),
        loss_history=[tuple(row) for row in meta["loss_history"]],
    )


def _write_loss_csv(history: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "epoch", "loss"])
        for step, epoch, loss in history:
            writer.writerow([step, epoch, repr(float(loss))])


def _preload(manifest: DatasetManifest, mode: str):
    """Read (input, target) sample arrays for every pair; the clean
    reference stays untouched so the noisy-target regime cannot peek."""
    pairs = []
    rate = None
    for record in sorted(manifest.records, key=lambda r: r["pair_id"]):
        x = read_wav(manifest.resolve(record, "input_path"))
        y = read_wav(manifest.resolve(record, "target_path"))
        if x.sample_rate != y.sample_rate or len(x) != len(y):
            raise ValueError(f"{record['pair_id']}: input/target length or rate mismatch")
        if rate is None:
            rate = x.sample_rate
        elif x.sample_rate != rate:
            raise ValueError("manifest mixes sample rates")
        pairs.append((x.samples, y.samples))
    return pairs


def train(
    manifest: DatasetManifest,
    arch: ArchitectureSpec,
    stft_cfg: StftConfig,
    cfg: TrainConfig,
    out_dir=None,
    resume: TrainState | None = None,
) -> TrainState:
    """Run the loop; returns the final state.

    When out_dir is given, writes loss.csv plus model.ckpt there (and
    periodic checkpoint_step*.ckpt files when cfg.checkpoint_every > 0).
    resume continues an earlier run: pass a state whose counters sit at the
    interruption point; identical seeds make the continuation bitwise equal
    to the uninterrupted run in 64-bit mode.
    """
    if manifest.modes() != {cfg.mode}:
        raise ValueError(
            f"manifest holds modes {sorted(manifest.modes())}, "
            f"training config wants {cfg.mode!r}"
        )
    if stft_cfg.freq_rows != arch.freq_rows:
        raise ValueError(
            f"transform yields {stft_cfg.freq_rows} rows, architecture "
            f"expects {arch.freq_rows}"
        )
    torch.set_num_threads(1)
    dtype = cfg.dtype
    pairs = _preload(manifest, cfg.mode)
    if len(pairs) < cfg.batch_size:
        raise ValueError(
            f"{len(pairs)} pairs cannot fill a batch of {cfg.batch_size}"
        )
    batches_per_epoch = len(pairs) // cfg.batch_size

    if resume is None:
        model = DCUnet(arch, dtype=dtype, seed=cfg.seed)
        state = TrainState(
            model=model,
            adam=AdamState.new(model.named_parameters()),
            config=cfg,
            stft=stft_cfg,
        )
    else:
        state = resume
        if state.config.seed != cfg.seed or state.config.mode != cfg.mode:
            raise ValueError("resume state disagrees with the training config")
        state.config = cfg  # the caller may extend epochs or drop max_steps
    params = state.model.named_parameters()

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def finish():
        if out_dir is not None:
            _write_loss_csv(state.loss_history, out_dir / "loss.csv")
            save_checkpoint(state, out_dir / "model.ckpt")
        return state

    done = cfg.max_steps is not None and state.step >= cfg.max_steps
    start_epoch = state.epoch
    for epoch in range(start_epoch, cfg.epochs):
        if done:
            break
        state.epoch = epoch
        perm = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, 1, epoch))
        ).permutation(len(pairs))
        if resume is not None and epoch == start_epoch:
            start_batch = max(0, state.step - epoch * batches_per_epoch)
        else:
            start_batch = 0
        for b in range(start_batch, batches_per_epoch):
            members = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            crop_rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, 2, epoch, b))
            )
            length = min(
                cfg.crop_len, min(len(pairs[i][0]) for i in members)
            )
            xs, ys = [], []
            for i in members:
                x_all, y_all = pairs[i]
                off = int(crop_rng.integers(0, len(x_all) - length + 1))
                xs.append(x_all[off : off + length])
                ys.append(y_all[off : off + length])
            x = torch.from_numpy(np.stack(xs)).to(dtype)
            y = torch.from_numpy(np.stack(ys)).to(dtype)

            re, im = stft_tensor(x, stft_cfg)
            spec = ComplexTensor(re.unsqueeze(1), im.unsqueeze(1))
            logits = state.model.forward(spec, training=True)
            masked = apply_mask(estimate_mask(logits), spec)
            y_hat = istft_tensor(
                masked.real.squeeze(1), masked.imag.squeeze(1), stft_cfg, length
            )
            loss = wsdr_loss_tensor(x, y, y_hat)

            if not torch.isfinite(loss):
                msg = f"non-finite loss at step {state.step} (epoch {epoch})"
                if out_dir is not None:
                    save_checkpoint(state, out_dir / "diagnostic.ckpt")
                    _write_loss_csv(state.loss_history, out_dir / "loss.csv")
                    msg += "; diagnostic checkpoint saved"
                raise RuntimeError(msg)

            grads = torch.autograd.grad(loss, list(params.values()))
            adam_step(params, dict(zip(params.keys(), grads)), state.adam, cfg)

            state.step += 1
            state.loss_history.append((state.step, epoch, float(loss.item())))
            if (
                out_dir is not None
                and cfg.checkpoint_every > 0
                and state.step % cfg.checkpoint_every == 0
            ):
                save_checkpoint(state, out_dir / f"checkpoint_step{state.step:06d}.ckpt")
            if cfg.max_steps is not None and state.step >= cfg.max_steps:
                done = True
                break
        else:
            state.epoch = epoch + 1
        if done:
            break
    return finish()
