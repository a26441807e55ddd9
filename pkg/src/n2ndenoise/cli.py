"""Command-line front end for the denoising pipeline.

Five subcommands cover the batch workflow: mix (dataset synthesis), train,
denoise (inference over files), eval (score a testset), and report (merge and
reshape metric reports, including long-format distribution dumps for violin
plots). Plotting itself is out of scope; the report subcommand emits data.

Flag precedence: explicit flags beat the --config JSON file, which beats the
built-in defaults. Outputs carry a run-metadata JSON (versions, seed, merged
config) with no timestamps, so a repeated run with the same seed reproduces
every artifact byte for byte.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .audio_io import read_wav, write_wav
from .dcunet import ArchitectureSpec, denoise
from .metrics import MetricReport, evaluate_testset
from .mixgen import DatasetManifest, NoiseBank, generate_dataset
from .spectral import StftConfig
from .trainer import TrainConfig, load_checkpoint, train

METRIC_FIELDS = ("snr_db", "ssnr_db", "stoi", "pesq_nb", "pesq_wb")

GLOBAL_DEFAULTS = {"seed": 0, "precision": 32, "sample_rate": 16000}

SUB_DEFAULTS = {
    "mix": {
        "clean_dir": None,
        "noise_dir": None,
        "white": False,
        "mode": None,
        "category": "random",
        "count": None,
        "out": None,
    },
    "train": {
        "manifest": None,
        "arch": "desk10",
        "mode": None,
        "epochs": 4,
        "batch_size": 2,
        "lr": 1e-3,
        "fft_size": 512,
        "hop": 128,
        "crop_len": 16384,
        "max_steps": None,
        "checkpoint_every": 0,
        "out": None,
    },
    "denoise": {"checkpoint": None, "in_path": None, "out": None},
    "eval": {
        "manifest": None,
        "checkpoint": None,
        "n2c": None,
        "n2n": None,
        "pesq_csv": None,
        "out": None,
    },
    "report": {"reports": None, "format": "csv", "out": None},
}


class CliError(Exception):
    """Bad flags or inconsistent inputs; maps to exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--precision", type=int, choices=(32, 64), default=None)
    common.add_argument("--sample-rate", type=int, default=None, dest="sample_rate")
    common.add_argument("--config", default=None, help="JSON file of flag overrides")

    parser = argparse.ArgumentParser(
        prog="n2ndenoise",
        description="speech denoising: synthesize data, train, denoise, score",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", parents=[common], help="synthesize a paired dataset")
    p.add_argument("--clean-dir", dest="clean_dir")
    p.add_argument("--noise-dir", dest="noise_dir")
    p.add_argument("--white", action="store_const", const=True, default=None)
    p.add_argument("--mode", choices=("n2n", "n2c", "test", "mixed", "white"))
    p.add_argument("--category", default=None)
    p.add_argument("--count", type=int)
    p.add_argument("--out")

    p = sub.add_parser("train", parents=[common], help="train a masking model")
    p.add_argument("--manifest")
    p.add_argument("--arch", help="preset name or architecture JSON path")
    p.add_argument("--mode", choices=("n2c", "n2n"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--fft-size", type=int, dest="fft_size")
    p.add_argument("--hop", type=int)
    p.add_argument("--crop-len", type=int, dest="crop_len")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--out")

    p = sub.add_parser("denoise", parents=[common], help="run a checkpoint on WAVs")
    p.add_argument("--checkpoint")
    p.add_argument("--in", dest="in_path", help="input WAV file or directory")
    p.add_argument("--out")

    p = sub.add_parser("eval", parents=[common], help="score a test manifest")
    p.add_argument("--manifest")
    p.add_argument("--checkpoint", help="single checkpoint, scored as 'model'")
    p.add_argument("--n2c", help="clean-target checkpoint")
    p.add_argument("--n2n", help="noisy-target checkpoint")
    p.add_argument("--pesq-csv", dest="pesq_csv", help="external PESQ scores to attach")
    p.add_argument("--out")

    p = sub.add_parser("report", parents=[common], help="merge/reshape metric reports")
    p.add_argument("--reports", nargs="+")
    p.add_argument("--format", choices=("csv", "json", "plotdata"))
    p.add_argument("--out")
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(SUB_DEFAULTS[args.command])
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        try:
            overrides = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CliError(f"config file is not valid JSON: {e}") from None
        unknown = sorted(set(overrides) - set(cfg))
        if unknown:
            raise CliError(f"config keys not recognized for {args.command}: {unknown}")
        cfg.update(overrides)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise CliError(f"missing required flags: {flags}")


def _write_run_meta(out_dir: Path, cfg: dict) -> None:
    meta = {
        "command": cfg["command"],
        "config": {k: v for k, v in cfg.items() if k != "command"},
        "versions": {
            "n2ndenoise": __version__,
            "numpy": np.__version__,
            "torch": torch.__version__,
            "python": platform.python_version(),
        },
    }
    text = json.dumps(meta, sort_keys=True, indent=2) + "\n"
    (out_dir / "run_meta.json").write_text(text, encoding="utf-8")


def _load_manifest(path_str: str) -> DatasetManifest:
    path = Path(path_str)
    if path.is_dir():
        path = path / "manifest.jsonl"
    if not path.is_file():
        raise CliError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def _load_arch(spec: str) -> ArchitectureSpec:
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        if not path.is_file():
            raise CliError(f"architecture file not found: {path}")
        return ArchitectureSpec.from_json_file(path)
    return ArchitectureSpec.load_preset(spec)


def _snr_summary(records: list) -> str:
    snrs = np.array([r["input_snr_db"] for r in records], dtype=np.float64)
    lines = [
        f"pairs: {len(records)}",
        f"input SNR dB: mean {snrs.mean():.3f}  min {snrs.min():.3f}  max {snrs.max():.3f}",
    ]
    counts, edges = np.histogram(snrs, bins=10)
    peak = max(int(counts.max()), 1)
    for i, c in enumerate(counts):
        bar = "#" * max(1, round(40 * c / peak)) if c else ""
        lines.append(f"  [{edges[i]:6.2f}, {edges[i + 1]:6.2f}) {int(c):4d} {bar}")
    return "\n".join(lines)


def cmd_mix(cfg: dict) -> int:
    _require(cfg, "clean_dir", "mode", "count", "out")
    if not Path(cfg["clean_dir"]).is_dir():
        raise CliError(f"clean dir not found: {cfg['clean_dir']}")
    if cfg["white"] and cfg["noise_dir"]:
        raise CliError("--white and --noise-dir are mutually exclusive")
    if not cfg["white"] and not cfg["noise_dir"]:
        raise CliError("choose a noise source: --noise-dir or --white")

    bank = None
    if cfg["noise_dir"]:
        if not Path(cfg["noise_dir"]).is_dir():
            raise CliError(f"noise dir not found: {cfg['noise_dir']}")
        bank = NoiseBank.from_dir(cfg["noise_dir"])

    # mixed = n2n over randomly drawn categories; white = n2n with white noise
    mode_map = {
        "mixed": ("n2n", "random"),
        "white": ("n2n", "white"),
    }
    pair_mode, category = mode_map.get(cfg["mode"], (cfg["mode"], cfg["category"]))
    if pair_mode == "n2n" and category != "white":
        n_cats = len(bank.categories) if bank is not None else 0
        if n_cats < 2:
            raise CliError(
                "noisy-target pairs need two distinct noise categories "
                f"(found {n_cats}); use --white for white-noise pairs"
            )

    manifest = generate_dataset(
        cfg["clean_dir"],
        bank,
        pair_mode,
        cfg["count"],
        cfg["out"],
        seed=cfg["seed"],
        input_category=category,
        sample_rate=cfg["sample_rate"],
    )
    _write_run_meta(Path(cfg["out"]), cfg)
    print(manifest.path)
    if manifest.records:
        print(_snr_summary(manifest.records))
    return 0


def cmd_train(cfg: dict) -> int:
    _require(cfg, "manifest", "mode", "out")
    manifest = _load_manifest(cfg["manifest"])
    arch = _load_arch(cfg["arch"])
    stft_cfg = StftConfig(fft_size=cfg["fft_size"], hop=cfg["hop"])
    train_cfg = TrainConfig(
        mode=cfg["mode"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        learning_rate=cfg["lr"],
        seed=cfg["seed"],
        precision=cfg["precision"],
        checkpoint_every=cfg["checkpoint_every"],
        crop_len=cfg["crop_len"],
        max_steps=cfg["max_steps"],
    )
    out = Path(cfg["out"])
    state = train(manifest, arch, stft_cfg, train_cfg, out_dir=out)
    _write_run_meta(out, cfg)
    print(out / "model.ckpt")
    print(f"steps: {state.step}  final running loss: {state.running_loss():.4f}")
    return 0


def _denoiser(checkpoint_path: str):
    path = Path(checkpoint_path)
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}")
    state = load_checkpoint(path)
    return lambda w: denoise(w, state.model, state.stft)


def cmd_denoise(cfg: dict) -> int:
    _require(cfg, "checkpoint", "in_path", "out")
    fn = _denoiser(cfg["checkpoint"])
    src = Path(cfg["in_path"])
    out = Path(cfg["out"])
    if src.is_dir():
        files = sorted(src.glob("*.wav"))
        if not files:
            raise CliError(f"no WAV files under {src}")
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / f.name for f in files]
    elif src.is_file():
        if out.suffix.lower() != ".wav":
            out.mkdir(parents=True, exist_ok=True)
            targets = [out / src.name]
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            targets = [out]
        files = [src]
    else:
        raise CliError(f"input not found: {src}")

    for f, t in zip(files, targets):
        write_wav(fn(read_wav(f)), t, "float32")
        print(t)
    return 0


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "manifest", "out")
    manifest = _load_manifest(cfg["manifest"])
    models = {}
    if cfg["checkpoint"]:
        models["model"] = _denoiser(cfg["checkpoint"])
    if cfg["n2c"]:
        models["n2c"] = _denoiser(cfg["n2c"])
    if cfg["n2n"]:
        models["n2n"] = _denoiser(cfg["n2n"])

    report = evaluate_testset(manifest, models)
    if cfg["pesq_csv"]:
        if not Path(cfg["pesq_csv"]).is_file():
            raise CliError(f"PESQ csv not found: {cfg['pesq_csv']}")
        report.attach_pesq(cfg["pesq_csv"])

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    _write_run_meta(out, cfg)

    print(out / "report.json")
    print(_aggregate_table(report))
    return 0


def _aggregate_table(report: MetricReport) -> str:
    agg = report.aggregates()
    lines = [f"{'condition':<12} {'metric':<8} {'mean':>9} {'std':>8} {'n':>4}"]
    for condition in report.conditions():
        stats = agg[condition]
        for metric in METRIC_FIELDS:
            if metric in stats:
                s = stats[metric]
                lines.append(
                    f"{condition:<12} {metric:<8} {s['mean']:9.3f} "
                    f"{s['std']:8.3f} {s['count']:4d}"
                )
    return "\n".join(lines)


def cmd_report(cfg: dict) -> int:
    _require(cfg, "reports", "out")
    rows = []
    for path_str in cfg["reports"]:
        path = Path(path_str)
        if not path.is_file():
            raise CliError(f"report not found: {path}")
        rows.extend(MetricReport.from_json(path.read_text(encoding="utf-8")).rows)
    merged = MetricReport(rows)

    out = Path(cfg["out"])
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    fmt = cfg["format"]
    if fmt == "json":
        out.write_text(merged.to_json(), encoding="utf-8")
    elif fmt == "csv":
        agg = merged.aggregates()
        lines = ["condition,metric,mean,std,count"]
        for condition in merged.conditions():
            for metric in METRIC_FIELDS:
                if metric in agg[condition]:
                    s = agg[condition][metric]
                    lines.append(
                        f"{condition},{metric},{s['mean']!r},{s['std']!r},{s['count']}"
                    )
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:  # plotdata: long form, one value per row, for violin-style plots
        lines = ["condition,metric,value"]
        for row in merged.rows:
            for metric in METRIC_FIELDS:
                value = getattr(row, metric)
                if value is not None:
                    lines.append(f"{row.condition},{metric},{value!r}")
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(out)
    return 0


HANDLERS = {
    "mix": cmd_mix,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return HANDLERS[args.command](cfg)
    except (CliError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - boundary: report, don't crash
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
