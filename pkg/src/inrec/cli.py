"""Command-line front end.

Four subcommands: train-prior, compress, decompress, rd-curve. Every run
writes a JSON manifest next to its output so results are reproducible from
the recorded flags and seed fan-out alone. Options may also come from a
TOML file via --config; explicit flags always win.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .binio import FormatError
from .network import INRConfig, param_count
from .partition import compute_block_count
from .pipeline import CompressedObject, FineTuneSettings, compress, decompress, measure
from .priors import PriorModel, TrainingSchedule, learn_prior
from .rec import RecSettings
from .seeds import SeedTree, derive_seed
from .signals import (
    AUDIO_EXTENSIONS,
    IMAGE_EXTENSIONS,
    infer_kind,
    load_signal,
    save_signal,
)

_SCHEDULE_DEFAULTS = {
    "epochs": 128, "iters": 100, "first_iters": 250,
    "lr": 2e-4, "var_init": 9e-6,
}
_ARCH_DEFAULTS = {
    "layers": 4, "hidden": 16, "fourier": 32,
    "freq_scale": 10.0, "omega": 30.0,
}
_COMPRESS_DEFAULTS = {
    "kappa": 16.0, "t": 0.0, "fit_iters": 25000, "fine_tune_iters": 15,
    "adjust_period": 15, "lambda_step": 1.05, "buffer_bits": 0.4,
    "lr": 2e-4, "batch_fraction": None, "lambda_init": None,
}


def _load_toml(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _merge(args, file_config: dict, defaults: dict) -> dict:
    """Flag if given, else config-file value, else the built-in default."""
    merged = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_config.get(key, default)
        merged[key] = value
    return merged


def _json_ready(value):
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, bytes):
        return value.hex()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _json_ready(dataclasses.asdict(value))
    return value


def _write_manifest(out_path, manifest: dict):
    path = Path(str(out_path) + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(_json_ready(manifest), fh, indent=2)
        fh.write("\n")
    return path


def _collect_signal_files(directory: Path, kind):
    extensions = IMAGE_EXTENSIONS + AUDIO_EXTENSIONS
    if kind == "image":
        extensions = IMAGE_EXTENSIONS
    elif kind == "audio":
        extensions = AUDIO_EXTENSIONS
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in extensions)


def cmd_train_prior(args) -> int:
    file_config = _load_toml(args.config)
    arch = _merge(args, file_config, _ARCH_DEFAULTS)
    schedule_opts = _merge(args, file_config, _SCHEDULE_DEFAULTS)
    beta = args.beta if args.beta is not None else file_config.get("beta")
    if beta is None:
        raise UsageError("--beta is required")
    seed = args.seed if args.seed is not None else int(file_config.get("seed", 0))

    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise UsageError(f"{data_dir} is not a directory")
    files = _collect_signal_files(data_dir, args.kind)
    if not files:
        raise UsageError(f"no training signals found in {data_dir}")

    batches = []
    first_descriptor = None
    for path in files:
        batch, descriptor = load_signal(path, args.kind)
        if first_descriptor is None:
            first_descriptor = descriptor
        elif (descriptor.kind != first_descriptor.kind
              or descriptor.output_dim != first_descriptor.output_dim):
            raise ValueError(f"{path} does not match the rest of the dataset")
        batches.append(batch)

    config = INRConfig(
        input_dim=first_descriptor.input_dim,
        output_dim=first_descriptor.output_dim,
        num_layers=int(arch["layers"]), hidden_units=int(arch["hidden"]),
        fourier_embeddings=int(arch["fourier"]),
        frequency_scale=float(arch["freq_scale"]),
        activation_scale=float(arch["omega"]),
    )
    schedule = TrainingSchedule(
        epochs=int(schedule_opts["epochs"]),
        iters_per_epoch=int(schedule_opts["iters"]),
        first_epoch_iters=int(schedule_opts["first_iters"]),
        learning_rate=float(schedule_opts["lr"]),
        posterior_var_init=float(schedule_opts["var_init"]),
    )

    started = time.perf_counter()
    model, _ = learn_prior(batches, config, float(beta), schedule, seed,
                           jobs=args.jobs or 1)
    train_seconds = time.perf_counter() - started
    model.save(args.out)

    kl = model.weight_kl_bits
    manifest = {
        "command": ["train-prior"] + list(args.echo),
        "config": dataclasses.asdict(config),
        "schedule": dataclasses.asdict(schedule),
        "beta": float(beta),
        "seeds": SeedTree(seed).as_dict(),
        "timings": {"train_seconds": train_seconds},
        "metrics": {
            "param_count": param_count(config),
            "n_data": len(batches),
            "c_beta_bits": model.c_beta_bits,
            "weight_kl_bits": {
                "min": float(kl.min()), "mean": float(kl.mean()),
                "max": float(kl.max()),
            },
            "block_count_estimate": compute_block_count(model.c_beta_bits, 16.0),
        },
        "out": str(args.out),
    }
    manifest_path = _write_manifest(args.out, manifest)
    print(f"prior: {param_count(config)} parameters, "
          f"c_beta={model.c_beta_bits:.2f} bits, {len(batches)} data "
          f"-> {args.out} (manifest {manifest_path})")
    return 0


def _settings_from(options: dict) -> FineTuneSettings:
    fraction = options["batch_fraction"]
    lambda_init = options["lambda_init"]
    return FineTuneSettings(
        fit_iterations=int(options["fit_iters"]),
        inter_block_iterations=int(options["fine_tune_iters"]),
        lambda_init=None if lambda_init is None else float(lambda_init),
        lambda_step=float(options["lambda_step"]),
        adjust_period=int(options["adjust_period"]),
        buffer_bits=float(options["buffer_bits"]),
        learning_rate=float(options["lr"]),
        batch_fraction=None if fraction is None else float(fraction),
    )


def _compress_one(input_path, prior, options, seed, out_path):
    batch, descriptor = load_signal(input_path)
    if (descriptor.input_dim != prior.config.input_dim
            or descriptor.output_dim != prior.config.output_dim):
        raise ValueError(
            f"{input_path}: signal dimensions do not match the prior's architecture")
    settings = _settings_from(options)
    rec = RecSettings(t_bits=float(options["t"]))
    obj, reconstruction, report = compress(
        batch, descriptor, prior, kappa_bits=float(options["kappa"]),
        settings=settings, rec_settings=rec, seed=seed,
    )
    if out_path is not None:
        obj.save(out_path)
    return obj, reconstruction, report


def cmd_compress(args) -> int:
    file_config = _load_toml(args.config)
    options = _merge(args, file_config, _COMPRESS_DEFAULTS)
    seed = args.seed if args.seed is not None else int(file_config.get("seed", 0))
    inputs = [Path(p) for p in args.input]
    if args.out is not None and len(inputs) > 1:
        raise UsageError("--out only works with a single input; use --out-dir")
    if args.out is None and args.out_dir is None:
        raise UsageError("need --out or --out-dir")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    prior = PriorModel.load(args.prior)

    def out_path_for(path: Path) -> Path:
        if args.out is not None:
            return Path(args.out)
        return out_dir / (path.stem + ".cmb1")

    def run(path: Path):
        file_seed = derive_seed(seed, f"datum:{path.name}")
        out_path = out_path_for(path)
        obj, _, report = _compress_one(path, prior, options, file_seed, out_path)
        manifest = {
            "command": ["compress"] + list(args.echo),
            "input": str(path),
            "out": str(out_path),
            "prior": str(args.prior),
            "beta": prior.beta,
            "options": {k: options[k] for k in sorted(options)},
            "seed": seed,
            "seeds": report["seeds"],
            "n_blocks": report["n_blocks"],
            "delta_bits": report["delta_bits"],
            "timings": {
                "fit_seconds": report["fit_seconds"],
                "rec_finetune_seconds": report["rec_finetune_seconds"],
            },
            "metrics": report["metrics"],
        }
        _write_manifest(out_path, manifest)
        m = report["metrics"]
        print(f"{path.name}: {m['bits_total']} bits, "
              f"{m['bits_per_pixel_or_sample']:.4f} per unit, "
              f"psnr={m['psnr_db']:.3f} dB -> {out_path}")

    jobs = args.jobs or 1
    if jobs > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, inputs))
    else:
        for path in inputs:
            run(path)
    return 0


def cmd_decompress(args) -> int:
    prior = PriorModel.load(args.prior)
    obj = CompressedObject.load(args.input)
    started = time.perf_counter()
    reconstruction = decompress(obj, prior)
    decode_seconds = time.perf_counter() - started
    save_signal(reconstruction, obj.descriptor, args.out)
    manifest = {
        "command": ["decompress"] + list(args.echo),
        "input": str(args.input),
        "out": str(args.out),
        "prior": str(args.prior),
        "timings": {"decode_seconds": decode_seconds},
    }
    if args.reference:
        reference, _ = load_signal(args.reference)
        metrics = measure(obj, reference, reconstruction)
        manifest["metrics"] = metrics
        print(f"psnr_db={metrics['psnr_db']}")
    _write_manifest(args.out, manifest)
    print(f"decoded {args.input} -> {args.out} ({decode_seconds * 1e3:.1f} ms)")
    return 0


def cmd_rd_curve(args) -> int:
    file_config = _load_toml(args.config)
    options = _merge(args, file_config, _COMPRESS_DEFAULTS)
    seed = args.seed if args.seed is not None else int(file_config.get("seed", 0))
    inputs = [Path(p) for p in args.input]
    priors = [(p, PriorModel.load(p)) for p in args.priors]

    def run(task):
        input_path, prior_path, prior = task
        file_seed = derive_seed(seed, f"datum:{input_path.name}")
        try:
            started = time.perf_counter()
            obj, reconstruction, report = _compress_one(
                input_path, prior, options, file_seed, None)
            encode_seconds = time.perf_counter() - started
            started = time.perf_counter()
            decoded = decompress(obj, prior)
            decode_seconds = time.perf_counter() - started
            batch, _ = load_signal(input_path)
            metrics = measure(obj, batch, decoded)
            return {
                "datum": input_path.name, "beta": prior.beta,
                "bits": metrics["bits_total"],
                "bpp": metrics["bits_per_pixel_or_sample"],
                "psnr_db": metrics["psnr_db"],
                "encode_s": encode_seconds, "decode_s": decode_seconds,
            }
        except Exception as err:  # noqa: BLE001 - a bad run flags its row
            print(f"error: {input_path.name} @ {prior_path}: {err}", file=sys.stderr)
            return {"datum": input_path.name, "beta": prior.beta,
                    "bits": "", "bpp": "", "psnr_db": "",
                    "encode_s": "", "decode_s": ""}

    tasks = [(inp, prior_path, prior)
             for inp in inputs for prior_path, prior in priors]
    jobs = args.jobs or 1
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(task) for task in tasks]

    fieldnames = ["datum", "beta", "bits", "bpp", "psnr_db", "encode_s", "decode_s"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0 if all(row["bits"] != "" for row in rows) else 1


class UsageError(Exception):
    """Bad flag combination or unusable inputs; maps to exit code 2."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inrec",
        description="Overfit tiny coordinate networks and transmit posterior "
                    "samples at their KL cost.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train-prior", help="learn a shared weight prior")
    train.add_argument("--data", required=True, help="directory of training signals")
    train.add_argument("--out", required=True, help="prior model output path")
    train.add_argument("--beta", type=float, help="rate-distortion trade-off")
    train.add_argument("--kind", choices=["image", "audio"])
    train.add_argument("--layers", type=int)
    train.add_argument("--hidden", type=int)
    train.add_argument("--fourier", type=int)
    train.add_argument("--freq-scale", dest="freq_scale", type=float)
    train.add_argument("--omega", type=float)
    train.add_argument("--epochs", type=int)
    train.add_argument("--iters", type=int)
    train.add_argument("--first-iters", dest="first_iters", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--var-init", dest="var_init", type=float)
    train.set_defaults(func=cmd_train_prior)

    def add_compress_options(p):
        p.add_argument("--kappa", type=float, help="per-block bit budget")
        p.add_argument("--t", type=float, help="extra proposal bits per block")
        p.add_argument("--fit-iters", dest="fit_iters", type=int)
        p.add_argument("--fine-tune-iters", dest="fine_tune_iters", type=int)
        p.add_argument("--adjust-period", dest="adjust_period", type=int)
        p.add_argument("--lambda-init", dest="lambda_init", type=float,
                       help="starting rate multiplier (default: the prior's beta)")
        p.add_argument("--lambda-step", dest="lambda_step", type=float)
        p.add_argument("--buffer-bits", dest="buffer_bits", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-fraction", dest="batch_fraction", type=float)

    comp = sub.add_parser("compress", help="encode signals against a prior")
    comp.add_argument("--input", required=True, nargs="+")
    comp.add_argument("--prior", required=True)
    comp.add_argument("--out", help="output path (single input only)")
    comp.add_argument("--out-dir", dest="out_dir", help="output directory")
    add_compress_options(comp)
    comp.set_defaults(func=cmd_compress)

    dec = sub.add_parser("decompress", help="decode a compressed stream")
    dec.add_argument("--input", required=True)
    dec.add_argument("--prior", required=True)
    dec.add_argument("--out", required=True)
    dec.add_argument("--reference", help="original signal for PSNR reporting")
    dec.set_defaults(func=cmd_decompress)

    curve = sub.add_parser("rd-curve", help="rate-distortion sweep to CSV")
    curve.add_argument("--input", required=True, nargs="+")
    curve.add_argument("--priors", required=True, nargs="+")
    curve.add_argument("--out", required=True)
    add_compress_options(curve)
    curve.set_defaults(func=cmd_rd_curve)

    for p in (train, comp, dec, curve):
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", help="TOML options file (flags win)")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    args.echo = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
