"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure. Config files are flat "key = value" text with keys exactly matching
TrainConfig field names.
"""

import argparse
import sys
from dataclasses import fields as dataclass_fields
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data_io, generate_eval
from .checkpointing import Checkpoint, load_checkpoint, save_checkpoint
from .errors import DataError, NumericalError, UsageError
from .trainer import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path) -> TrainConfig:
    """Flat key = value config; unknown keys and unparsable values are usage
    errors naming the key."""
    spec = {f.name: f.type for f in dataclass_fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in spec:
            raise UsageError(f"config: unknown key '{key}'")
        try:
            values[key] = _convert(raw, spec[key], key)
        except ValueError as exc:
            raise UsageError(f"config: bad value for '{key}': {raw!r}") from exc
    return TrainConfig(**values)


def _convert(raw: str, annotation, key: str):
    text = str(annotation)
    if annotation is bool or text == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(raw)
    if annotation is int or text == "int":
        return int(raw)
    if annotation is float or text == "float":
        return float(raw)
    if "tuple" in text:
        raw = raw.strip("()[] ")
        if not raw:
            return ()
        return tuple(int(v) for v in raw.replace(",", " ").split())
    raise UsageError(f"config: key '{key}' has unsupported type {annotation}")


def _sniff_and_load(path, normalize: bool, limit: int | None = None) -> data_io.DatasetHandle:
    with Path(path).open("rb") as fh:
        head = fh.read(4)
    if head == b"\x00\x00\x08\x03":
        return data_io.load_idx(path, limit=limit)
    return data_io.load_csv(path, normalize=normalize)


def _write_rows(path, rows, fmt: str):
    if fmt == "bin":
        data_io.save_samples(path, rows)
    else:
        data_io.write_matrix_csv(path, rows)


def _cmd_train(args) -> None:
    cfg = parse_config_file(args.config)
    if args.no_robust:
        cfg = replace(cfg, robust=False)
    if args.iterate_weights is not None:
        cfg = replace(cfg, reweight_iterations=args.iterate_weights)
    handle = _sniff_and_load(args.data, normalize=args.normalize, limit=args.limit)
    data = handle.rows
    subset_indices = None
    if args.subset is not None and args.subset < data.shape[0]:
        rng = np.random.default_rng(cfg.seed)
        subset_indices = np.sort(rng.choice(data.shape[0], size=args.subset, replace=False))
        data = data[subset_indices]
    result = train(data, cfg)
    if subset_indices is not None:
        result.report.subset_indices = subset_indices
    save_checkpoint(args.out, Checkpoint.from_result(result))
    if args.report:
        data_io.write_report_csv(args.report, result.report)
        if subset_indices is not None:
            data_io.write_matrix_csv(
                f"{args.report}.indices.csv", subset_indices.reshape(-1, 1).astype(float)
            )
    last = result.report.epoch_losses[-1].total if result.report.epoch_losses else float("nan")
    print(f"trained {cfg.epochs} epochs; final loss = {last:.6g}; checkpoint -> {args.out}")


def _cmd_denoise(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    handle = _sniff_and_load(args.data, normalize=False, limit=args.limit)
    out = generate_eval.denoise(
        handle.rows, ckpt.model, ckpt.params, u=ckpt.interconnection
    )
    _write_rows(args.out, out, args.format)
    print(f"denoised {handle.rows.shape[0]} rows -> {args.out}")


def _cmd_generate(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    g = generate_eval.fit_latent_gaussian(
        ckpt.model, ckpt.weights, robust=args.robust_fit, diag=args.diag
    )
    rows = generate_eval.sample_and_decode(
        g, args.n, ckpt.model, ckpt.params, seed=args.seed, u=ckpt.interconnection
    )
    _write_rows(args.out, rows, args.format)
    print(f"generated {args.n} samples -> {args.out}")


def _cmd_traverse(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    rows = generate_eval.traverse(
        ckpt.model, ckpt.params, dim=args.dim, steps=args.steps,
        span_sd=args.span_sd, u=ckpt.interconnection,
    )
    _write_rows(args.out, rows, args.format)
    print(f"traversed latent dim {args.dim} in {args.steps} steps -> {args.out}")


def _cmd_inspect_weights(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    data_io.write_weights_csv(args.out, ckpt.weights)
    flagged = int(np.sum(ckpt.weights.weights != 1.0))
    print(f"{flagged}/{len(ckpt.weights)} samples down-weighted; csv -> {args.out}")


def _cmd_contaminate(args) -> None:
    handle = _sniff_and_load(args.data, normalize=args.normalize, limit=args.limit)
    noisy, idx = data_io.contaminate(
        handle, fraction=args.fraction, noise_mean=args.noise_mean,
        noise_sd=args.noise_sd, seed=args.seed,
    )
    _write_rows(args.out, noisy.rows, args.format)
    if args.indices_out:
        data_io.write_matrix_csv(args.indices_out, idx.reshape(-1, 1).astype(float))
    print(f"contaminated {idx.shape[0]}/{handle.n} rows -> {args.out}")


def _cmd_eval(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    clean = _sniff_and_load(args.clean, normalize=False, limit=args.limit)
    noisy = _sniff_and_load(args.noisy, normalize=False, limit=args.limit)
    report = generate_eval.evaluate_denoising(
        clean.rows, noisy.rows, ckpt.model, ckpt.params, ckpt.weights,
        u=ckpt.interconnection,
    )
    if args.hist_out:
        diag = generate_eval.latent_diagnostics(ckpt.model, ckpt.weights)
        data_io.write_histogram_csv(args.hist_out, diag)
    print(f"mae = {report.mae!r}")
    print("skewness = " + ",".join(repr(float(v)) for v in report.latent_skewness))
    print(f"fraction_downweighted = {report.fraction_downweighted!r}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="robust-rkm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train maps and latents, write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-robust", action="store_true",
                   help="skip the reweighting step; all weights stay 1")
    p.add_argument("--iterate-weights", type=int, default=None, metavar="K",
                   help="repeat the reweighting step K times")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--subset", type=int, default=None,
                   help="train on a random subset of this size (indices land "
                        "next to --report)")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("denoise", help="project data onto the latent space and back")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("generate", help="sample the latent Gaussian and decode")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--diag", action="store_true")
    p.add_argument("--robust-fit", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("traverse", help="decode a linear sweep of one latent dim")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--out", required=True)
    p.add_argument("--span-sd", type=float, default=2.0)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=_cmd_traverse)

    p = sub.add_parser("inspect-weights", help="dump distances/weights as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inspect_weights)

    p = sub.add_parser("contaminate", help="plant Gaussian-noise outliers")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--noise-mean", type=float, default=0.5)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--indices-out", default=None)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=_cmd_contaminate)

    p = sub.add_parser("eval", help="denoise a noisy set and score against the clean one")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--hist-out", default=None)
    p.set_defaults(func=_cmd_eval)

    return parser


def cli(argv) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
        args.func(args)
        return 0
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
