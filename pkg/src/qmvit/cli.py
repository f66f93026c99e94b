"""``qmvit`` command line: train, eval, predict, make-toyset, export-circuit.

Exit codes: 0 success, 2 I/O or data problems, 3 bad configuration, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import data, train as training
from .checkpoint import CheckpointError
from .config import PRESETS, ConfigError, RunConfig, load_config
from .pqc import full_circuit
from .qattention import QMViTConfig
from .qsim import dump_circuit
from .quanvolution import QuanvSpec

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("qmvit")


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    g = p.add_argument_group("overrides", "any RunConfig field, e.g. --epochs 30 --lr 0.01")
    for f in fields(RunConfig):
        flags = sorted({f"--{f.name}", f"--{f.name.replace('_', '-')}"})
        g.add_argument(*flags, dest=f.name, default=None, metavar=f.name.upper())


def _config(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return load_config(args.config, args.preset, overrides)


def cmd_train(args) -> int:
    cfg = _config(args)
    if not cfg.manifest:
        raise ConfigError("no manifest given (use --manifest)")
    res = training.train(cfg, cfg.out_dir)
    print(json.dumps({"out_dir": cfg.out_dir, "train_accuracy": res.train_accuracy,
                      "epochs": len(res.curve)}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    runner, edible, meta = training.runner_from_checkpoint(args.checkpoint)
    cfg = runner.cfg
    manifest = args.manifest or cfg.manifest
    ds = training.load_dataset(manifest, cfg.image_size, runner.n_classes)
    if args.split != "all":
        ds = training.splits(ds, cfg)[args.split]
        if len(ds) == 0:
            raise data.DataError(f"split {args.split!r} is empty")
    edible = {**ds.edible, **edible}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with threadpool_limits(limits=1):
        report = training.write_eval(out, runner, ds, edible, extra={"evaluated_split": args.split})
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    runner, edible, _ = training.runner_from_checkpoint(args.checkpoint)
    size = runner.cfg.image_size
    rows = []
    with threadpool_limits(limits=1):
        for path in args.images:
            try:
                img = data.resize(data.read_ppm(path), (size, size))
            except OSError as exc:
                raise data.DataError(f"cannot read image {path}: {exc}") from exc
            probs = runner.probabilities(img[None])[0]
            cid = int(np.argmax(probs))
            rows.append({"image": str(path), "class_id": cid, "probs": [float(p) for p in probs],
                         "edible": bool(edible.get(cid, False))})
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_make_toyset(args) -> int:
    manifest = data.make_toyset(args.out, args.seed, args.classes, args.per_class, args.size)
    print(manifest)
    return EXIT_OK


def export_circuit(cfg: RunConfig, x=None, theta=None):
    """Loader plus ansatz for the configured quantum block; angles default to zero."""
    if cfg.model == "qmvit":
        q = QMViTConfig(n_qubits=cfg.n_qubits, n_layers=cfg.n_layers, entangler=cfg.entangler,
                        loader_axis=cfg.loader_axis.upper(), reupload=cfg.reupload)
        spec, enc = q.ansatz, q.loader
    elif cfg.model == "qnn":
        qs = QuanvSpec(cfg.quanv_k, cfg.quanv_stride, cfg.n_layers, cfg.entangler)
        spec, enc = qs.ansatz, qs.encoder
    else:
        raise ConfigError("the classical vit model has no circuit to export")
    n = spec.n_qubits
    x = np.zeros(n) if x is None else np.asarray(x, dtype=np.float64)
    theta = np.zeros(spec.n_params) if theta is None else np.asarray(theta, dtype=np.float64)
    if x.size != n or theta.size != spec.n_params:
        raise ConfigError(f"need {n} input angles and {spec.n_params} circuit parameters")
    return full_circuit(x, spec, theta, enc)


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_export_circuit(args) -> int:
    theta = None
    if args.checkpoint:
        runner, _, _ = training.runner_from_checkpoint(args.checkpoint)
        cfg = runner.cfg
        name = args.param or ("quanv.theta" if cfg.model == "qnn" else "blocks.0.head0.theta_q")
        if name not in runner.params:
            raise ConfigError(f"checkpoint has no parameter {name!r}")
        theta = runner.params[name]
    else:
        cfg = _config(args)
    x = _floats(args.x) if args.x else None
    text = dump_circuit(export_circuit(cfg, x, theta))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmvit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train a model and write a run directory")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", help="defaults to the manifest recorded in the checkpoint")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all",
                   help="rebuild the training-time split with the checkpoint's seed")
    p.add_argument("--out", default="eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify PPM images, one JSON line each")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("make-toyset", help="write the synthetic shapes dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=64)
    p.add_argument("--size", type=int, default=16)
    p.set_defaults(func=cmd_make_toyset)

    p = sub.add_parser("export-circuit", help="print the loader + ansatz gate listing")
    _add_config_args(p)
    p.add_argument("--checkpoint", help="take circuit parameters from a trained model")
    p.add_argument("--param", help="parameter name inside the checkpoint")
    p.add_argument("--x", help="comma-separated loader angles (default zeros)")
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_export_circuit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except training.NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (data.DataError, CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
