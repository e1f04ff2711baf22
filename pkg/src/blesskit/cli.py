"""Command line interface: ``blesskit {scores,sample,train,predict,bench,learn}``.

Settings are resolved as defaults < ``--config`` JSON file < explicit flags.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import BlessKitError, InvalidArgumentError
from .experiments import (
    ALGORITHMS,
    ExperimentConfig,
    require_lambda,
    run_learning_experiment,
    run_runtime_experiment,
    run_scores_experiment,
    sample_dictionary,
    thread_count,
)
from .falkon import FalkonModel, falkon_train, predict
from .kernels import FAMILIES, KernelSpec
from .leverage import Dictionary
from .reports import dumps, read_json, render_report

# flag dest -> ExperimentConfig field
_FIELDS = {
    "data": "data",
    "format": "format",
    "label_column": "label_column",
    "synthetic": "synthetic",
    "n": "n",
    "dim": "dim",
    "data_seed": "data_seed",
    "kernel": "kernel",
    "sigma": "sigma",
    "lam": "lam",
    "lambda_bless": "lambda_bless",
    "lambda_falkon": "lambda_falkon",
    "algo": "algorithm",
    "q": "q",
    "q1": "q1",
    "q2": "q2",
    "t_accuracy": "accuracy_t",
    "size": "size",
    "first_pass": "first_pass",
    "iters": "iters",
    "seeds": "seeds",
    "split": "split",
    "n_grid": "n_grid",
    "algos": "algorithms",
    "repeats": "repeats",
    "oracle_cap": "oracle_cap",
}


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    g = p.add_argument_group("data")
    g.add_argument("--data", default=S, help="dataset path")
    g.add_argument("--format", choices=("csv", "libsvm"), default=S)
    g.add_argument("--label-column", type=int, default=S, help="CSV label column (default 0)")
    g.add_argument("--synthetic", choices=("gaussian", "blobs", "sectors"), default=S,
                   help="generate data instead of reading --data")
    g.add_argument("--n", type=int, default=S, help="synthetic sample size")
    g.add_argument("--dim", type=int, default=S, help="synthetic dimension")
    g.add_argument("--data-seed", type=int, default=S)
    g = p.add_argument_group("model")
    g.add_argument("--kernel", choices=FAMILIES, default=S)
    g.add_argument("--sigma", type=float, default=S)
    g.add_argument("--lambda", dest="lam", type=float, default=S)
    g.add_argument("--lambda-bless", type=float, default=S)
    g.add_argument("--lambda-falkon", type=float, default=S)
    g.add_argument("--algo", choices=ALGORITHMS, default=S)
    g.add_argument("--q", type=float, default=S)
    g.add_argument("--q1", type=float, default=S)
    g.add_argument("--q2", type=float, default=S)
    g.add_argument("--t-accuracy", type=float, default=S)
    g.add_argument("--size", type=int, default=S, help="dictionary size for baseline samplers")
    g.add_argument("--first-pass", type=int, default=S, help="Two-Pass first-stage size")
    g.add_argument("--iters", type=int, default=S, help="CG iterations")
    g.add_argument("--seeds", "--seed", dest="seeds", type=_int_list, default=S,
                   help="seed or comma-separated seeds")
    g.add_argument("--split", type=float, default=S, help="test fraction")
    g.add_argument("--oracle-cap", type=int, default=S)
    g = p.add_argument_group("output")
    g.add_argument("--config", help="JSON file with configuration values")
    g.add_argument("--out", help="output path (default: stdout)")
    g.add_argument("--out-format", choices=("json", "csv"), default="json")
    g.add_argument("--timings", action="store_true", help="include wall-clock fields")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blesskit", description="Leverage score sampling and Nystrom kernel ridge regression."
    )
    parser.add_argument("--version", action="version", version=f"blesskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scores", help="approximate vs exact leverage scores (R-ACC)")
    _add_common(p)
    p.set_defaults(handler=cmd_scores)

    p = sub.add_parser("sample", help="sample a dictionary and write it as JSON")
    _add_common(p)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("train", help="train FALKON on a dictionary")
    _add_common(p)
    p.add_argument("--dict", dest="dict_path", help="dictionary JSON from `sample`")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="evaluate a trained model")
    _add_common(p)
    p.add_argument("--model", required=True, help="model JSON from `train`")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("bench", help="runtime of samplers over an n grid")
    _add_common(p)
    p.add_argument("--n-grid", type=_int_list, default=argparse.SUPPRESS)
    p.add_argument("--algos", type=_str_list, default=argparse.SUPPRESS)
    p.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("learn", help="learning curves: BLESS centers vs uniform centers")
    _add_common(p)
    p.set_defaults(handler=cmd_learn)
    return parser


def resolve_config(args) -> ExperimentConfig:
    base = ExperimentConfig.from_dict(read_json(args.config)) if args.config else ExperimentConfig()
    values = asdict(base)
    for dest, name in _FIELDS.items():
        if hasattr(args, dest):
            values[name] = getattr(args, dest)
    return ExperimentConfig(**values).resolved()


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit(report, args) -> None:
    _write(render_report(report, args.out_format, timings=args.timings), args.out)


def cmd_scores(args) -> int:
    _emit(run_scores_experiment(resolve_config(args)), args)
    return 0


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    args.timings = True  # wall times are the content of this report
    _emit(run_runtime_experiment(cfg), args)
    return 0


def cmd_learn(args) -> int:
    _emit(run_learning_experiment(resolve_config(args)), args)
    return 0


def cmd_sample(args) -> int:
    cfg = resolve_config(args)
    data = cfg.load()
    spec = cfg.kernel_spec(data)
    lam = require_lambda(cfg.lambda_bless)
    dictionary, path = sample_dictionary(cfg, data, spec, lam, cfg.seeds[0])
    doc = {
        "kind": "dictionary",
        "version": __version__,
        "config": cfg.to_dict(),
        "kernel": spec.to_dict(),
        "dictionary": dictionary.to_dict(),
        "path": None if path is None else path.to_dict(args.timings),
    }
    _write(dumps(doc), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data = cfg.load()
    if args.dict_path:
        doc = read_json(args.dict_path)
        if doc.get("kind") != "dictionary":
            raise InvalidArgumentError(f"{args.dict_path} is not a dictionary file")
        spec = KernelSpec.from_dict(doc["kernel"])
        dictionary = Dictionary.from_dict(doc["dictionary"])
    else:
        spec = cfg.kernel_spec(data)
        lam_b = require_lambda(cfg.lambda_bless, "lambda_bless")
        dictionary, _ = sample_dictionary(cfg, data, spec, lam_b, cfg.seeds[0])
    lam_f = require_lambda(cfg.lambda_falkon, "lambda_falkon")
    model = falkon_train(data, spec, dictionary, lam_f, cfg.iters)
    doc = {
        "kind": "model",
        "version": __version__,
        "config": cfg.to_dict(),
        "model": model.to_dict(),
        "residual_norms": model.residual_norms,
    }
    _write(dumps(doc), args.out)
    return 0


def cmd_predict(args) -> int:
    cfg = resolve_config(args)
    doc = read_json(args.model)
    if doc.get("kind") != "model":
        raise InvalidArgumentError(f"{args.model} is not a model file")
    model = FalkonModel.from_dict(doc["model"])
    values = predict(model, cfg.load().points)
    if args.out_format == "json":
        text = dumps({"kind": "predictions", "version": __version__, "predictions": values.tolist()})
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prediction"])
        w.writerows([repr(float(v))] for v in values)
        text = buf.getvalue()
    _write(text, args.out)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=thread_count()):
            return args.handler(args)
    except BlessKitError as exc:
        print(f"blesskit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"blesskit: error: {exc}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as exc:
        print(f"blesskit: numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
