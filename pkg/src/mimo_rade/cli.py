"""Command-line entry point.

Exit status: 0 on success, 2 on configuration or usage errors, 3 when
``--strict`` is given and some cell was refused by the brute-force budget.

Precedence for every setting: command-line flag, then config file, then the
built-in default. The seed falls back to ``MIMO_RADE_SEED`` before the default.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .channel import make_constellation_psk, precompute, sample_message, transmit
from .decoders import (
    BruteForceBudgetError,
    DecoderDegenerateError,
    Rade1Params,
    Rade2Params,
    brute,
    nnx,
    rade1_all,
    rade2_all,
    supercharge,
)
from .harness import ConfigError, ExperimentConfig, eval_count
from .linalg_core import SeededRng, sample_complex_normal
from .neighbors import build_base_neighbor_list, save_neighbor_list

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
SEED_ENV = "MIMO_RADE_SEED"

EXPERIMENTS = {
    "experiment1": harness.run_experiment1,
    "experiment2": harness.run_experiment2,
    "experiment3": harness.run_experiment3,
    "experiment4": harness.run_experiment4,
    "experiment5": harness.run_experiment5,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(path) -> ExperimentConfig:
    """Read a JSON config; unknown keys and invalid values raise :class:`ConfigError`."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<parse>", f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data)


def _seed_from_env() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError("seed", f"{SEED_ENV}={raw!r} is not an integer") from None


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV}, then {harness.DEFAULT_SEED})")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=_int_list, dest="n_list", help="comma-separated dimensions")
    p.add_argument("--sigma", type=_float_list, dest="sigma_list", help="comma-separated noise deviations")
    p.add_argument("--matrices", type=int, dest="matrices_per_n")
    p.add_argument("--messages", type=int, dest="messages_per_matrix")
    p.add_argument("--large-n-messages", type=int, dest="large_n_messages")
    p.add_argument("--brute-force-mode", choices=harness.BRUTE_MODES, dest="brute_force_mode")
    p.add_argument("--brute-budget", type=int, dest="brute_budget")
    p.add_argument("--k", type=_str_list, dest="nnx_k", help='nnx candidate counts, e.g. "1,2n+1,2n^2+1"')
    p.add_argument("--t", type=_int_list, dest="t_list", help="comma-separated search counts")
    p.add_argument("--k1", dest="k1", help='supercharge neighbourhood, e.g. "2n^2" (0 disables)')
    p.add_argument("--no-supercharge", action="store_false", dest="supercharge", default=None)
    p.add_argument("--paired", action="store_true", dest="paired_supercharge", default=None,
                   help="supercharge the bare search outcome instead of an independent search")
    p.add_argument("--chi-stop", type=float, dest="chi_stop")
    p.add_argument("--neighbor-cache", dest="neighbor_cache_dir")
    p.add_argument("--workers", type=int, dest="workers",
                   help="worker processes (default: available CPUs)")
    p.add_argument("--strict", action="store_true", help="exit 3 if any cell was skipped by the budget")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mimo-rade", description="Randomized MIMO decoders and experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _add_common(p)
        _add_experiment_flags(p)
    p = sub.add_parser("observation2")
    _add_common(p)
    p.add_argument("--n", type=_int_list, dest="n_list")
    p.add_argument("--num-matrices", type=int, default=1000)

    p = sub.add_parser("decode", help="transmit one random message and decode it")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--scheme", choices=("brute", "nnx", "rade1", "rade2"), default="brute")
    p.add_argument("--k", default="1", help="nnx candidate count")
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--k1", default="0")
    p.add_argument("--chi-stop", type=float, default=1e-3)

    p = sub.add_parser("cache-neighbors", help="build and store a base neighbour list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--k", required=True, help='list length, e.g. "n^5"')
    p.add_argument("--output", "-o", required=True)
    return parser


def _resolve_seed(args, from_config: int | None) -> int:
    if args.seed is not None:
        return args.seed
    env = _seed_from_env()
    if env is not None:
        return env
    return from_config if from_config is not None else harness.DEFAULT_SEED


def _experiment_config(args) -> ExperimentConfig:
    data = {}
    seed_in_file = None
    if args.config:
        data = load_config(args.config).to_dict()
        seed_in_file = data["master_seed"]
    for name in ("n_list", "sigma_list", "matrices_per_n", "messages_per_matrix", "large_n_messages",
                 "brute_force_mode", "brute_budget", "nnx_k", "t_list", "k1", "supercharge",
                 "paired_supercharge", "chi_stop", "neighbor_cache_dir", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if "workers" not in data:
        data["workers"] = harness.default_workers()
    data["master_seed"] = _resolve_seed(args, seed_in_file)
    if data["master_seed"] < 0:
        raise ConfigError("seed", "must be non-negative")
    return ExperimentConfig.from_dict(data)


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError("output", f"cannot write {output}: {exc.strerror}") from None


def _render(report: harness.ExperimentReport, fmt: str) -> str:
    if fmt == "csv":
        return report.to_csv()
    if fmt == "table":
        return report.to_table()
    return report.to_json()


def _decode(args) -> int:
    seed = _resolve_seed(args, None)
    if args.n < 2 or args.n > 32:
        raise ConfigError("n", "must lie in [2, 32]")
    if args.sigma < 0:
        raise ConfigError("sigma", "must be >= 0")
    root = SeededRng(seed)
    constellation = make_constellation_psk(args.m)
    model = precompute(sample_complex_normal(root.substream("matrix", args.n, 0), (args.n, args.n)),
                       args.sigma, constellation)
    x = sample_message(constellation, args.n, root.substream("message", args.n, 0, args.sigma))
    y = transmit(model, x, root.substream("noise", args.n, 0, args.sigma))
    rng = root.substream("decoder", args.scheme)
    k1 = eval_count(args.k1, args.n)
    trace = None
    if args.scheme == "brute":
        out = brute(model, y)
    elif args.scheme == "nnx":
        k = eval_count(args.k, args.n)
        base = build_base_neighbor_list(constellation, args.n, k - 1) if k > 1 else None
        out = nnx(model, y, k, base)[1]
    elif args.scheme == "rade1":
        out, trace = rade1_all(model, y, Rade1Params.fixed(args.iters), rng)
    else:
        out, trace = rade2_all(model, y, Rade2Params.fixed(args.iters, args.chi_stop), rng)
    if k1 > 0 and args.scheme != "brute":
        out = supercharge(model, y, k1, build_base_neighbor_list(constellation, args.n, k1), out)
    payload = {
        "seed": seed,
        "n": args.n,
        "m": args.m,
        "sigma": args.sigma,
        "scheme": args.scheme,
        "transmitted": list(x.symbol_indices),
        "decoded": list(out.x.symbol_indices),
        "match": out.x == x,
        "r": out.r if np.isfinite(out.r) else None,
        "chi": out.chi,
        "trace": None if trace is None else {
            "iterations_used": trace.iterations_used,
            "pairs_skipped": trace.pairs_skipped,
            "fallback_used": trace.fallback_used,
        },
    }
    if args.format == "json":
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    else:
        text = "\n".join(f"{k}: {payload[k]}" for k in sorted(payload)) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def _cache_neighbors(args) -> int:
    k = eval_count(args.k, args.n)
    base = build_base_neighbor_list(make_constellation_psk(args.m), args.n, k)
    target = Path(args.output)
    if target.is_dir():
        target = target / f"neighbors_m{args.m}_n{args.n}_k{k}.bin"
    try:
        save_neighbor_list(base, target)
    except OSError as exc:
        raise ConfigError("output", f"cannot write {target}: {exc.strerror}") from None
    print(f"wrote {base.k} neighbours to {target}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "decode":
            return _decode(args)
        if args.command == "cache-neighbors":
            return _cache_neighbors(args)
        if args.command == "observation2":
            data = {"n_list": args.n_list or [6, 7, 8]}
            if args.config:
                data = load_config(args.config).to_dict() | ({"n_list": args.n_list} if args.n_list else {})
            data["master_seed"] = _resolve_seed(args, data.get("master_seed") if args.config else None)
            if args.num_matrices < 1:
                raise ConfigError("num_matrices", "must be >= 1")
            report = harness.observation2_report(ExperimentConfig.from_dict(data), args.num_matrices)
            _emit(_render(report, args.format), args.output)
            return EXIT_OK
        cfg = _experiment_config(args)
        report = EXPERIMENTS[args.command](cfg)
        _emit(_render(report, args.format), args.output)
        if args.strict and report.skipped:
            for cell in report.skipped:
                print(f"skipped n={cell.n} sigma={cell.sigma:g} {cell.scheme}: {cell.reason}", file=sys.stderr)
            return EXIT_BUDGET
        return EXIT_OK
    except (UsageError, ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"mimo-rade: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, BruteForceBudgetError, DecoderDegenerateError) as exc:
        print(f"mimo-rade: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
