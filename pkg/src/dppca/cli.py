"""Command-line interface: ``dppca <subcommand> ...``.

Exit codes: 0 on success, 2 when some experiment trials recorded an error,
1 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bingham import SamplerError
from .bounds import (
    BoundQuery,
    ConstructionError,
    construct_packing,
    general_lower_bound,
    max_coherence,
    modsulq_lower_bound,
    modsulq_utility_bound,
    ppca_sample_bound,
)
from .data import DataError, SYNTHETIC_SPECTRUM, load_dataset, read_dataset_csv, synthetic_gaussian
from .experiments import (
    KINDS,
    ConfigError,
    ExperimentConfig,
    preset,
    resolve_output_dir,
    run_experiment,
    write_result,
)
from .linalg import ParameterError
from .mechanisms import (
    PrivacyParams,
    SamplerConfig,
    run_exact,
    run_modsulq,
    run_ppca,
)

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _add_data_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file; with --schema it is preprocessed, "
                     "otherwise rows are records of an already normalized matrix")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="use N synthetic Gaussian records with the default 10-d spectrum")
    p.add_argument("--schema", help="JSON schema sidecar for --data")
    p.add_argument("--data-seed", type=int, default=0, help="seed for --synthetic")
    p.add_argument("--no-clip", action="store_true",
                   help="keep raw synthetic draws (data is then flagged unbounded)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--output", "-o", help="write JSON here instead of stdout")


def _load(args):
    if args.synthetic is not None:
        return synthetic_gaussian(args.synthetic, SYNTHETIC_SPECTRUM, seed=args.data_seed,
                                  clip=not args.no_clip)
    if args.schema:
        data, _ = load_dataset(args.data, args.schema)
        return data
    return read_dataset_csv(args.data)


def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_pca(args) -> int:
    out = run_exact(_load(args), args.k)
    _emit(out.to_json(), args.output)
    return EXIT_OK


def cmd_modsulq(args) -> int:
    out = run_modsulq(_load(args), args.k, PrivacyParams(args.epsilon, args.delta), args.seed)
    _emit(out.to_json(), args.output)
    return EXIT_OK


def cmd_ppca(args) -> int:
    sampler = SamplerConfig(iterations=args.iterations)
    out = run_ppca(_load(args), args.k, PrivacyParams(args.epsilon), args.seed, sampler)
    _emit(out.to_json(), args.output)
    return EXIT_OK


BOUND_FIELDS = ("bound_kind", "d", "epsilon", "n", "delta", "rho", "gap", "eta", "lambda1",
                "value", "phi", "flag")


def _bound_rows(args):
    for d in args.d:
        for eps in args.epsilon:
            if args.kind == "utility":
                for n in args.n:
                    r = modsulq_utility_bound(d, n, eps, args.delta)
                    yield {"d": d, "epsilon": eps, "n": n, "delta": args.delta,
                           "value": r.bound, "phi": r.phi,
                           "flag": "degenerate" if r.degenerate else ""}
                continue
            q = BoundQuery(d=d, epsilon=eps, rho=args.rho, gap=args.gap, delta=args.delta,
                           eta=args.eta, lambda1=args.lambda1)
            row = {"d": d, "epsilon": eps, "delta": args.delta, "rho": args.rho,
                   "gap": args.gap, "eta": args.eta, "lambda1": args.lambda1, "flag": ""}
            if args.kind == "ppca":
                row["value"] = ppca_sample_bound(q)
            elif args.kind == "general":
                res = general_lower_bound(q)
                row.update(value=res.threshold, phi=res.phi,
                           flag="" if res.valid else "preconditions-fail")
            else:
                row["value"] = modsulq_lower_bound(q, args.c, args.c_prime)
            yield row


def cmd_bounds(args) -> int:
    if args.n is None:
        args.n = [int(round(x)) for x in np.logspace(2, 8, 25)]
    rows = list(_bound_rows(args))
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=BOUND_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            r["bound_kind"] = args.kind
            writer.writerow({k: ("" if r.get(k) is None else r.get(k, "")) for k in BOUND_FIELDS})
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def cmd_pack(args) -> int:
    try:
        packing = construct_packing(args.d, args.phi, args.target, args.seed,
                                    max_attempts=args.max_attempts)
    except ConstructionError as exc:
        print(f"error: {exc} (best size {exc.best_size})", file=sys.stderr)
        return EXIT_PARTIAL
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(packing.d)])
        for v in packing.vectors:
            writer.writerow([repr(float(x)) for x in v])
    finally:
        if args.output:
            fh.close()
    print(f"size={len(packing)} max_coherence={max_coherence(packing.vectors):.6g} "
          f"method={packing.method}", file=sys.stderr)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    elif args.kind:
        cfg = ExperimentConfig(kind=args.kind)
    else:
        raise ConfigError("experiment needs --config, --preset or --kind")
    overrides = {
        "kind": args.kind, "experiment_id": args.experiment_id, "k": args.k,
        "epsilons": args.epsilons, "delta": args.delta, "n_grid": args.n_grid,
        "master_seed": args.seed, "output_dir": args.output_dir, "workers": args.workers,
        "traces": args.traces, "subsample_repeats": args.subsample_repeats,
        "mechanisms": args.mechanisms,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.trials:
        for item in args.trials:
            mech, _, count = item.partition("=")
            cfg.trials[mech] = int(count)
    if args.iterations is not None:
        cfg.sampler = dict(cfg.sampler, iterations=args.iterations)
    if args.data:
        cfg.dataset = {"path": args.data, "schema": args.schema}
    return cfg.validate()


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    result = run_experiment(cfg)
    paths = write_result(result, resolve_output_dir(cfg), cfg.experiment_id)
    for name, path in paths.items():
        print(f"{name}: {path}")
    if result.n_errors:
        print(f"{result.n_errors} trial(s) recorded errors", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dppca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pca", help="non-private top-k subspace")
    _add_data_args(p)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("modsulq", help="input-perturbation (epsilon, delta)-DP PCA")
    _add_data_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_modsulq)

    p = sub.add_parser("ppca", help="exponential-mechanism epsilon-DP PCA")
    _add_data_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--iterations", type=int, default=SamplerConfig().iterations)
    p.set_defaults(func=cmd_ppca)

    p = sub.add_parser("bounds", help="sample-complexity and utility bounds as CSV")
    p.add_argument("--kind", choices=("utility", "ppca", "general", "modsulq-lower"),
                   default="utility")
    p.add_argument("--d", type=_ints, required=True, help="comma-separated dimensions")
    p.add_argument("--epsilon", type=_floats, required=True)
    p.add_argument("--n", type=_ints, help="comma-separated n grid (default 10^2..10^8)")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--gap", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--c-prime", type=float, default=1.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("pack", help="random packing of unit vectors")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-attempts", type=int, default=100)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("experiment", help="run a sweep and write CSV/JSON results")
    p.add_argument("--config", help="full JSON ExperimentConfig")
    p.add_argument("--preset", choices=("utility-vs-epsilon", "utility-vs-n", "burnin",
                                        "bounds-figure"))
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--experiment-id")
    p.add_argument("--k", type=int)
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--delta", type=float)
    p.add_argument("--n-grid", type=_ints)
    p.add_argument("--mechanisms", type=lambda s: s.split(","))
    p.add_argument("--trials", nargs="*", metavar="MECH=COUNT")
    p.add_argument("--traces", type=int)
    p.add_argument("--subsample-repeats", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--output-dir", help="defaults to $DPPCA_OUTPUT_DIR or ./results")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, DataError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplerError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
