"""Command-line entry point: ``mallowsmix <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .permutations import PermutationError


def _load_json(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return data


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def cmd_sample(args) -> int:
    from .mixture import load_mixture, sample_mixture_batch
    from .permutations import write_rankings

    if args.count < 1:
        raise ValueError("--count must be >= 1")
    mix = load_mixture(args.model)
    orders = sample_mixture_batch(mix, args.count, np.random.default_rng(args.seed))
    write_rankings(args.out, orders)
    return 0


def cmd_learn(args) -> int:
    from .permutations import read_rankings
    from .spectral import LearnerConfig, learn

    config = LearnerConfig.from_dict(_load_json(args.config))
    result = learn(read_rankings(args.rankings), config)
    _dump_json(result.to_json_dict(), args.out)
    return 0


EM_OPTIONS = ("max_iters", "tol", "seed")


def cmd_em(args) -> int:
    from .em import MAX_ITERS, TOL, em_learn
    from .permutations import read_rankings
    from .spectral import ConfigError

    opts = _load_json(args.config)
    unknown = set(opts) - set(EM_OPTIONS)
    if unknown:
        raise ConfigError(f"unknown em options: {sorted(unknown)}")
    result = em_learn(read_rankings(args.rankings), max_iters=int(opts.get("max_iters", MAX_ITERS)),
                      tol=float(opts.get("tol", TOL)), rng=np.random.default_rng(opts.get("seed", 0)))
    _dump_json(result.to_json_dict(), args.out)
    return 0


def cmd_experiment(args) -> int:
    from .harness import ExperimentConfig, run_experiment, write_results

    opts = _load_json(args.config)
    if args.samples is not None:
        opts["sample_count"] = args.samples
    if args.workers is not None:
        opts["workers"] = args.workers
    config = ExperimentConfig.from_dict(opts)

    def progress(rows):
        for t in rows:
            print(f"d={t.distance} trial={t.trial} {t.learner}: {'ok' if t.success else 'miss'} "
                  f"({t.path}, {t.seconds:.1f}s)", file=sys.stderr, flush=True)

    result = run_experiment(config, progress=None if args.quiet else progress)
    write_results(result, args.out_dir)
    for row in result.summary():
        print(f"d={row['distance']:>2} {row['learner']:<8} success={row['success_rate']:.2f}")
    return 0


def cmd_verify(args) -> int:
    from .verify import verify_suite

    results = verify_suite(args.level, echo=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mallowsmix", description="Learn mixtures of two Mallows models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw rankings from a mixture")
    p.add_argument("--model", required=True, help="mixture JSON")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="rankings file, one 1-based permutation per line")
    p.set_defaults(func=cmd_sample)

    for name, func, help_ in (("learn", cmd_learn, "spectral learner"), ("em", cmd_em, "EM baseline")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--rankings", required=True)
        p.add_argument("--config", help="JSON options (optional)")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="run a synthetic recovery sweep")
    p.add_argument("--config", help="experiment JSON (optional)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples", type=int, help="override sample_count")
    p.add_argument("--workers", type=int, help="override workers")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the built-in property checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, PermutationError, OSError, KeyError) as exc:
        print(f"mallowsmix {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
