"""Command-line interface: ``fuzzypg learn|evaluate|trace|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import car
from .experiment import (
    METHODS,
    REWARDS,
    MethodConfig,
    aggregate,
    evaluate_solutions,
    evaluate_weights,
    run_evaluation_episode,
    run_experiments,
)
from .storage import (
    EVAL_FIELDS,
    EVAL_SUMMARY_FIELDS,
    RESULT_FIELDS,
    SUMMARY_FIELDS,
    ConfigError,
    RunConfig,
    evaluation_rows,
    load_config,
    load_weights,
    parse_problem,
    result_rows,
    save_weights,
    summary_row,
    weight_files,
    write_csv,
)

log = logging.getLogger("fuzzypg")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _run_chunk(args):
    cfg, seeds = args
    return run_experiments(cfg, seeds)


def run_parallel(cfg: MethodConfig, seeds: list[int], jobs: int):
    """Split seeds over worker processes; the result order follows ``seeds``."""
    if jobs <= 1 or len(seeds) < 2:
        return run_experiments(cfg, seeds)
    chunks = [seeds[k::jobs] for k in range(jobs) if seeds[k::jobs]]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
    by_seed = {r.seed: r for part in parts for r in part}
    return [by_seed[s] for s in seeds]


def _resolve(args) -> RunConfig:
    try:
        rc = load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    for attr, key in (("method", "method"), ("reward", "reward"), ("reps", "repetitions"),
                      ("seed", "base_seed"), ("out", "out")):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(rc, key, value)
    if getattr(args, "evaluate", False):
        rc.evaluate = True
    if rc.repetitions < 1:
        raise UsageError(f"--reps must be at least 1, got {rc.repetitions}")
    return rc


def cmd_learn(args) -> int:
    rc = _resolve(args)
    try:
        cfg = rc.method_config()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    base = rc.seed()
    seeds = list(range(base, base + rc.repetitions))
    log.info("learning: method %s, reward %s, seeds %d..%d", cfg.method, cfg.reward_variant, seeds[0], seeds[-1])
    results = run_parallel(cfg, seeds, args.jobs)
    evaluations = evaluate_solutions(cfg, results) if rc.evaluate else None
    stats = aggregate(results, evaluations)

    out = Path(rc.out)
    write_csv(out / "results.csv", RESULT_FIELDS, result_rows(results))
    write_csv(out / "summary.csv", SUMMARY_FIELDS, [summary_row(stats)])
    for r in results:
        save_weights(out / "weights" / f"{r.seed}.json", r.final_theta)
    print(f"|S|={stats.n_S} |S_c|={stats.n_Sc} of {stats.repetitions}; "
          f"mean m_c over S_c={stats.mean_mc_Sc:.2f}; results in {out}")
    if stats.evaluated:
        print(f"|S'|={stats.n_Sp} |S'_c|={stats.n_Spc}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    path = Path(args.weights)
    if not path.exists():
        raise UsageError(f"{path} does not exist")
    files = weight_files(path)
    if not files:
        raise UsageError(f"no weight files in {path}")
    thetas = []
    for f in files:
        try:
            thetas.append(load_weights(f))
        except (OSError, ValueError) as exc:
            print(f"error: malformed weight file {f}: {exc}", file=sys.stderr)
            return EXIT_FAIL
    if any(len(t) != 20 for t in thetas):
        bad = next(f for f, t in zip(files, thetas) if len(t) != 20)
        print(f"error: malformed weight file {bad}: expected 20 weights", file=sys.stderr)
        return EXIT_FAIL
    cfg = MethodConfig.create(args.method or "i", "r1")
    problems = car.evaluation_problems()
    evals = evaluate_weights(cfg, np.stack(thetas), problems)

    out = Path(args.out or "out")
    rows, summary = [], []
    for f, ev in zip(files, evals):
        rows.extend(evaluation_rows(f.stem, problems, ev))
        solved = ev.t_in[ev.passed]
        summary.append({
            "weights": f.stem, "problems": len(problems), "passed": int(ev.passed.sum()),
            "smooth": int(ev.smooth.sum()), "in_S_prime": ev.passed_all, "in_S_prime_c": ev.smooth_all,
            "mean_t_in": float(solved.mean()) if solved.size else None,
        })
    write_csv(out / "evaluation.csv", EVAL_FIELDS, rows)
    write_csv(out / "evaluation_summary.csv", EVAL_SUMMARY_FIELDS, summary)
    n_sp = sum(e.passed_all for e in evals)
    n_spc = sum(e.smooth_all for e in evals)
    print(f"{len(files)} weight sets: |S'|={n_sp} |S'_c|={n_spc}; results in {out}")
    return EXIT_OK


def cmd_trace(args) -> int:
    try:
        problem = parse_problem(args.problem)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    try:
        theta = load_weights(Path(args.weights))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    cfg = MethodConfig.create(args.method or "i", "r1")
    trace = run_evaluation_episode(cfg, problem, theta)
    text = trace.to_csv()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    log.info("outcome: %s", trace.outcome)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_validation

    ok = True
    for name, report, passed in run_validation(args.cases, seed=args.seed or 0):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {report}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzypg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--out")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("learn", help="run learning experiments")
    common(p)
    p.add_argument("--config")
    p.add_argument("--reward", choices=REWARDS)
    p.add_argument("--reps", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--evaluate", action="store_true", help="also test S_c members on the 697 problems")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="evaluate weight files on the test problems")
    p.add_argument("weights", help="weight file or directory of weight files")
    common(p, seed=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace", help="export one deterministic episode as CSV")
    p.add_argument("weights")
    p.add_argument("--problem", required=True, help="train:N, test:N or lead,follow,distance,l1,l2")
    common(p, seed=False)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("validate", help="run the gradient and minimizer oracle checks")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
