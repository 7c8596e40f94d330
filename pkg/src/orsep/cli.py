"""Command-line entry point.

Every subcommand reads and writes the plain formats used throughout the
package (0/1 text matrices, source-model JSON) so intermediate artifacts can
be inspected or fed to another step by hand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from orsep.binmat import read_matrix, write_matrix
from orsep.bica import DEFAULT_CONFIDENCE, DEFAULT_EPSILON, FrequencyOracle, infer_sources
from orsep.errors import OrsepError
from orsep.evaluation import evaluate
from orsep.experiment import (
    ExperimentConfig,
    derive_seed,
    draw_activity,
    run_model_comparison,
    run_sweep,
    write_report,
)
from orsep.inverse import solve_slots, write_sidecar
from orsep.mixture import SourceModel, inject_noise, load_model, or_mix, sample_activities, save_model
from orsep.radio_sim import derive_mixing_matrix, generate_scenario


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**asdict(cfg), "seed": args.seed})
    return cfg


def _write_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    n, T, noise = cfg.n_list[0], cfg.T_list[0], cfg.noise_list[0]
    seeds = np.random.SeedSequence(derive_seed(cfg.seed, n, T)).generate_state(4, dtype=np.uint64)
    sc = generate_scenario(cfg.scenario_params(n), seed=int(seeds[0]))
    g = derive_mixing_matrix(sc)
    p, sampler = draw_activity(cfg.activity, n, np.random.default_rng(int(seeds[1])), int(seeds[2]))
    model = SourceModel(g, p)
    y = sample_activities(model, sampler, T)
    x = inject_noise(or_mix(g, y), noise, int(seeds[3]))
    os.makedirs(args.out, exist_ok=True)
    sc.save(os.path.join(args.out, "scenario.json"))
    save_model(model, os.path.join(args.out, "model.json"))
    write_matrix(y, os.path.join(args.out, "Y.txt"))
    write_matrix(x, os.path.join(args.out, "X.txt"))
    print(f"simulated m={cfg.m} n={n} T={T} noise={noise} -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    x = read_matrix(args.x)
    res = infer_sources(FrequencyOracle.from_matrix(x), args.epsilon, confidence=args.confidence,
                        decompose=not args.no_decompose)
    out = args.out or "inferred.json"
    res.save(out)
    print(f"inferred {res.model.n} sources over {x.rows} monitors -> {out}")
    return 0


def cmd_invert(args) -> int:
    model = load_model(args.model)
    x = read_matrix(args.x)
    y_hat, meta = solve_slots(model, x, args.p_e)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(y_hat, os.path.join(args.out, "Yhat.txt"))
    write_sidecar(meta, os.path.join(args.out, "Yhat.json"))
    print(f"decoded {x.cols} slots for {model.n} sources -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    truth = load_model(args.true)
    inferred = load_model(args.inferred)
    true_y = read_matrix(args.y) if args.y else None
    inferred_y = read_matrix(args.yhat) if args.yhat else None
    report = asdict(evaluate(truth, inferred, true_y, inferred_y))
    if args.out:
        _write_json(report, args.out)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    report = run_sweep(cfg, jobs=args.jobs)
    write_report(report, args.out)
    bad = [c for c in report.cells if c["ok_runs"] == 0]
    for c in bad:
        print(f"cell n={c['n']} T={c['T']} noise={c['noise']}: all runs failed", file=sys.stderr)
    print(f"{len(report.runs)} runs in {len(report.cells)} cells -> {args.out}")
    return 0 if report.all_cells_ok else 1


def cmd_compare_models(args) -> int:
    cfg = _config(args)
    text, rows = run_model_comparison(cfg, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "compare_models.csv"), "w", newline="") as fh:
        fh.write(text)
    _write_json({"config": asdict(cfg),
                 "runs": [asdict(r) for r in rows]},
                os.path.join(args.out, "compare_models.json"))
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orsep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("simulate", help="generate a scenario, activities and observations")
    common(p, "sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="recover sources from an observation matrix")
    p.add_argument("--x", required=True, help="observation matrix (0/1 text)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    p.add_argument("--no-decompose", action="store_true")
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("invert", help="MAP-decode per-slot activities")
    p.add_argument("--model", required=True, help="source model JSON")
    p.add_argument("--x", required=True, help="observation matrix (0/1 text)")
    p.add_argument("--p-e", type=float, default=None, help="bit-flip probability; default tries zero error first")
    p.add_argument("--out", default="invert", help="output directory")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("eval", help="score an inferred model against the truth")
    p.add_argument("--true", required=True, help="true source model JSON")
    p.add_argument("--inferred", required=True, help="inferred source model JSON")
    p.add_argument("--y", help="true activity matrix")
    p.add_argument("--yhat", help="decoded activity matrix")
    p.add_argument("--out", help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the full pipeline over n, T and noise")
    common(p, "sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-models", help="OR model against the quantized linear model")
    common(p, "compare")
    p.set_defaults(func=cmd_compare_models)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OrsepError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
