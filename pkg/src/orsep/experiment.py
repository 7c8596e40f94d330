"""End-to-end pipelines and parameter sweeps.

One run: place monitors and PUs, sample activities, OR-mix, flip bits,
infer sources, match them to the truth, MAP-decode every slot and score.
Every run's randomness comes from a seed derived from the master seed and
the run's (n, T, noise, repetition) key, so results do not depend on the
order or the process in which runs execute.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from orsep import __version__
from orsep.bica import DEFAULT_CONFIDENCE, DEFAULT_EPSILON, FrequencyOracle, infer_sources
from orsep.evaluation import (
    activity_error_ratio,
    align_activities,
    match_structures,
    miscount,
    prob_error_ratio,
    structure_error_ratio,
)
from orsep.inverse import solve_slots
from orsep.mixture import ActivitySampler, SourceModel, inject_noise, or_mix, sample_activities
from orsep.radio_sim import (
    DEFAULT_GAIN_CONST,
    ScenarioParams,
    compare_models,
    derive_mixing_matrix,
    generate_scenario,
    quantize,
    simulate_linear,
)

MASK64 = (1 << 64) - 1

# i.i.d. slots with low channel occupancy
DEFAULT_ACTIVITY = {"kind": "bernoulli", "p": [0.05, 0.15]}
# both transitions U(0,1); mean occupancy 1/2
UNIFORM_MARKOV = {"kind": "markov2", "p01": [0.0, 1.0], "p10": [0.0, 1.0]}
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

RUN_COLUMNS = [
    "run_id", "n", "T", "noise", "structure_error_ratio", "prob_error_ratio",
    "miscount", "activity_error_ratio", "bica_seconds", "inverse_seconds",
]
METRICS = ["structure_error_ratio", "prob_error_ratio", "miscount", "abs_miscount", "activity_error_ratio"]


def splitmix64(x: int) -> int:
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Fold integer keys into the master seed with splitmix64 steps."""
    s = splitmix64(int(master) & MASK64)
    for k in keys:
        s = splitmix64(s ^ (int(k) & MASK64))
    return s


def _noise_key(e: float) -> int:
    return int(round(e * 1_000_000))


@dataclass
class ExperimentConfig:
    m: int = 10
    n_list: list[int] = field(default_factory=lambda: [5, 10, 15, 20])
    T_list: list[int] = field(default_factory=lambda: [10000])
    noise_list: list[float] = field(default_factory=lambda: [0.0, 0.02, 0.05])
    runs: int = 50
    epsilon: float = DEFAULT_EPSILON
    cov_confidence: float = DEFAULT_CONFIDENCE
    seed: int = 0
    area: float = 500.0
    alpha: float = 3.0
    tx_power: float = 20.0
    noise_floor: float = -95.0
    threshold: float = 5.0
    gain_const: float = DEFAULT_GAIN_CONST
    p_e: float | None = None
    activity: dict = field(default_factory=lambda: dict(DEFAULT_ACTIVITY))
    fidelity_activity: dict = field(default_factory=lambda: dict(UNIFORM_MARKOV))
    fidelity_T: int = 5000
    decompose: bool = True
    exclude_uncorrelated: bool = True
    fading: str = "rayleigh"
    noise_std: float = 0.0
    timing: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for name in ("n_list", "T_list", "noise_list"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        for e in self.noise_list:
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"noise level {e} not in [0, 1]")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.cov_confidence < 1.0:
            raise ValueError("cov_confidence must lie in (0, 1)")
        if self.p_e is not None and not 0.0 <= self.p_e < 0.5:
            raise ValueError("p_e must lie in [0, 0.5)")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError(f"unknown fading {self.fading!r}")
        if self.fidelity_T < 1 or min(self.T_list) < 1:
            raise ValueError("slot counts must be >= 1")
        _check_activity(self.activity)
        _check_activity(self.fidelity_activity)

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def scenario_params(self, n: int) -> ScenarioParams:
        return ScenarioParams(m=self.m, n=n, area=self.area, tx_power=self.tx_power,
                              noise_floor=self.noise_floor, alpha=self.alpha,
                              threshold=self.threshold, gain_const=self.gain_const)


def _check_activity(activity: dict) -> None:
    kind = activity.get("kind")
    allowed = {"bernoulli": {"kind", "p"}, "markov2": {"kind", "p", "p01", "p10"}}
    if kind not in allowed:
        raise ValueError(f"unknown activity kind {kind!r}")
    extra = set(activity) - allowed[kind]
    if extra:
        raise ValueError(f"unknown activity keys {sorted(extra)}")
    if kind == "markov2" and "p" in activity and "p01" in activity:
        raise ValueError("markov2 takes either a stationary range 'p' or 'p01', not both")
    for key in set(activity) - {"kind"}:
        rng = activity[key]
        if len(rng) != 2 or not 0.0 <= rng[0] <= rng[1] <= 1.0:
            raise ValueError(f"activity range {key}={rng} invalid")


def draw_activity(activity: dict, n: int, rng: np.random.Generator, seed: int) -> tuple[np.ndarray, ActivitySampler]:
    """True active probabilities and a matching sampler for ``n`` sources.

    ``markov2`` with a ``p`` range draws the stationary probability and the
    off-transition, then sets ``p01 = p * p10 / (1 - p)``.
    """
    if activity["kind"] == "bernoulli":
        lo, hi = activity.get("p", (0.0, 1.0))
        p = rng.uniform(lo, hi, size=n)
        return p, ActivitySampler("bernoulli", seed)
    lo10, hi10 = activity.get("p10", (0.0, 1.0))
    b = np.clip(rng.uniform(lo10, hi10, size=n), 1e-9, 1 - 1e-9)
    if "p" in activity:
        lo, hi = activity["p"]
        p = np.clip(rng.uniform(lo, hi, size=n), 1e-9, 1 - 1e-9)
        a = p * b / (1 - p)
    else:
        lo01, hi01 = activity.get("p01", (0.0, 1.0))
        a = rng.uniform(lo01, hi01, size=n)
    # the chain needs transitions strictly inside (0, 1)
    a = np.clip(a, 1e-9, 1 - 1e-9)
    sampler = ActivitySampler.markov2(a, b, seed)
    return sampler.stationary(), sampler


@dataclass
class RunResult:
    run_id: str
    n: int
    T: int
    noise: float
    rep: int
    structure_error_ratio: float = math.nan
    prob_error_ratio: float = math.nan
    miscount: int | None = None
    activity_error_ratio: float = math.nan
    bica_seconds: float = math.nan
    inverse_seconds: float = math.nan
    inferred_n: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_id_for(n: int, T: int, noise: float, rep: int) -> str:
    return f"n{n}-T{T}-e{_noise_key(noise)}-r{rep}"


def run_once(cfg: ExperimentConfig, n: int, T: int, noise: float, rep: int) -> RunResult:
    res = RunResult(run_id_for(n, T, noise, rep), n, T, noise, rep)
    seed = derive_seed(cfg.seed, n, T, _noise_key(noise), rep)
    seeds = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint64)
    try:
        sc = generate_scenario(cfg.scenario_params(n), seed=int(seeds[0]))
        g = derive_mixing_matrix(sc)
        rng = np.random.default_rng(int(seeds[1]))
        p, sampler = draw_activity(cfg.activity, n, rng, int(seeds[2]))
        truth = SourceModel(g, p)
        y = sample_activities(truth, sampler, T)
        x = inject_noise(or_mix(g, y), noise, int(seeds[3]))

        t0 = time.perf_counter()
        inferred = infer_sources(FrequencyOracle.from_matrix(x), cfg.epsilon,
                                 confidence=cfg.cov_confidence, decompose=cfg.decompose,
                                 exclude_uncorrelated=cfg.exclude_uncorrelated).model
        t1 = time.perf_counter()
        match = match_structures(truth, inferred)
        res.structure_error_ratio = structure_error_ratio(truth, match)
        per = prob_error_ratio(truth.p, match.matched_p)
        res.prob_error_ratio = math.nan if per is None else per
        res.miscount = miscount(truth.n, inferred.n)
        res.inferred_n = inferred.n

        t2 = time.perf_counter()
        y_hat, _ = solve_slots(inferred, x, cfg.p_e)
        t3 = time.perf_counter()
        res.activity_error_ratio = activity_error_ratio(y, align_activities(match, y_hat))
        res.bica_seconds = t1 - t0
        res.inverse_seconds = t3 - t2
    except Exception as exc:  # recorded per run; the sweep carries on
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _run_task(args):
    cfg_doc, n, T, noise, rep = args
    return run_once(ExperimentConfig.from_dict(cfg_doc), n, T, noise, rep)


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    runs: list[RunResult]
    cells: list[dict[str, Any]]
    provenance: dict[str, Any]

    @property
    def all_cells_ok(self) -> bool:
        return all(c["ok_runs"] > 0 for c in self.cells)

    def cell(self, n: int, T: int, noise: float) -> dict[str, Any]:
        for c in self.cells:
            if c["n"] == n and c["T"] == T and _noise_key(c["noise"]) == _noise_key(noise):
                return c
        raise KeyError((n, T, noise))


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate(runs: list[RunResult], cfg: ExperimentConfig) -> list[dict[str, Any]]:
    cells = []
    for n in cfg.n_list:
        for T in cfg.T_list:
            for noise in cfg.noise_list:
                group = [r for r in runs if r.n == n and r.T == T and _noise_key(r.noise) == _noise_key(noise)]
                ok = [r for r in group if r.ok]
                cell: dict[str, Any] = {"n": n, "T": T, "noise": noise, "runs": len(group), "ok_runs": len(ok)}
                for name in METRICS:
                    if name == "abs_miscount":
                        vals = [abs(r.miscount) for r in ok]
                    else:
                        vals = [getattr(r, name) for r in ok]
                    vals = np.array([v for v in vals if v is not None and not math.isnan(v)], dtype=float)
                    cell[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
                    cell[f"{name}_std"] = float(vals.std()) if vals.size else math.nan
                cells.append(cell)
    return cells


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    doc = asdict(config)
    tasks = [
        (doc, n, T, noise, rep)
        for n in config.n_list for T in config.T_list for noise in config.noise_list
        for rep in range(config.runs)
    ]
    runs = _map(_run_task, tasks, jobs)
    runs.sort(key=lambda r: (config.n_list.index(r.n), config.T_list.index(r.T),
                             [_noise_key(e) for e in config.noise_list].index(_noise_key(r.noise)), r.rep))
    provenance = {
        "config": doc,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "seed_derivation": "splitmix64 fold of (seed, n, T, round(noise*1e6), rep); "
                           f"gamma {GOLDEN_GAMMA:#x}",
        "run_seeds": {r.run_id: derive_seed(config.seed, r.n, r.T, _noise_key(r.noise), r.rep) for r in runs},
        "errors": {r.run_id: r.error for r in runs if not r.ok},
    }
    return ExperimentReport(config, runs, aggregate(runs, config), provenance)


def runs_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in report.runs:
        timing = report.config.timing
        w.writerow([
            r.run_id, r.n, r.T, _num(r.noise), _num(r.structure_error_ratio),
            _num(r.prob_error_ratio), _num(r.miscount), _num(r.activity_error_ratio),
            _num(r.bica_seconds) if timing else "", _num(r.inverse_seconds) if timing else "",
        ])
    return buf.getvalue()


def summary_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    cols = ["n", "T", "noise", "runs", "ok_runs"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for c in report.cells:
        w.writerow([_num(c[k]) for k in cols])
    return buf.getvalue()


def write_report(report: ExperimentReport, out_dir: str | os.PathLike) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "runs.csv"), "w", newline="") as fh:
        fh.write(runs_csv(report))
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(summary_csv(report))
    with open(os.path.join(out_dir, "provenance.json"), "w") as fh:
        json.dump(report.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class ComparisonRow:
    n: int
    rep: int
    false_alarm: float | None
    miss: float | None


def compare_once(cfg: ExperimentConfig, n: int, T: int, rep: int) -> ComparisonRow:
    seed = derive_seed(cfg.seed, 0xC0, n, T, rep)
    seeds = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint64)
    sc = generate_scenario(cfg.scenario_params(n), seed=int(seeds[0]))
    g = derive_mixing_matrix(sc)
    rng = np.random.default_rng(int(seeds[1]))
    p, sampler = draw_activity(cfg.fidelity_activity, n, rng, int(seeds[2]))
    y = sample_activities(SourceModel(g, p), sampler, T)
    x_or = or_mix(g, y)
    v = simulate_linear(sc, y, cfg.fading, seed=int(seeds[3]), noise_std=cfg.noise_std)
    rates = compare_models(x_or, quantize(v, sc.tau))
    return ComparisonRow(n, rep, rates["false_alarm_rate"], rates["miss_rate"])


def _compare_task(args):
    cfg_doc, n, T, rep = args
    return compare_once(ExperimentConfig.from_dict(cfg_doc), n, T, rep)


def run_model_comparison(config: ExperimentConfig, jobs: int = 1) -> tuple[str, list[ComparisonRow]]:
    """OR model against the quantized linear model over ``n_list``.

    Returns the per-n CSV (columns n, false_alarm, miss; run means) and the
    per-run rows. Uses ``fidelity_T`` slots and ``fidelity_activity``.
    """
    T = config.fidelity_T
    doc = asdict(config)
    tasks = [(doc, n, T, rep) for n in config.n_list for rep in range(config.runs)]
    rows = _map(_compare_task, tasks, jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "false_alarm", "miss"])
    for n in config.n_list:
        sel = [r for r in rows if r.n == n]
        fa = [r.false_alarm for r in sel if r.false_alarm is not None]
        mi = [r.miss for r in sel if r.miss is not None]
        w.writerow([n, _num(float(np.mean(fa))) if fa else "", _num(float(np.mean(mi))) if mi else ""])
    return buf.getvalue(), rows
