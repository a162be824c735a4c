"""The collect / fit / intervene / retrain loop, sweeps, and report files.

A run starts from uniformly random episodes, fits the causal model, and then
for every phase designs an intervention reward from the current model,
trains (or keeps training) a policy on it, adds that policy's episodes to
the buffer and refits. Episodes spent on policy training count against the
episode budget just like the collected ones.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import logging
import math
import multiprocessing
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import interventions as iv
from . import storage
from .causal import (
    CausalGraph,
    HistoryBuffer,
    SolverConfig,
    cosine_similarity,
    edge_uncertainty,
    ensemble_fit,
    fit_causal_model,
    threshold_graph,
)
from .envs import EVAL_ROWS, ground_truth_graph, make_env
from .rl import TrainerConfig, TrainingError, UniformRandom, collect_rollouts, train_policy

log = logging.getLogger(__name__)

REPORT_FIELDS = ("seed", "method", "env", "n_interventions", "episodes_to_true_graph", "final_similarity",
                 "episodes_used", "key_health_edge", "error")


class Method(str, enum.Enum):
    LOSS = "Loss"
    NODE = "Node"
    EDGE = "Edge"
    NONE = "None"
    RANDOM_POLICY = "RandomPolicy"


@dataclasses.dataclass
class ExperimentConfig:
    """Everything one run needs; JSON field names mirror the attributes.

    ``n_interventions = 0`` trains on the environment reward for
    ``baseline_phases`` phases (``RandomPolicy`` keeps collecting random
    episodes instead). ``episodes_per_phase``
    episodes are collected per phase; the rest of the phase's share of the
    budget goes to policy training.
    """

    env_id: str = "B"
    intervention_method: Method = Method.LOSS
    n_interventions: int = 5
    episodes_per_phase: int = 100
    initial_episodes: int = 500
    episode_budget: int = 8000
    buffer_capacity: int = 5000
    lam: float = 0.01
    tau: float = 0.5
    ensemble_size: int = 5
    subset_fraction: float = 0.5
    selection_strategy: iv.Strategy = iv.Strategy.WEIGHTED
    with_replacement: bool = False
    node_mode: iv.NodeMode = iv.NodeMode.STAT_PENALTY
    gamma: float = 0.5
    trainer: TrainerConfig = dataclasses.field(default_factory=TrainerConfig)
    warm_start: bool = True
    baseline_phases: int = 10
    stable_refits: int = 2
    graph_epochs: int = 10_000
    standardize: bool = True
    eval_rows: Optional[list] = None
    env_overrides: dict = dataclasses.field(default_factory=dict)
    seeds: list = dataclasses.field(default_factory=lambda: [0])
    name: str = ""

    def __post_init__(self):
        self.intervention_method = Method(self.intervention_method)
        self.selection_strategy = iv.Strategy(self.selection_strategy)
        self.node_mode = iv.NodeMode(self.node_mode)
        if isinstance(self.trainer, dict):
            self.trainer = TrainerConfig(**self.trainer)

    def validate(self) -> None:
        if self.env_id not in EVAL_ROWS:
            raise ValueError(f"unknown env_id {self.env_id!r}")
        if self.n_interventions < 0:
            raise ValueError("n_interventions must be >= 0")
        if not 10 <= self.buffer_capacity <= 5000:
            raise ValueError("buffer_capacity must be in [10, 5000]")
        if self.episodes_per_phase < 1 or self.initial_episodes < 1:
            raise ValueError("episodes_per_phase and initial_episodes must be positive")
        if self.episode_budget < self.initial_episodes + self.n_phases * self.episodes_per_phase:
            raise ValueError("episode_budget cannot cover the collection of every phase")
        if self.lam < 0 or self.tau < 0:
            raise ValueError("lam and tau must be non-negative")
        if self.stable_refits < 1:
            raise ValueError("stable_refits must be positive")
        self.trainer.validate()

    @property
    def n_phases(self) -> int:
        return self.n_interventions or self.baseline_phases

    @property
    def uses_env_reward(self) -> bool:
        if self.intervention_method is Method.RANDOM_POLICY:
            return False
        return self.n_interventions == 0 or self.intervention_method is Method.NONE

    @property
    def label(self) -> str:
        return self.name or f"{self.env_id}-{self.intervention_method.value}-{self.n_interventions}"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["intervention_method"] = self.intervention_method.value
        d["selection_strategy"] = self.selection_strategy.value
        d["node_mode"] = self.node_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise storage.ParseError(path, f"invalid JSON ({exc.msg})", exc.lineno) from None
        try:
            cfg = cls.from_dict(d)
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise storage.ParseError(path, str(exc)) from None
        return cfg


@dataclasses.dataclass
class ExperimentReport:
    seed: int
    method: str
    env_id: str
    n_interventions: int
    episodes_to_true_graph: Optional[int]
    trajectory: list
    final_graph: CausalGraph
    final_similarity: float
    episodes_used: int
    interventions: list = dataclasses.field(default_factory=list)
    error: str = ""

    @property
    def converged(self) -> bool:
        return self.episodes_to_true_graph is not None

    def csv_row(self) -> dict:
        return {
            "seed": self.seed,
            "method": self.method,
            "env": self.env_id,
            "n_interventions": self.n_interventions,
            "episodes_to_true_graph": "inf" if self.episodes_to_true_graph is None else self.episodes_to_true_graph,
            "final_similarity": repr(self.final_similarity),
            "episodes_used": self.episodes_used,
            "key_health_edge": int(key_health_edge(self.final_graph)),
            "error": self.error,
        }

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["final_graph"] = self.final_graph.to_dict()
        d["trajectory"] = [list(p) for p in self.trajectory]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        d = dict(d)
        d["final_graph"] = storage.graph_from_dict(d["final_graph"])
        d["trajectory"] = [tuple(p) for p in d["trajectory"]]
        return cls(**d)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExperimentReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def key_health_edge(graph: CausalGraph) -> bool:
    """Whether health has a parent involving the key count (the spurious env-B edge)."""
    names = graph.feature_names
    if "health" not in names:
        return False
    return any("keys" in p.split("*") for p in graph.parents("health"))


def median_episodes(reports: Sequence[ExperimentReport]) -> float:
    """Median episodes-to-true-graph with non-converged runs counted as infinite."""
    values = [math.inf if r.episodes_to_true_graph is None else r.episodes_to_true_graph for r in reports]
    return float(np.median(values)) if values else math.inf


@dataclasses.dataclass
class _RunState:
    buffer: HistoryBuffer
    episodes_used: int = 0
    model: object = None
    graph: Optional[CausalGraph] = None
    uncertainty: object = None
    trajectory: list = dataclasses.field(default_factory=list)
    streak: int = 0
    streak_start: Optional[int] = None


def _solver(config: ExperimentConfig) -> SolverConfig:
    return SolverConfig(standardize=config.standardize, max_sweeps=config.graph_epochs)


def _refit(config, state: _RunState, truth: CausalGraph, rows, seed: int) -> float:
    names = truth.feature_names
    state.model = fit_causal_model(state.buffer, config.lam, _solver(config), names)
    state.graph = threshold_graph(state.model, config.tau)
    if config.intervention_method in (Method.EDGE, Method.NODE) and len(state.buffer) >= 2:
        models = ensemble_fit(state.buffer, config.ensemble_size, config.subset_fraction, config.lam, seed,
                              _solver(config), names)
        state.uncertainty = edge_uncertainty(models)
    sim = cosine_similarity(state.graph, truth, rows)
    state.trajectory.append((state.episodes_used, sim))
    if sim >= 1.0 - 1e-12:
        if state.streak == 0:
            state.streak_start = state.episodes_used
        state.streak += 1
    else:
        state.streak, state.streak_start = 0, None
    return sim


def _design_reward(config: ExperimentConfig, state: _RunState, env, sel: iv.SelectionState, rng, rows):
    method = config.intervention_method
    if config.uses_env_reward:
        return None
    if method is Method.LOSS:
        return iv.LossReward(state.model)
    if method is Method.EDGE:
        i, j, sign = iv.select_edge(state.graph, state.uncertainty, sel, rng, rows)
        return iv.EdgeReward(i, j, sign)
    if method is Method.NODE:
        spec = getattr(env, "feature_spec", None)
        lo = None if spec is None else spec.min_val
        hi = None if spec is None else spec.max_val
        i, x = iv.select_node(state.graph, state.uncertainty, sel, rng, lo, hi)
        stats = iv.compute_feature_stats(state.buffer.episodes)
        bounds = None if spec is None else (spec.min_val[i], spec.max_val[i])
        return iv.NodeReward(i, x, config.node_mode, config.gamma, stats, bounds)
    raise ValueError(f"method {method.value} does not design rewards")


def run_experiment(config: ExperimentConfig, seed: int, out_dir=None) -> ExperimentReport:
    """One seeded run of the loop; deterministic given ``(config, seed)``.

    With ``out_dir`` the run's report, trajectory, final graph, buffer and
    final model are written there.
    """
    config.validate()
    seeds = np.random.SeedSequence([seed, 7919]).generate_state(3)
    rng = np.random.default_rng(seeds[0])
    overrides = dict(config.env_overrides)
    if config.env_id in ("A", "B", "C"):
        overrides.setdefault("seed", int(seeds[1]))
    env = make_env(config.env_id, **overrides)
    truth = ground_truth_graph(config.env_id)
    rows = [truth.feature_names.index(r) for r in (config.eval_rows or EVAL_ROWS[config.env_id])]

    def next_seed() -> int:
        return int(rng.integers(2**31))

    state = _RunState(HistoryBuffer(config.buffer_capacity))
    random_policy = UniformRandom(env.n_actions)
    state.buffer.extend(collect_rollouts(env, random_policy, config.initial_episodes, seed=next_seed()))
    state.episodes_used = config.initial_episodes
    _refit(config, state, truth, rows, next_seed())

    sel = iv.SelectionState(config.selection_strategy, config.with_replacement)
    phase_budget = (config.episode_budget - config.initial_episodes) // config.n_phases
    train_budget = phase_budget - config.episodes_per_phase
    policy = None
    designed = []
    error = ""
    for phase in range(1, config.n_phases + 1):
        if state.streak >= config.stable_refits:
            break
        if config.intervention_method is Method.RANDOM_POLICY:
            episodes = collect_rollouts(env, random_policy, phase_budget, seed=next_seed())
            state.episodes_used += phase_budget
        else:
            reward = _design_reward(config, state, env, sel, next_seed(), rows)
            designed.append(None if reward is None else reward.to_dict())
            updates = max(1, train_budget // config.trainer.episodes_per_update)
            tcfg = dataclasses.replace(config.trainer, updates=updates, seed=next_seed())
            collect_seed = next_seed()
            try:
                policy, _ = train_policy(env, reward, tcfg, policy if config.warm_start else None)
            except TrainingError as exc:
                # the phase's data is discarded; the loop carries on with a fresh policy
                log.warning("seed %d phase %d: %s", seed, phase, exc)
                error = f"phase {phase}: {exc}"
                state.episodes_used += updates * tcfg.episodes_per_update
                policy = None
                continue
            state.episodes_used += updates * tcfg.episodes_per_update
            episodes = collect_rollouts(env, policy, config.episodes_per_phase, reward, collect_seed)
            state.episodes_used += config.episodes_per_phase
        state.buffer.extend(episodes)
        _refit(config, state, truth, rows, next_seed())

    converged = state.streak >= config.stable_refits
    report = ExperimentReport(
        seed=seed,
        method=config.intervention_method.value,
        env_id=config.env_id,
        n_interventions=config.n_interventions,
        episodes_to_true_graph=state.streak_start if converged else None,
        trajectory=state.trajectory,
        final_graph=state.graph,
        final_similarity=state.trajectory[-1][1],
        episodes_used=state.episodes_used,
        interventions=designed,
        error=error,
    )
    if out_dir is not None:
        write_run(report, state.buffer, state.model, config, out_dir)
    return report


def _append_csv(path: Path, fields, rows) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        if new:
            writer.writeheader()
        writer.writerows(rows)
        fh.flush()
        os.fsync(fh.fileno())


def write_run(report: ExperimentReport, buffer: HistoryBuffer, model, config: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _append_csv(out / "report.csv", REPORT_FIELDS, [report.csv_row()])
    _append_csv(out / "trajectory.csv", ("seed", "episodes", "similarity"),
                [{"seed": report.seed, "episodes": e, "similarity": repr(s)} for e, s in report.trajectory])
    storage.save_graph(report.final_graph, out / "graph_final.json", {"seed": report.seed})
    storage.save_buffer(buffer, out / "buffer.jsonl")
    storage.save_model(model, out / "model_final.json", config.tau)
    storage.atomic_write(out / "report.json", json.dumps(report.to_dict(), indent=1))
    storage.atomic_write(out / "config.json", json.dumps(config.to_dict(), indent=1))


def load_report(path) -> ExperimentReport:
    d = storage._load_json(path)
    try:
        return ExperimentReport.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise storage.ParseError(path, f"malformed report ({exc})") from None


def _sweep_job(args):
    k, config_dict, seed, out_dir = args
    config = ExperimentConfig.from_dict(config_dict)
    run_dir = None if out_dir is None else Path(out_dir) / config.label / f"seed{seed}"
    try:
        return k, run_experiment(config, seed, run_dir).to_dict(), ""
    except Exception as exc:  # a failed run is recorded and the sweep goes on
        log.exception("run %s seed %d failed", config.label, seed)
        return k, None, f"{type(exc).__name__}: {exc}"


def run_sweep(configs: Sequence[ExperimentConfig], seeds: Sequence[int], parallelism: int = 1,
              out_dir=None) -> list:
    """Run every (config, seed) pair; reports come back in (config, seed) order.

    With ``out_dir`` each finished run is appended to ``out_dir/report.csv``
    immediately, so an interruption loses at most the runs in flight. Failed
    runs are ``None`` in the result and carry their error in the CSV.
    """
    jobs = [(k, cfg.to_dict(), int(s), out_dir) for k, cfg in enumerate(configs) for s in seeds]
    results = [None] * len(jobs)
    index = {(k, s): n for n, (k, _, s, _) in enumerate(jobs)}
    summary = None if out_dir is None else Path(out_dir) / "report.csv"
    if summary is not None:
        summary.parent.mkdir(parents=True, exist_ok=True)

    def record(k, seed, report_dict, err):
        report = None if report_dict is None else ExperimentReport.from_dict(report_dict)
        results[index[(k, seed)]] = report
        if summary is None:
            return
        if report is not None:
            row = report.csv_row()
        else:
            cfg = configs[k]
            row = dict.fromkeys(REPORT_FIELDS, "")
            row.update(seed=seed, method=cfg.intervention_method.value, env=cfg.env_id,
                       n_interventions=cfg.n_interventions, episodes_to_true_graph="inf", error=err)
        _append_csv(summary, REPORT_FIELDS, [row])

    if parallelism <= 1:
        for job in jobs:
            k, report_dict, err = _sweep_job(job)
            record(k, job[2], report_dict, err)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(parallelism) as pool:
            pending = {pool.apply_async(_sweep_job, (job,)): job for job in jobs}
            while pending:
                for res in list(pending):
                    if res.ready():
                        job = pending.pop(res)
                        k, report_dict, err = res.get()
                        record(k, job[2], report_dict, err)
                if pending:
                    next(iter(pending)).wait(0.1)
    return results


def histogram_rows(values: Sequence[Optional[float]], bin_width: int) -> list:
    """``(bin_start, count)`` rows, then ``("inf", count)`` and ``("median", value)``.

    ``None`` or infinite values fall in the infinity bin. Finite bins run
    from 0 to the last occupied bin, empty ones included.
    """
    if not values:
        raise ValueError("histogram needs at least one value")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    vals = [math.inf if v is None else float(v) for v in values]
    finite = [v for v in vals if math.isfinite(v)]
    rows = []
    if finite:
        counts = np.bincount((np.array(finite) // bin_width).astype(int))
        rows = [(k * bin_width, int(c)) for k, c in enumerate(counts)]
    rows.append(("inf", len(vals) - len(finite)))
    median = float(np.median(vals))
    rows.append(("median", "inf" if math.isinf(median) else median))
    return rows


def emit_histogram(reports: Sequence[ExperimentReport], bin_width_episodes: int = 1000) -> str:
    """CSV text of :func:`histogram_rows` over the reports' episodes-to-true-graph."""
    rows = histogram_rows([r.episodes_to_true_graph for r in reports], bin_width_episodes)
    lines = ["bin_start,count"] + [f"{a},{_fmt(b)}" for a, b in rows]
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    return str(int(x)) if isinstance(x, float) and x.is_integer() else str(x)


def read_report_values(path) -> list:
    """Episodes-to-true-graph column of a ``report.csv`` (``None`` for infinity)."""
    values = []
    with open(path, newline="") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            raw = row.get("episodes_to_true_graph")
            if raw is None:
                raise storage.ParseError(path, "missing column", line, "episodes_to_true_graph")
            if raw.strip() in ("inf", "", "None"):
                values.append(None)
                continue
            try:
                values.append(int(float(raw)))
            except ValueError:
                raise storage.ParseError(path, f"not a number: {raw!r}", line, "episodes_to_true_graph") from None
    return values
