"""Multi-trial runs, aggregation and CSV output for the maze experiments."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .gridworld import GridEnv, MazeSpec, RestartMode, load_maze, shipped_maze
from .learners import Algorithm, LearnerConfig, TrainLog, train

SEED_ENV_VAR = "ASSURED_RL_SEED"

TRIAL_COLUMNS = ("trial", "episode", "length", "return", "violation", "cum_violations", "skipped")
AGGREGATE_COLUMNS = (
    "episode",
    "mean_length",
    "sem_length",
    "mean_cum_violations",
    "sem_cum_violations",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    maze_path: str | None = None  # None: the shipped maze
    algorithm: Algorithm = Algorithm.ASSURED_Q
    trials: int = 1
    episodes: int = 2000
    gamma: float = 0.9
    epsilon: float = 0.1
    eta: float = 0.1
    step_cap: int = 100
    restart_mode: RestartMode = RestartMode.PRECEDING_STATE
    master_seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        try:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
            object.__setattr__(self, "restart_mode", RestartMode(self.restart_mode))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("master seed must be non-negative")
        try:
            self.learner_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            gamma=self.gamma,
            epsilon=self.epsilon,
            eta=self.eta,
            episodes=self.episodes,
            step_cap=self.step_cap,
            algorithm=self.algorithm,
        )

    def maze(self) -> MazeSpec:
        return shipped_maze() if self.maze_path is None else load_maze(self.maze_path)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["restart_mode"] = self.restart_mode.value
        return d


# config-file key -> ExperimentConfig field
_KEYS = {
    "maze": "maze_path",
    "maze_path": "maze_path",
    "algorithm": "algorithm",
    "algo": "algorithm",
    "trials": "trials",
    "episodes": "episodes",
    "gamma": "gamma",
    "epsilon": "epsilon",
    "eta": "eta",
    "step_cap": "step_cap",
    "restart_mode": "restart_mode",
    "seed": "master_seed",
    "master_seed": "master_seed",
    "out_dir": "out_dir",
}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into field overrides."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name = _KEYS[key]
        kind = _TYPES[name]
        try:
            if kind == "int":
                out[name] = int(value)
            elif kind == "float":
                out[name] = float(value)
            else:
                out[name] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return out


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


def trial_seed(master_seed: int, trial: int) -> int:
    """64-bit seed for one trial, hashed from ``(master_seed, trial)``.

    Uses numpy's ``SeedSequence`` entropy mixing, so seeds of existing trials do
    not change when more trials are added.
    """
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1, np.uint64)[0])


def run_trial(config: ExperimentConfig, trial: int, spec: MazeSpec | None = None) -> TrainLog:
    spec = spec or config.maze()
    env = GridEnv(spec, step_cap=config.step_cap, restart_mode=config.restart_mode)
    rng = random.Random(trial_seed(config.master_seed, trial))
    return train(env, config.learner_config(), rng)


def _run_trial_job(args):
    config, trial, spec = args
    return run_trial(config, trial, spec)


@dataclass
class AggregateCurve:
    mean_length: list[float]
    sem_length: list[float]
    mean_cum_violations: list[float]
    sem_cum_violations: list[float]

    def __len__(self) -> int:
        return len(self.mean_length)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for i in range(len(self)):
            w.writerow(
                [
                    i,
                    _num(self.mean_length[i]),
                    _num(self.sem_length[i]),
                    _num(self.mean_cum_violations[i]),
                    _num(self.sem_cum_violations[i]),
                ]
            )
        return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


def _mean_sem(xs: Sequence[float]) -> tuple[float, float]:
    # fsum is exactly rounded, so the result does not depend on trial order
    n = len(xs)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(xs) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


def aggregate(logs: Sequence[TrainLog]) -> AggregateCurve:
    """Per-episode mean and ``sigma / sqrt(N)`` across trials.

    Skipped episodes give no length sample; the cumulative-violation count
    still covers every trial.
    """
    if not logs:
        raise ValueError("nothing to aggregate")
    n_ep = len(logs[0].episodes)
    if any(len(log.episodes) != n_ep for log in logs):
        raise ValueError("all logs must have the same number of episodes")
    cums = [log.cumulative_violations for log in logs]
    curve = AggregateCurve([], [], [], [])
    for i in range(n_ep):
        m, e = _mean_sem([log.episodes[i].length for log in logs if not log.episodes[i].skipped])
        curve.mean_length.append(m)
        curve.sem_length.append(e)
        m, e = _mean_sem([c[i] for c in cums])
        curve.mean_cum_violations.append(m)
        curve.sem_cum_violations.append(e)
    return curve


def trials_csv(logs: Sequence[TrainLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for t, log in enumerate(logs):
        cum = 0
        for i, ep in enumerate(log.episodes):
            cum += ep.violations
            w.writerow([t, i, ep.length, _num(ep.discounted_return), ep.violations, cum, int(ep.skipped)])
    return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    logs: list[TrainLog]
    curve: AggregateCurve
    out_dir: Path | None = None
    files: dict[str, Path] = field(default_factory=dict)


def run_experiment(config: ExperimentConfig, write: bool = True, workers: int = 1) -> ExperimentResult:
    """Run ``config.trials`` independent trials and (optionally) write outputs.

    Files under ``out_dir``: ``trials.csv``, ``aggregate.csv``,
    ``manifest.json`` and, for assured learners, one barrier matrix per trial
    in ``barriers/``.  Output depends only on the config, never on
    ``workers``.
    """
    spec = config.maze()
    jobs = [(config, t, spec) for t in range(config.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_trial_job, jobs))
    else:
        logs = [_run_trial_job(j) for j in jobs]
    result = ExperimentResult(config, logs, aggregate(logs))
    if write:
        _write(result, spec)
    return result


def _write(result: ExperimentResult, spec: MazeSpec) -> None:
    config = result.config
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "trials": out / "trials.csv",
            "aggregate": out / "aggregate.csv",
            "manifest": out / "manifest.json",
        }
        files["trials"].write_text(trials_csv(result.logs), encoding="utf-8")
        files["aggregate"].write_text(result.curve.to_csv(), encoding="utf-8")
        if config.algorithm.assured:
            bdir = out / "barriers"
            bdir.mkdir(exist_ok=True)
            for t, log in enumerate(result.logs):
                (bdir / f"trial_{t:04d}.txt").write_text(log.barrier.to_text(), encoding="utf-8")
            files["barriers"] = bdir
        files["manifest"].write_text(json.dumps(_manifest(config, spec), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write outputs to {out}: {exc}") from exc
    result.out_dir = out
    result.files = files


def _manifest(config: ExperimentConfig, spec: MazeSpec) -> dict:
    return {
        "package": "assured_rl",
        "version": __version__,
        "config": config.to_dict(),
        "maze": str(spec).split("\n"),
        "trial_seeds": [trial_seed(config.master_seed, t) for t in range(config.trials)],
        "seed_derivation": "numpy SeedSequence([master_seed, trial]).generate_state(1, uint64)",
        "length_recording": (
            "steps actually taken in the episode; an episode ended by a wall bump counts "
            "the bump step and stops there"
        ),
        "sem": "sample standard deviation (ddof=1) / sqrt(N); 0 when N == 1",
    }


def compare(config: ExperimentConfig, workers: int = 1) -> dict[str, ExperimentResult]:
    """Assured vs baseline Q-learning with shared trial seeds plus a joint report."""
    base = Path(config.out_dir)
    results = {}
    for algo in (Algorithm.ASSURED_Q, Algorithm.BASELINE_Q):
        sub = replace(config, algorithm=algo, out_dir=str(base / algo.value))
        results[algo.value] = run_experiment(sub, workers=workers)
    a, b = results["assured-q"], results["baseline-q"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [
            "episode",
            "assured_mean_length",
            "assured_sem_length",
            "baseline_mean_length",
            "baseline_sem_length",
            "assured_mean_cum_violations",
            "assured_sem_cum_violations",
            "baseline_mean_cum_violations",
            "baseline_sem_cum_violations",
        ]
    )
    ca, cb = a.curve, b.curve
    for i in range(len(ca)):
        w.writerow(
            [i]
            + [_num(x) for x in (ca.mean_length[i], ca.sem_length[i], cb.mean_length[i], cb.sem_length[i])]
            + [
                _num(x)
                for x in (
                    ca.mean_cum_violations[i],
                    ca.sem_cum_violations[i],
                    cb.mean_cum_violations[i],
                    cb.sem_cum_violations[i],
                )
            ]
        )
    base.mkdir(parents=True, exist_ok=True)
    (base / "report.csv").write_text(buf.getvalue(), encoding="utf-8")
    summary = {name: _summary(res) for name, res in results.items()}
    (base / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return results


def final_quartile_new_violations(log: TrainLog) -> int:
    cum = log.cumulative_violations
    if not cum:
        return 0
    cut = len(cum) - len(cum) // 4
    before = cum[cut - 1] if cut > 0 else 0
    return cum[-1] - before


def _summary(res: ExperimentResult) -> dict:
    new = [final_quartile_new_violations(log) for log in res.logs]
    totals = [log.cumulative_violations[-1] if log.episodes else 0 for log in res.logs]
    return {
        "trials": len(res.logs),
        "mean_total_violations": math.fsum(totals) / len(totals),
        "max_total_violations": max(totals),
        "trials_without_new_violations_in_final_quartile": sum(1 for x in new if x == 0),
    }
