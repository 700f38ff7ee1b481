"""Evaluation loop: simulate trials, score beliefs, then train, repeatedly.

Each evaluation rolls a fresh batch of trials under the random policy,
scores the current model's beliefs on that batch (together with the exact
beliefs where they are computable), and only then updates the model on the
same batch. Scores of evaluation ``i`` therefore never see data the model
was trained on in evaluation ``i``.

Random streams are addressed, not consumed in sequence: trial ``k`` of
evaluation ``i`` always uses ``split(split(master, i), k)``, so any trial
can be replayed from its log.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import metrics as M
from .core import CategoricalBelief, ConfigError, DBMMError, RngStream, Trial, split_stream
from .enkf import enkf_filter
from .envs import (
    ContinuousMaintenanceModel,
    DiscreteEnv,
    RailwayEnv,
    bridge_model,
    load_railway_config,
)
from .envs.continuous import cont_step
from .model import DBMM, NonFiniteLoss, TrainConfig, stack_trials, train_update

log = logging.getLogger(__name__)

BENCHMARKS = ("discrete", "continuous", "railway")
DEFAULT_HORIZON = {"discrete": 100, "continuous": 100, "railway": 50}
N_STATES = {"discrete": 5, "railway": 4}

# child ids of the per-evaluation stream; trial k uses child k
_TRAIN_CHILD = 1 << 40
_ENKF_CHILD = 1 << 41
# children of the master stream
_INIT_CHILD = 1 << 42
_HELDOUT_CHILD = 1 << 43

# Training defaults per benchmark (chosen by short pilot runs; see README).
TRAIN_DEFAULTS = {
    "discrete": dict(lr=5e-4, epochs=3, batch_size=10, mc_samples=1),
    "continuous": dict(lr=1e-3, epochs=10, batch_size=10, mc_samples=8),
    "railway": dict(lr=1e-3, epochs=20, batch_size=10, mc_samples=1, kl_warmup=500),
}


class RunAborted(DBMMError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass
class RunConfig:
    benchmark: str = "discrete"
    n_evaluations: int = 10
    trials: int = 500
    horizon: Optional[int] = None
    seed: int = 0
    policy: str = "random"
    initial_belief: Optional[List[float]] = None
    heldout_trials: int = 0
    out: Optional[str] = None
    hidden_dim: int = 100
    anchored: bool = True
    train: Optional[TrainConfig] = None
    enkf_particles: int = 1000
    enkf_in_loop: bool = True
    railway_config: Optional[str] = None
    checkpoints: bool = True
    trial_logs: bool = True

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"benchmark: must be one of {BENCHMARKS}, got {self.benchmark!r}")
        if self.horizon is None:
            self.horizon = DEFAULT_HORIZON[self.benchmark]
        if self.train is None:
            self.train = TrainConfig(seed=self.seed, **TRAIN_DEFAULTS[self.benchmark])
        for name in ("n_evaluations", "trials", "horizon", "hidden_dim", "enkf_particles"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name}: must be a positive integer")
        if self.heldout_trials < 0:
            raise ConfigError("heldout_trials: must be >= 0")
        if self.policy != "random":
            raise ConfigError(f"policy: only 'random' is supported, got {self.policy!r}")
        if self.enkf_particles < 2:
            raise ConfigError("enkf_particles: need at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = asdict(self.train)
        return d


def desk_preset(benchmark: str, **overrides) -> RunConfig:
    """100 trials per evaluation and 10 evaluations."""
    return RunConfig(benchmark=benchmark, n_evaluations=10, trials=100, **overrides)


def paper_preset(benchmark: str, **overrides) -> RunConfig:
    """500 trials per evaluation; 20 evaluations for the discrete benchmark."""
    n = 20 if benchmark == "discrete" else 10
    return RunConfig(benchmark=benchmark, n_evaluations=n, trials=500, **overrides)


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_RUN_KEYS = {f.name for f in fields(RunConfig)}


def config_from_dict(d: dict, where: str = "config") -> RunConfig:
    """Validate a parsed JSON config; errors name the offending key."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: top level must be an object")
    unknown = set(d) - _RUN_KEYS - {"preset"}
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    d = dict(d)
    preset = d.pop("preset", None)
    train = d.pop("train", None)
    kw = {}
    for key, value in d.items():
        expected = {"benchmark": str, "policy": str, "out": (str, type(None)),
                    "railway_config": (str, type(None)), "anchored": bool,
                    "enkf_in_loop": bool, "checkpoints": bool, "trial_logs": bool,
                    "initial_belief": (list, type(None)), "horizon": (int, type(None))}.get(key, int)
        if expected is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
        if expected is not int and not isinstance(value, expected):
            raise ConfigError(f"{where}.{key}: wrong type {type(value).__name__}")
        kw[key] = value
    benchmark = kw.get("benchmark", "discrete")
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"{where}.benchmark: must be one of {BENCHMARKS}, got {benchmark!r}")
    if train is not None:
        if not isinstance(train, dict):
            raise ConfigError(f"{where}.train: must be an object")
        bad = set(train) - _TRAIN_KEYS
        if bad:
            raise ConfigError(f"{where}.train: unknown key(s) {sorted(bad)}")
        base = dict(TRAIN_DEFAULTS[benchmark], seed=kw.get("seed", 0))
        base.update(train)
        try:
            kw["train"] = TrainConfig(**base)
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"{where}.train: {exc}") from None
    try:
        if preset == "desk":
            cfg = desk_preset(**kw) if "benchmark" in kw else desk_preset(benchmark, **kw)
        elif preset == "paper":
            cfg = paper_preset(**kw) if "benchmark" in kw else paper_preset(benchmark, **kw)
        elif preset is None:
            cfg = RunConfig(**kw)
        else:
            raise ConfigError(f"preset: unknown value {preset!r}")
    except ConfigError as exc:
        raise ConfigError(f"{where}.{exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    _check_initial_belief(cfg, where)
    return cfg


def _check_initial_belief(cfg: RunConfig, where: str = "config") -> None:
    b = cfg.initial_belief
    if b is None:
        return
    if cfg.benchmark == "continuous":
        if len(b) != 2 or b[1] < 0:
            raise ConfigError(f"{where}.initial_belief: expected [mean, std >= 0] for the continuous benchmark")
        return
    try:
        belief = CategoricalBelief(np.asarray(b, dtype=np.float64))
    except Exception as exc:
        raise ConfigError(f"{where}.initial_belief: {exc}") from None
    n = N_STATES[cfg.benchmark]
    if belief.n != n:
        raise ConfigError(f"{where}.initial_belief: expected {n} probabilities, got {belief.n}")


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    where = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{where}: cannot read ({exc})") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if overrides:
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: top level must be an object")
        d.update(overrides)
    return config_from_dict(d, where)


# ---------------------------------------------------------------- policy and simulation


def random_policy(action_space, rng):
    """Uniform action: ``action_space`` is a number of discrete actions or ``"continuous"`` for [0, 1]."""
    if action_space == "continuous":
        return float(rng.uniform())
    return int(rng.integers(int(action_space)))


class Benchmark:
    """Ground-truth environment plus the matching model shape."""

    def __init__(self, cfg: RunConfig):
        self.name = cfg.benchmark
        self.cfg = cfg
        if self.name == "discrete":
            init = None if cfg.initial_belief is None else CategoricalBelief(np.asarray(cfg.initial_belief))
            self.model = bridge_model(init)
            self.action_space = self.model.n_actions
        elif self.name == "continuous":
            mean, std = cfg.initial_belief if cfg.initial_belief is not None else (0.96, 0.0)
            self.model = ContinuousMaintenanceModel(initial_mean=float(mean), initial_std=float(std))
            self.action_space = "continuous"
        else:
            rc = load_railway_config(cfg.railway_config)
            if cfg.initial_belief is not None:
                rc = replace(rc, initial_belief=CategoricalBelief(np.asarray(cfg.initial_belief)))
            self.model = rc
            self.action_space = rc.n_actions

    @property
    def n_states(self) -> int:
        return self.model.n_states if self.name != "continuous" else 0

    def new_dbmm(self, seed: int) -> DBMM:
        c = self.cfg
        if self.name == "discrete":
            return DBMM("discrete", self.model.n_states, self.model.n_actions, self.model.n_obs,
                        c.hidden_dim, seed)
        if self.name == "continuous":
            return DBMM("gaussian", hidden_dim=c.hidden_dim, seed=seed, anchored=c.anchored)
        return DBMM("railway", self.model.n_states, self.model.n_actions, 0, c.hidden_dim, seed)

    def simulate(self, stream: RngStream, horizon: int) -> Trial:
        rng = stream.generator()
        if self.name == "continuous":
            m = self.model
            s = float(m.sample_initial(rng))
            obs, states, acts = [float(m.sample_observation(s, rng))], [s], []
            for _ in range(horizon):
                a = random_policy(self.action_space, rng)
                s, o = cont_step(s, a, rng, m)
                acts.append(a)
                states.append(s)
                obs.append(o)
            return Trial(np.array(obs), np.array(acts), np.array(states), seed=stream.stream)
        env = DiscreteEnv(self.model) if self.name == "discrete" else RailwayEnv(self.model)
        obs = [env.reset(rng)]
        states, beliefs, acts = [env.state], [env.belief.probs], []
        for _ in range(horizon):
            a = random_policy(self.action_space, rng)
            obs.append(env.step(a, rng))
            acts.append(a)
            states.append(env.state)
            beliefs.append(env.belief.probs)
        return Trial(np.array(obs), np.array(acts, dtype=np.int64), np.array(states, dtype=np.int64),
                     seed=stream.stream, true_beliefs=np.array(beliefs))


def simulate_batch(bench: Benchmark, parent: RngStream, n: int, horizon: int) -> List[Trial]:
    return [bench.simulate(split_stream(parent, k), horizon) for k in range(n)]


def replay_trial(bench: Benchmark, master_seed: int, stream_id: int, horizon: int) -> Trial:
    return bench.simulate(RngStream(master_seed, stream_id), horizon)


# ---------------------------------------------------------------- scoring


@dataclass
class EvaluationRecord:
    index: int
    phase: str = "train"          # "train", "heldout" or "heldout-untrained"
    status: str = "ok"
    metrics: Dict[str, float] = field(default_factory=dict)
    vectors: Dict[str, List[float]] = field(default_factory=dict)
    train_loss_initial: Optional[float] = None
    train_loss_final: Optional[float] = None
    wall_clock: float = 0.0
    checkpoint: Optional[str] = None
    reliability: Optional[Dict[str, List[float]]] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(**d)


def _nan_to_none(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


def score_batch(bench: Benchmark, model: DBMM, trials: Sequence[Trial], stream: Optional[RngStream] = None,
                enkf: bool = False) -> EvaluationRecord:
    """Metrics over steps ``1..T`` of every trial, flattened."""
    obs, act = stack_trials(trials)
    beliefs = model.infer_batch(obs, act)[:, 1:]
    states = np.stack([t.true_states for t in trials])[:, 1:]
    rec = EvaluationRecord(index=0)
    if bench.name in ("discrete", "railway"):
        n = bench.n_states
        true_b = np.stack([t.true_beliefs for t in trials])[:, 1:]
        m = rec.metrics
        m["ce_true"] = M.cross_entropy(true_b, states)
        m["ce_pred"] = M.cross_entropy(beliefs, states)
        m["ce_pred_aligned"], perm = M.aligned_cross_entropy(beliefs, states)
        m["ce_gap"] = m["ce_pred"] - m["ce_true"]
        m["ce_gap_aligned"] = m["ce_pred_aligned"] - m["ce_true"]
        mca_true, counts = M.mca(true_b, states, n)
        mca_pred, _ = M.mca(beliefs, states, n)
        mca_aligned, _ = M.mca(beliefs.reshape(-1, n)[:, perm], states, n)
        rec.vectors = {"mca_true": _nan_to_none(mca_true), "mca_pred": _nan_to_none(mca_pred),
                       "mca_pred_aligned": _nan_to_none(mca_aligned),
                       "class_counts": counts.tolist(), "alignment": perm.tolist()}
        return rec
    o = obs[:, 1:]
    m = rec.metrics
    m["mse_obs"] = M.mse(o, states)
    m["mse_belief"] = M.mse(beliefs[..., 0], states)
    prev = np.stack([t.true_states for t in trials])[:, :-1]
    tmean, tstd = bench.model.transition_moments(prev, act)
    truth = np.stack([tmean, tstd], axis=-1)
    m["kl_belief"] = M.kl_gaussian_sequence(beliefs, truth)
    enough = states.size >= 10
    if enough:
        curve = M.reliability_curve(beliefs, states)
        m["ks_belief"] = curve.ks
        rec.reliability = {"grid": curve.grid.tolist(), "belief": curve.cdf.tolist()}
    else:
        log.warning("only %d belief/state pairs; reliability curve skipped", states.size)
    if enkf:
        eb = enkf_beliefs(bench, trials, stream)[:, 1:]
        m["mse_enkf"] = M.mse(eb[..., 0], states)
        m["kl_enkf"] = M.kl_gaussian_sequence(eb, truth)
        if enough:
            ecurve = M.reliability_curve(eb, states)
            m["ks_enkf"] = ecurve.ks
            rec.reliability["enkf"] = ecurve.cdf.tolist()
    return rec


def enkf_beliefs(bench: Benchmark, trials: Sequence[Trial], stream: RngStream) -> np.ndarray:
    out = []
    for k, tr in enumerate(trials):
        rng = split_stream(stream, _ENKF_CHILD + k).generator()
        post = enkf_filter(tr.observations, tr.actions, bench.model, bench.cfg.enkf_particles, rng)
        out.append([[b.mean, b.std] for b in post])
    return np.array(out)


# ---------------------------------------------------------------- the loop


class _Writer:
    def __init__(self, out: Optional[str]):
        self.root = Path(out) if out else None
        if self.root is not None:
            try:
                self.root.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise RunAborted(f"cannot create output directory {self.root}: {exc}") from None

    def path(self, *parts) -> Optional[Path]:
        if self.root is None:
            return None
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, rel, text: str, mode="w"):
        p = self.path(*Path(rel).parts)
        if p is not None:
            with open(p, mode, newline="") as fh:
                fh.write(text)


def _trial_log(trials: Sequence[Trial], evaluation: int, master_seed: int, beliefs=None) -> str:
    lines = []
    for k, tr in enumerate(trials):
        d = {"evaluation": evaluation, "trial": k, "master_seed": master_seed, "stream": tr.seed}
        d.update(tr.to_dict())
        if beliefs is not None:
            d["predicted_beliefs"] = beliefs[k].tolist()
        lines.append(json.dumps(d))
    return "\n".join(lines) + "\n"


def run_evaluation(cfg: RunConfig) -> List[EvaluationRecord]:
    """Run the simulate/score/train loop and persist everything under ``cfg.out``."""
    bench = Benchmark(cfg)
    master = RngStream(cfg.seed)
    writer = _Writer(cfg.out)
    init_seed = split_stream(master, _INIT_CHILD).stream
    model = bench.new_dbmm(init_seed)
    untrained = model.copy()
    records: List[EvaluationRecord] = []
    config_dict = cfg.to_dict()
    writer.write_text("config.json", json.dumps(config_dict, indent=2, sort_keys=True) + "\n")
    writer.write_text("records.jsonl", "")
    do_enkf = bench.name == "continuous" and cfg.enkf_in_loop
    try:
        for i in range(cfg.n_evaluations):
            t0 = time.perf_counter()
            ev_stream = split_stream(master, i)
            trials = simulate_batch(bench, ev_stream, cfg.trials, cfg.horizon)
            rec = score_batch(bench, model, trials, ev_stream, enkf=do_enkf)
            rec.index = i
            if cfg.trial_logs:
                obs, act = stack_trials(trials)
                writer.write_text(f"trials/eval_{i:03d}.jsonl",
                                  _trial_log(trials, i, cfg.seed, model.infer_batch(obs, act)))
            try:
                report = train_update(model, trials, cfg.train, split_stream(ev_stream, _TRAIN_CHILD).generator())
                rec.train_loss_initial, rec.train_loss_final = report.initial_loss, report.final_loss
            except NonFiniteLoss as exc:
                log.error("evaluation %d: training failed: %s", i, exc)
                rec.status = "failed"
            if cfg.checkpoints and writer.root is not None:
                p = writer.path("checkpoints", f"eval_{i:03d}.npz")
                model.save(p, config_dict)
                rec.checkpoint = str(p.relative_to(writer.root))
            rec.wall_clock = time.perf_counter() - t0
            records.append(rec)
            writer.write_text("records.jsonl", json.dumps(rec.to_dict()) + "\n", mode="a")
            log.info("evaluation %d: %s", i, {k: round(v, 5) for k, v in rec.metrics.items()})
        if cfg.heldout_trials > 0:
            ho_stream = split_stream(master, _HELDOUT_CHILD)
            trials = simulate_batch(bench, ho_stream, cfg.heldout_trials, cfg.horizon)
            for phase, m in (("heldout-untrained", untrained), ("heldout", model)):
                rec = score_batch(bench, m, trials, ho_stream, enkf=do_enkf and phase == "heldout")
                rec.index, rec.phase = cfg.n_evaluations, phase
                records.append(rec)
                writer.write_text("records.jsonl", json.dumps(rec.to_dict()) + "\n", mode="a")
        if writer.root is not None:
            export_report(records, writer.root)
    except OSError as exc:
        raise RunAborted(f"I/O failure: {exc}", records) from exc
    return records


def run_enkf_baseline(cfg: RunConfig) -> EvaluationRecord:
    """Score the EnKF (true model) on one batch of continuous-benchmark trials."""
    if cfg.benchmark != "continuous":
        raise ConfigError(f"benchmark: the EnKF baseline needs 'continuous', got {cfg.benchmark!r}")
    bench = Benchmark(cfg)
    ev_stream = split_stream(RngStream(cfg.seed), 0)
    trials = simulate_batch(bench, ev_stream, cfg.trials, cfg.horizon)
    t0 = time.perf_counter()
    states = np.stack([t.true_states for t in trials])[:, 1:]
    obs, act = stack_trials(trials)
    eb = enkf_beliefs(bench, trials, ev_stream)[:, 1:]
    prev = np.stack([t.true_states for t in trials])[:, :-1]
    tmean, tstd = bench.model.transition_moments(prev, act)
    curve = M.reliability_curve(eb, states)
    rec = EvaluationRecord(index=0, phase="enkf", metrics={
        "mse_obs": M.mse(obs[:, 1:], states),
        "mse_enkf": M.mse(eb[..., 0], states),
        "kl_enkf": M.kl_gaussian_sequence(eb, np.stack([tmean, tstd], axis=-1)),
        "ks_enkf": curve.ks,
    }, reliability={"grid": curve.grid.tolist(), "enkf": curve.cdf.tolist()})
    rec.wall_clock = time.perf_counter() - t0
    if cfg.out:
        writer = _Writer(cfg.out)
        try:
            writer.write_text("config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
            writer.write_text("records.jsonl", json.dumps(rec.to_dict()) + "\n")
            if cfg.trial_logs:
                writer.write_text("trials/eval_000.jsonl", _trial_log(trials, 0, cfg.seed))
            export_report([rec], writer.root)
        except OSError as exc:
            raise RunAborted(f"I/O failure: {exc}", [rec]) from exc
    return rec


def run_simulation(cfg: RunConfig) -> List[Trial]:
    """Roll one batch of trials without any model; logs them under ``cfg.out``."""
    bench = Benchmark(cfg)
    trials = simulate_batch(bench, split_stream(RngStream(cfg.seed), 0), cfg.trials, cfg.horizon)
    if cfg.out:
        writer = _Writer(cfg.out)
        try:
            writer.write_text("trials/eval_000.jsonl", _trial_log(trials, 0, cfg.seed))
            summary = {"benchmark": cfg.benchmark, "trials": cfg.trials, "horizon": cfg.horizon}
            states = np.stack([t.true_states for t in trials])[:, 1:]
            if bench.name == "continuous":
                obs = np.stack([t.observations for t in trials])[:, 1:]
                summary["mse_obs"] = M.mse(obs, states)
            else:
                tb = np.stack([t.true_beliefs for t in trials])[:, 1:]
                summary["ce_true"] = M.cross_entropy(tb, states)
            writer.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise RunAborted(f"I/O failure: {exc}") from exc
    return trials


# ---------------------------------------------------------------- export


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def metrics_csv(records: Sequence[EvaluationRecord]) -> str:
    """One row per record; wall-clock times are kept out so reruns match byte for byte."""
    keys: List[str] = []
    for r in records:
        for k in r.metrics:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["evaluation", "phase", "status", *keys, "train_loss_initial", "train_loss_final"])
    for r in records:
        w.writerow([r.index, r.phase, r.status, *(_fmt(r.metrics.get(k)) for k in keys),
                    _fmt(r.train_loss_initial), _fmt(r.train_loss_final)])
    return buf.getvalue()


def export_report(records: Sequence[EvaluationRecord], out_dir) -> Dict[str, Path]:
    """Write metrics.csv, tables.json, series.json, timings.json and (if any) reliability.csv."""
    if not records:
        raise ValueError("export_report needs at least one record")
    root = Path(out_dir)
    files = {}
    try:
        root.mkdir(parents=True, exist_ok=True)
        files["metrics"] = root / "metrics.csv"
        files["metrics"].write_text(metrics_csv(records), newline="")
        tables = {"records": [{"evaluation": r.index, "phase": r.phase, **r.vectors} for r in records]}
        files["tables"] = root / "tables.json"
        files["tables"].write_text(json.dumps(tables, indent=2, sort_keys=True) + "\n")
        loop = [r for r in records if r.phase == "train"]
        series = {}
        for r in loop:
            for k, v in r.metrics.items():
                series.setdefault(k, []).append(v)
        files["series"] = root / "series.json"
        files["series"].write_text(json.dumps({"evaluation": [r.index for r in loop], **series},
                                              indent=2, sort_keys=True) + "\n")
        files["timings"] = root / "timings.json"
        files["timings"].write_text(json.dumps(
            [{"evaluation": r.index, "phase": r.phase, "seconds": r.wall_clock} for r in records], indent=2) + "\n")
        with_rel = [r for r in records if r.reliability]
        if with_rel:
            last = with_rel[-1].reliability
            cols = [k for k in ("belief", "enkf") if k in last]
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["quantile", *(f"cdf_{c}" for c in cols)])
            for j, g in enumerate(last["grid"]):
                w.writerow([f"{g:.2f}", *(repr(float(last[c][j])) for c in cols)])
            files["reliability"] = root / "reliability.csv"
            files["reliability"].write_text(buf.getvalue(), newline="")
    except OSError as exc:
        raise RunAborted(f"cannot write report to {root}: {exc}", list(records)) from exc
    return files


def load_records(out_dir) -> List[EvaluationRecord]:
    p = Path(out_dir) / "records.jsonl"
    try:
        lines = p.read_text().splitlines()
    except OSError as exc:
        raise RunAborted(f"cannot read {p}: {exc}") from None
    return [EvaluationRecord.from_dict(json.loads(line)) for line in lines if line.strip()]
