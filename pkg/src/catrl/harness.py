"""Experiment runner: config parsing, multi-seed orchestration, artifacts.

Artifacts per experiment: one metrics CSV per seed, an aggregate CSV of the
moving success rate across seeds, a manifest, and (for the abstract learner)
the final tree as a JSON document plus a DOT rendering.
"""

from __future__ import annotations

import csv
import io
import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .agent import AgentConfig, EpisodeRecord, learn
from .baseline import concrete_q_learn
from .cat import Cat, deserialize_cat, serialize_cat
from .envs import office_make, taxi_make, waterworld_make, wumpus_make

DAR_RL = "dar_rl"
Q_LEARNING = "q_learning"

METRIC_COLUMNS = ("episode", "return", "steps", "success",
                  "moving_success_100", "leaf_count", "epsilon")


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    name: str
    size: int = 0
    slip: float = 0.1
    layout_seed: int = 0


@dataclass
class ExperimentConfig:
    env: EnvConfig
    algorithm: str = DAR_RL
    agent: AgentConfig = field(default_factory=AgentConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    workers: int = 1

    def validate(self):
        problems = []
        if self.algorithm not in (DAR_RL, Q_LEARNING):
            problems.append(f"unknown algorithm {self.algorithm!r}")
        if self.env.name not in ("wumpus", "office", "taxi", "waterworld"):
            problems.append(f"unknown env {self.env.name!r}")
        if self.algorithm == Q_LEARNING and self.env.name == "waterworld":
            problems.append("q_learning does not support continuous state spaces")
        if not self.seeds:
            problems.append("at least one seed required")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        try:
            self.agent.validate()
        except ValueError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))


def make_env(env_cfg: EnvConfig):
    if env_cfg.name == "wumpus":
        return wumpus_make(env_cfg.size, env_cfg.layout_seed, env_cfg.slip)
    if env_cfg.name == "office":
        return office_make(env_cfg.size, env_cfg.slip)
    if env_cfg.name == "taxi":
        return taxi_make(env_cfg.size, env_cfg.slip)
    if env_cfg.name == "waterworld":
        return waterworld_make()
    raise ConfigError(f"unknown env {env_cfg.name!r}")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML experiment document; CLI overrides win over file fields."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    overrides = overrides or {}
    env_doc = dict(doc.get("env", {}))
    if "env" in overrides:
        env_doc["name"] = overrides["env"]
    if "size" in overrides:
        env_doc["size"] = overrides["size"]
    agent_doc = dict(doc.get("agent", {}))
    if "episodes" in overrides:
        agent_doc["n_epi"] = overrides["episodes"]
    seeds = overrides.get("seed") is not None and [overrides["seed"]] or doc.get("seeds", [0])
    try:
        cfg = ExperimentConfig(
            env=EnvConfig(**env_doc),
            algorithm=doc.get("algorithm", DAR_RL),
            agent=AgentConfig(**agent_doc),
            seeds=list(seeds),
            out_dir=overrides.get("out") or doc.get("out_dir", "results"),
            workers=doc.get("workers", 1),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc
    cfg.validate()
    return cfg


def moving_success(records: list[EpisodeRecord], window: int = 100) -> list[float]:
    out = []
    acc = 0
    flags = [int(r.success) for r in records]
    for i, flag in enumerate(flags):
        acc += flag
        if i >= window:
            acc -= flags[i - window]
        out.append(acc / min(i + 1, window))
    return out


def _run_one(env_cfg: EnvConfig, algorithm: str, agent_cfg: AgentConfig, seed: int):
    env = make_env(env_cfg)
    rng = random.Random(seed)
    if algorithm == DAR_RL:
        result = learn(env, agent_cfg, rng)
        return seed, result.stats, serialize_cat(result.cat)
    stats = concrete_q_learn(env, agent_cfg, rng)
    return seed, stats, None


def _metrics_rows(records: list[EpisodeRecord]):
    moving = moving_success(records)
    for rec, mov in zip(records, moving):
        yield (rec.episode, repr(rec.ret), rec.steps, int(rec.success),
               repr(mov), rec.leaf_count, repr(rec.epsilon))


def write_metrics_csv(path: Path, records: list[EpisodeRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        w.writerows(_metrics_rows(records))


def write_aggregate_csv(path: Path, by_label: dict[str, list[list[EpisodeRecord]]]):
    """One row per episode with mean/std moving success for each label."""
    labels = list(by_label)
    header = ["episode"]
    for label in labels:
        header += [f"{label}_mean_moving_success", f"{label}_std_moving_success"]
    curves = {
        label: [moving_success(run) for run in runs] for label, runs in by_label.items()
    }
    n_epi = max((len(c) for cs in curves.values() for c in cs), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for ep in range(n_epi):
            row = [ep + 1]
            for label in labels:
                vals = [c[ep] for c in curves[label] if ep < len(c)]
                row += [repr(float(np.mean(vals))), repr(float(np.std(vals)))]
            w.writerow(row)


def export_cat_dot(cat: Cat | str) -> str:
    """DOT rendering of a cat (object or serialized document); leaves filled."""
    if isinstance(cat, str):
        cat = deserialize_cat(cat)
    lines = ["digraph cat {", "  node [shape=box];"]
    for node in cat.nodes:
        parts = []
        for itv in node.abstraction.intervals:
            if itv.kind == "integer":
                parts.append(f"[{int(itv.lo)},{int(itv.hi)}]")
            else:
                parts.append(f"[{itv.lo:g},{itv.hi:g})")
        style = ' style=filled fillcolor="lightblue"' if node.is_leaf else ""
        lines.append(f'  n{node.id} [label="{" x ".join(parts)}"{style}];')
    for node in cat.nodes:
        for child in node.children:
            lines.append(f"  n{node.id} -> n{child};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig) -> list[Path]:
    """Run every seed, write artifacts, return the created paths."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = _run_seeds(config, config.algorithm)

    written = []
    runs = []
    for seed, stats, cat_doc in results:
        runs.append(stats)
        metrics = out / f"{config.algorithm}_seed{seed}.csv"
        write_metrics_csv(metrics, stats)
        written.append(metrics)
        if cat_doc is not None:
            cat_path = out / f"cat_seed{seed}.json"
            cat_path.write_text(cat_doc)
            dot_path = out / f"cat_seed{seed}.dot"
            dot_path.write_text(export_cat_dot(cat_doc))
            written += [cat_path, dot_path]

    agg = out / f"{config.algorithm}_aggregate.csv"
    write_aggregate_csv(agg, {config.algorithm: runs})
    written.append(agg)
    written.append(_write_manifest(out, config))
    return written


def run_comparison(config: ExperimentConfig) -> list[Path]:
    """Run dar_rl and q_learning with shared seeds; side-by-side aggregate."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    by_label = {}
    for algorithm in (DAR_RL, Q_LEARNING):
        runs = []
        for seed, stats, cat_doc in _run_seeds(config, algorithm):
            runs.append(stats)
            metrics = out / f"{algorithm}_seed{seed}.csv"
            write_metrics_csv(metrics, stats)
            written.append(metrics)
            if cat_doc is not None:
                cat_path = out / f"cat_seed{seed}.json"
                cat_path.write_text(cat_doc)
                written.append(cat_path)
        by_label[algorithm] = runs
    agg = out / "compare_aggregate.csv"
    write_aggregate_csv(agg, by_label)
    written.append(agg)
    written.append(_write_manifest(out, config))
    return written


def _run_seeds(config: ExperimentConfig, algorithm: str):
    jobs = [(config.env, algorithm, config.agent, seed) for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]
    return sorted(results, key=lambda r: r[0])


def _write_manifest(out: Path, config: ExperimentConfig) -> Path:
    manifest = {
        "version": __version__,
        "config": {
            "env": asdict(config.env),
            "algorithm": config.algorithm,
            "agent": asdict(config.agent),
            "seeds": config.seeds,
            "out_dir": config.out_dir,
            "workers": config.workers,
        },
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
