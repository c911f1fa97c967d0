"""Multi-seed experiment runner, per-run CSV logging, and aggregation.

Every run is shared-nothing and fully determined by (config, seed): run CSVs
are bitwise reproducible, and seeds may be trained in parallel worker
processes. The aggregate step condenses the run CSVs into a per-agent summary
(mean final greedy reward with a 95% confidence interval, before and after
the malfunction) plus per-episode curves for plotting.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .gridworld import AGENT_NAMES, GridWorld
from .learner import VdnTrainer
from .malfunction import MalfunctionSpec, MalfunctionTrigger, on_detection
from .relational import team_reward
from .validation import ConfigError


@dataclass
class RunRow:
    """One logged episode: a training row or a greedy-evaluation row."""

    seed: int
    episode: int
    phase: str  # "train" | "eval"
    agent_rewards: tuple[float, ...]
    team_reward: float
    epsilon: float
    mean_loss: float | None
    detected: bool

    def to_csv(self) -> list[str]:
        # repr of plain floats is the shortest round-tripping decimal form
        return [
            str(self.seed),
            str(self.episode),
            self.phase,
            *[repr(float(r)) for r in self.agent_rewards],
            repr(float(self.team_reward)),
            repr(float(self.epsilon)),
            "" if self.mean_loss is None else repr(float(self.mean_loss)),
            str(int(self.detected)),
        ]

    @classmethod
    def from_csv(cls, row: list[str], n_agents: int) -> "RunRow":
        return cls(
            seed=int(row[0]),
            episode=int(row[1]),
            phase=row[2],
            agent_rewards=tuple(float(x) for x in row[3 : 3 + n_agents]),
            team_reward=float(row[3 + n_agents]),
            epsilon=float(row[4 + n_agents]),
            mean_loss=None if row[5 + n_agents] == "" else float(row[5 + n_agents]),
            detected=bool(int(row[6 + n_agents])),
        )


def csv_header(n_agents: int) -> list[str]:
    return [
        "seed",
        "episode",
        "phase",
        *[f"agent{i}_r" for i in range(n_agents)],
        "team_r",
        "epsilon",
        "mean_loss",
        "detected",
    ]


def run_csv_path(out_dir: Path, seed: int) -> Path:
    return Path(out_dir) / f"run_seed{seed}.csv"


def run_single_seed(config: ExperimentConfig, seed: int, out_dir: str | Path) -> Path:
    """Train one seed end to end and write its run CSV; returns the path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = config.environment.layout()
    env = GridWorld(
        layout,
        max_steps=config.environment.max_steps,
        safe_spot_includes_consumed=config.environment.safe_spot_includes_consumed,
        seed=seed,
    )
    trainer = VdnTrainer(
        n_agents=config.n_agents,
        state_dim=layout.encoding_dim(),
        hidden_dims=tuple(config.hidden_dims),
        gamma=config.gamma,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        updates_per_episode=config.updates_per_episode,
        target_update_interval=config.target_update_interval,
        memory_capacity=config.memory_capacity,
        epsilon_start=config.epsilon.start,
        epsilon_end=config.epsilon.end,
        epsilon_decay_episodes=config.epsilon.decay_episodes,
        episodes=config.episodes,
        seed=seed,
    ).setup()
    mixing = config.initial_network()
    trigger = MalfunctionTrigger(
        n_agents=config.n_agents,
        window=config.trigger.window,
        drop_threshold=config.trigger.drop_threshold,
        baseline_window=config.trigger.baseline_window,
        warmup_evaluations=config.trigger.warmup_evaluations,
        stability_threshold=config.trigger.stability_threshold,
    )
    malfunction = (
        MalfunctionSpec(
            agent_index=config.malfunction.agent_index,
            onset_episode=config.malfunction.onset_episode,
            kind=config.malfunction.kind,
        )
        if config.malfunction is not None
        else None
    )

    rows: list[RunRow] = []
    for episode in range(config.episodes):
        action_filter = malfunction.action_filter(episode) if malfunction else None
        epsilon = trainer.schedule_.value(episode)
        record = trainer.train_episode(env, episode, mixing, epsilon, action_filter)
        rows.append(
            RunRow(
                seed=seed,
                episode=episode,
                phase="train",
                agent_rewards=tuple(float(r) for r in record.agent_rewards),
                team_reward=record.team_reward,
                epsilon=epsilon,
                mean_loss=record.mean_loss,
                detected=False,
            )
        )
        if (episode + 1) % config.eval_interval == 0:
            eval_rewards = trainer.evaluate_greedy(env, action_filter)
            detected = trigger.observe(eval_rewards)
            if detected is not None:
                mixing = on_detection(
                    detected,
                    trainer.schedule_,
                    episode + 1,
                    config.n_agents,
                    adapt_relations=config.algorithm == "ca_vdn",
                    current=mixing,
                    assist_weight=config.relational.assist_weight,
                    keep_self_edges=config.relational.keep_self_edges,
                )
            rows.append(
                RunRow(
                    seed=seed,
                    episode=episode,
                    phase="eval",
                    agent_rewards=tuple(float(r) for r in eval_rewards),
                    team_reward=team_reward(mixing, eval_rewards),
                    epsilon=0.0,
                    mean_loss=None,
                    detected=detected is not None,
                )
            )
        if config.checkpoint_interval and (episode + 1) % config.checkpoint_interval == 0:
            trainer.save_checkpoint(out_dir / f"checkpoint_seed{seed}_ep{episode + 1}.npz")

    path = run_csv_path(out_dir, seed)
    write_run_csv(path, rows, config.n_agents)
    return path


def write_run_csv(path: Path, rows: list[RunRow], n_agents: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(n_agents))
        for row in rows:
            writer.writerow(row.to_csv())


def read_run_csv(path: str | Path, n_agents: int) -> list[RunRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != csv_header(n_agents):
            raise ConfigError(f"run CSV {path} has unexpected header {header}")
        return [RunRow.from_csv(row, n_agents) for row in reader]


def _worker(args) -> tuple[int, str, str]:
    config, seed, out_dir = args
    try:
        path = run_single_seed(config, seed, out_dir)
        return seed, "ok", str(path)
    except Exception:
        return seed, "error", traceback.format_exc()


def run_experiment(config: ExperimentConfig) -> dict:
    """Run all configured seeds (possibly in parallel) and write a manifest.

    A failing seed is reported but does not stop the other seeds.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "algorithm": config.algorithm,
        "n_agents": config.n_agents,
        "agent_names": list(AGENT_NAMES[: config.n_agents]),
        "seeds": sorted(config.seeds),
        "episodes": config.episodes,
        "eval_interval": config.eval_interval,
        "onset_episode": (
            config.malfunction.onset_episode if config.malfunction is not None else None
        ),
        # out_dir is where this manifest already lives; echoing the absolute
        # path would make otherwise-identical experiments differ byte-wise
        "config": {
            k: v
            for k, v in {**config.to_dict(), "seeds": sorted(config.seeds)}.items()
            if k != "out_dir"
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    jobs = [(config, seed, str(out_dir)) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with multiprocessing.get_context("fork").Pool(min(config.workers, len(jobs))) as pool:
            results = pool.map(_worker, jobs)
    else:
        results = [_worker(job) for job in jobs]

    outcome = {
        "completed": {seed: path for seed, status, path in results if status == "ok"},
        "failed": {seed: err for seed, status, err in results if status == "error"},
    }
    return outcome


# -- aggregation ---------------------------------------------------------------


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    """Mean and 1.96 * sd / sqrt(n) (sample sd; zero width for n == 1)."""
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    sd = float(np.std(values, ddof=1))
    return mean, 1.96 * sd / np.sqrt(len(values))


def summary_csv_path(out_file: str | Path) -> Path:
    return Path(out_file)


def curves_csv_path(out_file: str | Path) -> Path:
    out_file = Path(out_file)
    return out_file.with_name(out_file.stem + "_curves.csv")


def meta_json_path(out_file: str | Path) -> Path:
    out_file = Path(out_file)
    return out_file.with_name(out_file.stem + "_meta.json")


def aggregate_runs(runs_dir: str | Path, out_file: str | Path) -> dict:
    """Summarize run CSVs into final-reward statistics and per-episode curves.

    Writes the Table-style summary to ``out_file``, per-episode curves to a
    ``*_curves.csv`` sibling, and marker metadata (onset, detection episodes)
    to a ``*_meta.json`` sibling. Returns the summary as a dict.
    """
    runs_dir = Path(runs_dir)
    manifest_path = runs_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json in {runs_dir}")
    manifest = json.loads(manifest_path.read_text())
    n_agents = manifest["n_agents"]
    onset = manifest.get("onset_episode")
    run_paths = sorted(runs_dir.glob("run_seed*.csv"), key=lambda p: int(p.stem[len("run_seed"):]))
    if len(run_paths) < 2:
        raise ConfigError(f"aggregation needs at least 2 run CSVs in {runs_dir}")
    runs = [read_run_csv(p, n_agents) for p in run_paths]

    # Final greedy evaluation per phase, per run.
    phases: dict[str, list[np.ndarray]] = {}
    detection_episodes: list[int | None] = []
    for rows in runs:
        evals = [r for r in rows if r.phase == "eval"]
        if not evals:
            raise ConfigError("run CSV contains no evaluation rows")
        if onset is not None:
            before = [r for r in evals if r.episode < onset]
            if before:
                phases.setdefault("before_malfunction", []).append(
                    np.array(before[-1].agent_rewards)
                )
            phases.setdefault("after_malfunction", []).append(np.array(evals[-1].agent_rewards))
        else:
            phases.setdefault("final", []).append(np.array(evals[-1].agent_rewards))
        fired = [r.episode for r in rows if r.detected]
        detection_episodes.append(fired[0] if fired else None)

    agent_names = manifest.get("agent_names") or [f"agent{i}" for i in range(n_agents)]
    summary_rows = []
    summary: dict = {"phases": {}, "n_runs": len(runs), "algorithm": manifest["algorithm"]}
    for phase, finals in phases.items():
        stacked = np.stack(finals)  # (runs, agents)
        summary["phases"][phase] = {}
        for i in range(n_agents):
            mean, ci = _mean_ci(stacked[:, i])
            summary["phases"][phase][i] = (mean, ci)
            summary_rows.append(
                [str(i), agent_names[i], phase, repr(float(mean)), repr(float(ci)), str(stacked.shape[0])]
            )

    out_file = summary_csv_path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    with open(out_file, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["agent", "agent_name", "phase", "mean_reward", "ci95", "n_runs"])
        writer.writerows(summary_rows)

    _write_curves(curves_csv_path(out_file), runs, n_agents)
    meta = {
        "onset_episode": onset,
        "detection_episodes": detection_episodes,
        "n_runs": len(runs),
        "algorithm": manifest["algorithm"],
        "agent_names": agent_names,
        "eval_interval": manifest.get("eval_interval"),
    }
    meta_json_path(out_file).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return summary


def _write_curves(path: Path, runs: list[list[RunRow]], n_agents: int) -> None:
    """Per-episode across-run mean / CI / min / max, for train and eval rows."""
    header = ["episode", "phase"]
    for i in range(n_agents):
        header += [f"agent{i}_mean", f"agent{i}_ci95", f"agent{i}_min", f"agent{i}_max"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for phase in ("train", "eval"):
            by_episode: dict[int, list[tuple[float, ...]]] = {}
            for rows in runs:
                for r in rows:
                    if r.phase == phase:
                        by_episode.setdefault(r.episode, []).append(r.agent_rewards)
            for episode in sorted(by_episode):
                stacked = np.array(by_episode[episode])  # (runs, agents)
                out = [str(episode), phase]
                for i in range(n_agents):
                    mean, ci = _mean_ci(stacked[:, i])
                    out += [
                        repr(float(mean)),
                        repr(float(ci)),
                        repr(float(stacked[:, i].min())),
                        repr(float(stacked[:, i].max())),
                    ]
                writer.writerow(out)
