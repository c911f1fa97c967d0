"""Static charts of aggregated reward curves (deterministic SVG output)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SERIES_COLORS = ("tab:blue", "tab:red", "tab:orange", "tab:green")


def _read_curves(path: Path) -> tuple[int, dict[str, dict[str, list]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_agents = (len(header) - 2) // 4
        data: dict[str, dict[str, list]] = {
            phase: {"episode": []} for phase in ("train", "eval")
        }
        for phase in data:
            for i in range(n_agents):
                for stat in ("mean", "ci95", "min", "max"):
                    data[phase][f"agent{i}_{stat}"] = []
        for row in reader:
            phase = row[1]
            data[phase]["episode"].append(int(row[0]))
            for j, name in enumerate(header[2:], start=2):
                data[phase][name].append(float(row[j]))
    return n_agents, data


def render_charts(aggregate_file: str | Path, out_dir: str | Path) -> list[Path]:
    """Render per-agent reward curves from an aggregate produced by `aggregate`.

    ``aggregate_file`` may be the summary CSV or its ``*_curves.csv`` sibling.
    Emits one chart of greedy-evaluation rewards and one of training rewards
    (mean line, shaded 95% CI band), both with vertical markers at the
    malfunction onset and at the mean detection episode.
    """
    aggregate_file = Path(aggregate_file)
    if aggregate_file.stem.endswith("_curves"):
        curves_path = aggregate_file
        stem = aggregate_file.stem[: -len("_curves")]
    else:
        curves_path = aggregate_file.with_name(aggregate_file.stem + "_curves.csv")
        stem = aggregate_file.stem
    if not curves_path.exists():
        raise FileNotFoundError(f"curves file {curves_path} not found")
    meta_path = curves_path.with_name(stem + "_meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}

    n_agents, data = _read_curves(curves_path)
    if not data["train"]["episode"] and not data["eval"]["episode"]:
        raise ValueError(f"curves file {curves_path} holds no data")
    agent_names = meta.get("agent_names") or [f"agent{i}" for i in range(n_agents)]
    onset = meta.get("onset_episode")
    detections = [e for e in meta.get("detection_episodes", []) if e is not None]
    detection = sum(detections) / len(detections) if detections else None

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "cavdn"

    written = []
    specs = [
        ("eval", "Greedy evaluation reward", out_dir / "eval_rewards.svg"),
        ("train", "Training reward", out_dir / "train_rewards.svg"),
    ]
    for phase, title, path in specs:
        block = data[phase]
        if not block["episode"]:
            continue
        fig, ax = plt.subplots(figsize=(9, 5))
        episodes = block["episode"]
        for i in range(n_agents):
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            mean = block[f"agent{i}_mean"]
            ci = block[f"agent{i}_ci95"]
            ax.plot(episodes, mean, label=agent_names[i], color=color, linewidth=1.0)
            lower = [m - c for m, c in zip(mean, ci)]
            upper = [m + c for m, c in zip(mean, ci)]
            ax.fill_between(episodes, lower, upper, color=color, alpha=0.2, linewidth=0)
        if onset is not None:
            ax.axvline(onset, color="black", linestyle="--", linewidth=1,
                       label="malfunction onset")
        if detection is not None:
            ax.axvline(detection, color="gray", linestyle=":", linewidth=1, label="detection")
        ax.set_xlabel("episode")
        ax.set_ylabel("reward")
        ax.set_title(title)
        ax.legend(loc="lower left", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
