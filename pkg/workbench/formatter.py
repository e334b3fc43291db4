import csv
import json
import logging
import os
from collections import defaultdict

import numpy as np

from metrics import topk_final

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["episode", "return", "moving_avg", "loss", "wall_ms"]
REPORT_COLUMNS = ["sampler", "env", "k", "n", "topk_mean", "topk_std"]


def _cell(value):
    """Plain '.'-decimal text: shortest round-trip form for floats."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return value


def write_csv(path: str, header: list, rows) -> str:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


def write_dict_rows(path: str, rows: list, header: list) -> str:
    return write_csv(path, header, ([row[c] for c in header] for row in rows))


def write_json(path: str, data: dict) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class RecordFormatter:
    """Turns run, toy and fault-simulation results into CSV files and report tables."""

    def __init__(self, window: int):
        self.window = window

    def run_rows(self, record) -> list:
        averages = record.moving_average(self.window)
        return [
            [episode, float(ret), float(avg), float(loss), float(ms)]
            for episode, (ret, avg, loss, ms) in enumerate(
                zip(record.returns, averages, record.losses, record.wall_ms)
            )
        ]

    def write_run(self, record, out_dir: str) -> list:
        """
        Write one seed's learning curve plus any diagnostics it carries.

        Args:
            record: RunRecord of a finished (or diverged) run
            out_dir: Session output directory

        Returns:
            List of written file paths
        """
        prefix = os.path.join(out_dir, f"seed_{record.seed}")
        paths = [write_csv(f"{prefix}.csv", RUN_COLUMNS, self.run_rows(record))]

        if record.sampled_indices:
            paths.append(write_dict_rows(f"{prefix}_indices.csv", record.sampled_indices,
                                         ["episode", "batch", "index"]))
        if record.td_rows:
            paths.append(write_dict_rows(f"{prefix}_td.csv", record.td_rows,
                                         ["episode", "batch", "index", "td_error", "reward"]))
        if record.surprise_rows:
            paths.append(write_dict_rows(f"{prefix}_surprise.csv", record.surprise_rows,
                                         ["episode", "batch", "position", "index", "normalized_td"]))
        if record.q_network is not None:
            path = f"{prefix}_params.txt"
            record.q_network.export_parameters(path)
            paths.append(path)
        return paths

    @staticmethod
    def write_toy(record, out_dir: str) -> list:
        prefix = os.path.join(out_dir, f"seed_{record.seed}")
        states = range(1, len(record.absolute_frequency) + 1)
        return [
            write_csv(f"{prefix}_frequency.csv", ["state", "count"], zip(states, record.absolute_frequency)),
            write_csv(f"{prefix}_buffer.csv", ["state", "count"], zip(states, record.buffer_histogram)),
        ]

    @staticmethod
    def write_rollouts(records: list, out_dir: str) -> str:
        rows = [[r.seed, r.reached_goal, r.rollout_steps] for r in records]
        return write_csv(os.path.join(out_dir, "rollouts.csv"), ["seed", "reached_goal", "steps"], rows)

    @staticmethod
    def write_accuracy(out_dir: str, topk: float, average: float, analytic: tuple = None) -> str:
        path = os.path.join(out_dir, "accuracy.csv")
        if analytic is None:
            return write_csv(path, ["metric", "accuracy"], [["topk", topk], ["average", average]])
        return write_csv(path, ["metric", "accuracy", "analytic"],
                         [["topk", topk, analytic[0]], ["average", average, analytic[1]]])


def _final_moving_average(path: str) -> float:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != RUN_COLUMNS:
            raise ValueError(f"Incompatible run CSV {path}: header {header}, expected {RUN_COLUMNS}")
        last = None
        for last in reader:
            pass
    if last is None:
        raise ValueError(f"Run CSV {path} has no episodes")
    return float(last[RUN_COLUMNS.index("moving_avg")])


def collect_finals(run_dirs: list) -> dict:
    """
    Final moving-average per seed, grouped by (sampler, env).

    Raises:
        ValueError: On a missing manifest, a foreign CSV header, or mixed moving-average windows
    """
    groups = defaultdict(list)
    windows = {}
    for run_dir in run_dirs:
        manifest_path = os.path.join(run_dir, "manifest.json")
        if not os.path.exists(manifest_path):
            raise ValueError(f"No manifest.json in {run_dir}")
        manifest = read_json(manifest_path)
        if manifest.get("command") != "run":
            raise ValueError(f"{manifest_path} is not an online run manifest")

        config = manifest["config"]
        windows[run_dir] = config["eval_window"]
        key = (manifest["sampler"], config["env"])
        for seed in manifest["seeds"]:
            groups[key].append(_final_moving_average(os.path.join(run_dir, f"seed_{seed}.csv")))

    if len(set(windows.values())) > 1:
        raise ValueError(f"Run directories use different moving-average windows: {windows}")
    return groups


def build_report(run_dirs: list, k: int) -> list:
    """One row per (sampler, env): Top-K mean and std of the selected seeds."""
    rows = []
    for (sampler, env), finals in sorted(collect_finals(run_dirs).items()):
        if k > len(finals):
            raise ValueError(f"k={k} exceeds the {len(finals)} seeds available for {sampler} on {env}")
        selected = np.sort(np.asarray(finals))[-k:]
        rows.append([sampler, env, k, len(finals), topk_final(finals, k), float(np.std(selected))])
    return rows


def format_table(rows: list) -> str:
    """Fixed-width text table of report rows."""
    lines = [f"{'sampler':<24} {'env':<10} {'k':>3} {'n':>3}  top-k final"]
    for sampler, env, k, n, mean, std in rows:
        lines.append(f"{sampler:<24} {env:<10} {k:>3} {n:>3}  {mean:.2f} ± {std:.2f}")
    return "\n".join(lines)
