"""Plot-ready tables (ground-plane paths, timing summaries) and their PNG rendering"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from posegan.core.exceptions import DatasetError
from posegan.services.evaluation_service import Trajectory, load_trajectory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TIMING_COLUMNS = ["method", "count", "min", "q1", "median", "q3", "max", "mean"]


@dataclass
class PlotTables:
    paths: Dict[str, pd.DataFrame] = field(default_factory=dict)
    timing_summary: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=TIMING_COLUMNS))
    timings: Dict[str, np.ndarray] = field(default_factory=dict)


def path_table(trajectory: Trajectory) -> pd.DataFrame:
    """Camera centers projected onto the x-z ground plane"""
    positions = trajectory.positions()
    return pd.DataFrame({"frame": np.arange(len(positions)), "x": positions[:, 0], "z": positions[:, 2]})


def five_number_summary(values: Sequence[float]) -> Dict[str, float]:
    """min, quartiles (linear interpolation), max and mean"""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DatasetError("Cannot summarize an empty timing series")
    q1, median, q3 = np.percentile(v, [25, 50, 75])
    return {
        "count": int(v.size),
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(v.max()),
        "mean": float(v.mean()),
    }


def plot_data(
    trajectories: Mapping[str, Trajectory],
    timings: Mapping[str, Sequence[float]] = None,
) -> PlotTables:
    """Path tables per trajectory and a five-number summary per timing series (ms)"""
    timings = timings or {}
    if not trajectories and not timings:
        raise DatasetError("Nothing to plot: no trajectories and no timings")
    tables = PlotTables()
    for name, trajectory in trajectories.items():
        tables.paths[name] = path_table(trajectory)
    rows = []
    for name, values in timings.items():
        rows.append({"method": name, **five_number_summary(values)})
        tables.timings[name] = np.asarray(values, dtype=np.float64)
    if rows:
        tables.timing_summary = pd.DataFrame(rows, columns=TIMING_COLUMNS)
    return tables


def write_plot_tables(tables: PlotTables, out: PathLike) -> List[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, df in tables.paths.items():
        path = out / f"path_{name}.csv"
        df.to_csv(path, index=False)
        written.append(path)
    if not tables.timing_summary.empty:
        path = out / "timing_summary.csv"
        tables.timing_summary.to_csv(path, index=False)
        written.append(path)
    return written


def read_timings(path: PathLike) -> np.ndarray:
    """Milliseconds column of a ``timings.csv`` written by inference"""
    df = pd.read_csv(path)
    if "ms" not in df.columns:
        raise DatasetError(f"{path}: no 'ms' column", path=str(path))
    return df["ms"].to_numpy(dtype=np.float64)


def load_named_trajectories(specs: Sequence[str]) -> Dict[str, Trajectory]:
    """``name=path`` or bare ``path`` (named after the file stem)"""
    result = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        result[name] = load_trajectory(path)
    return result


def render(tables: PlotTables, out: PathLike) -> List[Path]:
    """trajectories.png (x-z overlay) and timings.png (boxplot)"""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if tables.paths:
        fig, ax = plt.subplots(figsize=(6, 6))
        for name, df in tables.paths.items():
            ax.plot(df["x"], df["z"], label=name, linewidth=1.2)
        ax.set_xlabel("x (m)")
        ax.set_ylabel("z (m)")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        path = out / "trajectories.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    if tables.timings:
        fig, ax = plt.subplots(figsize=(5, 4))
        names = list(tables.timings)
        ax.boxplot([tables.timings[n] for n in names])
        ax.set_xticks(range(1, len(names) + 1))
        ax.set_xticklabels(names)
        ax.set_ylabel("time per frame (ms)")
        fig.tight_layout()
        path = out / "timings.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    logger.info(f"Rendered {len(written)} figure(s) to {out}")
    return written
