import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from app.config import CHART_STYLE, THEME_CONFIG  # noqa: E402

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and NaN into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(doc: Dict, path: Path) -> Path:
    """Write a document as indented JSON with a trailing newline."""
    path = Path(path)
    with open(path, "w") as f:
        f.write(json.dumps(to_jsonable(doc), indent=2, sort_keys=True))
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(df: pd.DataFrame, path: Path, config: Dict) -> Path:
    """Write a CSV whose leading '#' lines carry the run configuration."""
    path = Path(path)
    header = json.dumps(to_jsonable(config), sort_keys=True)
    with open(path, "w", newline="") as f:
        f.write(f"# config: {header}\n")
        df.to_csv(f, index=False, lineterminator="\n")
    logger.info(f"Wrote {path}")
    return path


def read_csv_config(path: Path) -> Dict:
    """Configuration embedded in a CSV written by write_csv."""
    with open(path) as f:
        first = f.readline()
    if not first.startswith("# config: "):
        return {}
    return json.loads(first[len("# config: "):])


def read_artifact_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def _save_svg(fig, path: Path, config: Dict) -> Path:
    path = Path(path)
    fig.savefig(
        path,
        format="svg",
        metadata={
            "Date": None,
            "Description": json.dumps(to_jsonable(config), sort_keys=True)
        }
    )
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def zone_color(zone: int) -> str:
    colors = THEME_CONFIG["zone_colors"]
    return colors[zone % len(colors)]


def plot_zones_svg(zr, path: Path, config: Dict) -> Path:
    """
    Scatter of the first two feature columns, colored by zone.

    Dot area grows with 1/nodal weight; zone SEPs are crosses and the system
    SEP a filled dot.
    """
    markers = THEME_CONFIG["markers"]
    lo, hi = markers["bus_size_range"]
    inverse = 1.0 / np.asarray(zr.bus_weights)
    span = inverse.max() - inverse.min()
    sizes = np.full_like(inverse, (lo + hi) / 2) if span == 0 else lo + (hi - lo) * (inverse - inverse.min()) / span

    with plt.rc_context(CHART_STYLE):
        fig, ax = plt.subplots()
        for zone in range(zr.k):
            rows = [i for i, bus_id in enumerate(zr.bus_order) if zr.assignment[bus_id] == zone]
            ax.scatter(zr.features[rows, 0], zr.features[rows, 1], s=sizes[rows],
                       color=zone_color(zone), alpha=0.75, label=f"zone {zone}")
            for i in rows:
                ax.annotate(str(zr.bus_order[i]), (zr.features[i, 0], zr.features[i, 1]),
                            fontsize=6, ha="center", va="center")
        ax.scatter(zr.seps[:, 0], zr.seps[:, 1], marker=markers["sep"]["marker"],
                   color=markers["sep"]["color"], s=markers["sep"]["size"],
                   linewidths=markers["sep"]["linewidth"], label="zone SEP")
        if zr.system_sep is not None:
            ax.scatter([zr.system_sep[0]], [zr.system_sep[1]], marker=markers["system_sep"]["marker"],
                       color=markers["system_sep"]["color"], s=markers["system_sep"]["size"], label="system SEP")
        ax.set_xlabel("slow mode 1 (normalized)")
        ax.set_ylabel("slow mode 2 (normalized)" if zr.features.shape[1] > 2 else "DNW (normalized)")
        ax.set_title(f"Inertia zones, k = {zr.k}")
        ax.legend(fontsize=7, loc="best")
        return _save_svg(fig, path, config)


def plot_sweep_svg(df: pd.DataFrame, path: Path, config: Dict, highlight: Iterable[int] = ()) -> Path:
    """DNW against H, one line per bus; highlighted buses are drawn thicker and labelled."""
    highlight = set(highlight)
    with plt.rc_context(CHART_STYLE):
        fig, ax = plt.subplots()
        for bus_id, group in df.groupby("bus_id", sort=True):
            if bus_id in highlight:
                ax.plot(group["h"], group["dnw"], linewidth=2.0, marker="o", label=f"bus {bus_id}")
            else:
                ax.plot(group["h"], group["dnw"], linewidth=0.6,
                        color=THEME_CONFIG["light_theme"]["secondary_text"], alpha=0.6)
        ax.set_xlabel("inertia constant H (s)")
        ax.set_ylabel("dynamic nodal weight")
        ax.set_title(f"DNW sweep at bus {config.get('bus')}")
        if highlight:
            ax.legend(fontsize=7, loc="best")
        return _save_svg(fig, path, config)


def format_number(num: float) -> str:
    """Compact number for log lines."""
    if num is None or (isinstance(num, float) and math.isnan(num)):
        return "nan"
    return f"{num:.4g}"
