"""Human-readable tables (percent, one decimal) and machine JSON for reports."""

import json
import math
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import pandas as pd

from .retrieval import RetrievalReport


def _percent(value: float) -> str:
    return "-" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{100.0 * value:.1f}"


def percent_table(frame: pd.DataFrame) -> str:
    return frame.to_string(formatters={column: _percent for column in frame.columns})


def retrieval_text(report: RetrievalReport) -> str:
    table = report.mean_ap.copy()
    table["mean"] = report.row_means
    lines = [f"Cross-modal retrieval mAP (%), layer {report.layer}"
             + (f", strategy {report.strategy}" if report.strategy else ""),
             percent_table(table),
             f"grand mean mAP: {_percent(report.grand_mean)}",
             "",
             f"Precision@{report.pr_k} (%)",
             percent_table(report.precision),
             f"grand mean precision@{report.pr_k}: {_percent(report.precision_grand_mean)}"]
    return "\n".join(lines) + "\n"


def layer_sweep_text(frame: pd.DataFrame, title: str = "Mean cross-modal retrieval across layers") -> str:
    return f"{title} (%)\n{percent_table(frame)}\n"


def accuracy_text(accuracy: Mapping[str, float], title: str, chance: Optional[float] = None) -> str:
    frame = pd.DataFrame({"accuracy": pd.Series(accuracy, dtype=np.float64)})
    frame.index.name = "modality"
    lines = [f"{title} (%)", percent_table(frame)]
    if chance is not None:
        lines.append(f"chance: {_percent(chance)}")
    return "\n".join(lines) + "\n"


def mean_std_table(per_run: Mapping[str, Mapping[str, float]]) -> pd.DataFrame:
    """Rows = runs plus ``mean`` and ``std`` rows; columns = metrics."""
    frame = pd.DataFrame.from_dict(per_run, orient="index").sort_index()
    frame.index.name = "run"
    summary = pd.DataFrame([frame.mean(axis=0), frame.std(axis=0, ddof=0)], index=["mean", "std"])
    return pd.concat([frame, summary])


def mean_std_text(per_run: Mapping[str, Mapping[str, float]], title: str) -> str:
    table = mean_std_table(per_run)
    lines = [f"{title} (%)", percent_table(table), ""]
    for column in table.columns:
        lines.append(f"{column}: {_percent(table.loc['mean', column])} "
                     f"± {_percent(table.loc['std', column])}")
    return "\n".join(lines) + "\n"


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) else value
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(data: Mapping[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(dict(data)), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_text(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
