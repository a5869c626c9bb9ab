"""Parameter-count reports across sublayer variants."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from ..model_zoo import COLUMNS, EncoderConfig, parameter_count

BASELINE = "DTQN4"  # feed-forward sublayer with 4x expansion
PROPOSED = "DBGFQN"


def sweep_configs(base: EncoderConfig, columns: Optional[Sequence[str]] = None) -> dict[str, EncoderConfig]:
    """One config per model column, sharing everything but the sublayer."""
    columns = list(COLUMNS) if columns is None else list(columns)
    return {name: base.replace(**COLUMNS[name]) for name in columns}


def reduction_percent(configs: Mapping[str, EncoderConfig]) -> Optional[float]:
    """Percentage by which the proposed model is smaller than the 4x FFN baseline."""
    if BASELINE not in configs or PROPOSED not in configs:
        return None
    base = parameter_count(configs[BASELINE]).total
    return 100.0 * (1.0 - parameter_count(configs[PROPOSED]).total / base)


def report_parameters(
    configs: Union[EncoderConfig, Mapping[str, EncoderConfig]], path=None
) -> str:
    """CSV ``model,submodule,count`` with per-submodule rows, a total per model and,
    when both are present, the reduction of DBGFQN relative to DTQN4."""
    if isinstance(configs, EncoderConfig):
        configs = sweep_configs(configs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "submodule", "count"])
    for name, cfg in configs.items():
        counts = parameter_count(cfg)
        for sub, n in counts.grouped().items():
            writer.writerow([name, sub, n])
        writer.writerow([name, "total", counts.total])
    reduction = reduction_percent(configs)
    if reduction is not None:
        writer.writerow([f"{PROPOSED}_vs_{BASELINE}", "reduction_percent", f"{reduction:.2f}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_report(text: str) -> dict[str, dict[str, Union[int, float]]]:
    """Inverse of report_parameters: counts come back as ints, percentages as floats."""
    out: dict[str, dict[str, Union[int, float]]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        value = row["count"]
        out.setdefault(row["model"], {})[row["submodule"]] = int(value) if value.lstrip("-").isdigit() else float(value)
    return out
