"""Experiment result records and their CSV and JSON serialisations"""

from __future__ import annotations
from collections.abc import Iterable, Sequence
import csv
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import IO, Any
from .util import JSONable, conv

#: Scalar types allowed as configuration values
ConfigValue = int | float | str


def _structure_config_value(value: Any, _: Any) -> ConfigValue:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise TypeError(f"Invalid configuration value: {value!r}")
    return value


conv.register_structure_hook_func(
    lambda t: t == ConfigValue, _structure_config_value
)


@dataclass(frozen=True)
class ExperimentRecord(JSONable):
    """One measured point together with everything needed to re-run it"""

    experiment: str
    seed: int
    config: dict[str, ConfigValue]
    metrics: dict[str, float]

    def sort_key(self) -> tuple:
        def order(v: ConfigValue) -> tuple[int, float, str]:
            if isinstance(v, str):
                return (1, 0.0, v)
            return (0, float(v), "")

        return (
            self.experiment,
            tuple((k, order(v)) for k, v in self.config.items()),
            self.seed,
        )


@dataclass
class RunConfig(JSONable):
    """The resolved settings of one command-line run"""

    experiment: str
    seed: int
    parameters: dict[str, Any] = field(default_factory=dict)
    output_path: Path | None = None


def sort_records(records: Iterable[ExperimentRecord]) -> list[ExperimentRecord]:
    return sorted(records, key=ExperimentRecord.sort_key)


def _columns(records: Sequence[ExperimentRecord]) -> tuple[list[str], list[str]]:
    config: dict[str, None] = {}
    metrics: dict[str, None] = {}
    for r in records:
        config.update(dict.fromkeys(r.config))
        metrics.update(dict.fromkeys(r.metrics))
    return list(config), list(metrics)


def _cell(value: ConfigValue | None) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(records: Iterable[ExperimentRecord], fp: IO[str]) -> None:
    """
    Write one row per record, sorted, under a header naming the experiment,
    the seed, every configuration field and every metric
    """
    rows = sort_records(records)
    config_cols, metric_cols = _columns(rows)
    out = csv.writer(fp, lineterminator="\n")
    out.writerow(["experiment", "seed", *config_cols, *metric_cols])
    for r in rows:
        out.writerow(
            [
                r.experiment,
                str(r.seed),
                *(_cell(r.config.get(c)) for c in config_cols),
                *(_cell(r.metrics.get(c)) for c in metric_cols),
            ]
        )


def _finite_or_null(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    elif isinstance(value, dict):
        return {k: _finite_or_null(v) for k, v in value.items()}
    elif isinstance(value, list):
        return [_finite_or_null(v) for v in value]
    else:
        return value


def write_json(
    records: Iterable[ExperimentRecord], run: RunConfig, fp: IO[str]
) -> None:
    """Write ``run`` and the sorted ``records``; undefined metrics become null"""
    doc = {
        "run": run.for_json(),
        "records": [r.for_json() for r in sort_records(records)],
    }
    print(json.dumps(_finite_or_null(doc), indent=4, allow_nan=False), file=fp)


def read_json(fp: IO[str]) -> tuple[RunConfig, list[ExperimentRecord]]:
    doc = json.load(fp)
    records = []
    for r in doc["records"]:
        metrics = {k: math.nan if v is None else v for k, v in r["metrics"].items()}
        records.append(ExperimentRecord.parse_obj({**r, "metrics": metrics}))
    return (RunConfig.parse_obj(doc["run"]), records)
