"""
文本格式读写：行为表、比特串分布、报告与校准数据
"""
import json
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel

from ..models.behavior import Behavior, Scenario
from ..models.errors import CalibrationError, ScenarioError, SourceModelError
from ..models.source import Distribution
from .bits import atomic_write_text

PathLike = Union[str, Path]

CALIBRATION_COLUMNS = ("mean_current", "variance")


def _format_probability(p: float) -> str:
    # 17 位有效数字保证 float64 往返一致
    return format(float(p), ".17g")


def format_behavior_table(behavior: Behavior) -> str:
    n, m, d = behavior.scenario.as_tuple()
    lines = [f"scenario {n} {m} {d}"]
    for settings in product(range(m), repeat=n):
        for outputs in product(range(d), repeat=n):
            p = behavior.table[settings + outputs]
            fields = [str(x) for x in settings] + [str(a) for a in outputs] + [_format_probability(p)]
            lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_behavior_table(text: str) -> Behavior:
    """解析 `scenario n m d` 表头加每行 (x⃗, a⃗, p) 的行为表；未列出的单元为 0"""
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not lines or not lines[0].startswith("scenario"):
        raise ScenarioError("Behavior table must start with 'scenario n m d'")
    header = lines[0].split()
    if len(header) != 4:
        raise ScenarioError(f"Malformed scenario header: {lines[0]}")
    scenario = Scenario(*(int(v) for v in header[1:]))
    n = scenario.parties
    table = np.zeros(scenario.table_shape)
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != 2 * n + 1:
            raise ScenarioError(f"Line {number}: expected {2 * n + 1} fields, got {len(fields)}")
        index = tuple(int(v) for v in fields[:2 * n])
        try:
            table[index] = float(fields[-1])
        except IndexError as e:
            raise ScenarioError(f"Line {number}: index {index} outside scenario {scenario.as_tuple()}") from e
    return Behavior(scenario, table)


def write_behavior_table(path: PathLike, behavior: Behavior):
    atomic_write_text(path, format_behavior_table(behavior))


def read_behavior_table(path: PathLike) -> Behavior:
    return parse_behavior_table(Path(path).read_text(encoding="utf-8"))


def format_distribution(distribution: Distribution) -> str:
    return "".join(f"{distribution.bitstring(i)} {_format_probability(p)}\n"
                   for i, p in enumerate(distribution.probabilities))


def parse_distribution(text: str) -> Distribution:
    """每行 `bitstring probability`，首位比特为最高位；未列出的串概率为 0"""
    entries: List[Tuple[str, float]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2 or any(c not in "01" for c in fields[0]):
            raise SourceModelError(f"Malformed distribution line: {line}")
        entries.append((fields[0], float(fields[1])))
    if not entries:
        raise SourceModelError("Distribution file is empty")
    n_bits = len(entries[0][0])
    if any(len(bits) != n_bits for bits, _ in entries):
        raise SourceModelError("All bitstrings must have the same length")
    probabilities = np.zeros(2 ** n_bits)
    for bits, p in entries:
        probabilities[int(bits, 2)] = p
    return Distribution(n_bits, probabilities)


def write_distribution(path: PathLike, distribution: Distribution):
    atomic_write_text(path, format_distribution(distribution))


def read_distribution(path: PathLike) -> Distribution:
    return parse_distribution(Path(path).read_text(encoding="utf-8"))


def report_to_dict(report: Union[BaseModel, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(report, BaseModel):
        return json.loads(report.json())
    return dict(report)


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            for i, item in enumerate(value):
                flat.update(_flatten(item, f"{name}.{i}."))
        else:
            flat[name] = value
    return flat


def format_key_value(report: Union[BaseModel, Dict[str, Any]]) -> str:
    """扁平的 `key = value` 文本"""
    flat = _flatten(report_to_dict(report))
    return "".join(f"{key} = {json.dumps(value, ensure_ascii=False)}\n" for key, value in flat.items())


def write_report(base_path: PathLike, report: Union[BaseModel, Dict[str, Any]]) -> List[Path]:
    """同时写出 .json 与 .txt 两份报告"""
    base_path = Path(base_path)
    json_file = base_path.with_suffix(".json")
    text_file = base_path.with_suffix(".txt")
    atomic_write_text(json_file, json.dumps(report_to_dict(report), ensure_ascii=False, indent=2) + "\n")
    atomic_write_text(text_file, format_key_value(report))
    logger.info(f"Report saved to {json_file}")
    return [json_file, text_file]


def read_calibration_csv(path: PathLike) -> List[Tuple[float, float]]:
    """读取 (mean_current, variance) 校准点"""
    try:
        df = pd.read_csv(path)
    except pd.errors.ParserError as e:
        raise CalibrationError(f"Cannot parse calibration CSV {path}: {e}") from e
    missing = [column for column in CALIBRATION_COLUMNS if column not in df.columns]
    if missing:
        raise CalibrationError(f"Calibration CSV {path} lacks columns {missing}")
    df = df[list(CALIBRATION_COLUMNS)].dropna()
    if (df["variance"] <= 0).any():
        raise CalibrationError("Calibration variances must be positive")
    logger.debug(f"Loaded {len(df)} calibration points from {path}")
    return list(df.itertuples(index=False, name=None))
