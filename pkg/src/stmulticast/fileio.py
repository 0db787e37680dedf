"""JSON file formats: matrices as ``{rows, cols, data}`` with ``[re, im]``
pairs, and scenarios bundling channels, power, covariance and seed."""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import InvalidInputError
from .scheme import ChannelSet

__all__ = [
    "matrix_to_json",
    "matrix_from_json",
    "read_json",
    "write_json",
    "dumps",
    "read_matrix",
    "write_matrix",
    "Scenario",
    "read_scenario",
]


def matrix_to_json(a):
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "data": [[[float(z.real), float(z.imag)] for z in row] for row in a],
    }


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InvalidInputError(f"{where}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise InvalidInputError(f"{where}: non-finite number")
    return float(x)


def matrix_from_json(obj, name="matrix"):
    """Parse and validate a matrix object."""
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{name}: expected an object with rows, cols, data")
    try:
        rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    except KeyError as exc:
        raise InvalidInputError(f"{name}: missing field {exc.args[0]!r}") from None
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise InvalidInputError(f"{name}: rows and cols must be positive integers")
    if not isinstance(data, list) or len(data) != rows:
        raise InvalidInputError(f"{name}: data must have {rows} rows")
    out = np.empty((rows, cols), dtype=complex)
    for i, row in enumerate(data):
        if not isinstance(row, list) or len(row) != cols:
            raise InvalidInputError(f"{name}: row {i} must have {cols} entries")
        for j, z in enumerate(row):
            if not isinstance(z, list) or len(z) != 2:
                raise InvalidInputError(f"{name}[{i}][{j}]: expected an [re, im] pair")
            out[i, j] = complex(_number(z[0], f"{name}[{i}][{j}]"),
                                _number(z[1], f"{name}[{i}][{j}]"))
    return out


def dumps(obj):
    # float repr is the shortest string that round-trips exactly
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def write_json(path, obj):
    try:
        Path(path).write_text(dumps(obj))
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc.strerror}") from None


def read_matrix(path):
    return matrix_from_json(read_json(path), str(path))


def write_matrix(path, a):
    write_json(path, matrix_to_json(a))


@dataclass
class Scenario:
    channels: List[np.ndarray]
    power: float
    covariance: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def channel_set(self):
        return ChannelSet(list(self.channels), self.power, self.covariance)

    def to_json(self):
        out = {"channels": [matrix_to_json(h) for h in self.channels], "power": self.power}
        if self.covariance is not None:
            out["covariance"] = matrix_to_json(self.covariance)
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, obj, name="scenario"):
        if not isinstance(obj, dict):
            raise InvalidInputError(f"{name}: expected an object")
        chans = obj.get("channels")
        if not isinstance(chans, list) or not chans:
            raise InvalidInputError(f"{name}: channels must be a non-empty list")
        hs = [matrix_from_json(c, f"channels[{i}]") for i, c in enumerate(chans)]
        if len({h.shape[1] for h in hs}) != 1:
            raise InvalidInputError(f"{name}: channel matrices must share the column count")
        if "power" not in obj:
            raise InvalidInputError(f"{name}: missing field 'power'")
        power = _number(obj["power"], "power")
        if power <= 0:
            raise InvalidInputError(f"{name}: power must be positive")
        cov = obj.get("covariance")
        cov = None if cov is None else matrix_from_json(cov, "covariance")
        seed = obj.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise InvalidInputError(f"{name}: seed must be a nonnegative integer")
        return cls(hs, power, cov, seed)


def read_scenario(path):
    return Scenario.from_json(read_json(path), str(path))
