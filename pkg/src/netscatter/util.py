from __future__ import annotations
from collections.abc import Iterable
from enum import Enum
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any
import cattrs
import numpy as np

if TYPE_CHECKING:
    from typing_extensions import Self

log = logging.getLogger(__name__)

#: Speed of light in m/s
SPEED_OF_LIGHT = 299_792_458.0

conv = cattrs.Converter(forbid_extra_keys=True)
conv.register_structure_hook(Path, lambda v, _: Path(v))
conv.register_unstructure_hook(Path, str)


class JSONable:
    @classmethod
    def parse_obj(cls, data: Any) -> Self:
        return conv.structure(data, cls)

    @classmethod
    def parse_file(cls, path: str | Path) -> Self:
        with open(path, encoding="utf-8") as fp:
            return cls.parse_obj(json.load(fp))

    def for_json(self) -> dict:
        d = conv.unstructure(self)
        assert isinstance(d, dict)
        return d


class Choice(str, Enum):
    """Base for string-valued enums that are exposed as CLI choices"""

    def __str__(self) -> str:
        return self.value

    @classmethod
    def values(cls) -> list[str]:
        return [m.value for m in cls]


def db_to_power(db: float) -> float:
    return 10 ** (db / 10)


def db_to_amplitude(db: float) -> float:
    return 10 ** (db / 20)


def power_to_db(power: float) -> float:
    if power <= 0:
        return -math.inf
    return 10 * math.log10(power)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Return a generator owned by a single trial.  The stream depends only on
    ``seed`` and ``key``, so trials may run in any order or in parallel.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def trial_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit integer seed for the trial identified by ``key``"""
    (state,) = np.random.SeedSequence([seed, *key]).generate_state(1, np.uint64)
    return int(state)


def random_bits(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    return tuple(int(b) for b in rng.integers(0, 2, size=n))


def bits_to_int(bits: Iterable[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | (b & 1)
    return value


def int_to_bits(value: int, width: int) -> list[int]:
    if value < 0 or value >= 1 << width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [(value >> i) & 1 for i in reversed(range(width))]
