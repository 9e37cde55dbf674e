from __future__ import annotations
import math
import numpy as np
import pytest
from netscatter.channel import JitterKind
from netscatter.util import (
    bits_to_int,
    db_to_amplitude,
    db_to_power,
    int_to_bits,
    power_to_db,
    random_bits,
    trial_rng,
    trial_seed,
)


@pytest.mark.parametrize("db,power", [(0, 1), (10, 10), (-20, 0.01), (3, 1.9953)])
def test_db_to_power(db: float, power: float) -> None:
    assert db_to_power(db) == pytest.approx(power, rel=1e-4)
    assert power_to_db(power) == pytest.approx(db, abs=1e-4)
    assert db_to_amplitude(db) ** 2 == pytest.approx(power, rel=1e-4)


def test_power_to_db_zero() -> None:
    assert power_to_db(0) == -math.inf


def test_trial_rng_depends_only_on_key() -> None:
    a = trial_rng(5, 1, 2).random(4)
    assert np.array_equal(a, trial_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, trial_rng(5, 2, 1).random(4))
    assert not np.array_equal(a, trial_rng(6, 1, 2).random(4))


def test_trial_seed() -> None:
    s = trial_seed(0, 3)
    assert isinstance(s, int)
    assert 0 <= s < 2**64
    assert s == trial_seed(0, 3)
    assert s != trial_seed(0, 4)


def test_random_bits() -> None:
    bits = random_bits(np.random.default_rng(0), 100)
    assert len(bits) == 100
    assert set(bits) <= {0, 1}
    assert all(type(b) is int for b in bits)


@pytest.mark.parametrize(
    "value,width,bits",
    [(0, 3, [0, 0, 0]), (5, 3, [1, 0, 1]), (0xA5, 8, [1, 0, 1, 0, 0, 1, 0, 1])],
)
def test_int_bits(value: int, width: int, bits: list[int]) -> None:
    assert int_to_bits(value, width) == bits
    assert bits_to_int(bits) == value


@pytest.mark.parametrize("value,width", [(8, 3), (-1, 3)])
def test_int_to_bits_overflow(value: int, width: int) -> None:
    with pytest.raises(ValueError):
        int_to_bits(value, width)


def test_choice_values() -> None:
    assert JitterKind.values() == ["fixed", "uniform", "gaussian"]
    assert str(JitterKind.GAUSSIAN) == "gaussian"
