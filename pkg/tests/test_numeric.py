import math
import random

import pytest

from backend import numeric


def test_matches_plain_sums_in_normal_range():
    rng = random.Random(5)
    for _ in range(200):
        values = [rng.uniform(-1e6, 1e6) for _ in range(rng.randint(1, 30))]
        mean = math.fsum(values) / len(values)
        stdev = math.sqrt(math.fsum((v - mean) * (v - mean) for v in values) / len(values))
        assert numeric.mean_std(values) == (mean, stdev)
        assert numeric.mean(values) == mean


def test_order_does_not_matter():
    rng = random.Random(6)
    values = [rng.uniform(-1e300, 1e300) for _ in range(50)]
    shuffled = list(values)
    rng.shuffle(shuffled)
    assert numeric.mean_std(shuffled) == numeric.mean_std(values)


def test_values_near_the_float_limit():
    assert numeric.mean_std([1.7e308, 1.7e308]) == (1.7e308, 0.0)
    mean, stdev = numeric.mean_std([-1.7e308, 1.7e308])
    assert mean == 0.0
    assert stdev == pytest.approx(1.7e308)
    assert numeric.mean([1e308] * 8) == 1e308


def test_all_zero():
    assert numeric.mean_std([0.0, 0.0]) == (0.0, 0.0)
    assert numeric.rms_difference([0.0], [0.0]) == 0.0


def test_differences():
    assert numeric.rms_difference([0.0, 0.0], [3.0, 4.0]) == math.sqrt(12.5)
    assert numeric.mean_abs_difference([0.0, 0.0], [3.0, 4.0]) == 3.5
    assert numeric.rms_difference([1e200], [-1e200]) == 2e200
    with pytest.raises(OverflowError):
        numeric.mean_abs_difference([1.7e308], [-1.7e308])
