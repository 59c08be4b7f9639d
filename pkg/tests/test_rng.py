import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modalflow import rng


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 200), st.integers(1, 50))
def test_slices_match_full_stream(start, count):
    full = rng.uniform(7, rng.STREAM_SAMPLES, 0, 300)
    assert np.array_equal(rng.uniform(7, rng.STREAM_SAMPLES, start, count), full[start:start + count])


def test_rows_are_chunk_independent():
    whole = rng.uniform_rows(3, rng.STREAM_SAMPLES, range(0, 100), 5)
    parts = np.vstack([rng.uniform_rows(3, rng.STREAM_SAMPLES, range(a, a + 25), 5) for a in (0, 25, 50, 75)])
    assert np.array_equal(whole, parts)


def test_streams_and_seeds_differ():
    a = rng.uniform(1, rng.STREAM_SAMPLES, 0, 16)
    assert not np.array_equal(a, rng.uniform(1, rng.STREAM_NOISE, 0, 16))
    assert not np.array_equal(a, rng.uniform(2, rng.STREAM_SAMPLES, 0, 16))


def test_uniform_range_and_mean():
    u = rng.uniform(0, rng.STREAM_PROBE, 0, 100_000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        rng.uniform(-1, 1, 0, 3)


def test_generator_counter_offsets():
    g0 = rng.generator(4, rng.STREAM_SHUFFLE, counter=1 << 32)
    g1 = rng.generator(4, rng.STREAM_SHUFFLE, counter=1 << 32)
    assert np.array_equal(g0.permutation(20), g1.permutation(20))
    g2 = rng.generator(4, rng.STREAM_SHUFFLE, counter=2 << 32)
    assert not np.array_equal(rng.generator(4, 3, 1 << 32).permutation(50), g2.permutation(50))
