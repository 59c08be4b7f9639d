"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, position)`` through the Philox
block cipher, so any slice of a stream can be generated independently of the
others and the result never depends on chunking or worker count.
"""

from __future__ import annotations

import numpy as np

# stream ids for the pipeline's independent random consumers
STREAM_SAMPLES = 1
STREAM_NOISE = 2
STREAM_SHUFFLE = 3
STREAM_SPLIT = 4
STREAM_PROBE = 5

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter step


def _bit_generator(seed: int, stream: int) -> np.random.Philox:
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))


def raw_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """64-bit words ``start .. start + count - 1`` of the given stream."""
    bg = _bit_generator(seed, stream)
    block, offset = divmod(start, _WORDS_PER_BLOCK)
    if block:
        bg.advance(block)
    words = bg.random_raw(count + offset)
    return np.asarray(words[offset:], dtype=np.uint64)


def uniform(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1) at absolute stream positions ``start ..``."""
    words = raw_words(seed, stream, start, count)
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform_rows(seed: int, stream: int, rows: range, width: int) -> np.ndarray:
    """Rows of ``width`` uniforms; row ``j`` always occupies positions ``j*width ..``."""
    if len(rows) == 0:
        return np.empty((0, width))
    flat = uniform(seed, stream, rows.start * width, len(rows) * width)
    return flat.reshape(len(rows), width)


def generator(seed: int, stream: int, counter: int = 0) -> np.random.Generator:
    """A numpy Generator positioned at block ``counter`` of a keyed stream."""
    bg = _bit_generator(seed, stream)
    if counter:
        bg.advance(counter)
    return np.random.Generator(bg)
