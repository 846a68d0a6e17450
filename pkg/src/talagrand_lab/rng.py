"""Counter-based normal variates addressed by (seed, path, draw index).

The bit stream is numpy's Philox4x64-10 keyed by the seed.  Path ``p`` owns
the counter range ``[p * S, (p + 1) * S)`` where ``S`` is the per-path
counter stride, so any block of paths can be generated independently and
in any order with identical results.  Uniforms use the top 53 bits of each
word and normals come from the Box-Muller transform on consecutive pairs.
"""

import numpy as np

_WORDS_PER_COUNTER = 4
_SEED_MASK = (1 << 64) - 1


def _stride(draws_per_path):
    words = draws_per_path + (draws_per_path & 1)
    return -(-words // _WORDS_PER_COUNTER)


def raw_words(seed, path_start, path_stop, draws_per_path):
    """uint64 words for paths ``[path_start, path_stop)``, shape (paths, words)."""
    if path_stop < path_start:
        raise ValueError("path_stop < path_start")
    stride = _stride(draws_per_path)
    bitgen = np.random.Philox(key=int(seed) & _SEED_MASK, counter=path_start * stride)
    nwords = stride * _WORDS_PER_COUNTER
    raw = bitgen.random_raw((path_stop - path_start) * nwords)
    return raw.reshape(path_stop - path_start, nwords)


def uniforms(seed, path_start, path_stop, draws_per_path):
    raw = raw_words(seed, path_start, path_stop, draws_per_path)[:, :draws_per_path]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed, path_start, path_stop, draws_per_path):
    """N(0, 1) draws of shape (path_stop - path_start, draws_per_path)."""
    even = draws_per_path + (draws_per_path & 1)
    raw = raw_words(seed, path_start, path_stop, draws_per_path)[:, :even]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    radius = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    angle = 2.0 * np.pi * u[:, 1::2]
    out = np.empty_like(u)
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :draws_per_path]
