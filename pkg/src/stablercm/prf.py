"""Counter-mode pseudo-random function on integer tuples.

Every random variable of an environment is a pure function of a key tuple
(seed, pair, time block, slot).  The mixing is the splitmix64 finalizer applied
in a sponge over the words of the tuple, vectorized with numpy ``uint64``
arithmetic (wrap-around multiplication is the intended behaviour).
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def absorb(state: np.ndarray, word) -> np.ndarray:
    """Fold one (broadcastable) integer word into the hash state."""
    w = np.asarray(word).astype(np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        return mix64(state ^ (w + _GOLDEN))


def seed_state(seed: int) -> np.uint64:
    return mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(0x5DEECE66D))[()]


def pair_keys(seed: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Hash states for unordered pairs of integer sites.

    ``x`` and ``y`` have shape ``(n, d)``.  Each pair is put in lexicographic
    order before hashing, so ``pair_keys(s, x, y) == pair_keys(s, y, x)``.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim == 1:
        x = x[:, None]
        y = y[:, None]
    swap = _lex_greater(x, y)
    lo = np.where(swap[:, None], y, x)
    hi = np.where(swap[:, None], x, y)
    state = np.full(len(x), seed_state(seed), dtype=np.uint64)
    for j in range(x.shape[1]):
        state = absorb(state, lo[:, j])
    for j in range(x.shape[1]):
        state = absorb(state, hi[:, j])
    return state


def _lex_greater(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    greater = np.zeros(len(x), dtype=bool)
    decided = np.zeros(len(x), dtype=bool)
    for j in range(x.shape[1]):
        gt = (x[:, j] > y[:, j]) & ~decided
        lt = (x[:, j] < y[:, j]) & ~decided
        greater |= gt
        decided |= gt | lt
    return greater


def uniforms(keys: np.ndarray, block: int, slot: int) -> np.ndarray:
    """Uniform variates in ``[0, 1)`` for the given pair keys, time block and slot."""
    state = absorb(keys, block)
    state = absorb(state, slot)
    return (state >> _S11).astype(np.float64) * _INV53
