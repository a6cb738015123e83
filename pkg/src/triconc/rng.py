"""Counter-based random streams.

Every random draw in the toolkit is a pure function of four integers::

    (master_seed, trial, round, draw_index)

which are fed to Philox4x64-10 as

    key     = (master_seed, trial)
    counter = (draw_index // 4, round, 0, 0)

and word ``draw_index % 4`` of the output block becomes the double
``(word >> 11) * 2**-53`` in [0, 1).  Because nothing is carried between
draws, trials and rounds can be evaluated in any order or on any thread,
and a single draw can be regenerated without replaying its stream.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import InvalidParameter

_U64 = 2**64

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_S2 = np.uint64(2)
_MASK3 = np.uint64(3)
_TO_UNIT = 2.0**-53


@nb.njit(inline="always", cache=True)
def _mulhilo(a, b):
    lo = a * b
    a0 = a & _LO32
    a1 = a >> _S32
    b0 = b & _LO32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _LO32) + (p10 & _LO32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64 with 10 rounds on one counter block."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True)
def uniform_at(k0, k1, rnd, j):
    """The ``j``-th uniform of stream (k0, k1, rnd); j is a signed int."""
    ju = np.uint64(j)
    w = philox4x64(ju >> _S2, rnd, np.uint64(0), np.uint64(0), k0, k1)
    sel = ju & _MASK3
    if sel == 0:
        x = w[0]
    elif sel == 1:
        x = w[1]
    elif sel == 2:
        x = w[2]
    else:
        x = w[3]
    return np.float64(x >> _S11) * _TO_UNIT


@nb.njit(nogil=True, cache=True)
def fill_uniform(k0, k1, rnd, start, out):
    """Write draws ``start .. start+len(out)-1`` into ``out``."""
    count = out.shape[0]
    if count == 0:
        return
    first_block = start >> 2
    last_block = (start + count - 1) >> 2
    z = np.uint64(0)
    for b in range(first_block, last_block + 1):
        w = philox4x64(np.uint64(b), rnd, z, z, k0, k1)
        base = b * 4
        for s in range(4):
            j = base + s - start
            if 0 <= j < count:
                out[j] = np.float64(w[s] >> _S11) * _TO_UNIT


@nb.njit(nogil=True, cache=True)
def raw_blocks(k0, k1, rnd, first_block, nblocks):
    out = np.empty(4 * nblocks, dtype=np.uint64)
    z = np.uint64(0)
    for b in range(nblocks):
        w = philox4x64(np.uint64(first_block + b), rnd, z, z, k0, k1)
        for s in range(4):
            out[4 * b + s] = w[s]
    return out


@dataclass(frozen=True)
class Stream:
    """Address of one random stream: ``(master, trial, round)``."""

    master: int
    trial: int = 0
    round: int = 0

    def __post_init__(self):
        for name in ("master", "trial", "round"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < _U64:
                raise InvalidParameter(f"stream {name} must be an integer in [0, 2**64), got {value!r}")

    @property
    def words(self):
        return np.uint64(self.master), np.uint64(self.trial), np.uint64(self.round)

    def at_round(self, rnd):
        return Stream(self.master, self.trial, rnd)

    def uniform(self, count, start=0):
        out = np.empty(int(count), dtype=np.float64)
        k0, k1, rnd = self.words
        fill_uniform(k0, k1, rnd, int(start), out)
        return out

    def raw(self, nblocks, first_block=0):
        """Raw 64-bit output words of the underlying Philox blocks."""
        k0, k1, rnd = self.words
        return raw_blocks(k0, k1, rnd, int(first_block), int(nblocks))


def as_stream(seed):
    """Accept either a :class:`Stream` or a plain integer master seed."""
    if isinstance(seed, Stream):
        return seed
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        return Stream(int(seed))
    raise InvalidParameter(f"seed must be a non-negative int or Stream, got {seed!r}")
