"""Counter-based SplitMix64 streams.

Every replicate ``i`` of an experiment seeded with ``seed`` draws from its own
SplitMix64 sequence whose starting state is ``replicate_key(seed, i)``::

    mix64(z) = Stafford "Mix13" finalizer used by SplitMix64
    replicate_key(seed, i) = mix64(mix64(seed) ^ i)

The stream then advances as ``state += 0x9E3779B97F4A7C15`` and outputs
``mix64(state)``; uniforms use the top 53 bits. Because a replicate's stream is
a pure function of ``(seed, i)``, results do not depend on how replicates are
scheduled across workers.

The state lives in a one-element ``uint64`` array so that numba kernels can
advance it in place.
"""
from __future__ import annotations

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_FUNCTION_ID = "splitmix64/mix13: key=mix64(mix64(seed)^i), next=mix64(state+=0x9E3779B97F4A7C15)"

_GOLDEN = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer (reduced mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_key(seed: int, index: int) -> int:
    """Starting state of the private stream for replicate ``index``."""
    return mix64(mix64(seed) ^ (index & MASK64))


@nb.njit(nogil=True, cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nogil=True, cache=True)
def _next_u64(st):
    st[0] += _GOLDEN
    return _mix64(st[0])


@nb.njit(nogil=True, cache=True)
def _uniform(st):
    # [0, 1) with 53 random bits
    return np.float64(_next_u64(st) >> _S11) * _INV53


@nb.njit(nogil=True, cache=True)
def _replicate_key(mixed_seed, index):
    return _mix64(mixed_seed ^ np.uint64(index))


@nb.njit(nogil=True, cache=True)
def _fill_uniform(st, out):
    for i in range(out.shape[0]):
        out[i] = _uniform(st)


class Stream:
    """A SplitMix64 random stream.

    Parameters
    ----------
    state : int
        Initial 64-bit state. Use :meth:`for_replicate` to obtain the stream
        of a given experiment replicate.
    """

    __slots__ = ("state",)

    def __init__(self, state: int = 0):
        self.state = np.array([int(state) & MASK64], dtype=np.uint64)

    @classmethod
    def for_replicate(cls, seed: int, index: int) -> "Stream":
        return cls(replicate_key(seed, index))

    def next_u64(self) -> int:
        return int(_next_u64(self.state))

    def uniform(self, size: int | None = None):
        """One uniform on [0, 1), or an array of ``size`` of them."""
        if size is None:
            return float(_uniform(self.state))
        out = np.empty(int(size), dtype=np.float64)
        _fill_uniform(self.state, out)
        return out

    def __repr__(self) -> str:
        return f"Stream(state={int(self.state[0]):#018x})"
