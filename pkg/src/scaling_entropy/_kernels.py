"""Compiled orbit-accumulation loops for the non-cut catalog metrics.

Each kernel walks ``states[k]`` for every step ``k`` of a block and adds the
base distance of every pair ``i < j`` into the upper triangles of ``total``
(sum), ``top`` (running max) and ``power`` (sum of ``d**p``).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_ONE = np.uint64(1)


@njit(cache=True)
def accumulate_dyadic(states, total, top, power, do_sup, do_lp, p):
    nk, m = states.shape
    for k in range(nk):
        row = states[k]
        for i in range(m):
            xi = row[i]
            for j in range(i + 1, m):
                v = xi ^ row[j]
                if v != 0:
                    low = v & (~v + _ONE)
                    d = 0.5 / np.float64(low)
                    total[i, j] += d
                    if do_sup and d > top[i, j]:
                        top[i, j] = d
                    if do_lp:
                        power[i, j] += d ** p


@njit(cache=True)
def accumulate_arc(states, total, top, power, do_sup, do_lp, p):
    nk, m = states.shape
    for k in range(nk):
        row = states[k]
        for i in range(m):
            xi = row[i]
            for j in range(i + 1, m):
                d = abs(xi - row[j]) % 1.0
                if d > 0.5:
                    d = 1.0 - d
                total[i, j] += d
                if do_sup and d > top[i, j]:
                    top[i, j] = d
                if do_lp:
                    power[i, j] += d ** p


@njit(cache=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - _ONE
        c += 1
    return c


@njit(cache=True)
def accumulate_hamming(states, total, top, power, do_sup, do_lp, p, mask, window):
    nk, m = states.shape
    for k in range(nk):
        row = states[k]
        for i in range(m):
            xi = row[i]
            for j in range(i + 1, m):
                d = _popcount((xi ^ row[j]) & mask) / window
                total[i, j] += d
                if do_sup and d > top[i, j]:
                    top[i, j] = d
                if do_lp:
                    power[i, j] += d ** p


def accumulate(kernel: tuple, states, total, top, power, do_sup: bool, do_lp: bool, p: float):
    name = kernel[0]
    if name == "dyadic":
        accumulate_dyadic(states, total, top, power, do_sup, do_lp, p)
    elif name == "arc":
        accumulate_arc(states, total, top, power, do_sup, do_lp, p)
    elif name == "hamming":
        window = int(kernel[1])
        mask = np.uint64((1 << window) - 1) if window < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
        accumulate_hamming(states, total, top, power, do_sup, do_lp, p, mask, float(window))
    else:
        raise ValueError(f"unknown kernel {name!r}")
