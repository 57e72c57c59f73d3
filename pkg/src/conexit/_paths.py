"""Compiled building blocks for simulating the Lamperti Levy process xi.

xi is diffusion plus compound Poisson jumps.  A step never crosses a jump
time: it is cut at the jump, so integrals of exp(alpha*xi) over continuous
pieces keep trapezoid accuracy.
"""

import math
from contextlib import contextmanager

import numba
import numpy as np
from numba import njit

from .levy import AtomJumps, ExpJumps, LevyModel, path_drift
from .rng import exponential, fill_normals, uniform

JUMP_NONE = 0
JUMP_ATOMS = 1
JUMP_EXP = 2


class PathParams:
    """Plain arrays/scalars describing xi, ready to pass into numba kernels."""

    def __init__(self, model: LevyModel):
        self.drift = path_drift(model)
        self.sigma = math.sqrt(model.gaussian_var)
        self.kill = model.kill_rate
        jumps = model.jumps
        self.atoms = np.zeros(1)
        self.cum = np.ones(1)
        self.decay = 1.0
        self.rate = 0.0
        self.kind = JUMP_NONE
        if isinstance(jumps, AtomJumps) and jumps.rate > 0:
            self.kind = JUMP_ATOMS
            self.rate = jumps.rate
            self.atoms = np.asarray(jumps.atoms, dtype=float)
            cum = np.cumsum(np.asarray(jumps.probs, dtype=float))
            cum[-1] = 1.0
            self.cum = cum
        elif isinstance(jumps, ExpJumps) and jumps.rate > 0:
            self.kind = JUMP_EXP
            self.rate = jumps.rate
            self.decay = jumps.decay

    def args(self):
        return (self.drift, self.sigma, self.kind, self.rate, self.atoms, self.cum, self.decay)


NBUF = 64


@njit(inline="always")
def next_normal(key, ctr, buf, pos):
    """Next N(0,1) of the stream, refilling ``buf`` when ``pos`` runs off its end."""
    if pos >= buf.shape[0]:
        ctr = fill_normals(key, ctr, buf)
        pos = 0
    return buf[pos], ctr, pos + 1


# kept out of line: jumps are rare and inlining slows the diffusion loop
@njit(cache=True)
def jump_size(key, ctr, kind, atoms, cum, decay):
    if kind == JUMP_ATOMS:
        u, ctr = uniform(key, ctr)
        k = 0
        while k < cum.shape[0] - 1 and u > cum[k]:
            k += 1
        return atoms[k], ctr
    y, ctr = exponential(key, ctr, decay)
    return y, ctr


BLOCK = 256


@contextmanager
def worker_threads(workers):
    """Temporarily run numba parallel loops on ``workers`` threads."""
    if workers is None:
        yield
        return
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    old = numba.get_num_threads()
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    try:
        yield
    finally:
        numba.set_num_threads(old)
