"""Helpers for finite-difference checks of piecewise-smooth blocks."""
from contextlib import contextmanager

import numpy as np

import hvis.autodiff.functional as Fn

# central differences at h=1e-5 cannot straddle a kink farther away than this
KINK_MARGIN = 1e-3


@contextmanager
def kink_distance():
    """Record min |input| over every relu / leaky_relu call made inside the block."""
    seen = []
    relu, leaky = Fn.relu, Fn.leaky_relu

    def relu_spy(a):
        seen.append(float(np.abs(a.data).min()))
        return relu(a)

    def leaky_spy(a, slope=0.2):
        seen.append(float(np.abs(a.data).min()))
        return leaky(a, slope)

    Fn.relu, Fn.leaky_relu = relu_spy, leaky_spy
    try:
        yield seen
    finally:
        Fn.relu, Fn.leaky_relu = relu, leaky


def randomize(params, rng, scale=0.5):
    for p in params:
        p.data = rng.uniform(-scale, scale, p.shape)


def smooth_instance(build, rng, tries=200):
    """Call ``build(rng)`` until its forward pass keeps every kink out of the stencil.

    ``build`` returns ``(fn, inputs)`` where ``fn()`` is the scalar loss.
    """
    for _ in range(tries):
        fn, inputs = build(rng)
        with kink_distance() as seen:
            fn()
        if not seen or min(seen) > KINK_MARGIN:
            return fn, inputs
    raise RuntimeError("no kink-free instance found")
