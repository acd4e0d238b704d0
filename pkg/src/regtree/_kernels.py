"""Compiled inner loops: Prüfer-phase sweeps and tree LDL^T inertia counts."""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-python fallback
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

PI = math.pi
HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi


@njit(cache=True)
def _normalize(m, phi):
    if phi >= PI:
        return m + 1, 0.0
    if phi < 0.0:
        return m, 0.0
    return m, phi


@njit(cache=True)
def step(m, phi, w2, ell):
    """Advance the phase state ``(m, phi)`` across a piece with ``y'' = -w2 y``.

    The solution direction is ``(y, y') ~ (sin phi, cos phi)`` and the total
    phase is ``m*pi + phi`` with ``phi`` in ``[0, pi)``.
    """
    if w2 > 0.0:
        om = math.sqrt(w2)
        psi = math.atan2(om * math.sin(phi), math.cos(phi)) + om * ell
        turns = math.floor(psi / PI)
        psi -= turns * PI
        m += int(turns)
        if psi >= PI:
            psi -= PI
            m += 1
        if psi < 0.0:
            psi = 0.0
        return _normalize(m, math.atan2(math.sin(psi) / om, math.cos(psi)))
    if w2 < 0.0:
        ka = math.sqrt(-w2)
        x = ka * ell
        if x < 1e-8:
            tk = ell
            kt = -w2 * ell
        else:
            th = math.tanh(x)
            tk = th / ka
            kt = ka * th
    else:
        tk = ell
        kt = 0.0
    s = math.sin(phi)
    c = math.cos(phi)
    a = math.atan2(s + tk * c, kt * s + c)
    if phi <= HALF_PI:
        # first quadrant is invariant when the solution grows
        if a < 0.0:
            a = 0.0
        elif a > HALF_PI:
            a = HALF_PI
        return m, a
    if a >= 0.0:
        return _normalize(m, a)
    if a <= -HALF_PI:
        return _normalize(m + 1, a + PI)
    # unreachable in exact arithmetic; snap to the nearest admissible state
    if a > -QUARTER_PI:
        return m + 1, 0.0
    return m + 1, HALF_PI


@njit(cache=True)
def sweep(w2, ell, jump, start, stop, m, phi):
    """Run pieces ``start..stop-1``; ``jump[i]`` is applied before piece ``i``."""
    for i in range(start, stop):
        bj = jump[i]
        if bj != 1.0:
            m, phi = _normalize(m, math.atan2(bj * math.sin(phi), math.cos(phi)))
        m, phi = step(m, phi, w2[i], ell[i])
    return m, phi


@njit(cache=True)
def tree_inertia(stiff_diag, mass, off, parent, sigma):
    """Number of negative eigenvalues of ``K - sigma*M`` for a tree-structured ``K``.

    Nodes are ordered so that ``parent[i] < i``; ``off[i]`` is the coupling of
    node ``i`` to its parent (``parent[i] = -1`` for none).  Leaves-first
    elimination produces no fill-in.
    """
    n = stiff_diag.size
    d = stiff_diag - sigma * mass
    neg = 0
    for i in range(n - 1, -1, -1):
        di = d[i]
        if di == 0.0:
            di = -1e-300
        if di < 0.0:
            neg += 1
        p = parent[i]
        if p >= 0:
            d[p] -= off[i] * off[i] / di
    return neg


def warmup():
    """Trigger compilation on tiny inputs."""
    a = np.ones(2)
    sweep(a, a, a, 0, 2, 0, 0.0)
    tree_inertia(a * 2, a, -a, np.array([-1, 0]), 1.0)
