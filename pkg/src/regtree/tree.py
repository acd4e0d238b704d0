"""Regular rooted metric trees and symmetric potentials.

A regular tree is fixed by the vertex distances ``t_0 = 0 < t_1 < ...`` and the
branching numbers ``b_0 = 1, b_k >= 2``.  Everything here is pure geometry: the
branching functions ``g_k``, radius, total length, multiplicities of the reduced
operators and the generation counting function.

All sequence entries are produced by closed-form rules, so a ``TreeSpec`` is
immutable and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidSequence, MultiplicityOverflow, NotApplicable, OutOfRange

KINDS = ("homogeneous", "geometric", "explicit")
TAIL_RULES = ("repeat", "power", "exponential", "geometric")
INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class TreeSpec:
    """Defining sequences of a regular rooted tree.

    ``kind`` selects the constructor family:

    * ``homogeneous``: ``t_k = k`` and ``b_k = b``;
    * ``geometric``: ``t_k = 1 - q**k`` and ``b_k = b``;
    * ``explicit``: user prefixes ``t_prefix``/``b_prefix`` continued by
      ``tail``.  ``"repeat"`` repeats the last edge length and the last branching
      number; ``"power"`` uses ``t_k = k**r``; ``"exponential"`` uses
      ``t_k = r**k - 1``; ``"geometric"`` shrinks the edges by the factor ``r``
      (finite radius).  In every case the last branching number is repeated.
    """

    kind: str
    b: Optional[int] = None
    q: Optional[float] = None
    t_prefix: tuple = ()
    b_prefix: tuple = ()
    tail: str = "repeat"
    r: Optional[float] = None
    _bprod: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSequence(f"unknown tree kind {self.kind!r}")
        if self.kind in ("homogeneous", "geometric"):
            if self.b is None or int(self.b) != self.b or self.b < 2:
                raise InvalidSequence(f"branching number must be an integer >= 2, got {self.b!r}")
            object.__setattr__(self, "b", int(self.b))
            if self.kind == "geometric":
                if self.q is None or not 0.0 < self.q < 1.0:
                    raise InvalidSequence(f"geometric trees need 0 < q < 1, got {self.q!r}")
                object.__setattr__(self, "q", float(self.q))
            object.__setattr__(self, "_bprod", (1,))
            return
        self._validate_explicit()

    def _validate_explicit(self):
        t = tuple(float(x) for x in self.t_prefix)
        bs = tuple(self.b_prefix)
        if not t or t[0] != 0.0:
            raise InvalidSequence("t_prefix must start with t_0 = 0")
        if any(t1 <= t0 for t0, t1 in zip(t, t[1:])):
            raise InvalidSequence("t_prefix must be strictly increasing")
        if len(bs) < 2 or bs[0] != 1:
            raise InvalidSequence("b_prefix must start with b_0 = 1 and contain at least b_1")
        if any(int(x) != x or x < 2 for x in bs[1:]):
            raise InvalidSequence("b_k must be integers >= 2 for k >= 1")
        if self.tail not in TAIL_RULES:
            raise InvalidSequence(f"unknown tail rule {self.tail!r}")
        if self.tail in ("repeat", "geometric") and len(t) < 2:
            raise InvalidSequence(f"tail rule {self.tail!r} needs at least one prefix edge")
        if self.tail == "power" and (self.r is None or self.r <= 0):
            raise InvalidSequence("power tail needs r > 0")
        if self.tail == "exponential" and (self.r is None or self.r <= 1):
            raise InvalidSequence("exponential tail needs base r > 1")
        if self.tail == "geometric" and (self.r is None or not 0 < self.r < 1):
            raise InvalidSequence("geometric tail needs ratio 0 < r < 1")
        object.__setattr__(self, "t_prefix", t)
        object.__setattr__(self, "b_prefix", tuple(int(x) for x in bs))
        prods = [1]
        for x in self.b_prefix[1:]:
            prods.append(prods[-1] * x)
        object.__setattr__(self, "_bprod", tuple(prods))
        # the rule must continue the prefix monotonically
        p = len(t)
        if self.t(p) <= t[-1] or self.t(p + 1) <= self.t(p):
            raise InvalidSequence("tail rule does not continue the prefix increasingly")

    # -- constructors -------------------------------------------------------
    @classmethod
    def homogeneous(cls, b: int) -> "TreeSpec":
        return cls("homogeneous", b=b)

    @classmethod
    def geometric(cls, q: float, b: int) -> "TreeSpec":
        return cls("geometric", b=b, q=q)

    @classmethod
    def explicit(cls, t_prefix: Sequence[float], b_prefix: Sequence[int],
                 tail: str = "repeat", r: Optional[float] = None) -> "TreeSpec":
        return cls("explicit", t_prefix=tuple(t_prefix), b_prefix=tuple(b_prefix), tail=tail, r=r)

    @classmethod
    def power(cls, r: float, b: int) -> "TreeSpec":
        """Tree with ``t_k = k**r`` and constant branching ``b``."""
        return cls.explicit((0.0,), (1, b), tail="power", r=r)

    # -- sequences ----------------------------------------------------------
    @property
    def _tail_b(self) -> int:
        return self.b if self.kind != "explicit" else self.b_prefix[-1]

    def t(self, k: int) -> float:
        if k < 0:
            raise OutOfRange("generation index must be >= 0")
        if self.kind == "homogeneous":
            return float(k)
        if self.kind == "geometric":
            return -math.expm1(k * math.log(self.q))
        p = len(self.t_prefix)
        if k < p:
            return self.t_prefix[k]
        if self.tail == "power":
            return float(k) ** self.r
        if self.tail == "exponential":
            return self.r ** k - 1.0
        last = self.t_prefix[-1]
        step = last - self.t_prefix[-2]
        j = k - p + 1
        if self.tail == "repeat":
            return last + j * step
        return last + step * self.r * (1.0 - self.r ** j) / (1.0 - self.r)

    def b_at(self, k: int) -> int:
        if k == 0:
            return 1
        if self.kind != "explicit":
            return self.b
        return self.b_prefix[k] if k < len(self.b_prefix) else self.b_prefix[-1]

    def edge_length(self, k: int) -> float:
        """Length ``t_{k+1} - t_k`` of the generation-k edges."""
        if self.kind == "homogeneous":
            return 1.0
        if self.kind == "geometric":
            return self.q ** k * (1.0 - self.q)
        p = len(self.t_prefix)
        if k >= p - 1 and self.tail in ("repeat", "geometric"):
            step = self.t_prefix[-1] - self.t_prefix[-2]
            return step if self.tail == "repeat" else step * self.r ** (k - p + 2)
        return self.t(k + 1) - self.t(k)

    @property
    def radius(self) -> float:
        if self.kind == "geometric":
            return 1.0
        if self.kind == "explicit" and self.tail == "geometric":
            step = self.t_prefix[-1] - self.t_prefix[-2]
            return self.t_prefix[-1] + step * self.r / (1.0 - self.r)
        return math.inf

    @property
    def finite_radius(self) -> bool:
        return math.isfinite(self.radius)

    def remaining(self, k: int) -> float:
        """``R - t_k`` without cancellation (``inf`` for infinite radius)."""
        if not self.finite_radius:
            return math.inf
        if self.kind == "geometric":
            return self.q ** k
        p = len(self.t_prefix)
        step = self.t_prefix[-1] - self.t_prefix[-2]
        if k >= p - 1:
            return step * self.r ** (k - p + 2) / (1.0 - self.r)
        return (self.t_prefix[-1] - self.t_prefix[k]) + step * self.r / (1.0 - self.r)

    def prod_b(self, k: int, n: int) -> int:
        """Exact product ``b_{k+1} ... b_n`` (1 when ``n <= k``)."""
        if n <= k:
            return 1
        return self._prefix_prod(n) // self._prefix_prod(k)

    def _prefix_prod(self, n: int) -> int:
        # b_1 ... b_n
        if n < len(self._bprod):
            return self._bprod[n]
        last = len(self._bprod) - 1
        return self._bprod[last] * self._tail_b ** (n - last)

    def weight(self, k: int, n: int) -> int:
        """Value of ``g_k`` on the open edge ``(t_n, t_{n+1}]``, ``n >= k``."""
        return self.prod_b(k, n)

    def last_index_below(self, x: float) -> int:
        """Largest ``k`` with ``t_k < x`` (requires ``x > 0``)."""
        if x <= 0:
            raise OutOfRange("x must be positive")
        if x >= self.radius:
            raise OutOfRange(f"x={x} is not below the radius {self.radius}")
        lo, hi = 0, 1
        while self.t(hi) < x:
            lo, hi = hi, hi * 2
            if hi > 2**62:
                raise OutOfRange(f"x={x} is not reached by the vertex sequence")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.t(mid) < x:
                lo = mid
            else:
                hi = mid
        return lo

    def edge_index(self, t: float) -> int:
        """Edge ``n`` with ``t_n < t <= t_{n+1}``; ``0`` for ``t <= t_1``."""
        if t <= 0:
            return 0
        return self.last_index_below(t)


def make_tree(kind: str, **params) -> TreeSpec:
    if kind == "homogeneous":
        return TreeSpec.homogeneous(params["b"])
    if kind == "geometric":
        return TreeSpec.geometric(params["q"], params["b"])
    if kind == "explicit":
        return TreeSpec.explicit(params["t_prefix"], params["b_prefix"],
                                 tail=params.get("tail", "repeat"), r=params.get("r"))
    raise InvalidSequence(f"unknown tree kind {kind!r}")


def branching_function(tree: TreeSpec, k: int, t: float) -> int:
    """Number of points of a generation-k subtree ``T_e`` at distance ``t`` from the root."""
    if t < 0:
        raise OutOfRange("t must be non-negative")
    if t >= tree.radius:
        raise OutOfRange(f"t={t} is not below the radius {tree.radius}")
    if t < tree.t(k):
        return 0
    if t <= tree.t(k + 1):
        return 1
    return tree.prod_b(k, tree.edge_index(t))


def _sum_series(term: Callable[[int], float], start: int = 0, max_terms: int = 10**6) -> float:
    """Sum a non-negative series, returning ``inf`` when it is judged divergent.

    Divergence: partial sum above 1e12, or 64 consecutive non-decreasing terms.
    """
    total = 0.0
    run = 0
    prev = None
    for n in count(start):
        a = float(term(n))
        total += a
        if total > 1e12:
            return math.inf
        run = run + 1 if (prev is not None and a >= prev and a > 0) else 0
        if run >= 64:
            return math.inf
        if n - start > 8 and a <= 1e-17 * total:
            if prev and a < prev:
                rho = a / prev
                total += a * rho / (1.0 - rho)
            return total
        if n - start > max_terms:
            return total
        prev = a
    return total  # pragma: no cover


def total_length(tree: TreeSpec) -> float:
    """``|Γ| = Σ_e |e|``; ``inf`` when divergent."""
    if tree.kind == "homogeneous":
        return math.inf
    if tree.kind == "geometric":
        bq = tree.b * tree.q
        return (1.0 - tree.q) / (1.0 - bq) if bq < 1 else math.inf
    return _sum_series(lambda n: tree.edge_length(n) * tree.prod_b(0, n))


def tilde_radius(tree: TreeSpec) -> float:
    """``Σ_k (R - t_k)``; always ``inf`` for infinite radius."""
    if not tree.finite_radius:
        return math.inf
    if tree.kind == "geometric":
        return 1.0 / (1.0 - tree.q)
    return _sum_series(tree.remaining)


def tail_mass(tree: TreeSpec, k: int, K: int) -> float:
    """``∫_{t_K}^R g_k(t) dt`` for ``K >= k``."""
    if not tree.finite_radius:
        return math.inf
    if tree.kind == "geometric":
        bq = tree.b * tree.q
        if bq >= 1:
            return math.inf
        return (1.0 - tree.q) * tree.q ** K * tree.b ** (K - k) / (1.0 - bq)
    return _sum_series(lambda n: tree.edge_length(n) * tree.prod_b(k, n), start=K)


def reduced_multiplicity(tree: TreeSpec, k: int, exact: bool = False) -> int:
    """Multiplicity of the reduced operator of generation ``k`` in the whole operator."""
    if k < 0:
        raise OutOfRange("generation index must be >= 0")
    if k == 0:
        return 1
    m = tree.prod_b(0, k - 1) * (tree.b_at(k) - 1)
    if m > INT64_MAX and not exact:
        raise MultiplicityOverflow(f"multiplicity of generation {k} exceeds the 64-bit range")
    return m


def generation_count(tree: TreeSpec, x: float) -> int:
    """``Ψ(x) = #{k >= 0 : t_k < x}`` (``k = 0`` included)."""
    if x < 0:
        raise OutOfRange("x must be non-negative")
    if x == 0:
        return 0
    return tree.last_index_below(x) + 1


# -- potentials ---------------------------------------------------------------

POTENTIAL_FORMS = ("zero", "power", "table", "custom")


@dataclass(frozen=True)
class Potential:
    """Symmetric potential ``V(|x|)`` bounded from below.

    ``increasing_unbounded`` marks potentials that are strictly increasing and
    tend to infinity; those are the ones that make the spectrum discrete on trees
    of infinite radius.
    """

    form: str = "zero"
    c: float = 0.0
    gamma: float = 0.0
    knots: tuple = ()
    values: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)
    lower_bound: float = 0.0
    inverse_q: Optional[Callable] = field(default=None, compare=False)
    increasing_unbounded: bool = False

    @classmethod
    def zero(cls) -> "Potential":
        return cls()

    @classmethod
    def power(cls, c: float, gamma: float) -> "Potential":
        """``V(t) = c * t**gamma`` with ``c >= 0``, ``gamma >= 0``."""
        if c < 0 or gamma < 0:
            raise ValueError("power potential needs c >= 0 and gamma >= 0")
        if c == 0:
            return cls.zero()
        if gamma == 0:
            return cls("power", c=float(c), gamma=0.0, lower_bound=float(c))
        inv = lambda lam: (max(lam, 0.0) / c) ** (1.0 / gamma)
        return cls("power", c=float(c), gamma=float(gamma), lower_bound=0.0,
                   inverse_q=inv, increasing_unbounded=True)

    @classmethod
    def table(cls, knots: Sequence[float], values: Sequence[float]) -> "Potential":
        """Piecewise-linear interpolation of tabulated values, constant beyond the ends."""
        kn = np.asarray(knots, dtype=float)
        if kn.size < 1 or kn.size != len(values) or np.any(np.diff(kn) <= 0):
            raise ValueError("table potential needs strictly increasing knots matching values")
        return cls("table", knots=tuple(kn), values=tuple(float(v) for v in values),
                   lower_bound=float(min(values)))

    @classmethod
    def custom(cls, func: Callable, lower_bound: float, inverse_q: Optional[Callable] = None,
               increasing_unbounded: bool = False) -> "Potential":
        return cls("custom", func=func, lower_bound=float(lower_bound), inverse_q=inverse_q,
                   increasing_unbounded=increasing_unbounded)

    @property
    def is_zero(self) -> bool:
        return self.form == "zero"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "zero":
            return np.zeros_like(t)
        if self.form == "power":
            return self.c * t ** self.gamma
        if self.form == "table":
            return np.interp(t, self.knots, self.values)
        return np.asarray(self.func(t), dtype=float) * np.ones_like(t)

    def inverse(self, lam: float) -> float:
        """``Q(λ)``: the point where an increasing unbounded potential reaches ``λ``."""
        if self.inverse_q is not None:
            return float(self.inverse_q(lam))
        if not self.increasing_unbounded:
            raise NotApplicable("potential is not increasing and unbounded; Q is undefined")
        v0 = float(self(0.0))
        if lam <= v0:
            return 0.0
        hi = 1.0
        while float(self(hi)) < lam:
            hi *= 2.0
        return brentq(lambda s: float(self(s)) - lam, 0.0, hi, xtol=1e-14, rtol=1e-15)

    def range_on(self, a: float, b: float) -> tuple:
        """(min, max) of V on ``[a, b]``.  For custom potentials the max is sampled."""
        if self.form == "zero":
            return 0.0, 0.0
        if self.form == "power":
            return float(self(a)), float(self(b))
        if self.form == "table":
            pts = [a, b] + [x for x in self.knots if a < x < b]
            vals = self(np.array(pts))
            return float(vals.min()), float(vals.max())
        if not math.isfinite(b):
            return self.lower_bound, math.inf
        vals = self(np.linspace(a, b, 257))
        return max(self.lower_bound, float(vals.min())), float(vals.max())
