"""Weighted interval problems for the reduced operators ``A_{V,k}``.

Generation ``k`` lives on ``(t_k, R)`` with the step weight ``g_k``.  Counting
works on the half-density ``y = sqrt(g_k) u``: on every edge ``y`` solves a
constant-weight Schrödinger equation and at ``t_n`` the state ``(y, y')`` is
multiplied by ``diag(sqrt(b_n), 1/sqrt(b_n))``.  The Prüfer phase of ``(y, y')``
then counts eigenvalues below ``λ`` exactly.

Infinite interface sets are truncated at a generation ``K`` and the count is
sandwiched between a Dirichlet cut (lower) and a provable upper bound; the depth
grows until both agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import BadTruncation, EigenvalueAtThreshold, NotApplicable, NotDiscrete, OutOfRange
from .tree import Potential, TreeSpec, total_length

RIGHT_BCS = ("dirichlet", "neumann", "forced_dirichlet_at_R")


@dataclass(frozen=True)
class Cutoff:
    """Explicit right end ``T`` with a Dirichlet or Neumann condition."""

    T: float
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"cutoff condition must be dirichlet or neumann, got {self.bc!r}")


@dataclass(frozen=True)
class Truncation:
    max_generation: int = 64
    tail_tolerance: float = 0.1


@dataclass(frozen=True)
class Sampling:
    """Potential discretization: pieces satisfy ``|ω| h <= max_phase_step``."""

    max_phase_step: float = 0.5
    samples_per_edge: int = 17


# -- propagators ----------------------------------------------------------------

@dataclass(frozen=True)
class EdgePiece:
    length: float
    v: float = 0.0


@dataclass(frozen=True)
class Interface:
    b: int


@dataclass(frozen=True)
class Propagator:
    """2x2 transfer matrix acting on ``(y, y')``."""

    m: np.ndarray

    @property
    def det(self) -> float:
        return float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])

    def __matmul__(self, other: "Propagator") -> "Propagator":
        return Propagator(self.m @ other.m)


def edge_propagator(lam: float, length: float, v: float = 0.0) -> Propagator:
    if length <= 0:
        raise OutOfRange("edge pieces need positive length")
    w2 = lam - v
    if w2 > 0:
        om = math.sqrt(w2)
        c, s = math.cos(om * length), math.sin(om * length)
        return Propagator(np.array([[c, s / om], [-om * s, c]]))
    if w2 < 0:
        ka = math.sqrt(-w2)
        ch, sh = math.cosh(ka * length), math.sinh(ka * length)
        return Propagator(np.array([[ch, sh / ka], [ka * sh, ch]]))
    return Propagator(np.array([[1.0, length], [0.0, 1.0]]))


def interface_propagator(b: int) -> Propagator:
    if int(b) != b or b < 2:
        raise OutOfRange("interface branching number must be an integer >= 2")
    r = math.sqrt(b)
    return Propagator(np.array([[r, 0.0], [0.0, 1.0 / r]]))


def propagators(lam: float, segment: Union[EdgePiece, Interface]) -> Propagator:
    if isinstance(segment, Interface):
        return interface_propagator(segment.b)
    return edge_propagator(lam, segment.length, segment.v)


# -- discretization ---------------------------------------------------------------

def _lam_bucket(lam: float) -> float:
    return 2.0 ** math.ceil(math.log2(max(lam, 1.0)))


class PieceTable:
    """Piecewise-constant sampling of ``V`` along the generations of a tree.

    The tables are shared between all generations of one tree/potential pair,
    since generation ``k`` only uses the suffix starting at ``t_k``.  The mesh
    depends on ``λ`` only through a power-of-two bucket, so within a bucket every
    count refers to the same discrete operator.
    """

    def __init__(self, tree: TreeSpec, potential: Potential, sampling: Sampling):
        self.tree = tree
        self.potential = potential
        self.sampling = sampling
        self._edge_constant = potential.form == "zero" or (potential.form == "power" and potential.gamma == 0)
        self._edges: dict = {}
        self._geom: dict = {}

    def _edge(self, bucket, n: int, a: float, b: float):
        key = (bucket, n, a, b)
        hit = self._edges.get(key)
        if hit is not None:
            return hit
        length = b - a
        if self._edge_constant:
            out = (np.array([length]), np.array([float(self.potential(0.5 * (a + b)))]))
        else:
            xs = np.linspace(a, b, self.sampling.samples_per_edge)
            vs = self.potential(xs)
            slope = np.max(np.abs(np.diff(vs))) / (xs[1] - xs[0])
            osc = math.sqrt(max(bucket - float(vs.min()), 0.0))
            density = max(osc, slope ** (1.0 / 3.0)) / self.sampling.max_phase_step
            npieces = max(1, int(math.ceil(length * density)))
            edges = np.linspace(a, b, npieces + 1)
            mids = 0.5 * (edges[1:] + edges[:-1])
            out = (np.diff(edges), np.asarray(self.potential(mids), dtype=float))
        if len(self._edges) > 100000:
            self._edges.clear()
        self._edges[key] = out
        return out

    def geometry(self, lam: float, n_edges: int, T: Optional[float] = None):
        """Arrays for edges ``0..n_edges-1`` plus, if ``T`` is given, ``[t_{n_edges}, T]``.

        Returns ``(ell, v, jump, edge_start, piece_edge)`` where ``jump`` holds the
        factor ``b_n`` on the first piece of edge ``n >= 1``.
        """
        bucket = None if self._edge_constant else _lam_bucket(lam)
        key = (bucket, n_edges, T)
        hit = self._geom.get(key)
        if hit is not None:
            return hit
        tree = self.tree
        ells, vs, jumps, pedge = [], [], [], []
        starts = [0]
        bounds = [(n, tree.t(n), tree.t(n + 1)) for n in range(n_edges)]
        if T is not None:
            bounds.append((n_edges, tree.t(n_edges), T))
        for n, a, b in bounds:
            ell, v = self._edge(bucket, n, a, b)
            jump = np.ones(ell.size)
            if n >= 1:
                jump[0] = tree.b_at(n)
            ells.append(ell)
            vs.append(v)
            jumps.append(jump)
            pedge.append(np.full(ell.size, n, dtype=np.int64))
            starts.append(starts[-1] + ell.size)
        out = (np.concatenate(ells), np.concatenate(vs), np.concatenate(jumps),
               np.array(starts, dtype=np.int64), np.concatenate(pedge))
        if len(self._geom) > 16:
            self._geom.clear()
        self._geom[key] = out
        return out


# -- reduced problem --------------------------------------------------------------

@dataclass(frozen=True)
class ReducedProblem:
    """The weighted problem for ``A_{V,k}`` on ``(t_k, R)`` with weight ``g_k``.

    The left end always carries ``u(t_k) = 0``.  ``right_bc`` is one of
    ``"dirichlet"``, ``"neumann"``, ``"forced_dirichlet_at_R"`` or a ``Cutoff``.
    On trees of infinite radius with a growing potential the right condition is
    immaterial and stored as ``"dirichlet"``.
    """

    tree: TreeSpec
    k: int
    potential: Potential
    right_bc: Union[str, Cutoff]
    truncation: Truncation = Truncation()
    sampling: Sampling = Sampling()
    table: PieceTable = field(default=None, compare=False, repr=False)

    @property
    def left(self) -> float:
        return self.tree.t(self.k)

    @property
    def right(self) -> float:
        return self.right_bc.T if isinstance(self.right_bc, Cutoff) else self.tree.radius

    @property
    def vmin(self) -> float:
        return self.potential.lower_bound


def build_reduced_problem(tree: TreeSpec, k: int, potential: Optional[Potential] = None,
                          right_bc: Union[str, Cutoff, None] = None,
                          truncation: Optional[Truncation] = None,
                          sampling: Optional[Sampling] = None,
                          table: Optional[PieceTable] = None) -> ReducedProblem:
    if k < 0:
        raise OutOfRange("generation index must be >= 0")
    potential = potential or Potential.zero()
    truncation = truncation or Truncation()
    sampling = sampling or Sampling()
    if isinstance(right_bc, Cutoff):
        if not tree.t(k) < right_bc.T < tree.radius:
            raise OutOfRange(f"cutoff T={right_bc.T} must lie in (t_k, R)")
        bc = right_bc
    elif tree.finite_radius:
        if right_bc not in (None,) + RIGHT_BCS:
            raise ValueError(f"unknown boundary condition {right_bc!r}")
        if math.isinf(total_length(tree)):
            bc = "forced_dirichlet_at_R"
        elif right_bc == "neumann":
            bc = "neumann"
        else:
            bc = "dirichlet"
    else:
        if not potential.increasing_unbounded:
            raise NotDiscrete("infinite radius without a growing potential or an explicit cutoff")
        bc = "dirichlet"
    if table is None or table.tree != tree or table.potential is not potential:
        table = PieceTable(tree, potential, sampling)
    return ReducedProblem(tree, k, potential, bc, truncation, sampling, table)


# -- counting ---------------------------------------------------------------------

def _robin_count(m: int, phi: float, alpha: float) -> int:
    """Number of ``j >= 0`` with ``alpha + j*pi < m*pi + phi``, ``alpha in (0, pi]``."""
    if alpha >= math.pi:
        return m - 1 + (1 if phi > 0.0 else 0)
    return m + (1 if phi > alpha else 0)


def _check_threshold(m, phi, alpha, npieces, lam):
    tol = 1e-12 * max(1.0, m * math.pi) + 1e-14 * npieces
    d = abs(phi - alpha)
    if alpha >= math.pi:
        d = min(phi, math.pi - phi)
    if d < tol:
        raise EigenvalueAtThreshold(f"λ={lam!r} is an eigenvalue to working precision", lam=lam)


@dataclass
class CountResult:
    count: int
    lower: int
    upper: int
    depth: Optional[float] = None


def _cutoff_count(problem: ReducedProblem, lam: float, T: float, bc: str, check: bool = True) -> int:
    tree = problem.tree
    k = problem.k
    n_T = tree.edge_index(T)
    if tree.t(n_T + 1) == T:
        ell, v, jump, starts, _ = problem.table.geometry(lam, n_T + 1)
    else:
        ell, v, jump, starts, _ = problem.table.geometry(lam, n_T, T)
    w2 = lam - v
    m, phi = _kernels.sweep(w2, ell, jump, int(starts[k]), ell.size, 0, 0.0)
    alpha = math.pi if bc == "dirichlet" else 0.5 * math.pi
    if check:
        _check_threshold(m, phi, alpha, ell.size - int(starts[k]), lam)
    return _robin_count(m, phi, alpha)


def _tail_inverse_mass(tree: TreeSpec, k: int, K: int) -> float:
    # ∫_{t_K}^R dt / g_k
    total, n = 0.0, K
    while True:
        term = tree.edge_length(n) / tree.prod_b(k, n)
        total += term
        if term <= 1e-17 * total or n > K + 2000:
            return total
        n += 1


def _first_depth(problem: ReducedProblem, lam: float) -> int:
    tree = problem.tree
    tol = problem.truncation.tail_tolerance
    root = math.sqrt(max(lam - problem.vmin, 0.0))
    K = problem.k + 1
    while root * tree.remaining(K) >= tol:
        K += 1
        if K > problem.truncation.max_generation:
            raise BadTruncation(
                f"tail tolerance {tol} not reached within generation {problem.truncation.max_generation} at λ={lam!r}")
    return K


def _finite_radius_count(problem: ReducedProblem, lam: float) -> CountResult:
    from .tree import tail_mass

    tree, k, pot = problem.tree, problem.k, problem.potential
    K = _first_depth(problem, lam)
    pos = 0
    m, phi = 0, 0.0
    lower = upper = None
    while True:
        ell, v, jump, starts, _ = problem.table.geometry(lam, K)
        if pos == 0:
            pos = int(starts[k])
        m, phi = _kernels.sweep(lam - v, ell, jump, pos, ell.size, m, phi)
        pos = ell.size
        rem = tree.remaining(K)
        vmin, vmax = pot.range_on(tree.t(K), tree.radius)
        vmin = max(vmin, pot.lower_bound)
        if problem.right_bc == "neumann":
            # phase of (u, g_k u') is continuous; bound its drift over the tail
            G = tree.prod_b(k, K - 1)
            theta = mixed = math.atan2(math.sin(phi), G * math.cos(phi))
            if mixed < 0:
                theta = mixed + math.pi
            total = m * math.pi + theta
            M = tail_mass(tree, k, K)
            A = max(vmax - lam, 0.0) * M
            B = _tail_inverse_mass(tree, k, K) + max(lam - vmin, 0.0) * M
            lower = _count_half_offsets(total - A)
            upper = _count_half_offsets(total + B)
        else:
            lower = _robin_count(m, phi, math.pi)
            H = 0.5 * rem * rem
            factor = 1.0 - max(lam - vmin, 0.0) * H
            if factor > 0:
                c = factor * tree.b_at(K) / rem
                upper = _robin_count(m, phi, math.atan2(1.0, -c))
            else:
                upper = None
        if upper is not None and lower == upper:
            return CountResult(lower, lower, upper, tree.t(K))
        K += 1
        if K > problem.truncation.max_generation:
            raise EigenvalueAtThreshold(
                f"truncation brackets disagree at λ={lam!r} up to generation {K - 1}",
                lam=lam, lower=lower, upper=upper)


def _count_half_offsets(total: float) -> int:
    """Number of ``j >= 0`` with ``pi/2 + j*pi < total``."""
    if total <= 0.5 * math.pi:
        return 0
    return int(math.ceil((total - 0.5 * math.pi) / math.pi))


def _barrier_count(problem: ReducedProblem, lam: float) -> CountResult:
    pot = problem.potential
    lower = upper = None
    for factor in (10.0, 40.0, 160.0):
        T = pot.inverse(lam + factor * math.sqrt(max(1.0, abs(lam))))
        if T <= problem.left:
            return CountResult(0, 0, 0, T)
        lower = _cutoff_count(problem, lam, T, "dirichlet", check=False)
        upper = _cutoff_count(problem, lam, T, "neumann", check=False)
        if lower == upper:
            return CountResult(lower, lower, upper, T)
    raise EigenvalueAtThreshold(f"barrier brackets disagree at λ={lam!r}", lam=lam, lower=lower, upper=upper)


def count_result(problem: ReducedProblem, lam: float) -> CountResult:
    """Count with the certified bracket that produced it."""
    if lam <= problem.vmin:
        return CountResult(0, 0, 0)
    if isinstance(problem.right_bc, Cutoff):
        n = _cutoff_count(problem, lam, problem.right_bc.T, problem.right_bc.bc)
        return CountResult(n, n, n, problem.right_bc.T)
    if problem.tree.finite_radius:
        return _finite_radius_count(problem, lam)
    return _barrier_count(problem, lam)


def oscillation_count(problem: ReducedProblem, lam: float) -> int:
    """``N(λ; A_{V,k})``, the number of eigenvalues strictly below ``λ``."""
    return count_result(problem, lam).count


def truncated_counts(problem: ReducedProblem, lam: float, K: int) -> tuple:
    """Counts on ``(t_k, t_K)`` with a Dirichlet and with a Neumann cut at ``t_K``."""
    if K <= problem.k:
        raise OutOfRange("cut generation must exceed k")
    if lam <= problem.vmin:
        return 0, 0
    T = problem.tree.t(K)
    return (_cutoff_count(problem, lam, T, "dirichlet", check=False),
            _cutoff_count(problem, lam, T, "neumann", check=False))


def perturbed_count(problem: ReducedProblem, lam: float, tries: int = 4, counter=None) -> tuple:
    """Count at ``λ``, nudged down by ``1e-9*max(1,|λ|)`` while it sits on an eigenvalue.

    Returns ``(count, shifts)`` where ``shifts`` is the number of nudges needed.
    """
    counter = counter or oscillation_count
    x = lam
    for i in range(tries + 1):
        try:
            return counter(problem, x), i
        except EigenvalueAtThreshold:
            if i == tries:
                raise
            x -= 1e-9 * max(1.0, abs(lam))
    raise AssertionError  # pragma: no cover


# -- eigenvalues ------------------------------------------------------------------

def bisect_eigenvalues(count, lo: float, hi: float, top: int, want: int, tol: float) -> list:
    """Locate the first ``want`` eigenvalues of a counting function on ``[lo, hi)``.

    ``count(x)`` is the number of eigenvalues below ``x`` (``count(lo) == 0``,
    ``count(hi) == top``) and may raise ``EigenvalueAtThreshold``.  One recursive
    bracketing serves all eigenvalues, so every evaluation is reused.
    """
    out = [0.0] * want

    def straddle(mid, d, a, b):
        for _ in range(8):
            x0, x1 = max(mid - d, a), min(mid + d, b)
            try:
                return x0, count(x0), x1, count(x1)
            except EigenvalueAtThreshold:
                d *= 4.0
        raise EigenvalueAtThreshold(f"cannot separate eigenvalues near {mid!r}", lam=mid)

    def solve(a, ca, b, cb):
        # eigenvalues with indices ca+1..cb lie in [a, b)
        while cb > ca and ca < want:
            if b - a <= tol * max(abs(a), abs(b), 1e-300):
                for j in range(ca, min(cb, want)):
                    out[j] = 0.5 * (a + b)
                return
            mid = 0.5 * (a + b)
            try:
                cm = count(mid)
            except EigenvalueAtThreshold:
                x0, c0, x1, c1 = straddle(mid, 0.25 * tol * max(abs(mid), 1e-300), a, b)
                solve(a, ca, x0, c0)
                for j in range(c0, min(c1, want)):
                    out[j] = mid
                a, ca = x1, c1
                continue
            if ca < cm < cb:
                solve(a, ca, mid, cm)
                a, ca = mid, cm
            elif cm <= ca:
                a = mid
            else:
                b = mid

    solve(lo, 0, hi, top)
    return out


def eigenvalues_below(problem: ReducedProblem, lam_max: float, n_max: Optional[int] = None,
                      tol: float = 1e-10, counter=None) -> list:
    """Eigenvalues below ``lam_max`` (at most ``n_max``), each bisected to relative width ``tol``."""
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    counter = counter or oscillation_count
    lo = problem.vmin
    if lam_max <= lo:
        return []
    if lo == -math.inf:
        raise NotApplicable("potential has no finite lower bound")
    top, _ = perturbed_count(problem, lam_max, counter=counter)
    want = top if n_max is None else min(top, n_max)
    return bisect_eigenvalues(lambda x: counter(problem, x), lo, lam_max, top, want, tol)


def lowest_eigenvalues(problem: ReducedProblem, n: int, tol: float = 1e-10, counter=None) -> list:
    """The ``n`` lowest eigenvalues."""
    counter = counter or oscillation_count
    hi = max(problem.vmin, 0.0) + 10.0
    while perturbed_count(problem, hi, counter=counter)[0] < n:
        hi = 2.0 * hi + 10.0
    return eigenvalues_below(problem, hi, n, tol, counter=counter)


# -- s-coordinates ----------------------------------------------------------------

@dataclass(frozen=True)
class STransformed:
    """Profile of the problem after ``s = ∫ dt / g_k``.

    ``W[i]`` is the value of ``g_k^2`` on ``(s_knots[i], s_knots[i+1])`` and
    ``t_knots`` are the corresponding points in the original coordinate.  ``L`` is
    the full transformed length, tail included when the radius is finite.
    ``ds`` holds the piece widths, which are more accurate than differences of
    ``s_knots`` once the weight is large.
    """

    L: float
    W: np.ndarray
    s_knots: np.ndarray
    t_knots: np.ndarray
    k: int
    ds: np.ndarray


def _horizon(problem: ReducedProblem, generations: Optional[int]):
    tree = problem.tree
    if isinstance(problem.right_bc, Cutoff):
        T = problem.right_bc.T
        n = tree.edge_index(T)
        if tree.t(n + 1) == T:
            return n + 1, None
        return n, T
    K = problem.k + (32 if generations is None else generations)
    return K, None


def s_transform(problem: ReducedProblem, generations: Optional[int] = None) -> STransformed:
    """Change of variable ``s = ∫_{t_k}^t dτ / g_k(τ)`` up to the truncation horizon.

    ``generations`` sets how many edges are included when the right end is not
    an explicit cutoff (default 32).
    """
    tree, k = problem.tree, problem.k
    K, T = _horizon(problem, generations)
    t_knots = [tree.t(n) for n in range(k, K + 1)]
    lengths = [tree.edge_length(n) for n in range(k, K)]
    weights = [float(tree.prod_b(k, n)) for n in range(k, K)]
    if T is not None:
        t_knots.append(T)
        lengths.append(T - tree.t(K))
        weights.append(float(tree.prod_b(k, K)))
    ds = np.array(lengths) / np.array(weights)
    s_knots = np.concatenate([[0.0], np.cumsum(ds)])
    L = float(s_knots[-1])
    if T is None and not isinstance(problem.right_bc, Cutoff) and tree.finite_radius:
        L += _tail_inverse_mass(tree, k, K)
    return STransformed(L, np.array(weights) ** 2, s_knots, np.array(t_knots), k, ds)


def transformed_count(problem: ReducedProblem, lam: float) -> int:
    """Count for ``-u_ss = (λ - V) W u`` in s-coordinates (cutoff problems only)."""
    if not isinstance(problem.right_bc, Cutoff):
        raise NotApplicable("the transformed count is implemented for explicit cutoffs")
    if lam <= problem.vmin:
        return 0
    tree, k = problem.tree, problem.k
    K, T = _horizon(problem, None)
    ell, v, _, starts, pedge = problem.table.geometry(lam, K, T)
    i0 = int(starts[k])
    g = np.array([float(tree.prod_b(k, n)) for n in range(k, int(pedge[-1]) + 1)])[pedge[i0:] - k]
    w2 = (lam - v[i0:]) * g * g
    ds = ell[i0:] / g
    ones = np.ones(ds.size)
    m, phi = _kernels.sweep(w2, ds, ones, 0, ds.size, 0, 0.0)
    alpha = math.pi if problem.right_bc.bc == "dirichlet" else 0.5 * math.pi
    _check_threshold(m, phi, alpha, ds.size, lam)
    return _robin_count(m, phi, alpha)


def transformed_eigenvalues(problem: ReducedProblem, n: int, tol: float = 1e-10) -> list:
    """Lowest ``n`` eigenvalues computed entirely in s-coordinates."""
    return lowest_eigenvalues(problem, n, tol, counter=transformed_count)
