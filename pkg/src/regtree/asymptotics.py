"""Asymptotic and structural checks: Weyl laws, bands, Hardy sup, renewal profile.

Each check returns plain data (tables with the CSV layout used by the CLI) so
that the trend criteria can be evaluated by the caller.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .assembly import CountOptions, _Assembler
from .errors import NotApplicable
from .reduced import Cutoff, ReducedProblem, Truncation, build_reduced_problem, edge_propagator, \
    interface_propagator, perturbed_count
from .tree import Potential, TreeSpec, generation_count, tilde_radius, total_length


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# -- Weyl laws ----------------------------------------------------------------------

def weyl_component_ratio(problem: ReducedProblem, lam: float) -> float:
    """``π N(λ; A_k) / sqrt(λ)``; tends to ``R - t_k`` on trees of finite radius."""
    if not problem.tree.finite_radius and not isinstance(problem.right_bc, Cutoff):
        raise NotApplicable("component Weyl law needs a finite radius or an explicit cutoff")
    if lam <= 0:
        raise ValueError("λ must be positive")
    n, _ = perturbed_count(problem, lam)
    return math.pi * n / math.sqrt(lam)


@dataclass
class WeylTable:
    lambdas: list
    ratios: list
    target: float
    mode: str

    def to_csv(self) -> str:
        return _csv(["lambda", "ratio", "target"], [(l, r, self.target) for l, r in zip(self.lambdas, self.ratios)])


def weyl_total_check(tree: TreeSpec, potential: Optional[Potential], lambdas: Sequence[float],
                     mode: str = "full", options: Optional[CountOptions] = None) -> WeylTable:
    """``π N(λ)/sqrt(λ)`` (mode ``full``) or ``π Ñ(λ)/sqrt(λ)`` (mode ``tilde``) per ``λ``."""
    if mode == "full":
        target = total_length(tree)
        if math.isinf(target):
            raise NotApplicable("total length is infinite; the full Weyl law does not apply")
    elif mode == "tilde":
        target = tilde_radius(tree)
        if math.isinf(target):
            raise NotApplicable("Σ (R - t_k) diverges; the tilde Weyl law does not apply")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    asm = _Assembler(tree, potential, options)
    ratios = []
    for lam in lambdas:
        comps = asm.components(float(lam), weighted=(mode == "full"))
        n = sum(c.m * c.count for c in comps)
        ratios.append(math.pi * n / math.sqrt(lam))
    return WeylTable([float(l) for l in lambdas], ratios, float(target), mode)


# -- bands of the homogeneous tree -------------------------------------------------

def band_angle(b: int) -> float:
    return math.acos(2.0 / (math.sqrt(b) + 1.0 / math.sqrt(b)))


def discriminant(b: int, lam: float) -> float:
    """Half-trace of the one-period monodromy (unit edge followed by an interface)."""
    mono = interface_propagator(b) @ edge_propagator(lam, 1.0)
    return 0.5 * float(np.trace(mono.m))


def discriminant_closed_form(b: int, lam: float) -> float:
    c = math.cos(math.sqrt(lam)) if lam >= 0 else math.cosh(math.sqrt(-lam))
    return c * (math.sqrt(b) + 1.0 / math.sqrt(b)) / 2.0


@dataclass
class BandStructure:
    b: int
    theta: float
    bands: list
    point_eigenvalues: list
    recovered_edges: list
    samples: list = field(default_factory=list)  # (λ, Δ(λ))

    def to_csv(self) -> str:
        return _csv(["l", "lower", "upper"], [(l + 1, lo, hi) for l, (lo, hi) in enumerate(self.bands)])

    def in_gap(self, lam: float) -> bool:
        return all(not lo <= lam <= hi for lo, hi in self.bands) and lam > self.bands[0][0]


def _edge_roots(b: int, s_max: float) -> list:
    # solve |Δ| = 1 in the variable s = sqrt(λ); two roots per unit of π
    f = lambda s, sign: discriminant(b, s * s) - sign
    grid = np.linspace(1e-9, s_max, int(64 * s_max / math.pi) + 64)
    roots = []
    for sign in (1.0, -1.0):
        vals = [f(s, sign) for s in grid]
        for s0, s1, v0, v1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if v0 == 0.0:
                roots.append(s0)
            elif v0 * v1 < 0:
                roots.append(brentq(f, s0, s1, args=(sign,), xtol=1e-15, rtol=1e-15))
    return sorted(r * r for r in roots)


def band_structure(b: int, lam_max: float, n_samples: int = 256) -> BandStructure:
    """Bands ``[(π(l-1)+θ)^2, (πl-θ)^2]`` and the points ``(πl)^2`` below ``lam_max``.

    The edges are independently recovered as roots of ``|Δ(λ)| = 1``.
    """
    if int(b) != b or b < 2:
        raise ValueError("b must be an integer >= 2")
    theta = band_angle(b)
    bands, points = [], []
    l = 1
    while (math.pi * (l - 1) + theta) ** 2 < lam_max:
        bands.append(((math.pi * (l - 1) + theta) ** 2, (math.pi * l - theta) ** 2))
        if (math.pi * l) ** 2 < lam_max:
            points.append((math.pi * l) ** 2)
        l += 1
    s_max = math.pi * l
    edges = _edge_roots(b, s_max)
    flat = [e for band in bands for e in band]
    recovered = edges[:len(flat)]
    lam_grid = np.linspace(0.0, lam_max, n_samples)
    samples = [(float(x), discriminant_closed_form(b, float(x))) for x in lam_grid]
    return BandStructure(int(b), theta, bands, points, recovered, samples)


# -- Hardy functional ---------------------------------------------------------------

@dataclass
class HardyResult:
    sup: float
    verdict: str
    argmax: Optional[float] = None
    history: list = field(default_factory=list)  # (generations, sup)


def _tail_series(tree: TreeSpec, n_max: int):
    """``S_N = Σ_{n>N} ℓ_n / g_n`` for ``N < n_max``, or ``None`` if the series diverges."""
    terms = []
    run = 0
    n = 0
    while True:
        a = tree.edge_length(n) / float(tree.prod_b(0, n))
        if terms and a >= terms[-1]:
            run += 1
            if run >= 64:
                return None
        else:
            run = 0
        terms.append(a)
        n += 1
        if n > n_max + 8 and a <= 1e-18 * sum(terms[-64:]):
            break
        if n > n_max + 100000:
            return None
    tail = np.cumsum(np.array(terms)[::-1])[::-1]  # tail[i] = Σ_{n>=i}
    return np.append(tail[1:], 0.0)  # S_N = Σ_{n>N}


def hardy_functional(tree: TreeSpec, t_horizon: Optional[float] = None, max_generations: int = 256) -> HardyResult:
    """Sup over ``t`` of ``∫_0^t g ds · ∫_t^∞ ds/g`` with ``g = g_Γ``.

    On each edge the product is a concave quadratic in the position, so the sup
    per edge is exact; the horizon is doubled in generations until the sup
    stabilizes.
    """
    if tree.finite_radius:
        raise NotApplicable("the Hardy functional is defined for infinite radius")
    limit = max_generations
    if t_horizon is not None:
        limit = min(limit, generation_count(tree, t_horizon))
    S = _tail_series(tree, limit)
    if S is None:
        return HardyResult(math.inf, "divergent")
    best, arg = 0.0, None
    G = 0.0
    history = []
    horizon = 8
    for N in range(limit):
        ell = tree.edge_length(N)
        g = float(tree.prod_b(0, N))
        x = min(max(0.5 * (g * S[N] + ell - G / g), 0.0), ell)
        val = (G + g * x) * (S[N] + (ell - x) / g)
        if val > best:
            best, arg = val, tree.t(N) + x
        G += g * ell
        if N + 1 == horizon or N + 1 == limit:
            history.append((N + 1, best))
            horizon *= 2
    verdict = "finite"
    if len(history) >= 2 and history[-1][1] > 2.0 * history[-2][1]:
        verdict = "divergent"
    return HardyResult(best, verdict, arg, history)


# -- renewal regime -------------------------------------------------------------------

@dataclass
class RenewalProfile:
    q: float
    b: int
    beta: float
    eta: float
    mu: np.ndarray
    phi: np.ndarray
    bins: np.ndarray
    psi: np.ndarray  # per-bin median, indexed by bin
    residual: float
    median: float

    def to_csv(self) -> str:
        return _csv(["mu", "phi", "folded_bin", "psi_estimate"],
                    [(m, p, int(k), float(self.psi[k])) for m, p, k in zip(self.mu, self.phi, self.bins)])


def renewal_profile(q: float, b: int, mu_min: float, mu_max: float, bins: int = 64) -> RenewalProfile:
    """``Φ(μ) = λ^{-β/2} N(λ)`` with ``μ = ln λ`` on a grid of step ``η / bins``.

    ``N`` is assembled from generation 0 alone through the self-similarity
    ``N_k(λ) = N_0(λ q^{2k})``.  The periodicity residual is
    ``max |Φ(μ) - Φ(μ + η)|`` over pairs inside the window.
    """
    if b * q <= 1:
        raise NotApplicable("the renewal regime needs b*q > 1")
    tree = TreeSpec.geometric(q, b)
    beta = -math.log(b) / math.log(q)
    eta = -2.0 * math.log(q)
    step = eta / bins
    i0 = int(math.floor(mu_min / step))
    i1 = int(math.ceil(mu_max / step))
    problem = build_reduced_problem(tree, 0)
    memo: dict = {}

    def n0(i):
        if i not in memo:
            memo[i] = perturbed_count(problem, math.exp(i * step))[0]
        return memo[i]

    idx = np.arange(i0, i1 + 1)
    phi = np.empty(idx.size)
    for j, i in enumerate(idx):
        total = n0(int(i))
        k = 1
        while True:
            nk = n0(int(i) - bins * k)
            if nk == 0:
                break
            total += (b - 1) * b ** (k - 1) * nk
            k += 1
        phi[j] = math.exp(-0.5 * beta * i * step) * total
    mu = idx * step
    folded = np.mod(idx, bins)
    psi = np.array([np.median(phi[folded == k]) if np.any(folded == k) else np.nan for k in range(bins)])
    residual = float(np.max(np.abs(phi[bins:] - phi[:-bins]))) if idx.size > bins else math.nan
    return RenewalProfile(q, int(b), beta, eta, mu, phi, folded, psi, residual, float(np.median(phi)))


# -- logarithmic regime -------------------------------------------------------------

def log_weyl_check(b: int, lambdas: Sequence[float]) -> WeylTable:
    """``π N(λ) / (sqrt(λ) ln λ)`` for the tree with ``q = 1/b``; target ``(1-q)/(2 ln b)``."""
    q = 1.0 / b
    tree = TreeSpec.geometric(q, b)
    target = (1.0 - q) / (2.0 * math.log(b))
    asm = _Assembler(tree, None, None)
    ratios = []
    for lam in lambdas:
        n = sum(c.m * c.count for c in asm.components(float(lam)))
        ratios.append(math.pi * n / (math.sqrt(lam) * math.log(lam)) if n else 0.0)
    return WeylTable([float(l) for l in lambdas], ratios, target, "log")


# -- growing potentials -------------------------------------------------------------

def j_integral(potential: Potential, a: float, lam: float) -> float:
    """``∫_a^∞ (λ - V(t))_+^{1/2} dt`` for increasing ``V``.

    The turning point ``Q(λ)`` is handled by ``t = Q - τ^2``, which removes the
    square-root zero of the integrand.
    """
    Q = potential.inverse(lam)
    if Q <= a:
        return 0.0
    f = lambda tau: 2.0 * tau * math.sqrt(max(lam - float(potential(Q - tau * tau)), 0.0))
    val, _ = quad(f, 0.0, math.sqrt(Q - a), epsabs=0.0, epsrel=1e-12, limit=200)
    return val


@dataclass
class GrowingRow:
    lam: float
    J_sum: float
    N_tilde: int
    ratio: float


@dataclass
class GrowingReport:
    rows: list
    diagnostics: dict

    def to_csv(self) -> str:
        return _csv(["lambda", "J_sum", "N_tilde", "ratio"],
                    [(r.lam, r.J_sum, r.N_tilde, r.ratio) for r in self.rows])


def growing_diagnostics(tree: TreeSpec, potential: Potential, lam: float, doublings: int = 6) -> dict:
    """Empirical doubling ratios for ``Q`` and ``Ψ∘Q`` plus the trend of ``Ψ(t)/(t sqrt(V))``.

    These are advisory: the underlying conditions are asymptotic.
    """
    lams = [lam * 2.0 ** j for j in range(doublings + 1)]
    Qs = [potential.inverse(x) for x in lams]
    q_ratio = max(b / a for a, b in zip(Qs[:-1], Qs[1:]))
    psis = [generation_count(tree, x) for x in Qs]
    psi_ratio = max(b / a for a, b in zip(psis[:-1], psis[1:]))
    ts = np.geomspace(max(Qs[0], 1.0), max(Qs[0], 1.0) * 1e6, 13)
    vals = [generation_count(tree, float(t)) / (t * math.sqrt(float(potential(t)))) for t in ts]
    slope = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
    return {"q_doubling_sup": q_ratio, "psi_doubling_sup": psi_ratio,
            "psi_trend_slope": slope, "psi_trend_decreasing": slope < 0}


def growing_potential_check(tree: TreeSpec, potential: Potential, lambdas: Sequence[float],
                            options: Optional[CountOptions] = None) -> GrowingReport:
    """``J_sum = Σ_k ∫_{t_k}^∞ (λ - V)_+^{1/2}``, ``Ñ(λ)`` and ``π Ñ / J_sum`` per ``λ``."""
    if tree.finite_radius:
        raise NotApplicable("growing-potential law needs an infinite radius")
    if not potential.increasing_unbounded:
        raise NotApplicable("growing-potential law needs an increasing unbounded potential")
    asm = _Assembler(tree, potential, options)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        if lam <= float(potential(0.0)):
            raise ValueError("λ must exceed V(0)")
        Q = potential.inverse(lam)
        J = 0.0
        k = 0
        while tree.t(k) < Q:
            J += j_integral(potential, tree.t(k), lam)
            k += 1
        nt = sum(c.count for c in asm.components(lam, weighted=False))
        rows.append(GrowingRow(lam, J, nt, math.pi * nt / J))
    diag = growing_diagnostics(tree, potential, float(lambdas[0])) if len(lambdas) else {}
    return GrowingReport(rows, diag)
