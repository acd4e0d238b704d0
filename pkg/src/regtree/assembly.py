"""Whole-tree counting functions and the full-tree validation oracle.

The Schrödinger operator on a regular tree splits into copies of the reduced
operators ``A_{V,k}``; generation ``k`` appears ``m_k`` times.  Counting
functions are therefore exact integer sums of reduced counts.  The oracle
discretizes the truncated tree directly and is used to check that splitting.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from . import _kernels
from .errors import EigenvalueAtThreshold, MeshTooCoarse, OutOfRange
from .reduced import (Cutoff, PieceTable, Sampling, Truncation, bisect_eigenvalues,
                      build_reduced_problem, lowest_eigenvalues, oscillation_count)
from .tree import Potential, TreeSpec, reduced_multiplicity

MAX_ORACLE_UNKNOWNS = 100_000


@dataclass(frozen=True)
class CountOptions:
    """How each reduced problem is closed on the right.

    ``cutoff_generation`` replaces the tree by its truncation at ``t_K`` with the
    condition ``cutoff_bc`` there; generations ``k >= K`` then do not exist.
    """

    right_bc: Optional[str] = None
    cutoff_generation: Optional[int] = None
    cutoff_bc: str = "dirichlet"
    truncation: Truncation = Truncation()
    sampling: Sampling = Sampling()
    exact_multiplicity: bool = False


@dataclass
class _Component:
    k: int
    m: int
    count: int
    spread: int  # eigenvalues sitting on λ (0 unless λ hit the spectrum)


class _Assembler:
    # keeps one piece table for all generations of a tree/potential pair
    def __init__(self, tree: TreeSpec, potential: Optional[Potential], options: Optional[CountOptions]):
        self.tree = tree
        self.potential = potential or Potential.zero()
        self.options = options or CountOptions()
        self.table = PieceTable(tree, self.potential, self.options.sampling)
        self._problems: dict = {}

    def problem(self, k: int):
        p = self._problems.get(k)
        if p is None:
            o = self.options
            bc = o.right_bc
            if o.cutoff_generation is not None:
                bc = Cutoff(self.tree.t(o.cutoff_generation), o.cutoff_bc)
            p = build_reduced_problem(self.tree, k, self.potential, bc, o.truncation, o.sampling, self.table)
            self._problems[k] = p
        return p

    def _count(self, k: int, lam: float):
        p = self.problem(k)
        try:
            return oscillation_count(p, lam), 0
        except EigenvalueAtThreshold:
            d = 1e-9 * max(1.0, abs(lam))
            lo = oscillation_count(p, lam - d)
            hi = oscillation_count(p, lam + d)
            return lo, hi - lo

    def components(self, lam: float, weighted: bool = True) -> list:
        """Non-empty generations at ``λ``; ``m`` is left at 1 when ``weighted`` is false."""
        out = []
        K = self.options.cutoff_generation
        k = 0
        while K is None or k < K:
            n, spread = self._count(k, lam)
            if n == 0 and spread == 0:
                break
            m = reduced_multiplicity(self.tree, k, exact=self.options.exact_multiplicity) if weighted else 1
            out.append(_Component(k, m, n, spread))
            k += 1
        return out


def counting_function(tree: TreeSpec, potential: Optional[Potential], lam: float,
                      options: Optional[CountOptions] = None) -> int:
    """``N(λ; A_V) = Σ_k m_k N(λ; A_{V,k})``; the sum stops at the first empty generation."""
    return sum(c.m * c.count for c in _Assembler(tree, potential, options).components(lam))


def tilde_counting(tree: TreeSpec, potential: Optional[Potential], lam: float,
                   options: Optional[CountOptions] = None) -> int:
    """``Ñ(λ) = Σ_k N(λ; A_{V,k})``."""
    return sum(c.count for c in _Assembler(tree, potential, options).components(lam, weighted=False))


def component_counts(tree: TreeSpec, potential: Optional[Potential], lam: float,
                     options: Optional[CountOptions] = None) -> list:
    """``[(k, m_k, N_k), ...]`` for the non-empty generations."""
    return [(c.k, c.m, c.count) for c in _Assembler(tree, potential, options).components(lam)]


@dataclass
class CountingReport:
    lambdas: np.ndarray
    N: list
    N_tilde: list
    bracket_width: list
    per_generation: list = field(default_factory=list)  # per λ: {k: m_k * N_k}

    def to_csv(self, per_generation: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ks = sorted({k for row in self.per_generation for k in row}) if per_generation else []
        w.writerow(["lambda", "N", "N_tilde", "bracket_width"] + [f"k{k}" for k in ks])
        for i, lam in enumerate(self.lambdas):
            row = [repr(float(lam)), self.N[i], self.N_tilde[i], self.bracket_width[i]]
            row += [self.per_generation[i].get(k, 0) for k in ks]
            w.writerow(row)
        return buf.getvalue()


def counting_report(tree: TreeSpec, potential: Optional[Potential], lambdas,
                    options: Optional[CountOptions] = None) -> CountingReport:
    """Sample ``N`` and ``Ñ`` on a grid.

    ``bracket_width`` is the number of eigenvalues (with multiplicity) that sit
    on a grid point to working precision; they are excluded from ``N``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) <= 0):
        raise ValueError("λ grid must be strictly increasing")
    asm = _Assembler(tree, potential, options)
    N, Nt, width, per = [], [], [], []
    for lam in lambdas:
        comps = asm.components(float(lam))
        N.append(sum(c.m * c.count for c in comps))
        Nt.append(sum(c.count for c in comps))
        width.append(sum(c.m * c.spread for c in comps))
        per.append({c.k: c.m * c.count for c in comps})
    return CountingReport(lambdas, N, Nt, width, per)


def boundaryless_counting(tree: TreeSpec, d: int, potential: Optional[Potential], lam: float,
                          options: Optional[CountOptions] = None) -> tuple:
    """Bounds for the tree whose root has ``d`` edges instead of a boundary point.

    Imposing ``f(o) = 0`` splits that operator into ``d`` rooted copies and is a
    rank-one restriction, so the count moves by at most one.
    """
    if int(d) != d or d < 2:
        raise OutOfRange("root degree d must be an integer >= 2")
    n = counting_function(tree, potential, lam, options)
    return d * n, d * n + 1


# -- full-tree oracle ------------------------------------------------------------

@dataclass
class _Mesh:
    stiff: np.ndarray
    mass: np.ndarray
    off: np.ndarray
    parent: np.ndarray
    x: np.ndarray
    vertices: list  # (vertex node, incoming pair, h_in, [(c1, c2, h_c), ...])


def _build_mesh(tree: TreeSpec, potential: Potential, K: int, h: float, bc: str) -> _Mesh:
    if K < 1:
        raise OutOfRange("truncation generation must be >= 1")
    n_nodes = 0
    for n in range(K):
        copies = tree.prod_b(0, n)
        n_nodes += copies * max(3, round(tree.edge_length(n) / h))
        if n_nodes > MAX_ORACLE_UNKNOWNS:
            raise OutOfRange(f"oracle mesh exceeds {MAX_ORACLE_UNKNOWNS} unknowns")
    parent = np.full(n_nodes, -1, dtype=np.int64)
    off = np.zeros(n_nodes)
    stiff = np.zeros(n_nodes)
    mass = np.zeros(n_nodes)
    x = np.zeros(n_nodes)
    vertices = []
    nxt = 0
    # stack of (generation, start vertex node or -1 for the root, pending vertex record)
    stack = [(0, -1, None)]
    while stack:
        n, start, record = stack.pop()
        a, ell = tree.t(n), tree.edge_length(n)
        ne = max(3, round(ell / h))
        he = ell / ne
        last_is_dirichlet = (n + 1 == K and bc == "dirichlet")
        count = ne - 1 if last_is_dirichlet else ne
        idx = np.arange(nxt, nxt + count)
        nxt += count
        x[idx] = a + he * np.arange(1, count + 1)
        prev = np.concatenate([[start], idx[:-1]])
        parent[idx] = prev
        off[idx] = np.where(prev >= 0, -1.0 / he, 0.0)
        # each sub-interval adds 1/he to both ends and he/2 of lumped mass
        stiff[idx] += 1.0 / he
        mass[idx] += 0.5 * he
        if start >= 0:
            stiff[start] += 1.0 / he
            mass[start] += 0.5 * he
        stiff[idx[:-1]] += 1.0 / he
        mass[idx[:-1]] += 0.5 * he
        if last_is_dirichlet:
            stiff[idx[-1]] += 1.0 / he
            mass[idx[-1]] += 0.5 * he
        if record is not None:
            record[3].append((int(idx[0]), int(idx[1]), he))
        if n + 1 < K:
            v = int(idx[-1])
            rec = (v, (int(idx[-2]), int(idx[-3])), he, [])
            vertices.append(rec)
            for _ in range(tree.b_at(n + 1)):
                stack.append((n + 1, v, rec))
    sl = slice(0, nxt)
    stiff, mass, off, parent, x = stiff[sl], mass[sl], off[sl], parent[sl], x[sl]
    if not potential.is_zero:
        stiff = stiff + potential(x) * mass
    return _Mesh(stiff, mass, off, parent, x, vertices)


def _mesh_eigenvalues(mesh: _Mesh, n: int, tol: float = 1e-13) -> list:
    count = lambda s: int(_kernels.tree_inertia(mesh.stiff, mesh.mass, mesh.off, mesh.parent, s))
    lo = float(np.min(mesh.stiff / mesh.mass)) - 2.0 * float(np.max(np.abs(mesh.off) / mesh.mass)) - 1.0
    lo = min(lo, 0.0)
    while count(lo) > 0:
        lo = 2.0 * lo - 1.0
    hi = 1.0
    while count(hi) < n:
        hi *= 2.0
    return bisect_eigenvalues(count, lo, hi, count(hi), n, tol)


def _clusters(values, rtol: float) -> list:
    """Group a sorted list into ``(value, multiplicity)`` clusters."""
    out = []
    for v in values:
        if out and abs(v - out[-1][0]) <= rtol * max(abs(v), 1e-300):
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return [(float(v), m) for v, m in out]


@dataclass
class OracleResult:
    h: float
    K: int
    bc: str
    eigenvalues: list
    multiplicities: list
    richardson_error: Optional[float] = None

    def count_below(self, lam: float) -> int:
        return sum(1 for e in self.eigenvalues if e < lam)


def full_tree_eigenvalues(tree: TreeSpec, potential: Optional[Potential], K: int, h: float, n: int,
                          bc: str = "dirichlet", accuracy: Optional[float] = None,
                          cluster_rtol: float = 1e-9) -> OracleResult:
    """Lowest ``n`` eigenvalues of a lumped-mass discretization of the truncated tree.

    Vertex unknowns are shared by all incident edges (continuity) and the vertex
    equation balances the fluxes (Kirchhoff).  ``accuracy`` turns on a
    Richardson comparison against mesh ``2h``.
    """
    potential = potential or Potential.zero()
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("cut condition must be dirichlet or neumann")
    ev = _mesh_eigenvalues(_build_mesh(tree, potential, K, h, bc), n)
    rich = None
    if accuracy is not None:
        coarse = _mesh_eigenvalues(_build_mesh(tree, potential, K, 2 * h, bc), n)
        rich = max(abs(a - b) / 3.0 / max(abs(a), 1e-300) for a, b in zip(ev, coarse))
        if rich > accuracy:
            raise MeshTooCoarse(f"Richardson estimate {rich:.3e} exceeds requested {accuracy:.3e}")
    return OracleResult(h, K, bc, ev, _clusters(ev, cluster_rtol), rich)


def kirchhoff_residuals(tree: TreeSpec, potential: Optional[Potential], K: int, h: float,
                        n_vectors: int = 1) -> list:
    """Max Kirchhoff defect over interior vertices for the lowest eigenvectors.

    Eigenvectors are normalized in the discrete ``L^2`` norm and derivatives use
    second-order one-sided differences.
    """
    potential = potential or Potential.zero()
    mesh = _build_mesh(tree, potential, K, h, "dirichlet")
    size = mesh.stiff.size
    if size > 6000:
        raise OutOfRange("dense eigenvector solve limited to 6000 unknowns")
    A = np.diag(mesh.stiff)
    child = np.nonzero(mesh.parent >= 0)[0]
    A[child, mesh.parent[child]] = mesh.off[child]
    A[mesh.parent[child], child] = mesh.off[child]
    _, vecs = eigh(A, np.diag(mesh.mass), subset_by_index=[0, n_vectors - 1])
    out = []
    for j in range(n_vectors):
        f = vecs[:, j] / math.sqrt(float(np.sum(mesh.mass * vecs[:, j] ** 2)))
        worst = 0.0
        for v, (p1, p2), h_in, kids in mesh.vertices:
            incoming = (3 * f[v] - 4 * f[p1] + f[p2]) / (2 * h_in)
            outgoing = sum((-3 * f[v] + 4 * f[c1] - f[c2]) / (2 * hc) for c1, c2, hc in kids)
            worst = max(worst, abs(outgoing - incoming))
        out.append(worst)
    return out


# -- assembly check ---------------------------------------------------------------

@dataclass
class AssemblyReport:
    n: int
    h: float
    K: int
    oracle: list
    assembled: list
    max_relative_deviation: float
    tolerance_factor: float
    oracle_pattern: list
    assembled_pattern: list
    values_ok: bool
    pattern_ok: bool

    @property
    def passed(self) -> bool:
        return self.values_ok and self.pattern_ok

    def to_dict(self) -> dict:
        return {
            "n": self.n, "h": self.h, "K": self.K,
            "oracle": self.oracle, "assembled": self.assembled,
            "max_relative_deviation": self.max_relative_deviation,
            "tolerance_factor": self.tolerance_factor,
            "oracle_pattern": self.oracle_pattern, "assembled_pattern": self.assembled_pattern,
            "values_ok": self.values_ok, "pattern_ok": self.pattern_ok, "passed": self.passed,
        }


def _pattern(values, n, rtol):
    # multiplicities of the clusters that start among the first n values
    pattern, i = [], 0
    for v, m in _clusters(values, rtol):
        if i >= n:
            break
        pattern.append(m)
        i += m
    return pattern


def assembly_check(tree: TreeSpec, potential: Optional[Potential], K: int, h: float, n: int,
                   multiplicities: Optional[dict] = None, bc: str = "dirichlet",
                   cluster_rtol: float = 1e-7) -> AssemblyReport:
    """Compare the multiset built from reduced problems with the oracle spectrum.

    ``multiplicities`` overrides ``m_k`` for chosen generations (fault injection).
    A value passes when its relative deviation is below ``5 h^2 λ``.
    """
    potential = potential or Potential.zero()
    extra = n + 8
    oracle = full_tree_eigenvalues(tree, potential, K, h, extra, bc).eigenvalues
    opts = CountOptions(cutoff_generation=K, cutoff_bc=bc)
    asm = _Assembler(tree, potential, opts)
    merged = []
    for k in range(K):
        m = (multiplicities or {}).get(k, reduced_multiplicity(tree, k))
        vals = lowest_eigenvalues(asm.problem(k), extra)
        merged.extend(v for v in vals for _ in range(m))
    merged.sort()
    merged = merged[:extra]
    dev = [abs(a - o) / o for a, o in zip(merged[:n], oracle[:n])]
    values_ok = all(d < 5.0 * h * h * o for d, o in zip(dev, oracle[:n]))
    # compare clusters that fit completely inside the extended lists
    po = _pattern(oracle, n, cluster_rtol)
    pa = _pattern(merged, n, cluster_rtol)
    pattern_ok = po == pa
    return AssemblyReport(n, h, K, oracle[:n], merged[:n], max(dev), 5.0 * h * h, po, pa,
                          values_ok, pattern_ok)
