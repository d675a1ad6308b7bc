"""Exact discrete OT by the transportation simplex, plus a brute-force oracle.

The simplex starts from the north-west-corner basis of a perturbed problem
(each supply raised by ``delta``, the last demand by ``n * delta``), which
keeps every basis non-degenerate. Pricing is Dantzig's most-negative reduced
cost, switching to Bland's first-negative rule if the objective stalls. Once
optimal, the flows are recomputed on the final basis tree from the original
marginals, so the perturbation never reaches the reported plan.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import DiscreteMeasure, TransportPlan, validate_cost


class ExactSolverError(RuntimeError):
    """Iteration cap reached; ``plan`` holds the best feasible plan found."""

    def __init__(self, message, plan=None, iterations=0):
        super().__init__(message)
        self.plan = plan
        self.iterations = iterations


@dataclass
class ExactSolution:
    plan: TransportPlan
    cost: float
    iterations: int
    # Smallest reduced cost over non-basic cells; > 0 certifies a unique optimum.
    min_reduced_cost: float

    @property
    def unique(self) -> bool:
        return self.min_reduced_cost > 1e-9


def _weights(w) -> np.ndarray:
    if isinstance(w, DiscreteMeasure):
        return np.asarray(w.weights, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0 or np.any(w <= 0):
        raise ValueError("marginal weights must be strictly positive")
    return w


class _Basis:
    """Rooted spanning tree of basic cells on the bipartite row/column graph.

    Nodes ``0..n-1`` are rows and ``n..n+m-1`` columns; node 0 is the root
    with potential 0. Potentials, parents and depths are kept in plain lists
    and updated only on the subtree that moves during a pivot.
    """

    def __init__(self, n: int, m: int, cost: np.ndarray):
        self.n, self.m = n, m
        self.cost = cost.tolist()
        self.adj = [set() for _ in range(n + m)]
        self.mask = np.zeros((n, m), dtype=bool)
        self.pot = [0.0] * (n + m)
        self.parent = [-1] * (n + m)
        self.depth = [0] * (n + m)

    def add(self, i, j):
        self.adj[i].add(self.n + j)
        self.adj[self.n + j].add(i)
        self.mask[i, j] = True

    def remove(self, i, j):
        self.adj[i].discard(self.n + j)
        self.adj[self.n + j].discard(i)
        self.mask[i, j] = False

    def cell(self, a, b):
        return (a, b - self.n) if a < self.n else (b, a - self.n)

    def edge_cost(self, a, b):
        i, j = self.cell(a, b)
        return self.cost[i][j]

    def _hang(self, start, anchor):
        """Re-root the component of ``start`` below ``anchor`` and refresh it."""
        pot, parent, depth, adj = self.pot, self.parent, self.depth, self.adj
        parent[start] = anchor
        depth[start] = 0 if anchor < 0 else depth[anchor] + 1
        pot[start] = 0.0 if anchor < 0 else self.edge_cost(start, anchor) - pot[anchor]
        stack = [start]
        while stack:
            a = stack.pop()
            pa, da, ua = parent[a], depth[a] + 1, pot[a]
            for b in adj[a]:
                if b == pa:
                    continue
                parent[b] = a
                depth[b] = da
                pot[b] = self.edge_cost(a, b) - ua
                stack.append(b)

    def build(self):
        self._hang(0, -1)

    def pivot(self, enter, leave):
        """Swap basic cells and update potentials on the moved subtree."""
        n = self.n
        li, lj = leave
        a, b = li, n + lj
        child = a if self.parent[a] == b else b
        ei, ej = enter
        self.remove(li, lj)
        # The entering endpoint inside the detached subtree becomes its new root.
        inside = ei
        x = ei
        while x != -1 and x != child:
            x = self.parent[x]
        if x != child:
            inside = n + ej
        outside = n + ej if inside == ei else ei
        self.add(ei, ej)
        self._hang(inside, outside)

    def potentials(self):
        pot = np.asarray(self.pot)
        return pot[: self.n], pot[self.n:]

    def tree_flows(self, a, b):
        """Basic solution for supplies ``a`` and demands ``b`` by leaf peeling."""
        n, m = self.n, self.m
        rem = np.concatenate([a, b]).astype(float)
        degree = [len(s) for s in self.adj]
        alive = [set(s) for s in self.adj]
        flows = np.zeros((n, m))
        leaves = [k for k in range(n + m) if degree[k] == 1]
        done = 0
        while leaves and done < n + m - 1:
            k = leaves.pop()
            if degree[k] != 1:
                continue
            (other,) = alive[k]
            i, j = self.cell(k, other)
            x = rem[k]
            flows[i, j] = x
            rem[other] -= x
            rem[k] = 0.0
            alive[k].clear()
            alive[other].discard(k)
            degree[k] = 0
            degree[other] -= 1
            done += 1
            if degree[other] == 1:
                leaves.append(other)
        return flows


def _northwest_corner(a, b, basis: _Basis, flows):
    n, m = a.size, b.size
    i = j = 0
    ra, rb = a[0], b[0]
    while True:
        x = min(ra, rb)
        flows[i, j] = x
        basis.add(i, j)
        if i == n - 1 and j == m - 1:
            break
        ra -= x
        rb -= x
        # Exactly one index advances per step, so the basis has n + m - 1 cells.
        if (ra <= rb and i < n - 1) or j == m - 1:
            i += 1
            ra = a[i]
        else:
            j += 1
            rb = b[j]


def _tree_path(u_node, v_node, parent, depth):
    """Node path ``u_node -> ... -> v_node`` through their common ancestor."""
    left, right = [u_node], [v_node]
    a, b = u_node, v_node
    while depth[a] > depth[b]:
        a = parent[a]
        left.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        right.append(b)
    while a != b:
        a = parent[a]
        b = parent[b]
        left.append(a)
        right.append(b)
    right.pop()
    return left + right[::-1]


def solve_exact(cost, source, target, max_iter=None, stall_threshold=50, delta=None) -> ExactSolution:
    """Minimise ``<C, P>`` over couplings of ``source`` and ``target``.

    Parameters
    ----------
    cost : array-like, shape (n, m)
    source, target : DiscreteMeasure or array-like of weights
    max_iter : int, optional
        Pivot cap; defaults to ``10 * n * m + 1000``.
    stall_threshold : int
        Consecutive pivots without objective decrease before switching to
        Bland's rule.
    delta : float, optional
        Supply perturbation; defaults to ``1e-9 * min(weights) / (n + 1)``.

    Raises
    ------
    ExactSolverError
        If the pivot cap is hit. The best feasible plan is attached.
    """
    C = validate_cost(cost)
    a = _weights(source)
    b = _weights(target)
    n, m = a.size, b.size
    if C.shape != (n, m):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({n}, {m})")
    if max_iter is None:
        max_iter = 10 * n * m + 1000
    if delta is None:
        delta = 1e-9 * min(a.min(), b.min()) / (n + 1)

    ap = a + delta
    bp = b.copy()
    bp[-1] += n * delta

    basis = _Basis(n, m, C)
    flows = np.zeros((n, m))
    _northwest_corner(ap, bp, basis, flows)
    basis.build()

    scale = max(1.0, float(np.abs(C).max()))
    rc_tol = 1e-12 * scale
    stalled = 0
    iterations = 0
    while True:
        u, v = basis.potentials()
        reduced = C - u[:, None] - v[None, :]
        reduced[basis.mask] = 0.0
        if stalled >= stall_threshold:
            negative = np.flatnonzero(reduced < -rc_tol)
            flat = int(negative[0]) if negative.size else -1
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -rc_tol:
                flat = -1
        if flat < 0:
            break
        if iterations >= max_iter:
            plan = TransportPlan(np.clip(basis.tree_flows(a, b), 0.0, None), a, b)
            raise ExactSolverError(
                f"transportation simplex did not converge in {max_iter} pivots", plan, iterations
            )
        ei, ej = divmod(flat, m)
        path = _tree_path(n + ej, ei, basis.parent, basis.depth)
        cells = [basis.cell(path[k], path[k + 1]) for k in range(len(path) - 1)]
        minus = cells[0::2]
        plus = cells[1::2]
        values = np.array([flows[c] for c in minus])
        if stalled >= stall_threshold:
            # Bland: among tied minima, leave by smallest cell index.
            tied = np.flatnonzero(values == values.min())
            leave = min((minus[k] for k in tied), key=lambda c: c[0] * m + c[1])
        else:
            leave = minus[int(np.argmin(values))]
        theta = flows[leave]
        for c in minus:
            flows[c] -= theta
        for c in plus:
            flows[c] += theta
        flows[ei, ej] = theta
        flows[leave] = 0.0
        basis.pivot((ei, ej), leave)
        iterations += 1
        # The objective drops by theta * |reduced cost|; theta == 0 is a stall.
        stalled = stalled + 1 if theta <= 0 else 0

    x = basis.tree_flows(a, b)
    if x.min() < -1e-9:
        raise ExactSolverError("perturbation too large: final basis infeasible for original marginals",
                               TransportPlan(np.clip(x, 0.0, None), a, b), iterations)
    x = np.clip(x, 0.0, None)
    nonbasic = reduced[~basis.mask]
    min_rc = float(nonbasic.min()) if nonbasic.size else np.inf
    plan = TransportPlan(x, a, b)
    return ExactSolution(plan, float(np.sum(C * x)), iterations, min_rc)


def brute_force_small(cost, source, target) -> float:
    """Optimal cost by enumeration (independent oracle for :func:`solve_exact`).

    Uniform equal-size marginals (``n = m <= 8``) enumerate permutations;
    otherwise (``n, m <= 4``) every spanning-tree support is solved as a
    square linear system and the feasible ones are compared.
    """
    C = validate_cost(cost)
    a = _weights(source)
    b = _weights(target)
    n, m = a.size, b.size
    if C.shape != (n, m):
        raise ValueError("cost shape does not match marginals")
    uniform = n == m and np.allclose(a, 1.0 / n, rtol=0, atol=1e-15) and np.allclose(b, 1.0 / m, rtol=0, atol=1e-15)
    if uniform:
        if n > 8:
            raise ValueError("permutation enumeration limited to n <= 8")
        perms = np.array(list(itertools.permutations(range(n))))
        return float(C[np.arange(n), perms].sum(axis=1).min() / n)
    if n > 4 or m > 4:
        raise ValueError("support enumeration limited to n, m <= 4")

    cells = [(i, j) for i in range(n) for j in range(m)]
    rhs = np.concatenate([a, b])[:-1]
    best = np.inf
    for support in itertools.combinations(range(n * m), n + m - 1):
        # Build the (n + m - 1) equality system on this support, last column row dropped.
        A = np.zeros((n + m - 1, n + m - 1))
        for k, idx in enumerate(support):
            i, j = cells[idx]
            A[i, k] = 1.0
            if j < m - 1:
                A[n + j, k] = 1.0
        if abs(np.linalg.det(A)) < 0.5:
            continue  # not a spanning tree (determinant of a tree incidence system is +-1)
        x = np.linalg.solve(A, rhs)
        if x.min() < -1e-12:
            continue
        val = sum(C[cells[idx]] * x[k] for k, idx in enumerate(support))
        best = min(best, float(val))
    return best
