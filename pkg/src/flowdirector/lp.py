"""Bounded LP for port-capacity bandwidth allocation.

Maximize ``c.x`` subject to ``A x <= b`` and ``x >= l``, where ``A`` is a
site/edge incidence matrix. Solved exactly with a dense rational simplex
(Bland's rule) and made integral in units of the allocation granularity.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Optional, Sequence

import numpy as np


class Infeasible(Exception):
    """The lower bound cannot be met at some site."""


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AllocationProblem:
    incidence: tuple[tuple[int, ...], ...]
    capacities: tuple[int, ...]
    priorities: tuple[int, ...]
    lower_bound: int = 0
    granularity: int = 1

    def __post_init__(self):
        object.__setattr__(self, "incidence", tuple(tuple(int(v) for v in row) for row in self.incidence))
        object.__setattr__(self, "capacities", tuple(int(v) for v in self.capacities))
        object.__setattr__(self, "priorities", tuple(int(v) for v in self.priorities))
        n_edges = len(self.priorities)
        if len(self.incidence) != len(self.capacities):
            raise ValueError("incidence must have one row per capacity")
        for row in self.incidence:
            if len(row) != n_edges:
                raise ValueError("incidence must have one column per priority")
            if any(v not in (0, 1) for v in row):
                raise ValueError("incidence entries must be 0 or 1")
        for j in range(n_edges):
            if sum(row[j] for row in self.incidence) != 2:
                raise ValueError(f"edge {j} must touch exactly two sites")
        if any(b < 0 for b in self.capacities):
            raise ValueError("capacities must be non-negative")
        if any(p < 1 for p in self.priorities):
            raise ValueError("priorities must be >= 1")
        if self.lower_bound < 0:
            raise ValueError("lower_bound must be non-negative")
        if self.granularity < 1:
            raise ValueError("granularity must be >= 1")

    @property
    def n_sites(self) -> int:
        return len(self.capacities)

    @property
    def n_edges(self) -> int:
        return len(self.priorities)

    def usage(self, x: Sequence[int]) -> list[int]:
        return [sum(a * v for a, v in zip(row, x)) for row in self.incidence]

    def objective(self, x: Sequence[int]) -> int:
        return sum(c * v for c, v in zip(self.priorities, x))

    def is_feasible(self, x: Sequence[int]) -> bool:
        if len(x) != self.n_edges or any(v < self.lower_bound for v in x):
            return False
        return all(u <= b for u, b in zip(self.usage(x), self.capacities))

    def residual(self) -> list[int]:
        """Capacity left at each site once every edge sits at the lower bound."""
        return [b - self.lower_bound * sum(row) for row, b in zip(self.incidence, self.capacities)]

    def scaled(self, k: int) -> AllocationProblem:
        return AllocationProblem(self.incidence, self.capacities,
                                 tuple(k * c for c in self.priorities),
                                 self.lower_bound, self.granularity)


@dataclass(frozen=True)
class AllocationSolution:
    x: tuple[int, ...]
    objective: int
    feasible: bool


def _simplex_max(A: list[list[Fraction]], b: list[Fraction], c: list[Fraction]) -> list[Fraction]:
    """Maximize c.y s.t. A y <= b, y >= 0, with b >= 0 (slack basis is feasible).

    Bland's rule for both entering and leaving variables; the pivot path depends
    only on signs of reduced costs, so positive rescaling of c gives the same vertex.
    """
    m, n = len(A), len(c)
    # tableau rows: [A | I | b]
    T = [list(A[i]) + [Fraction(int(i == k)) for k in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]
    cost = list(c) + [Fraction(0)] * m

    while True:
        # reduced cost r_j = c_j - c_B . column_j
        entering = None
        for j in range(n + m):
            if j in basis:
                continue
            r = cost[j] - sum(cost[basis[i]] * T[i][j] for i in range(m))
            if r > 0:
                entering = j
                break
        if entering is None:
            break
        leaving_row = None
        best = None
        for i in range(m):
            a = T[i][entering]
            if a > 0:
                ratio = T[i][-1] / a
                if (best is None or ratio < best
                        or (ratio == best and basis[i] < basis[leaving_row])):
                    best, leaving_row = ratio, i
        if leaving_row is None:  # unreachable for incidence columns
            raise ArithmeticError("unbounded LP")
        piv = T[leaving_row][entering]
        T[leaving_row] = [v / piv for v in T[leaving_row]]
        for i in range(m):
            if i != leaving_row and T[i][entering] != 0:
                f = T[i][entering]
                T[i] = [vi - f * vp for vi, vp in zip(T[i], T[leaving_row])]
        basis[leaving_row] = entering

    y = [Fraction(0)] * n
    for i, var in enumerate(basis):
        if var < n:
            y[var] = T[i][-1]
    return y


def _lp_relaxation(problem: AllocationProblem, slack: list[int], lo: list[int],
                   hi: list[Optional[int]]) -> Optional[list[Fraction]]:
    """LP over whole units with per-edge bounds lo <= y <= hi; None if infeasible."""
    # shift y = lo + z so the slack basis stays a feasible start
    rhs = [s - sum(a * v for a, v in zip(row, lo)) for row, s in zip(problem.incidence, slack)]
    if any(r < 0 for r in rhs):
        return None
    A = [[Fraction(v) for v in row] for row in problem.incidence]
    b = [Fraction(r) for r in rhs]
    for j, u in enumerate(hi):
        if u is not None:
            if u < lo[j]:
                return None
            A.append([Fraction(int(k == j)) for k in range(problem.n_edges)])
            b.append(Fraction(u - lo[j]))
    z = _simplex_max(A, b, [Fraction(c) for c in problem.priorities])
    return [lo_j + z_j for lo_j, z_j in zip(lo, z)]


def _round_and_repair(problem: AllocationProblem, y: list[Fraction], slack: list[int]) -> list[int]:
    units = [floor(v) for v in y]
    # hand leftover whole units to the highest-priority edges first
    used = [sum(a * u for a, u in zip(row, units)) for row in problem.incidence]
    order = sorted(range(problem.n_edges), key=lambda j: (-problem.priorities[j], j))
    for j in order:
        rows = [i for i in range(problem.n_sites) if problem.incidence[i][j]]
        extra = min(slack[i] - used[i] for i in rows)
        if extra > 0:
            units[j] += extra
            for i in rows:
                used[i] += extra
    return units


def solve(problem: AllocationProblem) -> AllocationSolution:
    """Optimal allocation on the grid {l, l+g, ...}.

    The LP vertex is floored and repaired to get an incumbent; if the vertex
    was fractional (odd cycles in the site graph) a depth-first branch and
    bound closes the remaining gap. Raises Infeasible when the lower bound
    alone oversubscribes a site.
    """
    if problem.n_edges == 0:
        return AllocationSolution((), 0, True)
    residual = problem.residual()
    if any(r < 0 for r in residual):
        raise Infeasible(f"lower bound {problem.lower_bound} exceeds capacity at some site")

    g = problem.granularity
    E = problem.n_edges
    c = problem.priorities
    # work in whole units of g above the lower bound
    slack = [r // g for r in residual]
    root = _lp_relaxation(problem, slack, [0] * E, [None] * E)
    best = _round_and_repair(problem, root, slack)
    best_value = sum(ci * u for ci, u in zip(c, best))

    stack = [([0] * E, [None] * E, root)]
    while stack:
        lo, hi, y = stack.pop()
        bound = sum(ci * v for ci, v in zip(c, y))
        if bound <= best_value:
            continue
        frac = next((j for j, v in enumerate(y) if v.denominator != 1), None)
        if frac is None:
            best, best_value = [int(v) for v in y], int(bound)
            continue
        cut = floor(y[frac])
        down_hi = list(hi)
        down_hi[frac] = cut
        up_lo = list(lo)
        up_lo[frac] = cut + 1
        # push the down branch last so it is explored first
        for branch_lo, branch_hi in ((up_lo, hi), (lo, down_hi)):
            sub = _lp_relaxation(problem, slack, branch_lo, branch_hi)
            if sub is not None:
                stack.append((branch_lo, branch_hi, sub))

    x = tuple(problem.lower_bound + g * u for u in best)
    assert problem.is_feasible(x), "rounded solution violates constraints"
    return AllocationSolution(x, problem.objective(x), True)


MAX_GRID_EDGES = 5
MAX_GRID_POINTS_PER_DIM = 100


def brute_force(problem: AllocationProblem, step: int) -> AllocationSolution:
    """Exhaustive search over the grid {l, l+step, ...} in every component.

    Ties on the objective go to the lexicographically largest x.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    E = problem.n_edges
    if E > MAX_GRID_EDGES:
        raise GridTooLarge(f"{E} edges exceeds brute-force limit of {MAX_GRID_EDGES}")
    l = problem.lower_bound
    caps = problem.capacities
    if E == 0:
        return AllocationSolution((), 0, True)
    if any(r < 0 for r in problem.residual()):
        return AllocationSolution((), 0, False)

    edge_rows = [[i for i in range(problem.n_sites) if problem.incidence[i][j]] for j in range(E)]
    for j in range(E):
        top = min(caps[i] for i in edge_rows[j])
        if (top - l) // step + 1 > MAX_GRID_POINTS_PER_DIM:
            raise GridTooLarge(f"edge {j} has more than {MAX_GRID_POINTS_PER_DIM} grid points")

    c = problem.priorities
    best_key: tuple | None = None
    best_x: tuple[int, ...] = ()
    # remaining[i] is the capacity left at site i; unassigned edges are charged l up front
    remaining = list(problem.residual())
    x = [l] * E

    def consider(value: int, xs: tuple[int, ...]) -> None:
        nonlocal best_key, best_x
        key = (value, xs)
        if best_key is None or key > best_key:
            best_key, best_x = key, xs

    def last_two(value: int) -> None:
        # the final two components are enumerated as a full 2-D grid at once
        j1, j2 = E - 2, E - 1
        k1_max = min(remaining[i] for i in edge_rows[j1]) // step
        k2_max = min(remaining[i] for i in edge_rows[j2]) // step
        k1 = np.arange(k1_max + 1)[:, None]
        k2 = np.arange(k2_max + 1)[None, :]
        ok = np.ones((k1_max + 1, k2_max + 1), dtype=bool)
        for i in set(edge_rows[j1]) | set(edge_rows[j2]):
            load = problem.incidence[i][j1] * k1 * step + problem.incidence[i][j2] * k2 * step
            ok &= load <= remaining[i]
        vals = value + c[j1] * (l + k1 * step) + c[j2] * (l + k2 * step)
        vals = np.where(ok, vals, -1)
        top = int(vals.max())
        # argwhere is row-major, so the last hit is the lexicographically largest
        a, b = np.argwhere(vals == top)[-1]
        consider(top, tuple(x[:j1]) + (l + int(a) * step, l + int(b) * step))

    def descend(j: int, value: int) -> None:
        if E >= 2 and j == E - 2:
            last_two(value)
            return
        if j == E:
            consider(value, tuple(x))
            return
        rows = edge_rows[j]
        k = 0
        while all(remaining[i] >= k * step for i in rows):
            for i in rows:
                remaining[i] -= k * step
            x[j] = l + k * step
            descend(j + 1, value + c[j] * x[j])
            for i in rows:
                remaining[i] += k * step
            k += 1
        x[j] = l

    descend(0, 0)
    return AllocationSolution(best_x, best_key[0], True)
