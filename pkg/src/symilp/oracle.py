"""Exact desk-scale ILP solving: feasibility checks, brute force, branch and bound.

This module plays the role a commercial solver would play at production
scale. It produces training labels and serves the repair heuristics. The
continuous relaxations are solved with HiGHS through scipy.optimize.linprog;
the search layers on top (enumeration, depth-first branch and bound with
most-fractional branching) are deterministic, so repeated runs yield
identical labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .instance import BINARY, EQ, FEAS_TOL, GE, LE, IlpInstance, Solution

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
LIMIT_REACHED = "limit_reached"

INT_TOL = 1e-6
LP_TOL = 1e-8

BRUTE_FORCE_CAP = 2 ** 24


@dataclass(frozen=True)
class SolveLimits:
    time_limit_ms: float = 60_000.0
    node_limit: int = 200_000
    abs_gap: float = 1e-9
    rel_gap: float = 0.0

    def __post_init__(self):
        if self.time_limit_ms <= 0 or self.node_limit <= 0:
            raise ValueError("limits must be positive")


@dataclass
class SolveResult:
    status: str
    solution: Solution | None
    bound: float
    nodes: int = 0
    wall_ms: float = 0.0


@dataclass(frozen=True)
class LpResult:
    status: str  # optimal / infeasible / unbounded / error
    value: float
    x: np.ndarray | None


def check_feasible(instance: IlpInstance, values) -> list[str]:
    """All bound, integrality and constraint violations at tolerance 1e-6."""
    vals = np.asarray(values, dtype=float)
    if vals.shape != (instance.num_vars,):
        raise ValueError(f"expected {instance.num_vars} values, got {vals.shape}")
    out: list[str] = []
    for i, var in enumerate(instance.vars):
        v = vals[i]
        if v < var.lb - FEAS_TOL or v > var.ub + FEAS_TOL:
            out.append(f"var {i}: value {v} outside [{var.lb}, {var.ub}]")
        if var.is_integral() and abs(v - round(v)) > INT_TOL:
            out.append(f"var {i}: value {v} not integral")
    for j, con in enumerate(instance.constraints):
        lhs = sum(val * vals[idx] for idx, val in con.coeffs)
        if con.sense == LE and lhs > con.rhs + FEAS_TOL:
            out.append(f"constraint {j}: {lhs} > {con.rhs}")
        elif con.sense == GE and lhs < con.rhs - FEAS_TOL:
            out.append(f"constraint {j}: {lhs} < {con.rhs}")
        elif con.sense == EQ and abs(lhs - con.rhs) > FEAS_TOL:
            out.append(f"constraint {j}: {lhs} != {con.rhs}")
    return out


# ---------------------------------------------------------------------------
# Dense views shared by the solvers


@dataclass
class _DenseSystem:
    c: np.ndarray
    a: np.ndarray  # m x n dense coefficient matrix
    senses: list[str]
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integral: np.ndarray  # bool mask

    @classmethod
    def build(cls, instance: IlpInstance, extra_constraints=()) -> "_DenseSystem":
        n = instance.num_vars
        rows = list(instance.constraints) + list(extra_constraints)
        a = np.zeros((len(rows), n))
        senses = []
        rhs = np.zeros(len(rows))
        for j, con in enumerate(rows):
            for idx, val in con.coeffs:
                a[j, idx] = val
            senses.append(con.sense)
            rhs[j] = con.rhs
        lb = np.array([v.lb for v in instance.vars])
        ub = np.array([v.ub for v in instance.vars])
        integral = np.array([v.is_integral() for v in instance.vars])
        return cls(np.asarray(instance.objective, dtype=float), a, senses, rhs, lb, ub, integral)


def _solve_lp(sys_: _DenseSystem, lb: np.ndarray, ub: np.ndarray) -> LpResult:
    le = [j for j, s in enumerate(sys_.senses) if s == LE]
    ge = [j for j, s in enumerate(sys_.senses) if s == GE]
    eq = [j for j, s in enumerate(sys_.senses) if s == EQ]
    a_ub = b_ub = a_eq = b_eq = None
    if le or ge:
        a_ub = np.vstack([sys_.a[le], -sys_.a[ge]]) if ge else sys_.a[le]
        b_ub = np.concatenate([sys_.rhs[le], -sys_.rhs[ge]]) if ge else sys_.rhs[le]
    if eq:
        a_eq, b_eq = sys_.a[eq], sys_.rhs[eq]
    if np.any(lb > ub + LP_TOL):
        return LpResult(INFEASIBLE, np.inf, None)
    res = linprog(
        sys_.c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lb, ub]),
        method="highs",
    )
    if res.status == 0:
        return LpResult(OPTIMAL, float(res.fun), np.asarray(res.x))
    if res.status == 2:
        return LpResult(INFEASIBLE, np.inf, None)
    if res.status == 3:
        return LpResult("unbounded", -np.inf, None)
    return LpResult("error", -np.inf, None)


def lp_relax(instance: IlpInstance, extra_constraints=()) -> LpResult:
    """Continuous relaxation; the value is a valid lower bound for minimization."""
    sys_ = _DenseSystem.build(instance, extra_constraints)
    return _solve_lp(sys_, sys_.lb, sys_.ub)


# ---------------------------------------------------------------------------
# Exhaustive enumeration


def brute_force(instance: IlpInstance, collect_all: bool = False):
    """Exact optimum by exhaustive enumeration over integral assignments.

    Infeasible-by-interval subtrees are pruned, which does not affect
    exactness. With collect_all the full set of optimal solutions is returned
    as a second value (pure-integer instances only). Instances with
    continuous variables are finished with an LP on the continuous block at
    every integral leaf.
    """
    sys_ = _DenseSystem.build(instance)
    n = instance.num_vars
    int_idx = np.flatnonzero(sys_.integral)
    cont_idx = np.flatnonzero(~sys_.integral)
    if collect_all and cont_idx.size:
        raise ValueError("collect_all needs a pure-integer instance")
    space = 1.0
    for i in int_idx:
        space *= sys_.ub[i] - sys_.lb[i] + 1
        if space > BRUTE_FORCE_CAP:
            raise ValueError(f"search space exceeds {BRUTE_FORCE_CAP} assignments")

    t0 = time.perf_counter()
    order = list(int_idx) + list(cont_idx)  # integral first, enumeration by index
    a_ord = sys_.a[:, order]
    lo_col = np.minimum(a_ord * sys_.lb[order], a_ord * sys_.ub[order])
    hi_col = np.maximum(a_ord * sys_.lb[order], a_ord * sys_.ub[order])
    m = sys_.a.shape[0]
    depth_n = len(order)
    suf_lo = np.zeros((depth_n + 1, m))
    suf_hi = np.zeros((depth_n + 1, m))
    for d in range(depth_n - 1, -1, -1):
        suf_lo[d] = suf_lo[d + 1] + lo_col[:, d]
        suf_hi[d] = suf_hi[d + 1] + hi_col[:, d]
    c_ord = sys_.c[order]
    c_suf_lo = np.zeros(depth_n + 1)
    for d in range(depth_n - 1, -1, -1):
        c_suf_lo[d] = c_suf_lo[d + 1] + min(
            c_ord[d] * sys_.lb[order[d]], c_ord[d] * sys_.ub[order[d]]
        )

    n_int = len(int_idx)
    best_obj = np.inf
    best_vals: np.ndarray | None = None
    ties: list[np.ndarray] = []
    nodes = 0
    x = np.zeros(n)
    act = np.zeros(m)

    def row_ok(depth: int) -> bool:
        lo = act + suf_lo[depth]
        hi = act + suf_hi[depth]
        for j in range(m):
            s = sys_.senses[j]
            if s == LE and lo[j] > sys_.rhs[j] + FEAS_TOL:
                return False
            if s == GE and hi[j] < sys_.rhs[j] - FEAS_TOL:
                return False
            if s == EQ and (lo[j] > sys_.rhs[j] + FEAS_TOL or hi[j] < sys_.rhs[j] - FEAS_TOL):
                return False
        return True

    def finish_leaf(partial_obj: float):
        nonlocal best_obj, best_vals, ties
        if cont_idx.size:
            lb = sys_.lb.copy()
            ub = sys_.ub.copy()
            lb[int_idx] = ub[int_idx] = x[int_idx]
            res = _solve_lp(sys_, lb, ub)
            if res.status != OPTIMAL:
                return
            obj, vals = res.value, res.x.copy()
            vals[int_idx] = x[int_idx]
        else:
            obj, vals = partial_obj, x.copy()
        if obj < best_obj - 1e-9:
            best_obj, best_vals, ties = obj, vals, [vals]
        elif collect_all and abs(obj - best_obj) <= 1e-9:
            ties.append(vals)

    def descend(depth: int, partial_obj: float):
        nonlocal nodes, act
        # At depth == n_int the suffix intervals cover only the continuous
        # block (empty for pure-integer instances), so this doubles as the
        # exact leaf feasibility check.
        if not row_ok(depth):
            return
        if partial_obj + c_suf_lo[depth] > best_obj + 1e-9:
            return
        if depth == n_int:
            finish_leaf(partial_obj)
            return
        v = order[depth]
        col = sys_.a[:, v]
        for val in range(int(sys_.lb[v]), int(sys_.ub[v]) + 1):
            nodes += 1
            x[v] = val
            act += col * val
            descend(depth + 1, partial_obj + sys_.c[v] * val)
            act -= col * val
        x[v] = sys_.lb[v]

    descend(0, 0.0)
    wall = (time.perf_counter() - t0) * 1e3
    if best_vals is None:
        result = SolveResult(INFEASIBLE, None, np.inf, nodes, wall)
        return (result, []) if collect_all else result
    sol = Solution(tuple(best_vals.tolist()), float(best_obj))
    result = SolveResult(OPTIMAL, sol, float(best_obj), nodes, wall)
    if collect_all:
        all_opt = [Solution(tuple(v.tolist()), float(best_obj)) for v in ties]
        return result, all_opt
    return result


# ---------------------------------------------------------------------------
# Branch and bound


def _snap_integral(x: np.ndarray, integral: np.ndarray) -> np.ndarray:
    snapped = x.copy()
    snapped[integral] = np.round(snapped[integral])
    return snapped


def solve_bb(
    instance: IlpInstance,
    limits: SolveLimits = SolveLimits(),
    fixed: dict[int, float] | None = None,
    extra_constraints=(),
    debug_optimum: float | None = None,
) -> SolveResult:
    """Depth-first branch and bound with LP bounds.

    Branching picks the integral variable whose LP value is farthest from an
    integer (ties to the lowest index); the floor child is explored first.
    `fixed` pre-pins variables (partial assignments from repair heuristics),
    `extra_constraints` appends rows such as a Hamming-ball cut. When
    `debug_optimum` is given, the bound sandwich
    min(open node bounds) <= optimum <= incumbent is asserted at every node.
    """
    sys_ = _DenseSystem.build(instance, extra_constraints)
    lb0, ub0 = sys_.lb.copy(), sys_.ub.copy()
    if fixed:
        for idx, val in fixed.items():
            val = float(val)
            if sys_.integral[idx] and abs(val - round(val)) > INT_TOL:
                raise ValueError(f"fixed value {val} for integral var {idx} not integral")
            if val < lb0[idx] - FEAS_TOL or val > ub0[idx] + FEAS_TOL:
                return SolveResult(INFEASIBLE, None, np.inf, 0, 0.0)
            lb0[idx] = ub0[idx] = round(val) if sys_.integral[idx] else val

    t0 = time.perf_counter()
    deadline = t0 + limits.time_limit_ms / 1e3
    nodes = 0
    incumbent_obj = np.inf
    incumbent: np.ndarray | None = None
    tie_pool: list[np.ndarray] = []
    # Stack entries: (lb, ub, inherited parent bound).
    stack: list[tuple[np.ndarray, np.ndarray, float]] = [(lb0, ub0, -np.inf)]
    limit_hit = False

    while stack:
        if nodes >= limits.node_limit or time.perf_counter() > deadline:
            limit_hit = True
            break
        lb, ub, parent_bound = stack.pop()
        if incumbent is not None and parent_bound >= incumbent_obj - limits.abs_gap:
            continue
        nodes += 1
        res = _solve_lp(sys_, lb, ub)
        if res.status == INFEASIBLE:
            continue
        if res.status in ("unbounded", "error"):
            # No usable bound; branch on the first open integral variable.
            bound = -np.inf
            open_vars = [
                i for i in np.flatnonzero(sys_.integral) if lb[i] < ub[i] - 0.5
            ]
            if not open_vars:
                continue
            v = open_vars[0]
            mid = np.floor((lb[v] + ub[v]) / 2)
            for new_lb, new_ub in (
                (_with(lb, v, mid + 1), ub),
                (lb, _with(ub, v, mid)),
            ):
                stack.append((new_lb, new_ub, bound))
            continue
        bound = res.value
        if debug_optimum is not None:
            # Sandwich: until the optimum is an incumbent, some open subtree
            # contains it, so the weakest known bound stays below it; and
            # every incumbent stays above it. A single node's bound may
            # exceed the optimum when its subtree excludes the optimum.
            known = [bound] + [entry[2] for entry in stack]
            if incumbent is not None:
                known.append(incumbent_obj)
                assert incumbent_obj >= debug_optimum - 1e-6
            assert min(known) <= debug_optimum + 1e-6, (
                f"bound {min(known)} exceeds known optimum {debug_optimum}"
            )
        if incumbent is not None and bound >= incumbent_obj - limits.abs_gap:
            continue
        x = res.x
        frac = np.abs(x - np.round(x))
        frac[~sys_.integral] = 0.0
        v = int(np.argmax(frac))
        if frac[v] <= INT_TOL:
            cand = _snap_integral(x, sys_.integral)
            # Snapping may nudge the point; re-verify instance rows and the
            # extra rows (which are not part of the instance) before accepting.
            ok = check_feasible(instance, cand) == []
            for con in extra_constraints:
                lhs = sum(val * cand[idx] for idx, val in con.coeffs)
                if con.sense == LE and lhs > con.rhs + FEAS_TOL:
                    ok = False
                elif con.sense == GE and lhs < con.rhs - FEAS_TOL:
                    ok = False
                elif con.sense == EQ and abs(lhs - con.rhs) > FEAS_TOL:
                    ok = False
            if ok:
                obj = float(np.dot(sys_.c, cand))
                if obj < incumbent_obj - limits.abs_gap:
                    incumbent_obj, incumbent = obj, cand
                    tie_pool = [cand]
                elif abs(obj - incumbent_obj) <= limits.abs_gap:
                    tie_pool.append(cand)
            continue
        f = x[v]
        down = (lb, _with(ub, v, np.floor(f)), bound)
        up = (_with(lb, v, np.floor(f) + 1), ub, bound)
        # Dive toward the nearer integer first; finds incumbents earlier.
        if f - np.floor(f) >= 0.5:
            stack.extend((down, up))
        else:
            stack.extend((up, down))

    wall = (time.perf_counter() - t0) * 1e3
    if incumbent is not None and tie_pool:
        incumbent = min(tie_pool, key=lambda v: tuple(v.tolist()))
        incumbent_obj = float(np.dot(sys_.c, incumbent))
    if debug_optimum is not None and incumbent is not None:
        assert incumbent_obj >= debug_optimum - 1e-6

    if limit_hit:
        open_bounds = [entry[2] for entry in stack]
        bound = min(open_bounds) if open_bounds else (
            incumbent_obj if incumbent is not None else np.inf
        )
        sol = None
        if incumbent is not None:
            sol = Solution(tuple(incumbent.tolist()), incumbent_obj)
        return SolveResult(LIMIT_REACHED, sol, float(bound), nodes, wall)
    if incumbent is None:
        return SolveResult(INFEASIBLE, None, np.inf, nodes, wall)
    sol = Solution(tuple(incumbent.tolist()), incumbent_obj)
    return SolveResult(OPTIMAL, sol, incumbent_obj, nodes, wall)


def _with(arr: np.ndarray, idx: int, val: float) -> np.ndarray:
    out = arr.copy()
    out[idx] = val
    return out
