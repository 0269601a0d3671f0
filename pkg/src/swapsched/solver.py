"""Exact solver for the per-step scheduling programs.

The program family: minimize ``w . r + sum_v psi_v r_v**2`` over nonnegative
integer vectors under ``A r <= c``, with ``psi >= 0`` (separable convex) and
``r = 0`` feasible. Solved by depth-first branch and bound over the integer
box, with lower bounds from the box-relaxed separable objective and pruning
from interval arithmetic on the constraints. No external solver is involved.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ProgramError

log = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 10_000_000
_EPS = 1e-9


def derive_bounds(A: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Finite upper bounds per variable implied by the ``A r <= c`` rows.

    Bounds are tightened to a fixpoint by interval propagation: a row bounds a
    positively-weighted variable by its slack after granting every negatively
    weighted variable its own current upper bound. Rows without negative
    entries reduce to the plain ``floor(c_row / coeff)`` division. A variable
    that no row can ground is reported as unbounded.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if A.ndim != 2 or A.shape[0] != c.shape[0]:
        raise ProgramError(f"constraint shapes disagree: A {A.shape}, c {c.shape}")
    m, n = A.shape
    if not (A > 0).any(axis=0).all():
        bad = np.flatnonzero(~(A > 0).any(axis=0))
        raise ProgramError(f"variable(s) {bad.tolist()} have no positive constraint coefficient")

    rows = [A[i] for i in range(m)]
    rhs = list(c)
    # Aggregating all rows often grounds variables that only appear in
    # mutually-fed rows (swap chains); only valid when every summed
    # coefficient is positive.
    agg, agg_rhs = A.sum(axis=0), float(c.sum())
    if (agg > 0).all():
        rows.append(agg)
        rhs.append(agg_rhs)
    row_neg = [np.flatnonzero(row < 0) for row in rows]
    row_pos = [np.flatnonzero(row > 0) for row in rows]

    u = np.full(n, math.inf)
    for _ in range(10 * n + 10):
        changed = False
        for row, cap, neg_idx, pos_idx in zip(rows, rhs, row_neg, row_pos):
            neg_total = 0.0
            for v in neg_idx:
                if math.isinf(u[v]):
                    neg_total = -math.inf
                    break
                neg_total += row[v] * u[v]
            slack = cap - neg_total
            if math.isinf(slack):
                continue
            for v in pos_idx:
                bound = max(math.floor((slack + _EPS) / row[v]), 0)
                if bound < u[v]:
                    u[v] = bound
                    changed = True
        if not changed:
            break
    if np.isinf(u).any():
        bad = np.flatnonzero(np.isinf(u))
        raise ProgramError(f"variable(s) {bad.tolist()} are unbounded under the given constraints")
    return u.astype(np.int64)


@dataclass
class IntegerProgram:
    """Linear + separable-quadratic integer minimization under ``A r <= c``.

    ``branch_order`` fixes the variable priority for deterministic
    tie-breaking: the search enumerates variables in that order and values
    ascending, except where ``descending`` marks a variable to be explored
    from its upper bound downwards. Among equal-objective optima the first
    vector in this search order wins.
    """

    weights: np.ndarray
    quad: np.ndarray
    A: np.ndarray
    c: np.ndarray
    upper: np.ndarray | None = None
    branch_order: np.ndarray | None = None
    descending: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.quad = np.asarray(self.quad, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        n = self.weights.shape[0]
        if self.quad.shape != (n,):
            raise ProgramError("quadratic coefficient vector has wrong length")
        if (self.quad < 0).any():
            raise ProgramError("quadratic coefficients must be nonnegative (convex objective)")
        if self.A.shape != (self.c.shape[0], n):
            raise ProgramError(f"constraint shapes disagree: A {self.A.shape}, c {self.c.shape}")
        if (self.c < -_EPS).any():
            raise ProgramError("r = 0 must be feasible: negative right-hand side entries")
        if self.upper is None:
            self.upper = derive_bounds(self.A, self.c)
        else:
            self.upper = np.asarray(self.upper, dtype=np.int64)
        if self.branch_order is None:
            self.branch_order = np.arange(n)
        else:
            self.branch_order = np.asarray(self.branch_order, dtype=np.int64)
        if self.descending is None:
            self.descending = np.zeros(n, dtype=bool)
        else:
            self.descending = np.asarray(self.descending, dtype=bool)

    @property
    def n_vars(self) -> int:
        return self.weights.shape[0]

    def objective(self, r: np.ndarray) -> float:
        return float(self.weights @ r + self.quad @ (np.asarray(r, dtype=float) ** 2))


@dataclass
class Solution:
    r: np.ndarray
    objective: float
    status: str  # "exact" | "search-exhausted"
    nodes: int = 0


def _box_min(w: float, psi: float, hi: int) -> float:
    """Integer minimum of ``w x + psi x**2`` over ``0 <= x <= hi``."""
    if hi <= 0:
        return 0.0
    if psi <= 0:
        return min(0.0, w * hi)
    vertex = -w / (2.0 * psi)
    best = 0.0
    for x in {0, hi, max(0, min(hi, math.floor(vertex))), max(0, min(hi, math.ceil(vertex)))}:
        best = min(best, w * x + psi * x * x)
    return best


def _box_min_vec(w: np.ndarray, psi: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_box_min` over per-variable bounds."""
    hi = np.maximum(hi, 0.0)
    out = np.minimum(0.0, w * hi)
    quad = psi > 0
    if quad.any():
        vertex = np.zeros_like(w)
        vertex[quad] = -w[quad] / (2.0 * psi[quad])
        best = np.zeros_like(w)
        for x in (np.floor(vertex), np.ceil(vertex)):
            x = np.clip(x, 0.0, hi)
            best = np.minimum(best, w * x + psi * x * x)
        top = w * hi + psi * hi * hi
        out = np.where(quad, np.minimum(best, np.minimum(0.0, top)), out)
    return out


#: remaining-variable count above which nodes re-propagate bounds
_PROPAGATE_THRESHOLD = 14


def solve(program: IntegerProgram, node_budget: int = DEFAULT_NODE_BUDGET) -> Solution:
    """Exact global minimizer of the program, deterministic under ties.

    Depth-first search assigns variables in ``branch_order``. At every node
    the objective lower bound is the assigned cost plus the box-relaxed
    minimum of the remaining variables, and candidate values are capped by
    the row slacks granted the most favorable completion. Wide nodes (many
    unassigned variables) additionally re-run interval propagation against
    the residual constraints, which both tightens the remaining bounds and
    detects dead subtrees early; narrow nodes use precomputed suffix data.
    Because the search enumerates assignments in tie-preference order, a node
    whose bound cannot strictly beat the incumbent is pruned outright.

    On node-budget exhaustion the incumbent is returned with status
    ``search-exhausted``.
    """
    n = program.n_vars
    if n == 0:
        return Solution(np.zeros(0, dtype=np.int64), 0.0, "exact", 0)
    order = program.branch_order
    w = program.weights[order]
    psi = program.quad[order]
    upper = program.upper[order].astype(np.int64)
    # a separable-convex variable with only nonnegative constraint
    # coefficients never exceeds its vertex: pushing past the unconstrained
    # optimum both costs more and consumes more
    A_ordered = program.A[:, order]
    cappable = (psi > 0) & (A_ordered >= 0).all(axis=0)
    if cappable.any():
        vertex = np.ceil(-w[cappable] / (2.0 * psi[cappable]))
        upper = upper.copy()
        upper[cappable] = np.minimum(upper[cappable], np.maximum(vertex, 0)).astype(np.int64)
    desc = program.descending[order]
    A = program.A[:, order]
    m = A.shape[0]
    A_neg = np.minimum(A, 0.0)
    pos_divisor = np.where(A > 0, A, 1.0)
    pos_mask = A > 0

    # Per-depth suffix data over the original bounds: the best objective any
    # completion could reach, and the lowest LHS any completion could add.
    suffix_obj = np.zeros(n + 1)
    suffix_neg = np.zeros((n + 1, m))
    for d in range(n - 1, -1, -1):
        suffix_obj[d] = suffix_obj[d + 1] + _box_min(w[d], psi[d], int(upper[d]))
        suffix_neg[d] = suffix_neg[d + 1] + A_neg[:, d] * upper[d]

    cols = [(np.flatnonzero(A[:, d] != 0.0), A[np.flatnonzero(A[:, d] != 0.0), d]) for d in range(n)]

    def propagate(depth: int, residual: np.ndarray) -> np.ndarray | None:
        """Fixpoint-tighten bounds of the unassigned suffix against the
        residual rows; None when no completion can be feasible."""
        u_work = upper.astype(float).copy()
        u_work[:depth] = 0.0
        for _ in range(6):
            neg_min = A_neg @ u_work
            if (neg_min > residual + _EPS).any():
                return None
            slack = residual - neg_min
            ratios = np.where(pos_mask, slack[:, None] / pos_divisor, math.inf)
            new_u = np.minimum(u_work, np.floor(ratios.min(axis=0) + _EPS))
            new_u[:depth] = 0.0
            if (new_u < 0).any():
                return None
            if np.array_equal(new_u, u_work):
                break
            u_work = new_u
        return u_work

    # Aggregating every row yields one joint capacity when all summed
    # coefficients stay positive (true for the scheduling family: each unit
    # operation nets out at least one stored pair). A fractional knapsack over
    # it bounds how much negative objective the whole suffix can still earn,
    # which per-variable caps alone wildly overestimate on shared pools.
    agg = A.sum(axis=0)
    agg_ok = bool((agg > _EPS).all())

    def knapsack_tail(depth: int, caps: np.ndarray, capacity: float) -> float:
        if capacity <= 0:
            return 0.0
        blocks: list[tuple[float, float, float]] = []  # (density, unit_cost, budget_units)
        for v in range(depth, n):
            cap = int(caps[v])
            if cap <= 0:
                continue
            if psi[v] <= 0:
                if w[v] < 0:
                    blocks.append((w[v] / agg[v], w[v], cap * agg[v]))
            else:
                for k in range(1, cap + 1):
                    unit = w[v] + (2 * k - 1) * psi[v]
                    if unit >= 0:
                        break
                    blocks.append((unit / agg[v], unit, agg[v]))
        blocks.sort()
        total = 0.0
        left = capacity
        for density, _, size in blocks:
            take = min(size, left)
            total += density * take
            left -= take
            if left <= 0:
                break
        return total

    best_r: np.ndarray | None = None
    best_obj = math.inf
    nodes = 0
    exhausted = False
    assignment = np.zeros(n, dtype=np.int64)

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * n + 100))

    def descend(depth: int, cost: float, residual: np.ndarray) -> None:
        nonlocal best_r, best_obj, nodes, exhausted
        if exhausted:
            return
        if depth == n:
            if cost < best_obj - _EPS:
                best_obj = cost
                best_r = assignment.copy()
            return
        hi = int(upper[depth])
        lo = 0
        caps = None
        if n - depth > _PROPAGATE_THRESHOLD:
            caps = propagate(depth, residual)
            if caps is None:
                return
            hi = min(hi, int(caps[depth]))
            tail = float(_box_min_vec(w[depth + 1:], psi[depth + 1:], caps[depth + 1:]).sum())
        else:
            tail = suffix_obj[depth + 1]
        if agg_ok:
            capacity = float(residual.sum())
            if capacity < -_EPS:
                return
            bounds_after = caps if caps is not None else upper
            tail = max(tail, knapsack_tail(depth + 1, bounds_after, capacity))
        if caps is not None:
            # The linear relaxation of the whole suffix (quadratic term
            # dropped, still a valid lower bound) is what actually prunes the
            # flat swap plateaus; closed-form bounds cannot see that serving a
            # distant pair costs a chain of swaps. Used as a node-level bound.
            lp = linprog(
                w[depth:],
                A_ub=A[:, depth:],
                b_ub=residual,
                bounds=np.stack([np.zeros(n - depth), caps[depth:]], axis=1),
                method="highs",
            )
            if lp.status == 2:  # infeasible even fractionally
                return
            if lp.status == 0:
                if cost + float(lp.fun) >= best_obj - _EPS:
                    return
                if not psi[depth:].any() and np.all(np.abs(lp.x - np.round(lp.x)) < 1e-7):
                    # integral relaxation of a purely linear suffix: this IS
                    # the subtree optimum, no need to enumerate it
                    suffix_int = np.round(lp.x).astype(np.int64)
                    candidate_cost = cost + float(w[depth:] @ suffix_int)
                    if candidate_cost < best_obj - _EPS:
                        best_obj = candidate_cost
                        best_r = assignment.copy()
                        best_r[depth:] = suffix_int
                    return
        rows, coeffs = cols[depth]
        for i, ri in enumerate(rows):
            a = coeffs[i]
            slack = residual[ri] - suffix_neg[depth + 1][ri]
            if a > 0:
                hi = min(hi, math.floor((slack + _EPS) / a))
            elif slack < -_EPS:
                lo = max(lo, math.ceil((slack + _EPS) / a))
        if hi < lo:
            return
        values = range(hi, lo - 1, -1) if desc[depth] else range(lo, hi + 1)
        for val in values:
            nodes += 1
            if nodes > node_budget:
                exhausted = True
                return
            val_cost = cost + w[depth] * val + psi[depth] * val * val
            if val_cost + tail >= best_obj - _EPS:
                continue
            assignment[depth] = val
            if val:
                descend(depth + 1, val_cost, residual - A[:, depth] * val)
            else:
                descend(depth + 1, val_cost, residual)
            assignment[depth] = 0

    descend(0, 0.0, program.c.astype(float).copy())

    status = "exact"
    if exhausted:
        status = "search-exhausted"
        log.warning("solver budget of %d nodes exhausted; returning best found", node_budget)
    if best_r is None:
        # nothing improved on (or the budget died before reaching) a leaf;
        # r = 0 is always feasible and scores 0
        zero = np.zeros(n, dtype=np.int64)
        return Solution(zero, 0.0, status, nodes)
    result = np.zeros(n, dtype=np.int64)
    result[order] = best_r
    return Solution(result, program.objective(result), status, nodes)


def dump_program(program: IntegerProgram) -> str:
    """Serialize a program to the debug text format (w/psi/A/c/u sections)."""

    def fmt(x: float) -> str:
        return format(float(x), ".17g")

    lines = ["# swapsched integer program"]
    lines.append("w: " + " ".join(fmt(x) for x in program.weights))
    lines.append("psi: " + " ".join(fmt(x) for x in program.quad))
    lines.append("A:")
    for row in program.A:
        lines.append("  " + " ".join(fmt(x) for x in row))
    lines.append("c: " + " ".join(fmt(x) for x in program.c))
    lines.append("u: " + " ".join(str(int(x)) for x in program.upper))
    lines.append("branch_order: " + " ".join(str(int(x)) for x in program.branch_order))
    lines.append("descending: " + " ".join(str(int(x)) for x in program.descending))
    return "\n".join(lines) + "\n"


def load_program(text: str) -> IntegerProgram:
    """Parse the debug text format written by :func:`dump_program`."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" in line and not line.startswith(" ") and line.split(":", 1)[0].isidentifier():
            key, rest = line.split(":", 1)
            sections[key] = [rest.strip()] if rest.strip() else []
            current = key
        elif current is not None:
            sections[current].append(line)
        else:
            raise ProgramError(f"stray line in program dump: {raw!r}")
    try:
        w = np.array([float(x) for x in " ".join(sections["w"]).split()])
        psi = np.array([float(x) for x in " ".join(sections["psi"]).split()])
        A_rows = [[float(x) for x in row.split()] for row in sections["A"]]
        A = np.array(A_rows) if A_rows else np.zeros((0, len(w)))
        c = np.array([float(x) for x in " ".join(sections["c"]).split()])
    except KeyError as exc:
        raise ProgramError(f"program dump is missing section {exc}") from None
    kwargs = {}
    if "u" in sections:
        kwargs["upper"] = np.array([int(x) for x in " ".join(sections["u"]).split()])
    if "branch_order" in sections:
        kwargs["branch_order"] = np.array([int(x) for x in " ".join(sections["branch_order"]).split()])
    if "descending" in sections:
        kwargs["descending"] = np.array(
            [bool(int(x)) for x in " ".join(sections["descending"]).split()]
        )
    return IntegerProgram(w, psi, A, c, **kwargs)
