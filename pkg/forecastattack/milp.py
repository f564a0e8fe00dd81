"""Dense linear and mixed-binary programming.

``solve_lp`` is a two-phase, bounded-variable primal simplex on a dense
tableau. Finite variable bounds are kept implicit (a nonbasic variable sits at
its lower or upper bound), free variables are split into two non-negative
parts. Pricing is Dantzig's rule until too many degenerate pivots in a row,
then Bland's rule. ``solve_milp`` runs best-bound branch-and-bound with
depth-first dives over the binary variables.
"""
import heapq
import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import tolerances as tol
from .exceptions import NodeLimitReached, NumericalBreakdown, SolverError
from .fileio import atomic_write_text

logger = logging.getLogger(__name__)


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NODE_LIMIT = "node_limit"


def _matrix(block, n):
    if block is None:
        return np.zeros((0, n))
    block = np.asarray(block, dtype=np.float64)
    return block.reshape(-1, n) if block.size else np.zeros((0, n))


def _vector(values, size, fill):
    if values is None:
        return np.full(size, fill, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    return np.full(size, float(values)) if values.ndim == 0 else values.copy()


@dataclass(eq=False)
class LinearProgram:
    """minimize c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper."""

    c: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    names: list = field(default=None, repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        n = self.c.size
        self.A_eq = _matrix(self.A_eq, n)
        self.A_ub = _matrix(self.A_ub, n)
        self.b_eq = _vector(self.b_eq, self.A_eq.shape[0], 0.0).reshape(-1)
        self.b_ub = _vector(self.b_ub, self.A_ub.shape[0], 0.0).reshape(-1)
        self.lower = _vector(self.lower, n, 0.0)
        self.upper = _vector(self.upper, n, np.inf)
        if self.b_eq.size != self.A_eq.shape[0] or self.b_ub.size != self.A_ub.shape[0]:
            raise SolverError("right-hand sides do not match the constraint blocks")
        if self.lower.size != n or self.upper.size != n:
            raise SolverError("bounds do not match the number of variables")
        for name, block in (("c", self.c), ("A_eq", self.A_eq), ("b_eq", self.b_eq), ("A_ub", self.A_ub), ("b_ub", self.b_ub)):
            if not np.all(np.isfinite(block)):
                raise SolverError(f"{name} has non-finite coefficients")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise SolverError("bounds must not be NaN")
        if self.names is None:
            self.names = [f"x{j}" for j in range(n)]

    @property
    def n(self):
        return self.c.size

    def with_bounds(self, lower, upper):
        return replace(self, lower=lower, upper=upper)


@dataclass
class LPSolution:
    status: Status
    x: np.ndarray = None
    objective: float = None
    iterations: int = 0
    nodes: int = 0
    bound: float = None

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass(eq=False)
class MixedIntegerProgram:
    lp: LinearProgram
    binaries: tuple

    def __post_init__(self):
        self.binaries = tuple(int(j) for j in self.binaries)
        for j in self.binaries:
            if not 0 <= j < self.lp.n:
                raise SolverError(f"binary index {j} out of range", index=j)
            if self.lp.lower[j] < 0 or self.lp.upper[j] > 1 or self.lp.lower[j] > self.lp.upper[j]:
                raise SolverError(f"binary {self.lp.names[j]} must have bounds within [0, 1]", index=j)


@dataclass(frozen=True)
class BnBConfig:
    integrality: float = tol.INTEGRALITY
    absolute_gap: float = tol.ABSOLUTE_GAP
    relative_gap: float = 0.0
    node_limit: int = 100000

    def __post_init__(self):
        if self.integrality <= 0 or self.absolute_gap <= 0 or self.relative_gap < 0 or self.node_limit < 1:
            raise SolverError("branch-and-bound tolerances must be positive")


def check_feasibility(lp, x):
    """Largest violation over equality rows, inequality rows and bounds."""
    x = np.asarray(x, dtype=np.float64)
    residuals = [0.0]
    if lp.A_eq.shape[0]:
        residuals.append(float(np.abs(lp.A_eq @ x - lp.b_eq).max()))
    if lp.A_ub.shape[0]:
        residuals.append(float(np.maximum(lp.A_ub @ x - lp.b_ub, 0.0).max()))
    residuals.append(float(np.maximum(lp.lower - x, 0.0).max(initial=0.0)))
    residuals.append(float(np.maximum(x - lp.upper, 0.0).max(initial=0.0)))
    return max(residuals)


class _Tableau:
    """Dense bounded-variable simplex state: B^-1 A, basic values and nonbasic bound flags."""

    def __init__(self, T, beta, basis, upper):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.upper = upper
        self.at_upper = np.zeros(T.shape[1], dtype=bool)
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0

    def pivot(self, r, q, d=None):
        piv = self.T[r, q]
        if not np.isfinite(piv) or abs(piv) < tol.BREAKDOWN:
            raise NumericalBreakdown(f"pivot {piv!r} in row {r}, column {q}", row=int(r), column=int(q))
        self.T[r] /= piv
        factor = self.T[:, q].copy()
        factor[r] = 0.0
        rows = np.flatnonzero(factor)
        if rows.size:
            self.T[rows] -= np.outer(factor[rows], self.T[r])
        self.T[:, q] = 0.0
        self.T[r, q] = 1.0
        if d is not None:
            d -= d[q] * self.T[r]
            d[q] = 0.0
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.basis[r] = q

    def nonbasic_values(self):
        values = np.where(self.at_upper, self.upper, 0.0)
        values[self.is_basic] = 0.0
        return values

    def run(self, cost, limit):
        d = cost - cost[self.basis] @ self.T
        bland = False
        degenerate = 0
        m = self.T.shape[0]
        while True:
            if self.iterations >= limit:
                raise NumericalBreakdown(f"simplex iteration limit {limit} reached", iterations=self.iterations)
            if not np.all(np.isfinite(d)) or not np.all(np.isfinite(self.beta)):
                raise NumericalBreakdown("non-finite values in the tableau", iterations=self.iterations)
            score = np.where(self.at_upper, d, -d)
            score[self.is_basic] = 0.0
            eligible = score > tol.OPTIMALITY
            if not eligible.any():
                return Status.OPTIMAL
            q = int(np.flatnonzero(eligible)[0]) if bland else int(np.argmax(score))
            sigma = -1.0 if self.at_upper[q] else 1.0
            col = self.T[:, q]
            alpha = sigma * col

            ratios = np.full(m, np.inf)
            down = alpha > tol.PIVOT
            ratios[down] = np.maximum(self.beta[down], 0.0) / alpha[down]
            basic_upper = self.upper[self.basis]
            up = (alpha < -tol.PIVOT) & np.isfinite(basic_upper)
            ratios[up] = np.maximum(basic_upper[up] - self.beta[up], 0.0) / -alpha[up]
            t_rows = ratios.min() if m else np.inf
            t_flip = self.upper[q]
            if not np.isfinite(t_rows) and not np.isfinite(t_flip):
                return Status.UNBOUNDED

            self.iterations += 1
            if t_flip <= t_rows:
                self.beta -= sigma * t_flip * col
                self.at_upper[q] = not self.at_upper[q]
                degenerate = 0
                continue

            ties = np.flatnonzero(ratios <= t_rows + tol.DEGENERATE_STEP)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = ratios[r]
            entering = t if sigma > 0 else self.upper[q] - t
            leaving = self.basis[r]
            to_upper = alpha[r] < 0
            self.beta -= sigma * t * col
            self.pivot(r, q, d)
            self.at_upper[leaving] = to_upper
            self.at_upper[q] = False
            self.beta[r] = entering

            degenerate = degenerate + 1 if t <= tol.DEGENERATE_STEP else 0
            if not bland and degenerate > tol.DEGENERACY_LIMIT:
                logger.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                bland = True


def _standard_form(lp):
    """Map x = offset + M y with y >= 0 (optionally bounded above)."""
    n = lp.n
    offset = np.zeros(n)
    columns = []
    upper = []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            columns.append((j, 1.0))
            upper.append(hi - lo)
        elif np.isfinite(hi):
            offset[j] = hi
            columns.append((j, -1.0))
            upper.append(np.inf)
        else:
            columns.append((j, 1.0))
            upper.append(np.inf)
            columns.append((j, -1.0))
            upper.append(np.inf)
    M = np.zeros((n, len(columns)))
    for k, (j, sign) in enumerate(columns):
        M[j, k] = sign
    return offset, M, np.array(upper)


def solve_lp(lp):
    """Solve ``lp`` to optimality or report infeasibility/unboundedness."""
    n = lp.n
    if np.any(lp.lower > lp.upper + tol.BOUND):
        return LPSolution(Status.INFEASIBLE)
    lower = np.minimum(lp.lower, lp.upper)
    lp = lp.with_bounds(lower, lp.upper)
    offset, M, y_upper = _standard_form(lp)
    n_struct = M.shape[1]
    m_eq, m_ub = lp.A_eq.shape[0], lp.A_ub.shape[0]
    m = m_eq + m_ub

    A = np.zeros((m, n_struct + m_ub))
    A[:m_eq, :n_struct] = lp.A_eq @ M
    A[m_eq:, :n_struct] = lp.A_ub @ M
    A[m_eq:, n_struct:] = np.eye(m_ub)
    b = np.concatenate([lp.b_eq - lp.A_eq @ offset, lp.b_ub - lp.A_ub @ offset])
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    n_real = A.shape[1]
    upper = np.concatenate([y_upper, np.full(m_ub, np.inf)])

    basis = np.empty(m, dtype=np.int64)
    needs_artificial = []
    for i in range(m):
        if i >= m_eq and not flip[i]:
            basis[i] = n_struct + (i - m_eq)
        else:
            needs_artificial.append(i)
    n_art = len(needs_artificial)
    T = np.zeros((m, n_real + n_art))
    T[:, :n_real] = A
    for k, i in enumerate(needs_artificial):
        T[i, n_real + k] = 1.0
        basis[i] = n_real + k
    state = _Tableau(T, b.copy(), basis, np.concatenate([upper, np.full(n_art, np.inf)]))
    limit = 50 * (m + n_real + n_art) + 1000

    rows = np.arange(m)
    if n_art:
        phase_one = np.zeros(n_real + n_art)
        phase_one[n_real:] = 1.0
        state.run(phase_one, limit)
        artificial = state.basis >= n_real
        infeasibility = float(state.beta[artificial].sum())
        if infeasibility > tol.FEASIBILITY * max(1.0, float(np.abs(b).max(initial=0.0))):
            logger.debug("phase one ended with infeasibility %.3g", infeasibility)
            return LPSolution(Status.INFEASIBLE, iterations=state.iterations)
        redundant = []
        for r in np.flatnonzero(artificial):
            row = np.abs(state.T[r, :n_real])
            row[state.is_basic[:n_real]] = 0.0
            q = int(np.argmax(row)) if row.size else -1
            if q >= 0 and row[q] > tol.PIVOT:
                value = state.upper[q] if state.at_upper[q] else 0.0
                state.pivot(r, q)
                state.at_upper[q] = False
                state.beta[r] = value
            else:
                redundant.append(r)
        keep = np.setdiff1d(np.arange(m), redundant)
        state.T = state.T[keep][:, :n_real]
        state.beta = state.beta[keep]
        state.basis = state.basis[keep]
        state.upper = state.upper[:n_real]
        state.at_upper = state.at_upper[:n_real]
        state.is_basic = state.is_basic[:n_real]
        rows = keep

    cost = np.concatenate([lp.c @ M, np.zeros(m_ub)])
    status = state.run(cost, limit)
    if status is Status.UNBOUNDED:
        return LPSolution(Status.UNBOUNDED, iterations=state.iterations)

    y = state.nonbasic_values()
    y[state.basis] = state.beta
    if len(rows):
        B = A[rows][:, state.basis]
        rhs = b[rows] - A[rows] @ np.where(state.is_basic, 0.0, y)
        try:
            refined = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            refined = None
        if refined is not None and np.all(np.isfinite(refined)):
            y[state.basis] = refined
    x = offset + M @ y[:n_struct]
    x = np.clip(x, lp.lower, lp.upper)
    objective = float(lp.c @ x)
    logger.debug("LP with %d variables and %d rows solved in %d iterations", n, m, state.iterations)
    return LPSolution(Status.OPTIMAL, x, objective, state.iterations)


def _most_fractional(x, binaries, integrality):
    values = x[list(binaries)]
    frac = np.abs(values - np.round(values))
    k = int(np.argmax(frac))
    if frac[k] <= integrality:
        return None
    return binaries[k]


def solve_milp(mip, cfg=None):
    """Branch-and-bound over ``mip.binaries``.

    Returns an OPTIMAL solution (within the gap settings) or, when the node
    limit stops the search with an incumbent in hand, a NODE_LIMIT solution
    holding that incumbent. A node limit without any incumbent raises
    NodeLimitReached.
    """
    cfg = cfg or BnBConfig()
    lp = mip.lp
    binaries = mip.binaries
    root = solve_lp(lp)
    if root.status is not Status.OPTIMAL:
        return root
    if not binaries:
        root.nodes = 1
        root.bound = root.objective
        return root

    counter = itertools.count()
    heap = [(root.objective, next(counter), lp.lower.copy(), lp.upper.copy(), root)]
    incumbent = None
    best = np.inf
    nodes = 1
    iterations = root.iterations
    stopped = False

    def pruned(bound):
        if incumbent is None:
            return False
        return bound >= best - max(cfg.absolute_gap, cfg.relative_gap * abs(best))

    while heap and not stopped:
        bound, _, lower, upper, solution = heapq.heappop(heap)
        if pruned(bound):
            continue
        while True:
            j = _most_fractional(solution.x, binaries, cfg.integrality)
            if j is None:
                if solution.objective < best:
                    best = solution.objective
                    incumbent = solution
                    logger.debug("new incumbent %.6f after %d nodes", best, nodes)
                break
            children = []
            for value in (0.0, 1.0):
                lo, hi = lower.copy(), upper.copy()
                lo[j] = hi[j] = value
                if nodes >= cfg.node_limit:
                    stopped = True
                    break
                child = solve_lp(lp.with_bounds(lo, hi))
                nodes += 1
                iterations += child.iterations
                if child.status is Status.OPTIMAL and not pruned(child.objective):
                    children.append((value, lo, hi, child))
            if stopped or not children:
                break
            preferred = 1.0 if solution.x[j] >= 0.5 else 0.0
            children.sort(key=lambda item: item[0] != preferred)
            _, lower, upper, solution = children[0]
            for _, lo, hi, child in children[1:]:
                heapq.heappush(heap, (child.objective, next(counter), lo, hi, child))

    if incumbent is None:
        if stopped:
            raise NodeLimitReached(f"no integer solution within {cfg.node_limit} nodes", nodes=nodes)
        return LPSolution(Status.INFEASIBLE, iterations=iterations, nodes=nodes)

    open_bounds = [item[0] for item in heap]
    bound = min([best, *open_bounds]) if stopped else best
    fixed_lower = lp.lower.copy()
    fixed_upper = lp.upper.copy()
    rounded = np.round(incumbent.x[list(binaries)])
    fixed_lower[list(binaries)] = rounded
    fixed_upper[list(binaries)] = rounded
    final = solve_lp(lp.with_bounds(fixed_lower, fixed_upper))
    iterations += final.iterations
    if final.status is not Status.OPTIMAL:
        final = incumbent
    status = Status.NODE_LIMIT if stopped else Status.OPTIMAL
    if stopped:
        logger.warning("Branch-and-bound stopped at the node limit (%d nodes); incumbent %.4f, bound %.4f", nodes, final.objective, bound)
    return LPSolution(status, final.x, final.objective, iterations, nodes, bound)


class LPBuilder:
    """Accumulates named variable blocks and sparse rows into a LinearProgram."""

    def __init__(self):
        self.names = []
        self.lower = []
        self.upper = []
        self.cost = []
        self.binaries = []
        self._eq = []
        self._ub = []
        self.row_names = {"eq": [], "ub": []}

    @property
    def n(self):
        return len(self.names)

    def add_variables(self, name, shape, lower=0.0, upper=np.inf, cost=0.0, binary=False):
        """Add a block of variables; returns their indices arranged in ``shape``."""
        shape = (shape,) if np.ndim(shape) == 0 else tuple(shape)
        count = int(np.prod(shape))
        start = self.n
        index = np.arange(start, start + count).reshape(shape)
        for k, position in enumerate(np.ndindex(*shape)):
            label = ",".join(str(p) for p in position)
            self.names.append(f"{name}[{label}]")
        self.lower.extend(np.broadcast_to(np.asarray(lower, dtype=np.float64), shape).reshape(-1))
        self.upper.extend(np.broadcast_to(np.asarray(upper, dtype=np.float64), shape).reshape(-1))
        self.cost.extend(np.broadcast_to(np.asarray(cost, dtype=np.float64), shape).reshape(-1))
        if binary:
            self.binaries.extend(index.reshape(-1).tolist())
        return index

    def add_cost(self, index, value):
        self.cost[int(index)] += float(value)

    @staticmethod
    def _terms(terms):
        row = {}
        for index, coef in terms:
            row[int(index)] = row.get(int(index), 0.0) + float(coef)
        return row

    def add_eq(self, terms, rhs, name=None):
        self._eq.append((self._terms(terms), float(rhs)))
        self.row_names["eq"].append(name)

    def add_le(self, terms, rhs, name=None):
        self._ub.append((self._terms(terms), float(rhs)))
        self.row_names["ub"].append(name)

    def add_ge(self, terms, rhs, name=None):
        self.add_le([(i, -c) for i, c in terms], -rhs, name)

    def set_bounds(self, index, lower=None, upper=None):
        if lower is not None:
            self.lower[int(index)] = float(lower)
        if upper is not None:
            self.upper[int(index)] = float(upper)

    def _dense(self, rows):
        A = np.zeros((len(rows), self.n))
        b = np.zeros(len(rows))
        for i, (terms, rhs) in enumerate(rows):
            for j, coef in terms.items():
                A[i, j] = coef
            b[i] = rhs
        return A, b

    def build(self):
        A_eq, b_eq = self._dense(self._eq)
        A_ub, b_ub = self._dense(self._ub)
        return LinearProgram(
            np.array(self.cost), A_eq, b_eq, A_ub, b_ub, np.array(self.lower), np.array(self.upper), list(self.names)
        )

    def build_mip(self):
        return MixedIntegerProgram(self.build(), tuple(self.binaries))


def _number(value):
    if np.isposinf(value):
        return "inf"
    if np.isneginf(value):
        return "-inf"
    return repr(float(value))


def dump_lp(lp, path, binaries=()):
    """Write ``lp`` in a plain fixed-format text layout.

    Sections, in order::

        VARIABLES <n>        then: <index> <name> <lower> <upper> <cost> <C|B>
        EQUALITIES <m>       then: <row> <rhs> <index>:<coef> ...
        INEQUALITIES <m>     then: <row> <rhs> <index>:<coef> ...   (row <= rhs)
        END
    """
    binary = set(int(j) for j in binaries)
    lines = ["# linear program, minimize", f"VARIABLES {lp.n}"]
    for j in range(lp.n):
        kind = "B" if j in binary else "C"
        lines.append(f"{j} {lp.names[j]} {_number(lp.lower[j])} {_number(lp.upper[j])} {_number(lp.c[j])} {kind}")
    for title, A, b in (("EQUALITIES", lp.A_eq, lp.b_eq), ("INEQUALITIES", lp.A_ub, lp.b_ub)):
        lines.append(f"{title} {A.shape[0]}")
        for i in range(A.shape[0]):
            terms = " ".join(f"{j}:{_number(A[i, j])}" for j in np.flatnonzero(A[i]))
            lines.append(f"{i} {_number(b[i])} {terms}".rstrip())
    lines.append("END")
    return atomic_write_text(path, "\n".join(lines) + "\n")
