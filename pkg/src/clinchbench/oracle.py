"""Independent ground truth for the rest of the package.

Three unrelated referees live here: a small dense LP solver used to state the
envy-free benchmarks as explicit programs, a tick-discretized price clock that
re-derives the clinching auction from its definition, and a brute-force envy
checker.  None of them import from the characterization or auction modules;
agreement between the two routes is what the test suite certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BudgetedInstance, Outcome

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-7
RATIO_TIE_TOL = 1e-12
MAX_PIVOTS = 50_000
LP_AGENT_CAP = 16


class InfeasibleError(ArithmeticError):
    """The constraint system admits no feasible point."""


class UnboundedError(ArithmeticError):
    """The objective improves without limit over the feasible region."""


@dataclass(frozen=True)
class LinearProgram:
    """Dense LP in the form: maximize objective @ x subject to lhs @ x <= rhs.

    Variables live in [lower, upper], defaulting to [0, +inf).  Lower bounds
    must be finite; +inf entries are allowed in `upper`.
    """

    objective: tuple[float, ...]
    lhs: tuple[tuple[float, ...], ...]
    rhs: tuple[float, ...]
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factor = tableau[:, col].copy()
    factor[row] = 0.0
    tableau -= np.outer(factor, tableau[row])
    basis[row] = col


def _run_simplex(tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> None:
    """Primal simplex iterations under Bland's rule (anti-cycling)."""
    rows = tableau.shape[0]
    for _ in range(MAX_PIVOTS):
        reduced = cost - cost[basis] @ tableau[:, :-1]
        enter = -1
        for j in range(reduced.size):
            if reduced[j] > PIVOT_TOL:
                enter = j
                break
        if enter < 0:
            return
        leave = -1
        best = math.inf
        for r in range(rows):
            a = tableau[r, enter]
            if a <= PIVOT_TOL:
                continue
            ratio = tableau[r, -1] / a
            if leave < 0 or ratio < best - RATIO_TIE_TOL:
                leave, best = r, ratio
            elif ratio <= best + RATIO_TIE_TOL and basis[r] < basis[leave]:
                leave = r  # tie: smaller basic variable leaves
        if leave < 0:
            raise UnboundedError("no blocking row for the entering column")
        _pivot(tableau, basis, leave, enter)
    raise ArithmeticError("simplex pivot budget exceeded")


def solve_lp(lp: LinearProgram) -> tuple[float, tuple[float, ...]]:
    """Two-phase dense simplex.

    Returns (optimal value, an optimizer).  Raises InfeasibleError or
    UnboundedError as appropriate.  Built for desk-scale programs; the
    envy-free encodings below stay well under a thousand rows.
    """
    c = np.asarray(lp.objective, dtype=float)
    nvar = c.size
    if lp.lhs:
        A = np.asarray(lp.lhs, dtype=float).reshape(-1, nvar)
        b = np.asarray(lp.rhs, dtype=float).copy()
    else:
        A = np.zeros((0, nvar))
        b = np.zeros(0)
    lower = np.zeros(nvar) if lp.lower is None else np.asarray(lp.lower, dtype=float)
    if not np.all(np.isfinite(lower)):
        raise ValueError("lower bounds must be finite")
    # shift to y = x - lower >= 0, fold finite uppers in as rows
    b = b - A @ lower
    offset = float(c @ lower)
    if lp.upper is not None:
        for j, u in enumerate(np.asarray(lp.upper, dtype=float) - lower):
            if math.isfinite(u):
                row = np.zeros(nvar)
                row[j] = 1.0
                A = np.vstack([A, row])
                b = np.append(b, u)
    m = A.shape[0]
    sign = np.where(b < 0.0, -1.0, 1.0)
    art_rows = np.flatnonzero(sign < 0.0)
    nart = art_rows.size
    ncols = nvar + m + nart
    tableau = np.zeros((m, ncols + 1))
    tableau[:, :nvar] = A * sign[:, None]
    tableau[np.arange(m), nvar + np.arange(m)] = sign
    if nart:
        tableau[art_rows, nvar + m + np.arange(nart)] = 1.0
    tableau[:, -1] = b * sign
    basis = (nvar + np.arange(m)).astype(int)
    basis[art_rows] = nvar + m + np.arange(nart)

    if nart:
        cost1 = np.zeros(ncols)
        cost1[nvar + m:] = -1.0
        _run_simplex(tableau, basis, cost1)
        residual = -float(cost1[basis] @ tableau[:, -1])
        if residual > FEAS_TOL * (1.0 + float(np.abs(b).max(initial=0.0))):
            raise InfeasibleError("phase one ended with positive artificials")
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] < nvar + m:
                continue
            piv = next(
                (j for j in range(nvar + m) if abs(tableau[r, j]) > PIVOT_TOL), None
            )
            if piv is None:
                keep[r] = False  # redundant row
            else:
                _pivot(tableau, basis, r, piv)
        tableau = np.hstack([tableau[:, : nvar + m], tableau[:, -1:]])[keep]
        basis = basis[keep]

    cost2 = np.zeros(nvar + m)
    cost2[:nvar] = c
    _run_simplex(tableau, basis, cost2)
    solution = np.zeros(nvar + m)
    solution[basis] = tableau[:, -1]
    x = solution[:nvar] + lower
    return float(c @ solution[:nvar]) + offset, tuple(float(t) for t in x)


def _check_cap(n: int) -> None:
    if n > LP_AGENT_CAP:
        raise ValueError(f"LP benchmark capped at {LP_AGENT_CAP} agents, got {n}")


def lp_efo_welfare(inst: BudgetedInstance) -> float:
    """Envy-free optimal welfare as an explicit linear program.

    Variables are the allocations.  Envy-freeness enters through
    non-increasing allocations plus the requirement that the cheapest
    supporting payment of the top agent fits the budget; supply enters as
    prefix sums against the cumulative weights.
    """
    n = inst.n
    _check_cap(n)
    if n == 0:
        return 0.0
    v = inst.values
    supply = np.cumsum(inst.weights)
    rows: list[tuple[float, ...]] = []
    rhs: list[float] = []
    for i in range(n - 1):
        row = np.zeros(n)
        row[i + 1] = 1.0
        row[i] = -1.0
        rows.append(tuple(row))
        rhs.append(0.0)
    for i in range(n):
        row = np.zeros(n)
        row[: i + 1] = 1.0
        rows.append(tuple(row))
        rhs.append(float(supply[i]))
    if math.isfinite(inst.budget):
        coef = np.zeros(n)
        for j in range(1, n):
            coef[j - 1] += v[j]
            coef[j] -= v[j]
        rows.append(tuple(coef))
        rhs.append(inst.budget)
    value, _ = solve_lp(
        LinearProgram(tuple(float(t) for t in v), tuple(rows), tuple(rhs))
    )
    return value


def lp_efo_revenue(inst: BudgetedInstance) -> float:
    """Envy-free optimal revenue with payments as explicit variables.

    Encodes the definition directly: every ordered envy pair, individual
    rationality, per-agent budget caps, prefix supply, maximize total
    payments.  Deliberately shares nothing with the virtual-value route it
    is used to referee.
    """
    n = inst.n
    _check_cap(n)
    if n == 0:
        return 0.0
    v = inst.values
    supply = np.cumsum(inst.weights)
    width = 2 * n  # x then p
    rows: list[tuple[float, ...]] = []
    rhs: list[float] = []

    def push(row: np.ndarray, bound: float) -> None:
        rows.append(tuple(row))
        rhs.append(float(bound))

    for i in range(n - 1):
        row = np.zeros(width)
        row[i + 1] = 1.0
        row[i] = -1.0
        push(row, 0.0)
    for i in range(n):
        row = np.zeros(width)
        row[: i + 1] = 1.0
        push(row, float(supply[i]))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(width)
            row[j] = v[i]
            row[n + j] = -1.0
            row[i] = -v[i]
            row[n + i] = 1.0
            push(row, 0.0)
    for i in range(n):
        row = np.zeros(width)
        row[n + i] = 1.0
        row[i] = -v[i]
        push(row, 0.0)
    if math.isfinite(inst.budget):
        for i in range(n):
            row = np.zeros(width)
            row[n + i] = 1.0
            push(row, inst.budget)
    objective = (0.0,) * n + (1.0,) * n
    value, _ = solve_lp(LinearProgram(objective, tuple(rows), tuple(rhs)))
    return value


def simulate_clock(inst: BudgetedInstance, step: float) -> Outcome:
    """Discretized ascending price clock.

    The clock starts at zero and rises by `step` per tick, jumping over dead
    zones where nothing can change and pausing at every agent's value so that
    drop-outs happen at exact prices, one agent at a time from the bottom.
    At each event every remaining agent clinches up to the point where the
    other agents' capped demand meets remaining supply.  First-order accurate
    in `step` against the exact auction, and exact whenever no budget ever
    binds.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    n = inst.n
    if n == 0:
        return Outcome((), ())
    values = inst.values
    budget = inst.budget
    supply = np.cumsum(inst.weights)
    alloc = [0.0] * n
    pay = [0.0] * n
    m = n
    held = 0.0  # common holding of the agents still in
    spent = 0.0  # common payment of the agents still in

    def cap(j: int, price: float) -> float:
        # most the top j agents could end up holding: supply cut or budget cut
        if j <= 0:
            return 0.0
        rem = max(float(supply[j - 1]) - j * held, 0.0)
        if price <= 0.0:
            return rem
        left = budget - spent
        if not math.isfinite(left):
            return rem
        return min(rem, j * max(left, 0.0) / price)

    def clinch(price: float) -> None:
        nonlocal held, spent
        if m == 0:
            return
        gain = cap(m, price) - cap(m - 1, price)
        if gain > 0.0:
            held += gain
            spent += price * gain

    def freeze(idx: int) -> None:
        alloc[idx] = held
        pay[idx] = min(spent, budget) if math.isfinite(budget) else spent

    price = 0.0
    clinch(price)
    while m > 0:
        if values[m - 1] <= price:
            freeze(m - 1)
            m -= 1
            clinch(price)
            continue
        if m == 1:
            # alone in the auction: the clinch at the last drop was final
            freeze(0)
            break
        nxt = values[m - 1]
        left = budget - spent
        rem_prev = max(float(supply[m - 2]) - (m - 1) * held, 0.0)
        if not math.isfinite(left):
            bind = math.inf
        elif left <= 1e-13 * (1.0 + budget) or rem_prev <= 1e-300:
            bind = math.inf  # out of money or out of goods: coast to the drop
        else:
            bind = (m - 1) * left / rem_prev
        if bind > price:
            price = min(nxt, bind)
        else:
            price = min(price + step, nxt)
        clinch(price)
    return Outcome(tuple(alloc), tuple(pay))


def exhaustive_envy_check(
    values: tuple[float, ...], outcome: Outcome, tol: float = 1e-9
) -> list[tuple[int, int]]:
    """All ordered pairs (i, j), 1-based, where i prefers j's bundle.

    The dumb quadratic reference the rest of the suite leans on.
    """
    alloc, pay = outcome.alloc, outcome.pay
    violations: list[tuple[int, int]] = []
    for i in range(len(alloc)):
        own = values[i] * alloc[i] - pay[i]
        for j in range(len(alloc)):
            if i == j:
                continue
            other = values[i] * alloc[j] - pay[j]
            scale = (
                1.0
                + abs(values[i]) * (abs(alloc[i]) + abs(alloc[j]))
                + abs(pay[i])
                + abs(pay[j])
            )
            if own < other - tol * scale:
                violations.append((i + 1, j + 1))
    return violations
