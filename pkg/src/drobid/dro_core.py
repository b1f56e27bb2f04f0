"""Distributionally robust nomination solver.

The worst-case expected profit over a transport-budget ambiguity ball around a
weighted empirical distribution admits an exact dual reformulation as a linear
program when the profit is written as a concave piecewise-linear function of
the lifted uncertainty xi = (g, s, r-, r+, t-, t+):

    profit(n, xi) = -max(a1(n).xi, a2(n).xi),
    a1(n) = (0, -n, 0, n, 0, -1),   a2(n) = (0, -n, n, 0, -1, 0).

With an l1 ground cost the dual-norm constraints are l-infinity boxes and the
whole max-min problem collapses to a single LP over (n, lam, s_i, gamma_i1,
gamma_i2). A discretized primal adversary provides an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import ConfigError, DataError, SolverError
from .geometry import XI_DIM, PolyhedralSupport, TransportCost, lift, transport_cost
from .reference import EmpiricalDistribution

# a_j(n) = n * V[j] + U[j]
V = np.array([[0.0, -1.0, 0.0, 1.0, 0.0, 0.0], [0.0, -1.0, 1.0, 0.0, 0.0, 0.0]])
U = np.array([[0.0, 0.0, 0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 0.0, 0.0, -1.0, 0.0]])

GAMMA_DIM = 2 * XI_DIM  # one multiplier per support row


def affine_pieces(n: float) -> tuple[np.ndarray, np.ndarray]:
    """The two affine pieces a1(n), a2(n) of the negated profit."""
    return n * V[0] + U[0], n * V[1] + U[1]


def profit_lifted(n, xi) -> np.ndarray | float:
    """Profit on lifted points: n*s - max(n*r+ - t+, n*r- - t-)."""
    xi = np.asarray(xi, dtype=float)
    s, r_minus, r_plus = xi[..., 1], xi[..., 2], xi[..., 3]
    t_minus, t_plus = xi[..., 4], xi[..., 5]
    out = n * s - np.maximum(n * r_plus - t_plus, n * r_minus - t_minus)
    return float(out) if out.ndim == 0 else out


def profit_rewrite(n: float, x) -> float:
    """Profit as n*s - max((n-g) r+, (n-g) r-); exact rewrite of the settlement formula."""
    if hasattr(x, "g"):
        g, s, r_minus, r_plus = x.g, x.s, x.r_minus, x.r_plus
    else:
        g, s, r_minus, r_plus = (float(v) for v in x)
    return n * s - max((n - g) * r_plus, (n - g) * r_minus)


def nomination_bounds_from_support(box) -> tuple[float, float]:
    """Default nomination range [0, upper bound of the generation coordinate]."""
    return 0.0, float(np.asarray(box.upper)[0])


@dataclass(frozen=True)
class NominationProblem:
    """Full input of one hourly robust nomination solve."""

    lifted_samples: np.ndarray  # (M, 6)
    weights: np.ndarray         # (M,)
    support: PolyhedralSupport
    epsilon: float
    cost: TransportCost = TransportCost()
    bounds: tuple[float, float] = (0.0, np.inf)

    def __post_init__(self):
        xi = np.asarray(self.lifted_samples, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if xi.ndim != 2 or xi.shape[1] != XI_DIM or len(xi) == 0:
            raise DataError(f"lifted samples must be (M, {XI_DIM}) with M >= 1, got {xi.shape}")
        if w.shape != (len(xi),):
            raise DataError("weights misaligned with samples")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise DataError("weights must be nonnegative and sum to 1")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")
        self.cost.require_solver_supported()
        lo, hi = self.bounds
        if not lo <= hi:
            raise ConfigError(f"nomination bounds must satisfy lo <= hi, got {self.bounds}")
        scale = 1.0 + float(np.abs(self.support.d).max())
        if not self.support.contains(xi, atol=1e-9 * scale):
            raise DataError("some lifted samples fall outside the support polyhedron")
        object.__setattr__(self, "lifted_samples", xi)
        object.__setattr__(self, "weights", w)

    @property
    def n_samples(self) -> int:
        return len(self.weights)


@dataclass
class LPModel:
    """min c.x  s.t.  A_ub x <= b_ub, bounds per variable.

    For nomination problems the layout is fixed: x = [n, lam, s_1..s_M,
    gamma_11, gamma_12, ..., gamma_M1, gamma_M2] with each gamma block of
    length 12, giving 2 + 25 M variables; rows are 2M epigraph constraints
    followed by 24M dual-norm constraints.
    """

    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    bounds: np.ndarray  # (n_vars, 2), +-inf allowed
    n_samples: int | None = None

    @property
    def n_variables(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A_ub.shape[0]


class LPSolution(NamedTuple):
    x: np.ndarray | None
    objective: float | None
    status: str
    iterations: int
    message: str


_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "numerical_failure"}


def _gamma_offset(m: int) -> int:
    return 2 + m


def assemble_lp(problem: NominationProblem) -> LPModel:
    """Build the dual LP of the robust nomination problem.

    Per sample i and branch j: one epigraph row
        a_j(n).xi_i + gamma_ij.(d - C xi_i) <= s_i
    and twelve dual-norm rows  +-(C^T gamma_ij - a_j(n))_k <= lam.
    """
    xi = problem.lifted_samples
    w = problem.weights
    m = problem.n_samples
    lo, hi = problem.support.lower, problem.support.upper
    n_vars = 2 + 25 * m
    g_off = _gamma_offset(m)

    # gamma coefficients of the epigraph rows: d - C xi_i = [hi - xi_i; xi_i - lo]
    slack = np.concatenate([hi[None, :] - xi, xi - lo[None, :]], axis=1)  # (M, 12)
    vxi = xi @ V.T  # (M, 2): coefficient of n in a_j(n).xi_i
    uxi = xi @ U.T  # (M, 2): constant part of a_j(n).xi_i

    rows, cols, vals = [], [], []
    b = np.empty(26 * m)
    r = 0
    idx = np.arange(m)
    for j in range(2):
        rr = r + idx
        rows += [rr, rr, np.repeat(rr, GAMMA_DIM)]
        cols += [
            np.zeros(m, dtype=int),            # n
            2 + idx,                           # s_i
            (g_off + 24 * idx[:, None] + GAMMA_DIM * j + np.arange(GAMMA_DIM)[None, :]).ravel(),
        ]
        vals += [vxi[:, j], np.full(m, -1.0), slack.ravel()]
        b[r : r + m] = -uxi[:, j]
        r += m
    for j in range(2):
        for sign in (1.0, -1.0):
            for k in range(XI_DIM):
                rr = r + idx
                rows += [rr, rr, rr]
                cols += [
                    g_off + 24 * idx + GAMMA_DIM * j + k,
                    g_off + 24 * idx + GAMMA_DIM * j + XI_DIM + k,
                    np.ones(m, dtype=int),     # lam
                ]
                vals += [np.full(m, sign), np.full(m, -sign), np.full(m, -1.0)]
                if V[j, k] != 0.0:
                    rows.append(rr)
                    cols.append(np.zeros(m, dtype=int))
                    vals.append(np.full(m, -sign * V[j, k]))
                b[r : r + m] = sign * U[j, k]
                r += m
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(26 * m, n_vars),
    )

    c = np.zeros(n_vars)
    c[1] = problem.epsilon
    c[2 : 2 + m] = w

    bounds = np.empty((n_vars, 2))
    bounds[:, 0] = 0.0           # lam and all gamma are nonnegative
    bounds[:, 1] = np.inf
    bounds[0] = problem.bounds
    bounds[2 : 2 + m] = (-np.inf, np.inf)  # epigraph variables are free
    return LPModel(c=c, A_ub=A, b_ub=b, bounds=bounds, n_samples=m)


def solve_lp(model: LPModel, tol: float = 1e-8) -> LPSolution:
    """Solve an LPModel with HiGHS; deterministic for identical inputs.

    tol is forwarded as the solver's primal/dual feasibility tolerance.
    """
    feas = max(tol, 1e-10)
    res = linprog(
        model.c,
        A_ub=model.A_ub,
        b_ub=model.b_ub,
        bounds=model.bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": feas,
            "dual_feasibility_tolerance": feas,
        },
    )
    status = _STATUS.get(res.status, "numerical_failure")
    x = res.x if res.status == 0 else None
    objective = float(res.fun) if res.status == 0 else None
    return LPSolution(x, objective, status, int(res.nit), res.message)


@dataclass(frozen=True)
class NominationSolution:
    n_star: float
    worst_case_profit: float
    lp_status: str
    lam: float
    epsilon: float
    iterations: int
    max_constraint_violation: float
    x: np.ndarray | None = field(default=None, repr=False, compare=False)


def _max_violation(model: LPModel, x: np.ndarray) -> float:
    row_viol = float((model.A_ub @ x - model.b_ub).max(initial=0.0))
    lower_viol = float((model.bounds[:, 0] - x).max(initial=0.0))
    upper_viol = float((x - model.bounds[:, 1]).max(initial=0.0))
    return max(row_viol, lower_viol, upper_viol, 0.0)


def _solution_from_lp(model: LPModel, lp: LPSolution, epsilon: float,
                      bounds: tuple[float, float], keep_x: bool) -> NominationSolution:
    if lp.status != "optimal":
        raise SolverError(f"nomination LP not solved to optimality: {lp.status} ({lp.message})")
    violation = _max_violation(model, lp.x)
    n_star = float(min(max(lp.x[0], bounds[0]), bounds[1]))
    return NominationSolution(
        n_star=n_star,
        worst_case_profit=-lp.objective,
        lp_status=lp.status,
        lam=float(lp.x[1]),
        epsilon=epsilon,
        iterations=lp.iterations,
        max_constraint_violation=violation,
        x=lp.x if keep_x else None,
    )


def solve_nomination(
    ref: EmpiricalDistribution,
    support: PolyhedralSupport,
    epsilon: float,
    bounds: tuple[float, float],
    cost: TransportCost = TransportCost(),
    tol: float = 1e-8,
    max_samples: int | None = None,
    keep_x: bool = False,
) -> NominationSolution:
    """Lift the reference samples, assemble the dual LP, and solve it.

    Returns the optimal nomination and the worst-case expected profit
    (the negated LP optimum).
    """
    if max_samples is not None:
        ref = ref.truncated(max_samples)
    problem = NominationProblem(
        lifted_samples=lift(ref.samples),
        weights=ref.weights,
        support=support,
        epsilon=epsilon,
        cost=cost,
        bounds=bounds,
    )
    model = assemble_lp(problem)
    lp = solve_lp(model, tol)
    return _solution_from_lp(model, lp, epsilon, bounds, keep_x)


def solve_nomination_grid(
    ref: EmpiricalDistribution,
    support: PolyhedralSupport,
    epsilons,
    bounds: tuple[float, float],
    cost: TransportCost = TransportCost(),
    tol: float = 1e-8,
    max_samples: int | None = None,
) -> list[NominationSolution]:
    """Solve one hour for several budgets, reusing the assembled constraint matrix.

    Only the objective coefficient of lam depends on epsilon.
    """
    if max_samples is not None:
        ref = ref.truncated(max_samples)
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        return []
    problem = NominationProblem(
        lifted_samples=lift(ref.samples),
        weights=ref.weights,
        support=support,
        epsilon=epsilons[0],
        cost=cost,
        bounds=bounds,
    )
    model = assemble_lp(problem)
    out = []
    for eps in epsilons:
        if eps < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {eps}")
        model.c[1] = eps
        lp = solve_lp(model, tol)
        out.append(_solution_from_lp(model, lp, eps, bounds, keep_x=False))
    return out


class SAAResult(NamedTuple):
    n: float
    value: float


def saa_nomination(ref: EmpiricalDistribution, bounds: tuple[float, float]) -> SAAResult:
    """Maximize the weighted empirical expected profit by kink enumeration.

    The objective is concave piecewise linear in n with kinks only at the
    sample generations, so evaluating {g_i} plus the bounds is exact.
    Ties resolve to the smallest candidate nomination.
    """
    lo, hi = bounds
    if not lo <= hi:
        raise ConfigError(f"nomination bounds must satisfy lo <= hi, got {bounds}")
    x = ref.samples
    candidates = np.unique(np.clip(np.concatenate([x[:, 0], [lo, hi]]), lo, hi))
    g, s = x[:, 0], x[:, 1]
    r_minus, r_plus = x[:, 2], x[:, 3]
    n_col = candidates[:, None]
    values = (
        n_col * s[None, :]
        - np.maximum((n_col - g) * r_plus[None, :], (n_col - g) * r_minus[None, :])
    ) @ ref.weights
    best = int(np.flatnonzero(values == values.max())[0])
    return SAAResult(float(candidates[best]), float(values[best]))


def mean_forecast_nomination(ensemble, bounds: tuple[float, float] | None = None) -> float:
    """Baseline nomination: the ensemble mean, clipped to the nomination range."""
    ensemble = np.asarray(ensemble, dtype=float)
    if ensemble.size == 0:
        raise DataError("cannot take the mean of an empty ensemble")
    n = float(ensemble.mean())
    if bounds is not None:
        n = float(min(max(n, bounds[0]), bounds[1]))
    return n


def _product_grid(support: PolyhedralSupport, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(support.lower, support.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def worst_case_oracle(
    lifted_samples,
    weights,
    support: PolyhedralSupport,
    n: float,
    epsilon: float,
    grid_resolution: int | None = None,
    extra_nodes=None,
    node_cap: int = 200_000,
) -> float:
    """Discretized primal adversary: cheapest profit reachable on a grid.

    Minimizes sum_ik m_ik * profit(n, node_k) over transport plans m >= 0 with
    sum_k m_ik = w_i and total cost sum_ik m_ik c(xi_i, node_k) <= epsilon.
    The grid is the Cartesian product over the box (when grid_resolution is
    given) plus the sample atoms and any extra nodes. This exercises the primal
    transport problem; the main solver exercises the dual.
    """
    xi = np.atleast_2d(np.asarray(lifted_samples, dtype=float))
    w = np.asarray(weights, dtype=float)
    if len(xi) != len(w):
        raise DataError("weights misaligned with samples")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    parts = [xi]
    if grid_resolution is not None:
        if grid_resolution < 2:
            raise ConfigError(f"grid_resolution must be >= 2, got {grid_resolution}")
        if grid_resolution ** XI_DIM > node_cap:
            raise ConfigError(
                f"grid of {grid_resolution}^{XI_DIM} nodes exceeds node cap {node_cap}"
            )
        parts.append(_product_grid(support, grid_resolution))
    if extra_nodes is not None:
        parts.append(np.atleast_2d(np.asarray(extra_nodes, dtype=float)))
    nodes = np.concatenate(parts, axis=0)
    if len(nodes) * len(xi) > node_cap:
        raise ConfigError(f"{len(nodes)} nodes x {len(xi)} samples exceeds node cap {node_cap}")
    if not support.contains(nodes, atol=1e-9 * (1.0 + float(np.abs(support.d).max()))):
        raise DataError("oracle grid nodes must lie inside the support")

    m_count, k_count = len(xi), len(nodes)
    pi = np.asarray(profit_lifted(n, nodes), dtype=float)
    cost = np.abs(xi[:, None, :] - nodes[None, :, :]).sum(axis=2)  # (M, K)

    c_obj = np.tile(pi, m_count)
    a_eq = sp.kron(sp.eye(m_count, format="csr"), np.ones((1, k_count)), format="csr")
    a_ub = sp.csr_matrix(cost.reshape(1, -1))
    res = linprog(
        c_obj,
        A_ub=a_ub,
        b_ub=[epsilon],
        A_eq=a_eq,
        b_eq=w,
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise SolverError(f"oracle transport LP failed: {res.message}")
    return float(res.fun)


def single_sample_adversary_enum(xi0, n: float, epsilon: float, nodes) -> float:
    """Exhaustive adversary for one unit-mass atom over explicit target nodes.

    An optimal adversary for a single atom uses at most two targets (two
    active constraints), so enumerating single targets and tight pairs is exact.
    """
    xi0 = np.asarray(xi0, dtype=float)
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if epsilon < 0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    pi0 = profit_lifted(n, xi0)
    pi = np.asarray(profit_lifted(n, nodes), dtype=float)
    costs = np.abs(nodes - xi0).sum(axis=1)

    best = pi0
    movable = np.where(costs > 0, np.minimum(1.0, epsilon / np.where(costs > 0, costs, 1.0)), 1.0)
    single = (1.0 - movable) * pi0 + movable * pi
    best = min(best, float(single.min()))

    # pairs with mass and budget constraints both tight
    ck = costs[:, None]
    cl = costs[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        mk = (epsilon - cl) / (ck - cl)
    valid = np.isfinite(mk) & (mk >= 0.0) & (mk <= 1.0)
    mk = np.where(valid, mk, 0.0)
    pair_vals = np.where(valid, mk * pi[:, None] + (1.0 - mk) * pi[None, :], np.inf)
    pair_best = float(pair_vals.min())
    if np.isfinite(pair_best):
        best = min(best, pair_best)
    return float(best)


def write_lp_file(model: LPModel, path: str) -> None:
    """Dump the model in CPLEX LP text format for external cross-checking.

    Variables are named n, lam, s{i}, g{i}_{j}_{k}; rows epi{i}_{j} and
    dn{i}_{j}_{k}{p|m} in assembly order.
    """
    m = model.n_samples
    if m is None:
        names = [f"x{i}" for i in range(model.n_variables)]
        row_names = [f"r{i}" for i in range(model.n_rows)]
    else:
        names = ["n", "lam"] + [f"s{i}" for i in range(m)]
        for i in range(m):
            for j in (1, 2):
                names += [f"g{i}_{j}_{k}" for k in range(GAMMA_DIM)]
        row_names = [f"epi{i}_{j}" for j in (1, 2) for i in range(m)]
        for j in (1, 2):
            for sign in ("p", "m"):
                for k in range(XI_DIM):
                    row_names += [f"dn{i}_{j}_{k}{sign}" for i in range(m)]

    def terms(indices, coeffs):
        parts = []
        for idx, coef in zip(indices, coeffs):
            sign = "-" if coef < 0 else "+"
            parts.append(f"{sign} {abs(coef)!r} {names[idx]}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else text

    lines = ["\\ robust nomination dual LP" + ("" if m is None else f", M={m}"), "Minimize"]
    obj_idx = np.flatnonzero(model.c)
    lines.append(" obj: " + (terms(obj_idx, model.c[obj_idx]) or "0 " + names[0]))
    lines.append("Subject To")
    csr = model.A_ub.tocsr()
    for r in range(model.n_rows):
        lo_ptr, hi_ptr = csr.indptr[r], csr.indptr[r + 1]
        lines.append(
            f" {row_names[r]}: "
            + terms(csr.indices[lo_ptr:hi_ptr], csr.data[lo_ptr:hi_ptr])
            + f" <= {model.b_ub[r]!r}"
        )
    lines.append("Bounds")
    for i, (lo, hi) in enumerate(model.bounds):
        if lo == -np.inf and hi == np.inf:
            lines.append(f" {names[i]} free")
        elif hi == np.inf:
            if lo != 0.0:
                lines.append(f" {names[i]} >= {lo!r}")
        else:
            lines.append(f" {lo!r} <= {names[i]} <= {hi!r}")
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
