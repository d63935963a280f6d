"""Backward solver for discretized BSDEs, linear closed forms and jump assembly.

The scheme runs ``i = m-1, ..., 0``::

    Z_i = E_i[Y_{i+1} dW_i] / dt_i
    Y_i = E_i[Y_{i+1} + f(t_i, S_i, Y_{i+1}, Z_i) dt_i]

with conditional expectations taken on the Hermite expansion in the
standardized Brownian state ``w_i`` (or exactly, on a recombining tree).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    IllConditionedError,
    InvalidArgumentError,
    NonFiniteStateError,
)
from .hermite import HermiteBasis, HermiteRegressor, z_from_coeffs

SCHEMES = ("explicit", "implicit")
REGRESSIONS = ("condition", "joint", "direct")
Z_METHODS = ("derivative", "cross_moment")


def _as_path_array(x, N, m1, tail=()):
    """Broadcast a scalar / time profile / path array to ``(N, m+1) + tail``."""
    a = np.asarray(x, dtype=float)
    shape = (N, m1) + tuple(tail)
    if a.shape == shape:
        return a
    if a.ndim == len(tail) + 1 and a.shape[0] == m1:
        a = a[None]
    elif a.ndim == len(tail):
        a = a[None, None]
    return np.broadcast_to(a, shape)


@dataclass
class DriverSpec:
    """Pathwise driver ``f(i, t, s, y, z)``.

    ``s`` has shape ``(N, n)``, ``y`` shape ``(N,)``, ``z`` shape ``(N, d)``.
    Linear drivers carry ``A`` and ``B`` as ``(N, m+1)`` arrays and ``C`` as
    ``(N, m+1, d)`` so that ``f = A_i + B_i y + C_i . z``.
    """

    f: Callable
    is_linear: bool = False
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    name: str = "driver"

    def __call__(self, i, t, s, y, z):
        return self.f(i, t, s, y, z)

    @classmethod
    def linear(cls, A, B, C, N, m, d, name="linear"):
        A = _as_path_array(A, N, m + 1)
        B = _as_path_array(B, N, m + 1)
        C = _as_path_array(C, N, m + 1, (d,))

        def f(i, t, s, y, z):
            return A[:, i] + B[:, i] * y + np.einsum("pa,pa->p", C[:, i], z)

        return cls(f, True, A, B, C, name)

    def coefficients(self, i):
        if not self.is_linear:
            raise InvalidArgumentError(f"driver {self.name!r} is not linear")
        return self.A[:, i], self.B[:, i], self.C[:, i]


def zero_driver():
    return DriverSpec(lambda i, t, s, y, z: np.zeros_like(y), name="zero")


@dataclass
class TerminalSpec:
    """Terminal condition ``xi(S_T)``, or fixed pathwise values."""

    func: Optional[Callable] = None
    values: Optional[np.ndarray] = None

    def evaluate(self, ensemble):
        if self.values is not None:
            out = np.asarray(self.values, dtype=float)
            if out.shape != (ensemble.path_count,):
                raise InvalidArgumentError("terminal values do not match path count")
        else:
            out = np.asarray(self.func(ensemble.states[:, -1]), dtype=float)
            out = np.broadcast_to(out, (ensemble.path_count,)).astype(float)
        bad = ~np.isfinite(out)
        if bad.any():
            raise NonFiniteStateError("terminal value", int(np.argmax(bad)), ensemble.grid.m)
        return out


@dataclass
class SolverConfig:
    """Backward-scheme options.

    ``regression`` picks how ``E_i`` is formed from a target living at
    ``t_{i+1}``: ``condition`` conditions the fit of ``Y_{i+1}`` on ``w_{i+1}``
    analytically and projects the driver increment on ``w_i``; ``joint`` fits
    the whole target on ``w_{i+1}`` then conditions; ``direct`` regresses the
    whole target on ``w_i``.
    """

    scheme: str = "explicit"
    regression: str = "condition"
    z_method: str = "derivative"
    ridge: Optional[float] = None
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    keep_fits: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}")
        if self.regression not in REGRESSIONS:
            raise InvalidArgumentError(f"regression must be one of {REGRESSIONS}")
        if self.z_method not in Z_METHODS:
            raise InvalidArgumentError(f"z_method must be one of {Z_METHODS}")


@dataclass
class BackwardSolution:
    grid: object
    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    y0_stderr: float = float("nan")
    iterations: Optional[np.ndarray] = field(default=None, repr=False)
    fits: Optional[list] = field(default=None, repr=False)

    @property
    def y0(self):
        return float(self.Y[0, 0])

    def mean_profile(self):
        return self.Y.mean(axis=0), self.Z.mean(axis=0)


class TreeConditioner:
    """Exact conditional expectations on a recombining-free tree of increments.

    Paths sharing the same increments up to step ``i`` form one node; when the
    ensemble enumerates every outcome with its probability weight (equal
    multiplicity), group means are exact conditional expectations.
    """

    def __init__(self, batch):
        self.batch = batch
        self._groups = {}

    def groups(self, i):
        if i not in self._groups:
            if i == 0:
                self._groups[i] = np.zeros(self.batch.path_count, dtype=int)
            else:
                key = self.batch.increments[:, :i].reshape(self.batch.path_count, -1)
                _, inv = np.unique(key, axis=0, return_inverse=True)
                self._groups[i] = inv.ravel()
        return self._groups[i]

    def project(self, i, target):
        target = np.asarray(target, float)
        g = self.groups(i)
        counts = np.bincount(g)
        flat = target.reshape(target.shape[0], -1)
        out = np.empty_like(flat)
        for c in range(flat.shape[1]):
            sums = np.bincount(g, weights=flat[:, c])
            out[:, c] = (sums / counts)[g]
        return out.reshape(target.shape)


def _check(values, what, step):
    bad = ~np.isfinite(values)
    if bad.any():
        path = int(np.argmax(bad.reshape(values.shape[0], -1).any(axis=1)))
        raise NonFiniteStateError(what, path, step)


def solve_backward(ensemble, driver: DriverSpec, terminal: TerminalSpec,
                   basis: Optional[HermiteBasis] = None, config: Optional[SolverConfig] = None,
                   conditioner=None) -> BackwardSolution:
    """Run the backward scheme on an ensemble.

    Args:
        ensemble: forward paths; its batch supplies the regression states.
        driver: pathwise driver.
        terminal: terminal condition.
        basis: Hermite basis on the batch dimension (unused with a tree conditioner).
        config: solver options.
        conditioner: ``"tree"`` (or a ``TreeConditioner``) for exact
            expectations over enumerated increments; Hermite regression otherwise.
    """
    cfg = config or SolverConfig()
    grid = ensemble.grid
    batch = ensemble.batch
    N, m, d = batch.path_count, grid.m, batch.dimension
    t, dt = grid.nodes, grid.steps

    tree = None
    if conditioner is not None:
        tree = conditioner if isinstance(conditioner, TreeConditioner) else TreeConditioner(batch)
        reg = None
    else:
        if basis is None:
            raise InvalidArgumentError("a Hermite basis is required for regression")
        if basis.dimension != d:
            raise InvalidArgumentError(
                f"basis dimension {basis.dimension} != Brownian dimension {d}"
            )
        reg = HermiteRegressor(batch, basis, ridge=cfg.ridge, keep_fits=cfg.keep_fits)

    Y = np.empty((N, m + 1))
    Z = np.zeros((N, m + 1, d))
    Y[:, m] = terminal.evaluate(ensemble)
    iterations = np.zeros(m, dtype=int)
    y0_se = float("nan")

    def project(i, target):
        if tree is not None:
            return tree.project(i, target)
        return reg.project(i, target)

    for i in range(m - 1, -1, -1):
        y1 = Y[:, i + 1]
        dw = batch.increments[:, i]
        s = ensemble.states[:, i]
        try:
            cond_y = None
            if i == 0:
                cond_y = np.full(N, y1.mean())
                z = np.broadcast_to(((y1 - y1.mean())[:, None] * dw).mean(axis=0) / dt[0], (N, d))
            elif tree is not None or cfg.z_method == "cross_moment":
                z = project(i, y1[:, None] * dw) / dt[i]
            else:
                cond_y, g = reg.condition_next(i, y1)
                z = z_from_coeffs(g, basis, batch.chi(i), t[i], batch.standardized[:, i])
            z = np.ascontiguousarray(z)

            if cfg.scheme == "explicit":
                inc = np.asarray(driver(i, t[i], s, y1, z), float) * dt[i]
                if tree is not None or i == 0:
                    y = project(i, y1 + inc)
                elif cfg.regression == "joint":
                    y, _ = reg.condition_next(i, y1 + inc)
                elif cfg.regression == "direct":
                    y = project(i, y1 + inc)
                else:
                    if cond_y is None:
                        cond_y, _ = reg.condition_next(i, y1)
                    y = cond_y + project(i, inc)
                if i == 0:
                    y0_se = float(np.std(y1 + inc, ddof=1) / np.sqrt(N)) if N > 1 else 0.0
            else:
                if cond_y is None:
                    if tree is not None:
                        cond_y = project(i, y1)
                    elif cfg.regression == "direct":
                        cond_y = project(i, y1)
                    else:
                        cond_y, _ = reg.condition_next(i, y1)
                y = cond_y.copy()
                resid = np.inf
                for it in range(1, cfg.fp_max_iter + 1):
                    nxt = cond_y + project(i, np.asarray(driver(i, t[i], s, y, z), float) * dt[i])
                    resid = float(np.max(np.abs(nxt - y)))
                    y = nxt
                    if resid <= cfg.fp_tol:
                        break
                else:
                    raise ConvergenceError(i, resid, cfg.fp_max_iter)
                iterations[i] = it
                if i == 0:
                    y0_se = float(np.std(y1, ddof=1) / np.sqrt(N)) if N > 1 else 0.0
        except IllConditionedError as exc:
            if exc.step is None:
                raise IllConditionedError(str(exc), step=i) from exc
            raise
        _check(y, "Y", i)
        _check(z, "Z", i)
        Y[:, i] = y
        Z[:, i] = z

    fits = reg.fits if reg is not None else None
    return BackwardSolution(grid, Y, Z, y0_se, iterations, fits)


@dataclass
class StochasticExponential:
    """``log Gamma_{0, t_i}`` per path; ``Gamma_{t_i, t_j}`` by ratio."""

    log: np.ndarray = field(repr=False)

    @property
    def values(self):
        return np.exp(self.log)

    def between(self, i, j):
        return np.exp(self.log[:, j] - self.log[:, i])


def stochastic_exponential(b, c, grid, batch) -> StochasticExponential:
    """Discrete Doleans form of ``E(int b du + int c dW)`` with left-point integrands.

    ``Gamma_{0,i+1} = Gamma_{0,i} exp(c_i . dW_i - |c_i|^2 dt_i / 2 + b_i dt_i)``.
    ``b`` broadcasts to ``(N, m+1)`` and ``c`` to ``(N, m+1, d)``.
    """
    N, m, d = batch.path_count, grid.m, batch.dimension
    b = _as_path_array(b, N, m + 1)
    c = _as_path_array(c, N, m + 1, (d,))
    dt = grid.steps
    dw = batch.increments
    cl = c[:, :m]
    step = np.einsum("pia,pia->pi", cl, dw) - 0.5 * np.einsum("pia,pia->pi", cl, cl) * dt \
        + b[:, :m] * dt
    L = np.zeros((N, m + 1))
    np.cumsum(step, axis=1, out=L[:, 1:])
    _check(L, "stochastic exponential", m)
    if np.any(L > 700.0):
        p, i = np.argwhere(L > 700.0)[0]
        raise NonFiniteStateError("stochastic exponential (overflow)", int(p), int(i))
    return StochasticExponential(L)


def cumulative_trapezoid(values, grid):
    """``I_j = int_0^{t_j} h ds`` along axis 1 by the trapezoid rule."""
    dt = grid.steps
    v = np.asarray(values, float)
    inc = 0.5 * (v[:, 1:] + v[:, :-1]) * dt[None, :]
    out = np.zeros_like(v)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def forward_integrals(log_weight, source, grid):
    """``int_{t_i}^T exp(L_s - L_i) h_s ds`` for every node ``i`` (trapezoid)."""
    L = np.asarray(log_weight, float)
    shift = L.max(axis=1, keepdims=True)
    I = cumulative_trapezoid(np.exp(L - shift) * source, grid)
    return (I[:, -1:] - I) * np.exp(shift - L)


def conditional_profile(batch, values, basis: HermiteBasis, ridge=None, regressor=None):
    """Regression-smoothed ``E_i[values[:, i]]`` at every node (plain mean at 0)."""
    reg = regressor or HermiteRegressor(batch, basis, ridge=ridge)
    out = np.empty_like(values)
    for i in range(values.shape[1]):
        if i == values.shape[1] - 1:
            out[:, i] = values[:, i]
        else:
            out[:, i] = reg.project(i, values[:, i])
    return out


@dataclass
class LinearClosedForm:
    values: np.ndarray = field(repr=False)      # regression-smoothed Y_t (N, m+1)
    pathwise: np.ndarray = field(repr=False)    # unsmoothed integrand values (N, m+1)
    y0_stderr: float = float("nan")

    @property
    def y0(self):
        return float(self.values[0, 0])


def solve_linear_closed_form(ensemble, A, B, C, xi, basis: HermiteBasis, eval_index=None,
                             ridge=None) -> LinearClosedForm:
    """``Y_t = E_t[xi Gamma_{t,T} + int_t^T A_s Gamma_{t,s} ds]`` with ``Gamma = E(int B du + C dW)``.

    Args:
        xi: a callable of ``S_T`` or a pathwise terminal array.
        eval_index: a single node to evaluate; all nodes when ``None``.
    """
    grid, batch = ensemble.grid, ensemble.batch
    N, m = batch.path_count, grid.m
    gamma = stochastic_exponential(B, C, grid, batch)
    A = _as_path_array(A, N, m + 1)
    term = TerminalSpec(xi) if callable(xi) else TerminalSpec(values=xi)
    xiT = term.evaluate(ensemble)
    L = gamma.log
    inner = xiT[:, None] * np.exp(L[:, -1:] - L) + forward_integrals(L, A, grid)
    _check(inner, "linear closed form", 0)
    se = float(np.std(inner[:, 0], ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    if eval_index is not None:
        out = np.full((N, m + 1), np.nan)
        reg = HermiteRegressor(batch, basis, ridge=ridge)
        out[:, eval_index] = reg.project(eval_index, inner[:, eval_index]) \
            if eval_index < m else inner[:, m]
        return LinearClosedForm(out, inner, se)
    return LinearClosedForm(conditional_profile(batch, inner, basis, ridge), inner, se)


@dataclass
class JumpSolution:
    """Solution of a first-jump BSDE assembled from its reduced continuous BSDE.

    ``U`` has one column per defaultable name; ``defaulter`` holds the column
    of the first defaulter (``-1`` when no default up to ``T``), and
    ``default_index`` the grid node the default time is snapped to.
    """

    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    default_index: np.ndarray = field(repr=False)
    defaulter: np.ndarray = field(repr=False)


def snap_default_times(tau, grid):
    """Index of the first node ``t_j >= tau`` (``-1`` if ``tau > T``)."""
    tau = np.asarray(tau, float)
    idx = np.searchsorted(grid.nodes, tau, side="left")
    return np.where(idx > grid.m, -1, idx)


def assemble_jump_solution(reduced_Y, reduced_Z, theta, tau, grid) -> JumpSolution:
    """Apply ``Y = cY 1{t<tau} + theta_tau 1{t>=tau}``, ``Z = cZ 1{t<=tau}``,
    ``U = (theta - cY) 1{t<=tau}``.

    Args:
        reduced_Y: ``(N, m+1)`` reduced solution.
        reduced_Z: ``(N, m+1, d)``.
        theta: ``(N, m+1, J)`` close-out processes, one column per name.
        tau: ``(N, J)`` default times (``inf`` for none).  Ties go to the lower
            column index.
    """
    Yr = np.asarray(reduced_Y, float)
    Zr = np.asarray(reduced_Z, float)
    theta = np.asarray(theta, float)
    tau = np.asarray(tau, float)
    if tau.ndim == 1:
        tau = tau[:, None]
    if theta.ndim == 2:
        theta = theta[:, :, None]
    N, m1 = Yr.shape
    J = tau.shape[1]
    if np.isnan(tau).any() or (tau < 0).any():
        raise InvalidArgumentError("default times must lie in [0, inf]")
    if theta.shape != (N, m1, J):
        raise InvalidArgumentError(f"theta must have shape {(N, m1, J)}, got {theta.shape}")

    first = np.argmin(tau, axis=1)
    tmin = tau[np.arange(N), first]
    node = snap_default_times(tmin, grid)
    hit = node >= 0
    defaulter = np.where(hit, first, -1)

    k = np.arange(m1)[None, :]
    jn = np.where(hit, node, m1)[:, None]
    after = k >= jn                                     # t_k >= tau (snapped)
    strictly_after = k > jn
    paths = np.arange(N)
    theta_tau = np.where(hit, theta[paths, np.minimum(node, m1 - 1), np.maximum(first, 0)], 0.0)

    Y = np.where(after, theta_tau[:, None], Yr)
    Z = np.where(strictly_after[:, :, None], 0.0, Zr)
    U = np.where(strictly_after[:, :, None], 0.0, theta - Yr[:, :, None])
    return JumpSolution(Y, Z, U, tmin, np.where(hit, node, -1), defaulter)
