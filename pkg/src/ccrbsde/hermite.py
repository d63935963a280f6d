"""Orthonormal (probabilists') Hermite basis and least-squares regression on it.

``He_k`` here is the probabilists' polynomial divided by ``sqrt(k!)`` so that
``E[He_j(w) He_k(w)] = delta_jk`` for standard normal ``w``.  Conditioning a
Gaussian argument acts diagonally on coefficients:

    E[He_k(sqrt(chi) w + sqrt(1 - chi) x) | w] = chi^(|k|/2) He_k(w)
"""

import csv
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
from scipy import linalg as sla

from .errors import IllConditionedError, InvalidArgumentError

COND_LIMIT = 1e12


def he_table(K, x):
    """All normalized Hermite values up to order ``K``; shape ``x.shape + (K+1,)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (K + 1,))
    out[..., 0] = 1.0
    if K >= 1:
        out[..., 1] = x
    for k in range(1, K):
        out[..., k + 1] = (x * out[..., k] - np.sqrt(k) * out[..., k - 1]) / np.sqrt(k + 1)
    return out


def he_eval(k, x):
    if k < 0:
        raise InvalidArgumentError("Hermite order must be nonnegative")
    return he_table(int(k), x)[..., int(k)]


def _graded_lex(n, K):
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out_deg.append(prefix + (remaining,))
            return
        for first in range(remaining, -1, -1):
            rec(prefix + (first,), remaining - first, slots - 1)

    for deg in range(K + 1):
        out_deg = []
        rec((), deg, n)
        out.extend(out_deg)
    return out


@dataclass(frozen=True)
class HermiteBasis:
    """All multi-indices of total order ``<= order`` in graded-lexicographic order."""

    dimension: int
    order: int
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1 or self.order < 0:
            raise InvalidArgumentError("basis needs dimension >= 1 and order >= 0")
        idx = np.array(_graded_lex(self.dimension, self.order), dtype=int)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self):
        return self.indices.shape[0]

    @cached_property
    def total_orders(self):
        return self.indices.sum(axis=1)

    @cached_property
    def _position(self):
        return {tuple(k): j for j, k in enumerate(self.indices.tolist())}

    def position(self, k):
        return self._position[tuple(int(v) for v in k)]

    @cached_property
    def lowered(self):
        """``lowered[a, j]`` is the position of ``k_j - e_a`` (or -1 when ``k_j[a] == 0``)."""
        n, B = self.dimension, self.size
        low = -np.ones((n, B), dtype=int)
        for j, k in enumerate(self.indices.tolist()):
            for a in range(n):
                if k[a] > 0:
                    kk = list(k)
                    kk[a] -= 1
                    low[a, j] = self._position[tuple(kk)]
        return low

    def label(self, j):
        return ";".join(str(v) for v in self.indices[j])


def basis_eval(basis: HermiteBasis, x) -> np.ndarray:
    """Design row(s) ``He_k(x)``; ``x`` of shape ``(n,)`` or ``(N, n)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != basis.dimension:
        raise InvalidArgumentError(
            f"expected points of dimension {basis.dimension}, got shape {x.shape}"
        )
    table = he_table(basis.order, x)  # (N, n, K+1)
    D = np.ones((x.shape[0], basis.size))
    for a in range(basis.dimension):
        D *= table[:, a, basis.indices[:, a]]
    return D[0] if single else D


def default_ridge(gram):
    B = gram.shape[0]
    return 1e-8 * np.trace(gram) / B


def gram_matrix(design):
    # einsum without optimize keeps a fixed summation order (no BLAS threading)
    return np.einsum("ni,nj->ij", design, design)


def _solve_normal(gram, rhs, ridge, penalize_intercept):
    B = gram.shape[0]
    A = gram.copy()
    if ridge > 0:
        pen = np.full(B, ridge)
        if not penalize_intercept:
            pen[0] = 0.0
        A[np.diag_indices(B)] += pen
    if ridge == 0:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise IllConditionedError(
                f"design is rank deficient (condition {cond:.3g}); use a positive ridge"
            )
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllConditionedError(f"normal equations not positive definite: {exc}") from exc
    return factor, sla.cho_solve(factor, rhs)


def ols_fit(design, targets, ridge=0.0, penalize_intercept=False):
    """Least squares ``min |D g - y|^2 + ridge |g|^2`` via a Cholesky solve.

    ``ridge=None`` selects ``1e-8 * trace(D^T D) / B``.  The first column is
    taken as the intercept and left unpenalised unless ``penalize_intercept``.
    """
    D = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if D.ndim != 2 or y.shape[0] != D.shape[0]:
        raise InvalidArgumentError("design and targets disagree in row count")
    gram = gram_matrix(D)
    if ridge is None:
        ridge = default_ridge(gram)
    if ridge < 0:
        raise InvalidArgumentError("ridge must be nonnegative")
    rhs = np.einsum("ni,n...->i...", D, y)
    _, coeffs = _solve_normal(gram, rhs, ridge, penalize_intercept)
    return coeffs


def ols_standard_errors(design, targets, coeffs):
    """Heteroskedasticity-robust (HC0) standard errors of OLS coefficients."""
    D = np.asarray(design, float)
    resid = np.asarray(targets, float) - D @ coeffs
    bread = np.linalg.inv(gram_matrix(D))
    meat = np.einsum("ni,n,nj->ij", D, resid**2, D)
    return np.sqrt(np.diag(bread @ meat @ bread))


def condition_coeffs(coeffs, basis: HermiteBasis, chi):
    """Scale the coefficient of multi-index ``k`` by ``chi^(|k|/2)``."""
    if not (0.0 < chi <= 1.0):
        raise InvalidArgumentError(f"conditioning factor must lie in (0, 1], got {chi}")
    scale = chi ** (basis.total_orders / 2.0)
    c = np.asarray(coeffs, float)
    return c * scale.reshape((-1,) + (1,) * (c.ndim - 1))


def derivative_coeffs(coeffs, basis: HermiteBasis):
    """Coefficients of ``d/dw_a`` of the expansion, shape ``(n, B)``.

    Uses ``d He_k / d w_a = sqrt(k_a) He_{k - e_a}``; the result stays inside
    the same basis (order drops by one).
    """
    c = np.asarray(coeffs, float)
    out = np.zeros((basis.dimension, basis.size))
    for a in range(basis.dimension):
        src = np.nonzero(basis.lowered[a] >= 0)[0]
        np.add.at(out[a], basis.lowered[a, src], c[src] * np.sqrt(basis.indices[src, a]))
    return out


def z_from_coeffs(coeffs, basis: HermiteBasis, chi, t, w):
    """Hedge component ``Z_i`` from the expansion of ``Y_{i+1}`` in ``w_{i+1}``.

    ``Z_i[a] = t_i^(-1/2) sum_k g_k chi^(|k|/2) dHe_k(w_i)/dw_a``.
    """
    if t <= 0:
        raise InvalidArgumentError("derivative formula is undefined at t = 0")
    cond = condition_coeffs(coeffs, basis, chi)
    dcoef = derivative_coeffs(cond, basis)
    w = np.asarray(w, float)
    single = w.ndim == 1
    D = basis_eval(basis, w[None] if single else w)
    z = D @ dcoef.T / np.sqrt(t)
    return z[0] if single else z


def addition_formula_check(k, chi, w, x):
    """``|He_k(sqrt(chi) w + sqrt(1-chi) x) - sum_j sqrt(C(k,j)) ...|`` at one point."""
    k = np.atleast_1d(np.asarray(k, dtype=int))
    w = np.atleast_1d(np.asarray(w, float))
    x = np.atleast_1d(np.asarray(x, float))
    if not (0.0 <= chi <= 1.0):
        raise InvalidArgumentError("chi must lie in [0, 1]")
    K = int(k.max()) if k.size else 0
    arg = np.sqrt(chi) * w + np.sqrt(1.0 - chi) * x
    lhs = np.prod([he_eval(ka, arg[a]) for a, ka in enumerate(k)])
    hw = he_table(K, w)
    hx = he_table(K, x)
    rhs = 1.0
    for a, ka in enumerate(k):
        s = 0.0
        for j in range(ka + 1):
            s += (
                np.sqrt(comb(int(ka), j))
                * chi ** (j / 2.0)
                * (1.0 - chi) ** ((ka - j) / 2.0)
                * hw[a, j]
                * hx[a, ka - j]
            )
        rhs *= s
    return float(abs(lhs - rhs))


@dataclass
class RegressionFit:
    step: int
    coefficients: np.ndarray
    chi: float
    residual_norm: float
    condition: float


class HermiteRegressor:
    """Conditional expectations on the standardized Brownian states of a batch.

    The Cholesky factor of each step's normal equations is cached, so repeated
    projections at the same step only cost a design evaluation and a solve.
    """

    def __init__(self, batch, basis: HermiteBasis, ridge=None, keep_fits=False):
        if basis.dimension != batch.dimension:
            raise InvalidArgumentError(
                f"basis dimension {basis.dimension} != Brownian dimension {batch.dimension}"
            )
        self.batch = batch
        self.basis = basis
        self.ridge = ridge
        self._factors = {}
        self.fits = [] if keep_fits else None

    def design(self, i):
        if i == 0:
            raise InvalidArgumentError("no regression state at t = 0")
        return basis_eval(self.basis, self.batch.standardized[:, i])

    def _factor(self, i, D):
        if i not in self._factors:
            gram = gram_matrix(D)
            ridge = default_ridge(gram) if self.ridge is None else self.ridge
            B = gram.shape[0]
            factor, _ = _solve_normal(gram, np.zeros(B), ridge, False)
            cond = float(np.linalg.cond(gram)) if B > 1 else 1.0
            self._factors[i] = (factor, cond)
        return self._factors[i]

    def fit(self, i, target, D=None):
        D = self.design(i) if D is None else D
        try:
            factor, cond = self._factor(i, D)
        except IllConditionedError as exc:
            raise IllConditionedError(str(exc), step=i) from exc
        rhs = np.einsum("ni,n...->i...", D, target)
        coeffs = sla.cho_solve(factor, rhs)
        if self.fits is not None:
            resid = target - D @ coeffs
            self.fits.append(
                RegressionFit(i, coeffs, self.batch.chi(i - 1) if i > 0 else 1.0,
                              float(np.sqrt(np.mean(resid**2))), cond)
            )
        return coeffs

    def project(self, i, target):
        """``E_i[target]`` by direct regression on ``He(w_i)`` (plain mean at ``i = 0``)."""
        target = np.asarray(target, float)
        if i == 0:
            return np.broadcast_to(target.mean(axis=0), target.shape).copy()
        D = self.design(i)
        return D @ self.fit(i, target, D)

    def condition_next(self, i, target):
        """``E_i[target]`` for a target living at ``t_{i+1}``: fit on ``w_{i+1}``, scale by chi.

        Returns ``(conditional values, coefficients at i+1)``.
        """
        target = np.asarray(target, float)
        D1 = self.design(i + 1)
        coeffs = self.fit(i + 1, target, D1)
        if i == 0:
            # w_0 is degenerate; the conditional expectation is the mean
            return np.broadcast_to(target.mean(axis=0), target.shape).copy(), coeffs
        cond = condition_coeffs(coeffs, self.basis, self.batch.chi(i))
        return self.design(i) @ cond, coeffs


def write_coefficients_csv(path, basis: HermiteBasis, fits):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "multi_index", "coefficient"])
        for fit in fits:
            coeffs = np.atleast_2d(np.asarray(fit.coefficients).T).T
            for j in range(basis.size):
                for c in np.atleast_1d(coeffs[j]):
                    wr.writerow([fit.step, basis.label(j), f"{float(c):.17g}"])
