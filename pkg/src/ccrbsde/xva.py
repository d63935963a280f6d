"""Riskless value, reduced drivers and valuation adjustments.

Notation follows the code: ``rho = r_B + r_C - q_C`` is the default-adjusted
discount rate, ``h1 = sigma^{-1}(mu + diag(gamma_S - q_S) S)`` the market price
of risk, and ``Gamma = E(-int h1 dW)``.  All time integrals use the trapezoid
rule; stochastic exponentials use left-point integrands.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .bsde import (
    DriverSpec,
    SolverConfig,
    TerminalSpec,
    _as_path_array,
    assemble_jump_solution,
    conditional_profile,
    forward_integrals,
    solve_backward,
    stochastic_exponential,
)
from .credit import CollateralSpec, RecoverySpec, close_out_values, neg, pos
from .errors import InvalidArgumentError, SingularDiffusionError
from .hermite import HermiteBasis, HermiteRegressor

COND_LIMIT = 1e12
TERMS = ("CVA", "DVA", "KVA", "MVA", "FVA")


@dataclass(frozen=True)
class RateDeck:
    """Rates as scalars, ``(m+1,)`` profiles or ``(N, m+1)`` path arrays.

    Unset spread rates collapse to the riskless case: ``r_B = r_F = r``,
    ``q_C = r`` and ``r_C = q_C``.
    """

    r: object = 0.0
    r_B: object = None
    r_C: object = None
    q_C: object = None
    q_S: object = 0.0
    gamma_S: object = 0.0
    r_X: object = 0.0
    r_TC: object = 0.0
    r_FC: object = 0.0
    r_K: object = 0.0
    r_F: object = None

    def resolved(self):
        q_C = self.r if self.q_C is None else self.q_C
        return replace(
            self,
            r_B=self.r if self.r_B is None else self.r_B,
            q_C=q_C,
            r_C=q_C if self.r_C is None else self.r_C,
            r_F=self.r if self.r_F is None else self.r_F,
        )

    def sample(self, N, m, n):
        d = self.resolved()
        out = {}
        for name in ("r", "r_B", "r_C", "q_C", "r_X", "r_TC", "r_FC", "r_K", "r_F"):
            out[name] = _as_path_array(getattr(d, name), N, m + 1)
        for name in ("q_S", "gamma_S"):
            v = np.asarray(getattr(d, name), float)
            if v.ndim == 0:
                v = np.full(n, float(v))
            out[name] = _as_path_array(v, N, m + 1, (n,))
        for k, v in out.items():
            if not np.isfinite(v).all():
                raise InvalidArgumentError(f"rate {k} has non-finite values")
        return SampledDeck(**out)

    def scaled_spreads(self, eps):
        """Scale every credit/funding spread and the capital rate by ``eps``."""
        d = self.resolved()
        r = np.asarray(d.r, float)
        qc = np.asarray(d.q_C, float)
        return replace(
            d,
            r_B=r + eps * (np.asarray(d.r_B, float) - r),
            r_C=qc + eps * (np.asarray(d.r_C, float) - qc),
            r_F=r + eps * (np.asarray(d.r_F, float) - r),
            r_K=eps * np.asarray(d.r_K, float),
        )


@dataclass(frozen=True)
class SampledDeck:
    r: np.ndarray
    r_B: np.ndarray
    r_C: np.ndarray
    q_C: np.ndarray
    r_X: np.ndarray
    r_TC: np.ndarray
    r_FC: np.ndarray
    r_K: np.ndarray
    r_F: np.ndarray
    q_S: np.ndarray
    gamma_S: np.ndarray

    @property
    def rho(self):
        return self.r_B + self.r_C - self.q_C

    def at(self, i):
        return {k: getattr(self, k)[:, i] for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class NettingSet:
    payoff: Callable
    name: str = "netting-set"

    def evaluate(self, ensemble):
        return TerminalSpec(self.payoff).evaluate(ensemble)


def _inverse_apply(sig, rhs, step, transpose=False, loading=None):
    """Solve ``sig x = rhs`` per path with condition monitoring."""
    if loading is not None:
        # reduced run: least-squares inverse of the n x F loading-weighted diffusion
        return np.einsum("pij,pj->pi", np.linalg.pinv(sig), rhs)
    if sig.shape[1] == 1:
        s = sig[:, 0, 0]
        bad = np.abs(s) == 0
        if bad.any():
            raise SingularDiffusionError(int(np.argmax(bad)), step, float("inf"))
        return rhs / s[:, None]
    cond = np.linalg.cond(sig)
    bad = ~(cond <= COND_LIMIT)
    if bad.any():
        p = int(np.argmax(bad))
        raise SingularDiffusionError(p, step, float(cond[p]))
    a = np.swapaxes(sig, 1, 2) if transpose else sig
    return np.linalg.solve(a, rhs[..., None])[..., 0]


def market_price_of_risk(ensemble, sdeck: SampledDeck):
    """``h1 = sigma^{-1}(mu + diag(gamma_S - q_S) S)`` at every node, ``(N, m+1, d)``."""
    model, grid = ensemble.model, ensemble.grid
    N, m = ensemble.path_count, grid.m
    d = ensemble.noise_dimension
    h1 = np.empty((N, m + 1, d))
    for i in range(m + 1):
        s = ensemble.states[:, i]
        t = grid.nodes[i]
        sig = np.asarray(model.diffusion(t, s), float)
        if ensemble.loading is not None:
            sig = sig @ ensemble.loading
        drift = np.asarray(model.drift(t, s), float) + (sdeck.gamma_S[:, i] - sdeck.q_S[:, i]) * s
        h1[:, i] = _inverse_apply(sig, drift, i, loading=ensemble.loading)
    return h1


def _pad_noise(h1, batch):
    """Extend ``h1`` with zeros over Brownian components not driving the asset."""
    d = batch.dimension
    if h1.shape[2] == d:
        return h1
    out = np.zeros(h1.shape[:2] + (d,))
    out[..., : h1.shape[2]] = h1
    return out


def log_discounted_gamma(ensemble, rate, h1):
    """``log(D_rate(0, t_i) Gamma_{0, t_i})`` per path (left-point discounting)."""
    return stochastic_exponential(-np.asarray(rate), -_pad_noise(h1, ensemble.batch),
                                  ensemble.grid, ensemble.batch).log


@dataclass
class RisklessValue:
    values: np.ndarray = field(repr=False)       # (N, m+1) conditional values
    pathwise: np.ndarray = field(repr=False)     # discounted weighted payoff seen from each node
    h1: np.ndarray = field(repr=False)
    Z: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def v0(self):
        return float(self.values[0, 0])

    @property
    def stderr0(self):
        p = self.pathwise[:, 0]
        return float(np.std(p, ddof=1) / np.sqrt(len(p)))


def riskless_value(ensemble, deck: RateDeck, netting: NettingSet, basis: HermiteBasis,
                   method="closed_form", config: Optional[SolverConfig] = None, ridge=None,
                   h1=None) -> RisklessValue:
    """``V_t = E_t[exp(-int r) Gamma_{t,T} payoff]``.

    ``method="backward"`` solves the linear BSDE with the generic scheme
    instead; its ``Z`` is then returned as well.
    """
    N, m = ensemble.path_count, ensemble.grid.m
    sd = deck.sample(N, m, ensemble.dimension)
    h1 = market_price_of_risk(ensemble, sd) if h1 is None else h1
    payoff = netting.evaluate(ensemble)
    L = log_discounted_gamma(ensemble, sd.r, h1)
    pathwise = payoff[:, None] * np.exp(L[:, -1:] - L)
    if method == "closed_form":
        vals = conditional_profile(ensemble.batch, pathwise, basis, ridge)
        return RisklessValue(vals, pathwise, h1)
    if method != "backward":
        raise InvalidArgumentError(f"unknown method {method!r}")
    d = ensemble.batch.dimension
    drv = DriverSpec.linear(0.0, -sd.r, -_pad_noise(h1, ensemble.batch), N, m, d, "riskless")
    sol = solve_backward(ensemble, drv, TerminalSpec(values=payoff), basis, config)
    return RisklessValue(sol.Y, pathwise, h1, sol.Z)


def driver_fundamental(s_h1, v, z, uB, uC, rates, X, I_TC, I_FC, K):
    """Driver of the default-aware replication BSDE, term by term.

    Args:
        s_h1: ``h1`` at the node, shape ``(N, d)``.
        v, uB, uC: value and jump sizes, ``(N,)``.
        z: ``(N, d)``.
        rates: mapping of rate arrays at the node (see ``SampledDeck.at``).
    """
    r = rates
    return (
        -np.einsum("pa,pa->p", z, s_h1)
        + (r["r_B"] - r["r"]) * uB
        + (r["r_C"] - r["q_C"]) * uC
        - (r["r_TC"] + r["r"]) * I_TC
        + r["r_FC"] * I_FC
        + (r["r_X"] + r["r"]) * X
        + r["r_K"] * K
        - r["r"] * v
        - (r["r_F"] - r["r"]) * neg(v - X + I_TC + uB)
    )


def g_source(M, rates, X, I_TC, I_FC, K, rec: RecoverySpec):
    """The inhomogeneous part of the reduced driver with close-out value ``M``.

    With ``M = V`` this is the source term ``G`` of the linear reduced BSDE.
    """
    r = rates
    rho = r["r_B"] + r["r_C"] - r["q_C"]
    xb = M - X + I_TC
    xc = M - X - I_FC
    return (
        r["r_K"] * K
        - (r["r_TC"] + r["r_B"]) * I_TC
        + (r["r_FC"] + r["r_C"] - r["q_C"]) * I_FC
        + (r["r_X"] + rho) * X
        + (r["r_B"] - r["r"]) * (pos(xb) + rec.R_B * neg(xb))
        + (r["r_C"] - r["q_C"]) * (rec.R_C * pos(xc) + neg(xc))
        + (r["r_F"] - r["r"]) * neg(xb)
    )


def xva_integrands(V, rates, X, I_TC, I_FC, K, rec: RecoverySpec):
    """Integrands of the five adjustments plus the carry ``(rho - r) V``.

    They add up to ``g_source(V, ...)`` identically.
    """
    r = rates
    xb = V - X + I_TC
    xc = V - X - I_FC
    return {
        "CVA": -(1.0 - rec.R_C) * (r["r_C"] - r["q_C"]) * pos(xc),
        "DVA": -(1.0 - rec.R_B) * (r["r_B"] - r["r"]) * neg(xb),
        "KVA": r["r_K"] * K,
        "MVA": r["r_FC"] * I_FC - (r["r_TC"] + r["r"]) * I_TC + (r["r_X"] + r["r"]) * X,
        "FVA": (r["r_F"] - r["r"]) * neg(xb),
        "carry": (r["r_B"] + r["r_C"] - r["q_C"] - r["r"]) * V,
    }


def reduced_driver(convention, ensemble, deck: RateDeck, coll: CollateralSpec,
                   rec: RecoverySpec, V=None, h1=None) -> DriverSpec:
    """Reduced driver ``g(t, S, y, z, theta_B - y, theta_C - y)``.

    ``convention="MV"`` needs the riskless profile ``V`` (close-out at the
    riskless value) and yields a linear driver ``G - rho y - h1 . z``;
    ``convention="MVhat"`` closes out at the solution itself and is nonlinear.
    """
    N, m = ensemble.path_count, ensemble.grid.m
    sd = deck.sample(N, m, ensemble.dimension)
    h1 = market_price_of_risk(ensemble, sd) if h1 is None else h1
    h1 = _pad_noise(h1, ensemble.batch)
    X, I_TC, I_FC, K = coll.on((N, m + 1))
    d = ensemble.batch.dimension
    if convention == "MV":
        if V is None:
            raise InvalidArgumentError("the M=V driver needs the riskless value profile")
        V = np.asarray(V, float)
        G = g_source(V, sd.__dict__, X, I_TC, I_FC, K, rec)
        return DriverSpec.linear(G, -sd.rho, -h1, N, m, d, "reduced-MV")
    if convention != "MVhat":
        raise InvalidArgumentError(f"unknown convention {convention!r}")

    def f(i, t, s, y, z):
        rates = sd.at(i)
        rho = rates["r_B"] + rates["r_C"] - rates["q_C"]
        return (
            -np.einsum("pa,pa->p", z, h1[:, i])
            - rho * y
            + g_source(y, rates, X[:, i], I_TC[:, i], I_FC[:, i], K[:, i], rec)
        )

    return DriverSpec(f, False, name="reduced-MVhat")


@dataclass
class XvaReport:
    """Expected time profiles and per-path conditional values of an adjustment run.

    ``terms`` and ``stderr`` hold expected profiles over the grid; ``term_sum``
    is ``discount_term + carry_term + sum of the five adjustments`` and
    reconciles to ``A``.
    """

    convention: str
    t: np.ndarray
    V: np.ndarray = field(repr=False)
    Vhat: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    terms: dict = field(default_factory=dict, repr=False)
    stderr: dict = field(default_factory=dict, repr=False)
    effective_rate: Optional[np.ndarray] = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def term_sum(self):
        return sum(self.terms[k] for k in TERMS + ("discount_term", "carry_term"))

    @property
    def displayed_sum(self):
        """Discount term plus the five adjustments, without the carry column."""
        return sum(self.terms[k] for k in TERMS + ("discount_term",))

    def expected(self):
        out = {"t": self.t, "V": self.V.mean(axis=0), "Vhat": self.Vhat.mean(axis=0),
               "A": self.A.mean(axis=0)}
        out.update(self.terms)
        out["term_sum"] = self.term_sum
        return out

    def columns(self):
        exp = self.expected()
        cols = ["t", "V", "Vhat", "A", *TERMS, "discount_term", "carry_term", "term_sum"]
        data = {c: exp[c] for c in cols}
        for k in ("V", "Vhat", "A", *TERMS, "discount_term", "carry_term"):
            data[f"stderr_{k}"] = self.stderr.get(k, np.full_like(self.t, np.nan))
        data.update(self.extra)
        return data

    def to_csv(self, path):
        write_columns_csv(path, self.columns())


def fmt(x):
    return f"{float(x):.17g}"


def write_columns_csv(path, data):
    names = list(data)
    n = len(next(iter(data.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for j in range(n):
            w.writerow([fmt(data[c][j]) for c in names])


def _se_profile(x):
    return np.std(x, axis=0, ddof=1) / np.sqrt(x.shape[0])


@dataclass
class _Setup:
    sd: SampledDeck
    h1: np.ndarray
    payoff: np.ndarray
    X: np.ndarray
    I_TC: np.ndarray
    I_FC: np.ndarray
    K: np.ndarray


def _setup(ensemble, deck, coll, netting, h1=None):
    N, m = ensemble.path_count, ensemble.grid.m
    sd = deck.sample(N, m, ensemble.dimension)
    h1 = market_price_of_risk(ensemble, sd) if h1 is None else h1
    X, I_TC, I_FC, K = coll.on((N, m + 1))
    return _Setup(sd, h1, netting.evaluate(ensemble), X, I_TC, I_FC, K)


def solve_reduced_MV(ensemble, deck, coll, rec, netting, V, basis, ridge=None, h1=None):
    """Closed form ``E_t[Gh_{t,T} payoff + int_t^T Gh_{t,s} G_s ds]`` with
    ``Gh = E(-int h1 dW - int rho du)``.

    Returns ``(conditional values, pathwise values)``, each ``(N, m+1)``.
    """
    st = _setup(ensemble, deck, coll, netting, h1)
    G = g_source(np.asarray(V, float), st.sd.__dict__, st.X, st.I_TC, st.I_FC, st.K, rec)
    L = log_discounted_gamma(ensemble, st.sd.rho, st.h1)
    pathwise = st.payoff[:, None] * np.exp(L[:, -1:] - L) + forward_integrals(L, G, ensemble.grid)
    return conditional_profile(ensemble.batch, pathwise, basis, ridge), pathwise


def _decompose(ensemble, st, V, rec, log_disc):
    """Expected profiles and stderr of the five terms, discount and carry."""
    grid = ensemble.grid
    integ = xva_integrands(V, st.sd.__dict__, st.X, st.I_TC, st.I_FC, st.K, rec)
    terms, se, path0 = {}, {}, {}
    for k in TERMS:
        if not np.any(integ[k]):
            terms[k] = np.zeros(grid.m + 1)
            se[k] = np.zeros(grid.m + 1)
            continue
        p = forward_integrals(log_disc, integ[k], grid)
        terms[k], se[k] = p.mean(axis=0), _se_profile(p)
    return terms, se, integ


def xva_decompose_MV(ensemble, deck, coll, rec, netting, V, basis, ridge=None, h1=None,
                     riskless=None) -> XvaReport:
    """Adjustment ``A = Vhat - V`` under close-out at the riskless value, split into
    discount difference, carry, CVA, DVA, KVA, MVA and FVA."""
    st = _setup(ensemble, deck, coll, netting, h1)
    grid = ensemble.grid
    V = np.asarray(V, float)
    Lr = log_discounted_gamma(ensemble, st.sd.r, st.h1)
    # factorization: D_rho Gamma = exp(-int (rho - r)) * (D_r Gamma)
    Lrho = Lr - _left_integral(st.sd.rho - st.sd.r, grid)
    terms, se, integ = _decompose(ensemble, st, V, rec, Lrho)
    disc = st.payoff[:, None] * (np.exp(Lrho[:, -1:] - Lrho) - np.exp(Lr[:, -1:] - Lr))
    carry = forward_integrals(Lrho, integ["carry"], grid)
    terms["discount_term"], se["discount_term"] = disc.mean(axis=0), _se_profile(disc)
    terms["carry_term"], se["carry_term"] = carry.mean(axis=0), _se_profile(carry)

    _, vhat_path = solve_reduced_MV(ensemble, deck, coll, rec, netting, V, basis, ridge, st.h1)
    if riskless is None:
        v_path = st.payoff[:, None] * np.exp(Lr[:, -1:] - Lr)
        v_cond = conditional_profile(ensemble.batch, v_path, basis, ridge)
    else:
        v_path, v_cond = riskless.pathwise, riskless.values
    # regress the pathwise difference: far less noise than differencing two estimates
    A = conditional_profile(ensemble.batch, vhat_path - v_path, basis, ridge)
    se["V"], se["Vhat"], se["A"] = _se_profile(v_path), _se_profile(vhat_path), \
        _se_profile(vhat_path - v_path)
    return XvaReport("MV", grid.nodes.copy(), v_cond, v_cond + A, A, terms, se)


def _left_integral(rate, grid):
    """``int_0^{t_i} rate du`` with left-point sums, per path."""
    out = np.zeros_like(rate)
    np.cumsum(rate[:, :-1] * grid.steps[None, :], axis=1, out=out[:, 1:])
    return out


def solve_reduced_MVhat(ensemble, deck, coll, rec, netting, basis, config=None, h1=None):
    """Nonlinear reduced BSDE with close-out at the adjusted value."""
    drv = reduced_driver("MVhat", ensemble, deck, coll, rec, h1=h1)
    return solve_backward(ensemble, drv, TerminalSpec(netting.payoff), basis, config)


def effective_rate(V, sd_or_rates, X, I_TC, I_FC, rec: RecoverySpec):
    """Rate discounting the first-order adjustment; indicators as displayed
    (``>= 0`` on the bank side, ``< 0`` on the counterparty side)."""
    r = sd_or_rates if isinstance(sd_or_rates, dict) else sd_or_rates.__dict__
    xb = V - X + I_TC
    xc = V - X - I_FC
    rho = r["r_B"] + r["r_C"] - r["q_C"]
    ib = (xb >= 0).astype(float)
    ic = (xc < 0).astype(float)
    return (
        rho
        - (r["r_B"] - r["r"]) * ((1.0 - rec.R_B) * ib + rec.R_B)
        - (r["r_C"] - r["q_C"]) * ((1.0 - rec.R_C) * ic + rec.R_C)
        - (r["r_F"] - r["r"]) * (1.0 - ib)
    )


def adjustment_source(V, rates, X, I_TC, I_FC, K, rec, literal_source=False):
    """Source of the linear adjustment BSDE.

    The default ``G - (rho - r) V`` is what substituting ``Vhat = V + A`` into
    the reduced equation gives; ``literal_source=True`` uses ``G + r V``.
    """
    G = g_source(V, rates, X, I_TC, I_FC, K, rec)
    if literal_source:
        return G + rates["r"] * V
    return G - (rates["r_B"] + rates["r_C"] - rates["q_C"] - rates["r"]) * V


def approx_adjustment_MVhat(ensemble, deck, coll, rec, netting, V, basis, method="closed_form",
                            literal_source=False, config=None, ridge=None, h1=None):
    """First-order adjustment under close-out at the adjusted value.

    ``method="closed_form"`` evaluates ``E_t[int D_eff Gamma h0 ds]`` pathwise
    and smooths it by regression; ``method="backward"`` solves the linear
    adjustment BSDE with the generic scheme, evaluating the ``V``-dependent
    coefficients of step ``i`` at ``V_{i+1}`` (the point where the explicit
    scheme evaluates its driver), so it shares the scheme of a nonlinear solve.

    Returns ``(A per path (N, m+1), XvaReport)``.
    """
    st = _setup(ensemble, deck, coll, netting, h1)
    grid = ensemble.grid
    N, m = ensemble.path_count, grid.m
    V = np.asarray(V, float)
    rates = st.sd.__dict__
    reff = effective_rate(V, rates, st.X, st.I_TC, st.I_FC, rec)
    h0 = adjustment_source(V, rates, st.X, st.I_TC, st.I_FC, st.K, rec, literal_source)
    Lr = log_discounted_gamma(ensemble, st.sd.r, st.h1)
    Leff = Lr - _left_integral(reff - st.sd.r, grid)
    a_path = forward_integrals(Leff, h0, grid)

    if method == "closed_form":
        A = conditional_profile(ensemble.batch, a_path, basis, ridge)
    elif method == "backward":
        d = ensemble.batch.dimension
        h1p = _pad_noise(st.h1, ensemble.batch)

        def f(i, t, s, y, z):
            rt = st.sd.at(i)
            vn = V[:, i + 1]
            args = (st.X[:, i], st.I_TC[:, i], st.I_FC[:, i])
            src = adjustment_source(vn, rt, *args, st.K[:, i], rec, literal_source)
            return src - effective_rate(vn, rt, *args, rec) * y - np.einsum("pa,pa->p", z, h1p[:, i])

        sol = solve_backward(ensemble, DriverSpec(f, False, name="adjustment"),
                             TerminalSpec(values=np.zeros(N)), basis, config)
        A = sol.Y
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    terms, se, integ = _decompose(ensemble, st, V, rec, Leff)
    disc = forward_integrals(Leff, rates["r"] * V, grid)
    terms["discount_term"], se["discount_term"] = disc.mean(axis=0), _se_profile(disc)
    # whatever of h0 is not covered by the five terms and the discount term
    rest = h0 - sum(integ[k] for k in TERMS) - rates["r"] * V
    carry = forward_integrals(Leff, rest, grid)
    terms["carry_term"], se["carry_term"] = carry.mean(axis=0), _se_profile(carry)
    se["A"] = _se_profile(a_path)
    rep = XvaReport("MVhat-approx", grid.nodes.copy(), V, V + A, A, terms, se, reff)
    return A, rep


def hedge_ratios(Z, sigma):
    """``delta = sigma^{-T} Z`` per path, i.e. ``sigma^T delta = Z``."""
    Z = np.asarray(Z, float)
    sig = np.asarray(sigma, float)
    single = Z.ndim == 1
    if single:
        Z, sig = Z[None], sig[None]
    out = _inverse_apply(sig, Z, step=-1, transpose=True)
    return out[0] if single else out


@dataclass
class FullValue:
    Vhat: np.ndarray = field(repr=False)
    Zhat: np.ndarray = field(repr=False)
    U_B: np.ndarray = field(repr=False)
    U_C: np.ndarray = field(repr=False)
    default_index: np.ndarray = field(repr=False)
    first_defaulter: np.ndarray = field(repr=False)   # "C", "B" or ""


def assemble_full_value(reduced_Y, reduced_Z, theta_B, theta_C, defaults, grid) -> FullValue:
    """Default-aware value from the reduced solution (counterparty wins ties)."""
    theta = np.stack([theta_C, theta_B], axis=2)
    js = assemble_jump_solution(reduced_Y, reduced_Z, theta, defaults.matrix(), grid)
    who = np.array(["C", "B"])
    first = np.where(js.defaulter >= 0, who[np.maximum(js.defaulter, 0)], "")
    return FullValue(js.Y, js.Z, js.U[..., 1], js.U[..., 0], js.default_index, first)


def close_out_for(convention, V, Vhat_reduced, coll, rec):
    """``(theta_B, theta_C)`` with ``M = V`` or ``M`` equal to the reduced adjusted value."""
    M = V if convention == "MV" else Vhat_reduced
    return close_out_values(M, coll, rec)
