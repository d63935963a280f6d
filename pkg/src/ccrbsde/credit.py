"""Default intensities, default times, recovery, collateral and close-out values."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .bsde import cumulative_trapezoid, snap_default_times
from .errors import ContractViolationError, InvalidArgumentError, InvalidModelError


def pos(x):
    return np.maximum(x, 0.0)


def neg(x):
    # finance convention: x^- = min(x, 0)
    return np.minimum(x, 0.0)


@dataclass(frozen=True)
class IntensityModel:
    """Default intensity on the grid.

    ``kind="curve"`` interpolates ``points`` (``[[t, value], ...]``) linearly;
    ``kind="cir"`` runs a square-root diffusion
    ``d lam = kappa (mean - lam) dt + vol sqrt(lam) dB`` by full-truncation
    Euler, with ``dB = loading . dW`` taken from the shared Brownian batch.
    """

    kind: str = "curve"
    points: Optional[tuple] = None
    initial: float = 0.0
    kappa: float = 0.0
    mean: float = 0.0
    vol: float = 0.0
    loading: Optional[tuple] = None

    @classmethod
    def constant(cls, value):
        return cls("curve", ((0.0, float(value)),))

    @classmethod
    def curve(cls, points):
        pts = tuple((float(t), float(v)) for t, v in points)
        return cls("curve", pts)

    @classmethod
    def cir(cls, initial, kappa, mean, vol, loading):
        return cls("cir", None, float(initial), float(kappa), float(mean), float(vol),
                   tuple(float(x) for x in loading))

    def paths(self, grid, batch):
        N, m = batch.path_count, grid.m
        if self.kind == "curve":
            pts = np.asarray(self.points, float)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
                raise InvalidModelError("intensity curve needs [[t, value], ...] points")
            prof = np.interp(grid.nodes, pts[:, 0], pts[:, 1])
            if (prof < 0).any():
                raise InvalidModelError("negative default intensity")
            return np.broadcast_to(prof, (N, m + 1)).copy()
        if self.kind != "cir":
            raise InvalidModelError(f"unknown intensity kind {self.kind!r}")
        if self.initial < 0 or self.mean < 0 or self.kappa < 0 or self.vol < 0:
            raise InvalidModelError("square-root intensity parameters must be nonnegative")
        u = np.zeros(batch.dimension)
        load = np.asarray(self.loading, float)
        if load.size > batch.dimension:
            raise InvalidModelError("intensity loading longer than the Brownian dimension")
        u[: load.size] = load
        norm = np.linalg.norm(u)
        if norm == 0:
            raise InvalidModelError("intensity loading must be nonzero")
        u /= norm
        db = batch.increments @ u
        lam = np.empty((N, m + 1))
        lam[:, 0] = self.initial
        dt = grid.steps
        x = np.full(N, self.initial)
        for i in range(m):
            xp = np.maximum(x, 0.0)
            x = x + self.kappa * (self.mean - xp) * dt[i] + self.vol * np.sqrt(xp) * db[:, i]
            lam[:, i + 1] = np.maximum(x, 0.0)
        return lam


@dataclass(frozen=True)
class DefaultTimes:
    """Default times of bank (B) and counterparty (C); ``inf`` means no default by ``T``."""

    tau_B: np.ndarray = field(repr=False)
    tau_C: np.ndarray = field(repr=False)
    intensity_B: Optional[np.ndarray] = field(default=None, repr=False)
    intensity_C: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def tau(self):
        return np.minimum(self.tau_B, self.tau_C)

    @property
    def defaulted(self):
        return np.isfinite(self.tau)

    @property
    def counterparty_first(self):
        # ties resolved in favour of the counterparty
        return self.defaulted & (self.tau_C <= self.tau_B)

    @property
    def bank_first(self):
        return self.defaulted & (self.tau_B < self.tau_C)

    def matrix(self):
        """Columns ``(C, B)`` so that an argmin tie picks the counterparty."""
        return np.stack([self.tau_C, self.tau_B], axis=1)


def _hit_times(H, E, grid):
    """Interpolated first time the cumulative hazard reaches ``E``."""
    N, m1 = H.shape
    reached = H >= E[:, None]
    hit = reached.any(axis=1)
    j = np.where(hit, np.argmax(reached, axis=1), m1 - 1)
    j = np.maximum(j, 1)
    rows = np.arange(N)
    h0, h1 = H[rows, j - 1], H[rows, j]
    t = grid.nodes
    frac = np.where(h1 > h0, (E - h0) / np.where(h1 > h0, h1 - h0, 1.0), 1.0)
    tau = t[j - 1] + np.clip(frac, 0.0, 1.0) * (t[j] - t[j - 1])
    # a zero threshold cannot occur for Exp(1), but keep tau in (t_{j-1}, t_j]
    tau = np.maximum(tau, np.nextafter(t[j - 1], np.inf))
    return np.where(hit, tau, np.inf)


def simulate_default_times(intensity_B: IntensityModel, intensity_C: IntensityModel,
                           grid, batch, seed, workers=None) -> DefaultTimes:
    """Default times from the cumulative hazard against independent Exp(1) thresholds.

    The thresholds come from their own substream of ``seed``, so intensities
    (driven by the Brownian batch) and thresholds never share draws.
    """
    lamB = intensity_B.paths(grid, batch)
    lamC = intensity_C.paths(grid, batch)
    for lam in (lamB, lamC):
        if (lam < 0).any() or not np.isfinite(lam).all():
            raise InvalidModelError("default intensity must be finite and nonnegative")
    E = _rng.block_draws(seed, _rng.STREAM_DEFAULT_THRESHOLDS, batch.path_count, (2,),
                         kind="exponential", workers=workers)
    HB = cumulative_trapezoid(lamB, grid)
    HC = cumulative_trapezoid(lamC, grid)
    return DefaultTimes(_hit_times(HB, E[:, 0], grid), _hit_times(HC, E[:, 1], grid), lamB, lamC)


@dataclass(frozen=True)
class RecoverySpec:
    R_B: float = 0.4
    R_C: float = 0.4

    def __post_init__(self):
        for name, v in (("R_B", self.R_B), ("R_C", self.R_C)):
            if not (0.0 <= v <= 1.0):
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class CollateralSpec:
    """Variation margin ``X`` (positive: held by the bank), initial margins
    ``I_TC`` (posted) and ``I_FC`` (received), regulatory capital ``K``."""

    X: np.ndarray = 0.0
    I_TC: np.ndarray = 0.0
    I_FC: np.ndarray = 0.0
    K: np.ndarray = 0.0

    def __post_init__(self):
        for name in ("I_TC", "I_FC", "K"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise InvalidArgumentError(f"{name} must be nonnegative")

    def on(self, shape):
        """The four processes broadcast to ``shape``."""
        return tuple(np.broadcast_to(np.asarray(v, float), shape)
                     for v in (self.X, self.I_TC, self.I_FC, self.K))

    @classmethod
    def from_rules(cls, V, vm_fraction=0.0, im_posted=0.0, im_received=0.0,
                   capital_fraction=0.0):
        """Illustrative rules: ``X = vm_fraction V``, constant initial margins,
        ``K = capital_fraction |V|``."""
        V = np.asarray(V, float)
        return cls(vm_fraction * V, np.full(V.shape, float(im_posted)),
                   np.full(V.shape, float(im_received)), capital_fraction * np.abs(V))

    @classmethod
    def none(cls):
        return cls()


def close_out_values(M, coll: CollateralSpec, rec: RecoverySpec):
    """Values at default: ``(theta_B, theta_C)`` for bank and counterparty default."""
    M = np.asarray(M, float)
    X, I_TC, I_FC, _ = coll.on(M.shape)
    xc = M - X - I_FC
    xb = M - X + I_TC
    theta_C = X + I_FC + rec.R_C * pos(xc) + neg(xc)
    theta_B = X - I_TC + pos(xb) + rec.R_B * neg(xb)
    return theta_B, theta_C


def default_value(theta_B, theta_C, defaults: DefaultTimes, grid, paths=None):
    """``theta_tau`` at the snapped default node of the first defaulter.

    Ties are settled with the counterparty's value.  Asking for a path that
    did not default before ``T`` violates the contract of this function.
    """
    theta_B = np.asarray(theta_B, float)
    theta_C = np.asarray(theta_C, float)
    N = theta_B.shape[0]
    paths = np.arange(N) if paths is None else np.asarray(paths)
    if paths.dtype == bool:
        paths = np.nonzero(paths)[0]
    tau = defaults.tau[paths]
    if not np.isfinite(tau).all() or (tau > grid.T).any():
        bad = paths[~(np.isfinite(tau) & (tau <= grid.T))][0]
        raise ContractViolationError(f"path {bad} has no default before the horizon")
    node = snap_default_times(tau, grid)
    c_first = defaults.counterparty_first[paths]
    return np.where(c_first, theta_C[paths, node], theta_B[paths, node])
