"""Time grids, Brownian increments and forward Euler/Milstein simulation."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import _rng
from .errors import (
    InvalidArgumentError,
    NonFiniteStateError,
    UnsupportedModelError,
)


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    step_count: int
    nodes: np.ndarray = field(repr=False)

    @property
    def steps(self):
        return np.diff(self.nodes)

    @property
    def m(self):
        return self.step_count

    @property
    def T(self):
        return self.horizon

    def __len__(self):
        return self.step_count + 1


def build_time_grid(T: float, m: int) -> TimeGrid:
    """Regular grid ``0 = t_0 < ... < t_m = T``."""
    if not np.isfinite(T) or T <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {T}")
    if int(m) != m or m < 1:
        raise InvalidArgumentError(f"step count must be a positive integer, got {m}")
    m = int(m)
    nodes = np.arange(m + 1) * (float(T) / m)
    nodes[-1] = float(T)
    return TimeGrid(float(T), m, _frozen(nodes))


@dataclass(frozen=True)
class BrownianBatch:
    """Brownian increments on a grid, shape ``(N, m, d)``.

    ``source_seed`` identifies the full batch this one was derived from; a
    batch built by projecting another (factor reduction) keeps the parent's
    value so coupled runs can be recognised.
    """

    grid: TimeGrid
    increments: np.ndarray = field(repr=False)
    seed: Optional[int] = None
    source_seed: Optional[int] = None

    @classmethod
    def from_increments(cls, grid, increments, seed=None, source_seed=None):
        inc = np.asarray(increments, dtype=float)
        if inc.ndim == 2:
            inc = inc[:, :, None]
        if inc.ndim != 3 or inc.shape[1] != grid.m:
            raise InvalidArgumentError(
                f"increments must have shape (N, {grid.m}, d), got {inc.shape}"
            )
        if source_seed is None:
            source_seed = seed
        return cls(grid, _frozen(inc.copy()), seed, source_seed)

    @property
    def path_count(self):
        return self.increments.shape[0]

    @property
    def dimension(self):
        return self.increments.shape[2]

    @cached_property
    def cumulative(self):
        """``W_{t_i}`` with ``W_0 = 0``, shape ``(N, m+1, d)``."""
        n, m, d = self.increments.shape
        w = np.zeros((n, m + 1, d))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        return _frozen(w)

    @cached_property
    def standardized(self):
        """``w_i = W_{t_i} / sqrt(t_i)``; the ``i = 0`` slice is zero and unused."""
        w = np.zeros_like(self.cumulative)
        t = self.grid.nodes
        w[:, 1:] = self.cumulative[:, 1:] / np.sqrt(t[1:])[None, :, None]
        return _frozen(w)

    def chi(self, i):
        """Conditioning factor ``t_i / t_{i+1}``."""
        t = self.grid.nodes
        return t[i] / t[i + 1]

    def innovations(self, i):
        """Recover ``X_i`` from ``w_{i+1} = sqrt(chi) w_i + sqrt(1 - chi) X_i``."""
        chi = self.chi(i)
        w = self.standardized
        return (w[:, i + 1] - np.sqrt(chi) * w[:, i]) / np.sqrt(1.0 - chi)


def generate_brownian(grid: TimeGrid, n: int, N: int, seed: int, workers=None) -> BrownianBatch:
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {n}")
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"path count must be >= 1, got {N}")
    z = _rng.block_draws(seed, _rng.STREAM_BROWNIAN, int(N), (grid.m, int(n)), workers=workers)
    z *= np.sqrt(grid.steps)[None, :, None]
    return BrownianBatch(grid, _frozen(z), int(seed), int(seed))


@dataclass(frozen=True)
class AssetModel:
    """``dS = mu(t, S) dt + sigma(t, S) dW``.

    ``drift(t, s)`` maps ``(N, n) -> (N, n)`` and ``diffusion(t, s)`` maps
    ``(N, n) -> (N, n, n)``.  ``diffusion_derivative`` (diagonal models only)
    returns ``d sigma_ii / d s_i`` with shape ``(N, n)``.
    """

    dimension: int
    drift: Callable
    diffusion: Callable
    s0: np.ndarray
    diffusion_derivative: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        if s0.shape != (self.dimension,):
            raise InvalidArgumentError(f"s0 must have shape ({self.dimension},)")
        object.__setattr__(self, "s0", _frozen(s0))


def geometric_model(drift, vol, s0, correlation=None):
    """Correlated geometric Brownian motion, ``sigma(s) = diag(vol * s) L``."""
    drift = np.atleast_1d(np.asarray(drift, float))
    vol = np.atleast_1d(np.asarray(vol, float))
    n = vol.size
    drift = np.broadcast_to(drift, (n,)).copy()
    if correlation is None:
        chol = np.eye(n)
    else:
        chol = np.linalg.cholesky(np.asarray(correlation, float))
    diagonal = np.allclose(chol, np.eye(n))

    def mu(t, s):
        return drift * s

    def sigma(t, s):
        return (vol * s)[:, :, None] * chol[None]

    dsigma = (lambda t, s: np.broadcast_to(vol, s.shape).copy()) if diagonal else None
    return AssetModel(n, mu, sigma, np.broadcast_to(s0, (n,)), dsigma, "geometric")


def linear_model(A, b, sigma, s0):
    """``mu(s) = A s + b`` with constant diffusion matrix."""
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    b = np.broadcast_to(np.asarray(b, float), (n,)).copy()
    sig = np.atleast_2d(np.asarray(sigma, float))
    if sig.shape != (n, n):
        raise InvalidArgumentError(f"sigma must be {n}x{n}")

    def mu(t, s):
        return s @ A.T + b

    def diff(t, s):
        return np.broadcast_to(sig, (s.shape[0], n, n))

    dsigma = None
    if np.allclose(sig, np.diag(np.diag(sig))):
        dsigma = lambda t, s: np.zeros_like(s)
    return AssetModel(n, mu, diff, np.broadcast_to(s0, (n,)), dsigma, "linear")


def arithmetic_model(drift, sigma, s0):
    """Brownian motion with constant drift and diffusion matrix."""
    sig = np.atleast_2d(np.asarray(sigma, float))
    n = sig.shape[0]
    return linear_model(np.zeros((n, n)), drift, sig, s0)


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated states ``(N, m+1, n)`` together with the driving batch.

    ``loading`` is the ``n x F`` factor matrix when the batch is an
    ``F``-dimensional reduced driver (``sigma U dW~``); ``None`` otherwise.
    """

    grid: TimeGrid
    batch: BrownianBatch
    states: np.ndarray = field(repr=False)
    model: AssetModel = field(repr=False)
    loading: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def path_count(self):
        return self.states.shape[0]

    @property
    def dimension(self):
        return self.states.shape[2]

    def noise(self, i):
        """Increments of the driving Brownian motion acting on the asset at step ``i``."""
        return self.batch.increments[:, i, : self.noise_dimension]

    @property
    def noise_dimension(self):
        if self.loading is not None:
            return self.loading.shape[1]
        return self.model.dimension


def _check_finite(x, step, what="state"):
    bad = ~np.isfinite(x)
    if bad.any():
        path = np.argwhere(bad.reshape(x.shape[0], -1).any(axis=1))[0, 0]
        raise NonFiniteStateError(what, path, step)


def _simulate(model, grid, batch, loading=None, milstein_derivative=None):
    if batch.grid.m != grid.m or not np.array_equal(batch.grid.nodes, grid.nodes):
        raise InvalidArgumentError("batch was generated on a different grid")
    n = model.dimension
    k = n if loading is None else loading.shape[1]
    if batch.dimension < k:
        raise InvalidArgumentError(
            f"batch dimension {batch.dimension} is smaller than the required {k}"
        )
    N = batch.path_count
    S = np.empty((N, grid.m + 1, n))
    S[:, 0] = model.s0
    t = grid.nodes
    dt = grid.steps
    for i in range(grid.m):
        s = S[:, i]
        dw = batch.increments[:, i, :k]
        sig = np.asarray(model.diffusion(t[i], s))
        if loading is not None:
            sig = sig @ loading
        nxt = s + np.asarray(model.drift(t[i], s)) * dt[i] + np.einsum("pab,pb->pa", sig, dw)
        if milstein_derivative is not None:
            diag = np.diagonal(sig, axis1=1, axis2=2)
            off = sig - diag[:, :, None] * np.eye(n)[None]
            if np.any(off != 0.0):
                raise UnsupportedModelError(
                    "Milstein scheme supports diagonal-noise models only"
                )
            ds = np.asarray(milstein_derivative(t[i], s))
            nxt = nxt + 0.5 * diag * ds * (dw * dw - dt[i])
        _check_finite(nxt, i + 1)
        S[:, i + 1] = nxt
    return _frozen(S)


def simulate_euler(model: AssetModel, grid: TimeGrid, batch: BrownianBatch) -> PathEnsemble:
    """``S_{i+1} = S_i + mu(t_i, S_i) dt_i + sigma(t_i, S_i) dW_i``."""
    S = _simulate(model, grid, batch)
    return PathEnsemble(grid, batch, S, model)


def simulate_milstein(model, grid, batch, dsigma=None) -> PathEnsemble:
    """Euler step plus ``0.5 sigma_ii d(sigma_ii)/ds_i (dW_i^2 - dt)`` per component."""
    dsigma = dsigma if dsigma is not None else model.diffusion_derivative
    if dsigma is None:
        raise UnsupportedModelError("Milstein scheme needs the diffusion derivative")
    S = _simulate(model, grid, batch, milstein_derivative=dsigma)
    return PathEnsemble(grid, batch, S, model)
