"""Principal-factor reduction of the Brownian driver and its error diagnostics."""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bsde import cumulative_trapezoid
from .errors import ContractViolationError, InvalidArgumentError, NotPSDError
from .paths import BrownianBatch, PathEnsemble, _simulate

PSD_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray           # descending
    vectors: np.ndarray = field(repr=False)   # columns, first nonzero entry positive

    @property
    def projections(self):
        v = self.vectors
        return np.einsum("ik,jk->kij", v, v)

    def truncation(self, F):
        v = self.vectors[:, :F]
        return v @ v.T

    def reconstruct(self):
        return (self.vectors * self.eigenvalues) @ self.vectors.T


def _sign_fix(vecs):
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, k] = -col
    return vecs


def spectral_decompose(sigma2) -> SpectralDecomposition:
    """Eigen-split of a symmetric PSD matrix (symmetrized first)."""
    a = np.asarray(sigma2, float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError("expected a square matrix")
    a = 0.5 * (a + a.T)
    lam, vec = np.linalg.eigh(a)
    if lam[0] < -PSD_TOL:
        raise NotPSDError(f"matrix has eigenvalue {lam[0]:.3g} < 0")
    order = np.argsort(-lam, kind="stable")
    lam = np.maximum(lam[order], 0.0)
    vec = _sign_fix(vec[:, order].copy())
    return SpectralDecomposition(lam, vec)


def factor_count(eigenvalues, eps):
    """Smallest ``F`` with ``sum_{i > F} lambda_i^2 < eps^2``."""
    lam = np.asarray(eigenvalues, float)
    tail = np.concatenate([np.cumsum((lam**2)[::-1])[::-1], [0.0]])
    return int(np.argmax(tail < eps**2))


@dataclass(frozen=True)
class FactorProjection:
    F: int
    P: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    eps: Optional[float] = None
    dispersion: float = 0.0

    @classmethod
    def full(cls, n):
        return cls(n, np.eye(n), np.eye(n))

    @classmethod
    def from_loading(cls, U, eps=None):
        U = np.asarray(U, float)
        return cls(U.shape[1], U @ U.T, U, eps)

    @property
    def n(self):
        return self.P.shape[0]


def projection_samples(ensemble, F, stride=1, max_paths=256):
    """Rank-``F`` projections of ``sigma^T sigma`` at sampled (path, node) pairs."""
    model, grid = ensemble.model, ensemble.grid
    idx = np.arange(min(max_paths, ensemble.path_count))
    out = []
    for i in range(0, grid.m + 1, stride):
        sig = np.asarray(model.diffusion(grid.nodes[i], ensemble.states[idx, i]), float)
        for s in sig:
            out.append(spectral_decompose(s.T @ s).truncation(F))
    return np.array(out)


def average_projection(samples, F, eps=None) -> FactorProjection:
    """Mean of sampled projections, rounded to the nearest rank-``F`` projection."""
    S = np.asarray(samples, float)
    if S.ndim == 2:
        S = S[None]
    n = S.shape[1]
    if F >= n:
        raise InvalidArgumentError(f"F = {F} leaves nothing to reduce for n = {n}")
    if F < 0:
        raise InvalidArgumentError("F must be nonnegative")
    mean = S.sum(axis=0) / S.shape[0]
    dec = spectral_decompose(mean)
    U = dec.vectors[:, :F].copy()
    P = U @ U.T
    disp = float(np.mean(np.linalg.norm(S - P[None], axis=(1, 2))))
    return FactorProjection(F, P, U, eps, disp)


def discrepancy_delta(ensemble, P, grid=None):
    """``Delta(t) = (int_0^t E tr(sigma^T sigma - P sigma^T sigma P) du)^{1/2}``."""
    grid = grid or ensemble.grid
    model = ensemble.model
    P = np.asarray(P, float)
    integrand = np.empty(grid.m + 1)
    for i in range(grid.m + 1):
        sig = np.asarray(model.diffusion(grid.nodes[i], ensemble.states[:, i]), float)
        ss = np.einsum("pki,pkj->pij", sig, sig)
        full = np.trace(ss, axis1=1, axis2=2)
        kept = np.einsum("ij,pjk,ki->p", P, ss, P)
        integrand[i] = np.mean(full - kept)
    d2 = cumulative_trapezoid(integrand[None], grid)[0]
    return np.sqrt(np.maximum(d2, 0.0))


def reduce_batch(batch: BrownianBatch, projection: FactorProjection) -> BrownianBatch:
    """``dW~ = U^T dW`` taken from the first ``n`` components of the full batch."""
    n = projection.n
    if batch.dimension < n:
        raise InvalidArgumentError("batch dimension smaller than the projection size")
    inc = np.einsum("pia,af->pif", batch.increments[:, :, :n], projection.U)
    return BrownianBatch.from_increments(batch.grid, inc, seed=None, source_seed=batch.source_seed)


def simulate_reduced(model, projection: FactorProjection, reduced_batch: BrownianBatch) -> PathEnsemble:
    """Euler scheme with diffusion ``sigma(t, S) U`` driven by the ``F``-dim batch."""
    if reduced_batch.dimension != projection.F:
        raise InvalidArgumentError(
            f"reduced batch has {reduced_batch.dimension} components, projection keeps {projection.F}"
        )
    if projection.n != model.dimension:
        raise InvalidArgumentError("projection size does not match the model dimension")
    grid = reduced_batch.grid
    S = _simulate(model, grid, reduced_batch, loading=projection.U)
    return PathEnsemble(grid, reduced_batch, S, model, projection.U)


@dataclass
class ReductionDiagnostics:
    F: int
    beta: float
    delta: np.ndarray = field(repr=False)
    err_S: float = 0.0
    err_Y: float = 0.0
    err_Z: float = 0.0
    residual_Z: float = 0.0
    pythagoras_residual: float = 0.0

    @property
    def delta_T(self):
        return float(self.delta[-1])

    def row(self):
        return [self.F, self.delta_T, self.err_S, self.err_Y, self.err_Z, self.residual_Z]


def _check_coupled(full: PathEnsemble, red: PathEnsemble, projection):
    a, b = full.batch.source_seed, red.batch.source_seed
    if a is not None and b is not None:
        if a != b:
            raise ContractViolationError(
                f"runs are not coupled: source seeds {a} and {b} differ"
            )
        return
    expect = np.einsum("pia,af->pif", full.batch.increments[:, :, : projection.n], projection.U)
    if expect.shape != red.batch.increments.shape or not np.allclose(
        expect, red.batch.increments, rtol=0, atol=1e-12
    ):
        raise ContractViolationError("reduced batch is not U^T of the full batch")


def reduction_error_report(full: PathEnsemble, full_Y, full_Z, reduced: PathEnsemble,
                           red_Y, red_Z, projection: FactorProjection, beta=1.0) -> ReductionDiagnostics:
    """Empirical error norms between a full run and a coupled reduced run.

    ``red_Z`` is the coefficient on ``dW~`` (``F`` components); it is mapped to
    the full space as ``U red_Z``, the minimum-variance representative.
    """
    _check_coupled(full, reduced, projection)
    grid = full.grid
    t = grid.nodes
    w = np.exp(beta * t)
    n = projection.n
    dS = reduced.states - full.states
    err_S = float(np.sqrt(np.max(np.mean(np.sum(dS**2, axis=2), axis=0))))
    dY = np.asarray(red_Y) - np.asarray(full_Y)
    err_Y = float(np.sqrt(np.max(w * np.mean(dY**2, axis=0))))
    Zf = np.asarray(full_Z)[..., :n]
    Zr = np.einsum("af,pif->pia", projection.U, np.asarray(red_Z)[..., : projection.F])
    # Z at the terminal node is not produced by the scheme
    zmask = np.ones(grid.m + 1)
    zmask[-1] = 0.0
    ez = w * np.mean(np.sum((Zr - Zf) ** 2, axis=2), axis=0) * zmask
    err_Z = float(np.sqrt(cumulative_trapezoid(ez[None], grid)[0, -1]))
    Q = np.eye(n) - projection.P
    full_sq = np.mean(np.einsum("pia,pia->pi", Zf, Zf), axis=0)
    kept = np.mean(np.einsum("pia,ab,pib->pi", Zf, projection.P, Zf), axis=0)
    QZ = np.einsum("ab,pib->pia", Q, Zf)
    rest = np.mean(np.einsum("pia,pia->pi", QZ, QZ), axis=0)
    resid = float(cumulative_trapezoid((w * rest * zmask)[None], grid)[0, -1])
    pyth = float(np.max(np.abs(full_sq - kept - rest)))
    delta = discrepancy_delta(full, projection.P)
    return ReductionDiagnostics(projection.F, beta, delta, err_S, err_Y, err_Z, resid, pyth)


def lipschitz_constant_linear(A):
    """Operator-norm Lipschitz constant of ``s -> A s``."""
    return float(np.linalg.norm(np.asarray(A, float), 2))


def state_error_bound(delta, grid, L_mu, L_sigma, U):
    """``sqrt(2) (int_0^T Delta^2 du)^{1/2} exp(gamma T)``, ``gamma = (L_mu sqrt(T) + L_sigma |U|)^2``."""
    T = grid.T
    C = L_mu * np.sqrt(T) + L_sigma * np.linalg.norm(U)
    gamma = C**2
    d2 = cumulative_trapezoid((np.asarray(delta) ** 2)[None], grid)[0, -1]
    return float(np.sqrt(2.0 * d2) * np.exp(gamma * T))


def state_error_bound_gronwall(delta, grid, L_mu, L_sigma, U):
    """Same constants with ``Delta(T)^2`` in place of its time integral."""
    T = grid.T
    C = L_mu * np.sqrt(T) + L_sigma * np.linalg.norm(U)
    return float(np.sqrt(2.0) * np.asarray(delta)[-1] * np.exp(C**2 * T))


def write_diagnostics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["F", "Delta_T", "err_S", "err_Y", "err_Z", "residual_Z"])
        for r in rows:
            w.writerow([r[0]] + [f"{float(x):.17g}" for x in r[1:]])
