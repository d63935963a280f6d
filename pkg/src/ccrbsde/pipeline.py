"""Scenario orchestration: paths, riskless value, adjustment, default assembly, outputs."""

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import plotting
from .bsde import (
    DriverSpec,
    SolverConfig,
    TerminalSpec,
    assemble_jump_solution,
    snap_default_times,
    solve_backward,
    zero_driver,
)
from .config import ScenarioConfig
from .credit import CollateralSpec, IntensityModel, simulate_default_times
from .errors import ConfigError, DegenerateParametersError, InvalidArgumentError
from .factors import (
    FactorProjection,
    average_projection,
    factor_count,
    lipschitz_constant_linear,
    projection_samples,
    reduce_batch,
    reduction_error_report,
    simulate_reduced,
    spectral_decompose,
    state_error_bound,
    write_diagnostics_csv,
)
from .hermite import HermiteBasis
from .paths import (
    arithmetic_model,
    build_time_grid,
    generate_brownian,
    simulate_euler,
    simulate_milstein,
)
from .xva import (
    NettingSet,
    RateDeck,
    approx_adjustment_MVhat,
    assemble_full_value,
    close_out_for,
    reduced_driver,
    riskless_value,
    solve_reduced_MVhat,
    write_columns_csv,
    xva_decompose_MV,
)

MANIFEST_KIND = "ccrbsde-run"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_directory(cfg: ScenarioConfig, root):
    return Path(root) / f"{cfg.digest()[:12]}-seed{cfg.seed}"


def versions():
    import scipy

    return {"ccrbsde": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def build_netting(cfg: ScenarioConfig, n):
    net = cfg.doc["netting"]
    kind = net["kind"]
    K = float(net.get("strike", 0.0))
    notional = float(net.get("notional", 1.0))
    if "weights" in net:
        w = np.asarray(net["weights"], float)
    elif kind.startswith("basket"):
        w = np.full(n, 1.0 / n)
    else:
        w = np.zeros(n)
        w[net.get("asset", 0)] = 1.0

    def payoff(s):
        x = s @ w
        if kind == "forward":
            return notional * (x - K)
        if kind in ("call", "basket_call"):
            return notional * np.maximum(x - K, 0.0)
        return notional * np.maximum(K - x, 0.0)

    return NettingSet(payoff, kind)


def _batch_dimension(cfg, n):
    dim = n
    for side in ("B", "C"):
        spec = cfg.doc["credit"][f"intensity_{side}"]
        if "cir" in spec:
            dim = max(dim, len(spec["cir"]["loading"]))
    return dim


def choose_projection(cfg, full_ensemble) -> Optional[FactorProjection]:
    fac = cfg.doc["factor"]
    if not fac.get("enabled"):
        return None
    n = full_ensemble.dimension
    samples_paths = int(fac.get("sample_paths", 256))
    if "F" in fac:
        F = int(fac["F"])
        eps = None
    elif "eps" in fac:
        eps = float(fac["eps"])
        model, grid = full_ensemble.model, full_ensemble.grid
        acc = np.zeros((n, n))
        count = 0
        idx = np.arange(min(samples_paths, full_ensemble.path_count))
        for i in range(grid.m + 1):
            s = np.asarray(model.diffusion(grid.nodes[i], full_ensemble.states[idx, i]), float)
            acc += np.einsum("pki,pkj->ij", s, s)
            count += len(idx)
        F = max(1, factor_count(spectral_decompose(acc / count).eigenvalues, eps))
    else:
        raise ConfigError("factor: enabled reduction needs F or eps")
    if F >= n:
        return FactorProjection.full(n)
    samples = projection_samples(full_ensemble, F, max_paths=samples_paths)
    proj = average_projection(samples, F, eps)
    return proj


@dataclass
class Scenario:
    """Everything a run produces in memory."""

    cfg: ScenarioConfig
    grid: object
    batch: object
    ensemble: object
    projection: Optional[FactorProjection]
    basis: HermiteBasis
    deck: RateDeck
    riskless: object
    collateral: CollateralSpec
    report: object
    reduced_Y: np.ndarray = field(repr=False)
    reduced_Z: np.ndarray = field(repr=False)
    defaults: object = None
    full: object = None


def simulate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Run the valuation chain in memory."""
    model = cfg.build_model()
    n = model.dimension
    grid = build_time_grid(cfg.T, cfg.m)
    batch = generate_brownian(grid, _batch_dimension(cfg, n), cfg.N, cfg.seed)
    if cfg.doc["model"].get("scheme", "euler") == "milstein":
        ensemble = simulate_milstein(model, grid, batch)
    else:
        ensemble = simulate_euler(model, grid, batch)
    projection = choose_projection(cfg, ensemble)
    if projection is not None:
        ensemble = simulate_reduced(model, projection, reduce_batch(batch, projection))

    sol_cfg = cfg.doc["solver"]
    config = SolverConfig(scheme=sol_cfg["scheme"], regression=sol_cfg["regression"],
                          ridge=cfg.doc["basis"]["ridge"])
    basis = HermiteBasis(ensemble.batch.dimension, int(cfg.doc["basis"]["K"]))
    intB = cfg.build_intensity("B")
    intC = cfg.build_intensity("C")
    defaults = simulate_default_times(intB, intC, grid, batch, cfg.seed)
    intens = {"intensity_B": defaults.intensity_B, "intensity_C": defaults.intensity_C}
    deck = RateDeck(**cfg.rate_values(grid, ensemble.states, intens))
    netting = build_netting(cfg, n)
    rec = cfg.build_recovery()
    ridge = cfg.doc["basis"]["ridge"]

    V = riskless_value(ensemble, deck, netting, basis, method=sol_cfg["riskless"],
                       config=config, ridge=ridge)
    c = cfg.doc["collateral"]
    coll = CollateralSpec.from_rules(V.values, c["vm_fraction"], c["im_posted"],
                                     c["im_received"], c["capital_fraction"])
    conv = cfg.convention
    if conv == "MV":
        report = xva_decompose_MV(ensemble, deck, coll, rec, netting, V.values, basis,
                                  ridge=ridge, h1=V.h1, riskless=V)
        drv = reduced_driver("MV", ensemble, deck, coll, rec, V=V.values, h1=V.h1)
        sol = solve_backward(ensemble, drv, TerminalSpec(values=netting.evaluate(ensemble)),
                             basis, config)
        report.extra["Vhat_backward"] = sol.Y.mean(axis=0)
        Yr, Zr = report.Vhat, sol.Z
    else:
        A, report = approx_adjustment_MVhat(ensemble, deck, coll, rec, netting, V.values, basis,
                                            method=sol_cfg["adjustment"], config=config,
                                            ridge=ridge, h1=V.h1)
        if conv == "MVhat":
            sol = solve_reduced_MVhat(ensemble, deck, coll, rec, netting, basis, config, V.h1)
            report.extra["Vhat_nonlinear"] = sol.Y.mean(axis=0)
            Yr, Zr = sol.Y, sol.Z
        else:
            Yr = V.values + A
            Zr = V.Z if V.Z is not None else np.zeros(A.shape + (ensemble.batch.dimension,))
        report.convention = conv
    thB, thC = close_out_for("MV" if conv == "MV" else "MVhat", V.values, Yr, coll, rec)
    full = assemble_full_value(Yr, Zr, thB, thC, defaults, grid)
    return Scenario(cfg, grid, batch, ensemble, projection, basis, deck, V, coll, report,
                    Yr, Zr, defaults, full)


def bsde_columns(sc: Scenario):
    t = sc.grid.nodes
    N = sc.ensemble.path_count
    data = {"t": t, "V": sc.riskless.values.mean(axis=0),
            "stderr_V": sc.riskless.values.std(axis=0, ddof=1) / np.sqrt(N),
            "Y_reduced": sc.reduced_Y.mean(axis=0),
            "stderr_Y_reduced": sc.reduced_Y.std(axis=0, ddof=1) / np.sqrt(N)}
    for a in range(sc.reduced_Z.shape[2]):
        data[f"Z_reduced_{a}"] = sc.reduced_Z[:, :, a].mean(axis=0)
    if sc.riskless.Z is not None:
        for a in range(sc.riskless.Z.shape[2]):
            data[f"Z_V_{a}"] = sc.riskless.Z[:, :, a].mean(axis=0)
    data["Y_full"] = sc.full.Vhat.mean(axis=0)
    idx = sc.full.default_index
    k = np.arange(sc.grid.m + 1)[None, :]
    data["default_fraction"] = ((idx[:, None] >= 0) & (k >= idx[:, None])).mean(axis=0)
    return data


@dataclass
class RunResult:
    run_dir: Path
    scenario: Scenario
    files: dict
    manifest: dict


def run_scenario(cfg: ScenarioConfig, out_root="runs", figures=True) -> RunResult:
    """Run a scenario and write ``report.csv``, ``bsde.csv``, ``manifest.json`` and figures."""
    t0 = time.perf_counter()
    sc = simulate_scenario(cfg)
    run_dir = run_directory(cfg, out_root)
    run_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    rep_path = run_dir / "report.csv"
    sc.report.to_csv(rep_path)
    files["report.csv"] = rep_path
    bsde_path = run_dir / "bsde.csv"
    bcols = bsde_columns(sc)
    write_columns_csv(bsde_path, bcols)
    files["bsde.csv"] = bsde_path
    if sc.projection is not None:
        fpath = run_dir / "projection.csv"
        write_columns_csv(fpath, {f"U_{j}": sc.projection.U[:, j] for j in range(sc.projection.F)})
        files["projection.csv"] = fpath
    figs = {}
    if figures:
        exp = sc.report.expected()
        t = sc.grid.nodes
        figs["values.png"] = plotting.plot_profiles(
            run_dir / "values.png", t,
            {"V": exp["V"], "Vhat": exp["Vhat"], "full value": bcols["Y_full"]},
            title=f"expected values ({cfg.convention})")
        figs["adjustments.png"] = plotting.plot_profiles(
            run_dir / "adjustments.png", t,
            {k: exp[k] for k in ("CVA", "DVA", "KVA", "MVA", "FVA", "discount_term",
                                 "carry_term", "A")},
            title="adjustment decomposition")
    manifest = {
        "kind": MANIFEST_KIND,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "versions": versions(),
        "outputs": {name: sha256_file(p) for name, p in files.items()},
        "figures": sorted(figs),
        "summary": {"V0": float(sc.riskless.v0), "Vhat0": float(sc.report.Vhat[:, 0].mean()),
                    "A0": float(sc.report.A[:, 0].mean()),
                    "default_fraction_T": float(bcols["default_fraction"][-1]),
                    "seconds": round(time.perf_counter() - t0, 3)},
    }
    mpath = run_dir / "manifest.json"
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return RunResult(run_dir, sc, {**files, "manifest.json": mpath}, manifest)


def load_manifest_or_config(path):
    """Returns ``(config, manifest or None)``."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and doc.get("kind") == MANIFEST_KIND:
        return ScenarioConfig.from_dict(doc["config"]), doc
    return ScenarioConfig.from_dict(doc), None


def check_reproduction(result: RunResult, manifest):
    """Names of CSV outputs whose hash differs from the manifest."""
    want = manifest.get("outputs", {})
    got = result.manifest["outputs"]
    return sorted(k for k in want if got.get(k) != want[k])


# benchmark -------------------------------------------------------------------

BENCHMARK = {"a": -1.2, "alpha": 0.5, "beta": 0.1, "gamma": 2.0, "theta": 1.0, "T": 1.0,
             "m": 250, "N": 20000, "K": 4, "seed": 2016}
Y_TOL = 0.02
Z_TOL = 0.05
CHECK_FRACTION = 0.99


def benchmark_exact(t, W, a, alpha, beta, gamma, theta, T):
    """Pathwise exact ``(Y, Z)`` and their expectations for the benchmark."""
    c = 0.5 * a * a + beta * abs(a) + alpha - gamma
    E = np.exp(c * (T - t) + a * W)
    Y = E + gamma * theta * (T - t)
    Z = a * E
    EY = np.exp(c * (T - t) + 0.5 * a * a * t) + gamma * theta * (T - t)
    EZ = a * np.exp(c * (T - t) + 0.5 * a * a * t)
    return Y, Z, EY, EZ


@dataclass
class BenchmarkReport:
    t: np.ndarray = field(repr=False)
    EY: np.ndarray = field(repr=False)
    EY_exact: np.ndarray = field(repr=False)
    EZ: np.ndarray = field(repr=False)
    EZ_exact: np.ndarray = field(repr=False)
    rel_Y: np.ndarray = field(repr=False)
    rel_Z: np.ndarray = field(repr=False)
    max_rel_Y: float = 0.0
    max_rel_Z: float = 0.0
    worst_Y: int = 0
    worst_Z: int = 0
    terminal_error: float = 0.0
    seconds: float = 0.0
    passed: bool = False
    files: dict = field(default_factory=dict)
    rel_Y_paths: Optional[np.ndarray] = field(default=None, repr=False)
    rel_Z_paths: Optional[np.ndarray] = field(default=None, repr=False)

    def message(self):
        lines = [
            f"max |rel err E[Y]| = {self.max_rel_Y:.4%} at node {self.worst_Y} "
            f"(t={self.t[self.worst_Y]:.4f}), limit {Y_TOL:.0%}",
            f"max |rel err E[Z]| = {self.max_rel_Z:.4%} at node {self.worst_Z} "
            f"(t={self.t[self.worst_Z]:.4f}), limit {Z_TOL:.0%}",
            f"terminal exactness {self.terminal_error:.3g}, runtime {self.seconds:.1f}s",
            "PASS" if self.passed else "FAIL",
        ]
        return "\n".join(lines)


def validate_benchmark(N=None, m=None, K=None, seed=None, regression="condition",
                       out_dir=None, figures=True, n_trajectories=5) -> BenchmarkReport:
    """Solve the exponential-terminal benchmark and compare with its exact solution."""
    p = dict(BENCHMARK)
    for k, v in (("N", N), ("m", m), ("K", K), ("seed", seed)):
        if v is not None:
            p[k] = v
    a, al, be, ga, th, T = (p[k] for k in ("a", "alpha", "beta", "gamma", "theta", "T"))
    t0 = time.perf_counter()
    grid = build_time_grid(T, p["m"])
    batch = generate_brownian(grid, 1, p["N"], p["seed"])
    ens = simulate_euler(arithmetic_model([0.0], [[1.0]], [0.0]), grid, batch)

    def f(i, t, s, y, z):
        return al * y + be * np.abs(z[:, 0]) + ga * (th - y) - ga * th * (al - ga) * (T - t)

    sol = solve_backward(ens, DriverSpec(f, False, name="benchmark"),
                         TerminalSpec(lambda s: np.exp(a * s[:, 0])),
                         HermiteBasis(1, p["K"]), SolverConfig(regression=regression))
    seconds = time.perf_counter() - t0
    t = grid.nodes
    W = batch.cumulative[:, :, 0]
    Yx, Zx, EY, EZ = benchmark_exact(t[None, :], W, a, al, be, ga, th, T)
    EY, EZ = EY[0], EZ[0]
    my, mz = sol.Y.mean(axis=0), sol.Z[:, :, 0].mean(axis=0)
    rel_Y = my / EY - 1.0
    rel_Z = mz / EZ - 1.0
    # Z is not produced at the terminal node; compare there with the exact value
    rel_Z[-1] = 0.0
    # same-path reference: exact solution averaged over the simulated paths
    rel_Y_paths = my / Yx.mean(axis=0) - 1.0
    rel_Z_paths = mz / Zx.mean(axis=0) - 1.0
    rel_Z_paths[-1] = 0.0
    mask = t <= CHECK_FRACTION * T + 1e-12
    wy = int(np.argmax(np.where(mask, np.abs(rel_Y), -1)))
    wz = int(np.argmax(np.where(mask, np.abs(rel_Z), -1)))
    term = float(np.max(np.abs(sol.Y[:, -1] - np.exp(a * W[:, -1]))))
    rep = BenchmarkReport(t, my, EY, mz, EZ, rel_Y, rel_Z, float(abs(rel_Y[wy])),
                          float(abs(rel_Z[wz])), wy, wz, term, seconds,
                          rel_Y_paths=rel_Y_paths, rel_Z_paths=rel_Z_paths)
    rep.passed = rep.max_rel_Y <= Y_TOL and rep.max_rel_Z <= Z_TOL
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        k = min(n_trajectories, p["N"])
        traj = {"t": t}
        for j in range(k):
            traj[f"Y_num_{j}"], traj[f"Y_exact_{j}"] = sol.Y[j], Yx[j]
            traj[f"Z_num_{j}"], traj[f"Z_exact_{j}"] = sol.Z[j, :, 0], Zx[j]
        write_columns_csv(out / "trajectories.csv", traj)
        write_columns_csv(out / "expectations.csv",
                          {"t": t, "EY": my, "EY_exact": EY, "EZ": mz, "EZ_exact": EZ})
        write_columns_csv(out / "relative_errors.csv",
                          {"t": t, "rel_Y": rel_Y, "rel_Z": rel_Z,
                           "rel_Y_paths": rel_Y_paths, "rel_Z_paths": rel_Z_paths})
        rep.files = {n: out / n for n in ("trajectories.csv", "expectations.csv",
                                          "relative_errors.csv")}
        if figures:
            plotting.plot_trajectories(out / "trajectories_Y.png", t, sol.Y[:k], Yx[:k], "Y")
            plotting.plot_trajectories(out / "trajectories_Z.png", t, sol.Z[:k, :, 0], Zx[:k], "Z")
            plotting.plot_profiles(out / "expectations.png", t,
                                   {"E[Y]": my, "E[Y] exact": EY, "E[Z]": mz, "E[Z] exact": EZ},
                                   styles={"E[Y] exact": "k:", "E[Z] exact": "k:"})
            plotting.plot_relative_errors(out / "relative_errors.png", t[mask],
                                          {"Y": rel_Y[mask], "Z": rel_Z[mask]},
                                          {"Y": Y_TOL, "Z": Z_TOL})
    return rep


# jump example ----------------------------------------------------------------

def jump_closed_form(t, alpha, beta, theta, xi, T):
    """Reduced ODE solution on ``t``."""
    if alpha == beta:
        raise DegenerateParametersError("the closed form needs alpha != beta")
    k = beta * theta / (alpha - beta)
    return (xi + k) * np.exp((alpha - beta) * (T - t)) - k


@dataclass
class JumpReport:
    t: np.ndarray = field(repr=False)
    reduced_exact: np.ndarray = field(repr=False)
    reduced_numeric: np.ndarray = field(repr=False)
    Y_closed: np.ndarray = field(repr=False)
    U_closed: np.ndarray = field(repr=False)
    Y_exact_route: np.ndarray = field(repr=False)
    U_exact_route: np.ndarray = field(repr=False)
    Y_numeric_route: np.ndarray = field(repr=False)
    U_numeric_route: np.ndarray = field(repr=False)
    default_fraction: float = 0.0
    max_abs_exact: float = 0.0
    max_rel_numeric: float = 0.0

    def message(self):
        return (f"Y0 closed form {self.reduced_exact[0]:.12g}, numeric {self.reduced_numeric[0]:.12g}\n"
                f"defaulted paths {self.default_fraction:.2%}\n"
                f"max |assembled - closed form| (exact reduced ODE) = {self.max_abs_exact:.3g}\n"
                f"max relative deviation (numeric reduced solve) = {self.max_rel_numeric:.3g}")


def run_jump_example(alpha, beta, theta, xi, T=1.0, lam=0.1, m=250, N=2000, seed=2016,
                     out_dir=None) -> JumpReport:
    """Constant-intensity jump example: assembled solution against its closed form.

    On the grid, ``U`` at node ``t_k`` is the jump size over ``(t_{k-1}, t_k]``,
    so the closed-form ``U`` is evaluated with ``1{t_{k-1} < tau}``.
    """
    if alpha == beta:
        raise DegenerateParametersError("the closed form needs alpha != beta")
    if lam < 0:
        raise InvalidArgumentError("intensity must be nonnegative")
    grid = build_time_grid(T, m)
    t = grid.nodes
    batch = generate_brownian(grid, 1, N, seed)
    dft = simulate_default_times(IntensityModel.constant(0.0), IntensityModel.constant(lam),
                                 grid, batch, seed)
    tau = dft.tau_C
    cY = jump_closed_form(t, alpha, beta, theta, xi, T)
    ens = simulate_euler(arithmetic_model([0.0], [[1.0]], [0.0]), grid, batch)
    drv = DriverSpec.linear(beta * theta, alpha - beta, 0.0, N, m, 1, "jump-reduced")
    num = solve_backward(ens, drv, TerminalSpec(values=np.full(N, float(xi))), HermiteBasis(1, 1))
    theta_arr = np.full((N, m + 1, 1), float(theta))

    pre = t[None, :] <= tau[:, None]
    Y_closed = np.where(pre, cY[None, :], theta)
    prev = np.concatenate([[-np.inf], t[:-1]])
    live = prev[None, :] < tau[:, None]
    U_closed = np.where(live, theta - cY[None, :], 0.0)

    exact = assemble_jump_solution(np.broadcast_to(cY, (N, m + 1)), np.zeros((N, m + 1, 1)),
                                   theta_arr, tau, grid)
    numeric = assemble_jump_solution(num.Y, num.Z, theta_arr, tau, grid)
    dev = max(np.max(np.abs(exact.Y - Y_closed)), np.max(np.abs(exact.U[..., 0] - U_closed)))
    scale = np.maximum(np.abs(Y_closed), 1e-300)
    scale_u = np.maximum(np.abs(U_closed), 1e-300)
    rel = max(np.max(np.abs(numeric.Y - Y_closed) / scale),
              np.max(np.where(U_closed != 0, np.abs(numeric.U[..., 0] - U_closed) / scale_u, 0.0)))
    rep = JumpReport(t, cY, num.Y.mean(axis=0), Y_closed, U_closed, exact.Y, exact.U[..., 0],
                     numeric.Y, numeric.U[..., 0], float(dft.defaulted.mean()), float(dev),
                     float(rel))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_columns_csv(out / "jump_example.csv", {
            "t": t, "reduced_exact": cY, "reduced_numeric": rep.reduced_numeric,
            "EY_closed": Y_closed.mean(axis=0), "EY_assembled": numeric.Y.mean(axis=0),
            "EU_closed": U_closed.mean(axis=0), "EU_assembled": numeric.U[..., 0].mean(axis=0),
        })
        plotting.plot_profiles(out / "jump_example.png", t, {
            "reduced exact": cY, "reduced numeric": rep.reduced_numeric,
            "E[Y] closed form": Y_closed.mean(axis=0), "E[Y] assembled": numeric.Y.mean(axis=0),
        }, styles={"reduced numeric": "--", "E[Y] assembled": "--"})
    return rep


# factor sweep ----------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list
    diagnostics: list
    bounds: list
    run_dir: Optional[Path] = None


def factor_sweep(cfg: ScenarioConfig, out_root=None, figures=True) -> SweepResult:
    """Coupled full/reduced runs for ``F = 1..n`` with the discounted netting-set BSDE."""
    model = cfg.build_model()
    n = model.dimension
    grid = build_time_grid(cfg.T, cfg.m)
    batch = generate_brownian(grid, n, cfg.N, cfg.seed)
    full = simulate_euler(model, grid, batch)
    netting = build_netting(cfg, n)
    K = int(cfg.doc["basis"]["K"])
    beta = float(cfg.doc["factor"].get("beta", 1.0))
    rconst = cfg.doc["deck"].get("r", {"constant": 0.0})
    if "constant" not in rconst or np.ndim(rconst["constant"]) != 0:
        raise ConfigError("factor-sweep supports a constant riskless rate only")
    r = float(rconst["constant"])
    sol_cfg = SolverConfig(regression=cfg.doc["solver"]["regression"],
                           ridge=cfg.doc["basis"]["ridge"])
    N, m = cfg.N, cfg.m

    def solve(ens, d):
        drv = DriverSpec.linear(0.0, -r, 0.0, N, m, d, "discount") if r else zero_driver()
        return solve_backward(ens, drv, TerminalSpec(netting.payoff), HermiteBasis(d, K), sol_cfg)

    fsol = solve(full, n)
    md = cfg.doc["model"]
    L_mu = L_sigma = None
    if md["family"] in ("linear", "arithmetic"):
        L_mu = lipschitz_constant_linear(md.get("A", np.zeros((n, n))))
        L_sigma = 0.0
    rows, diags, bounds = [], [], []
    samples_paths = int(cfg.doc["factor"].get("sample_paths", 256))
    for F in range(1, n + 1):
        if F < n:
            proj = average_projection(projection_samples(full, F, max_paths=samples_paths), F)
        else:
            proj = FactorProjection.full(n)
        red = simulate_reduced(model, proj, reduce_batch(batch, proj))
        rsol = solve(red, F)
        d = reduction_error_report(full, fsol.Y, fsol.Z, red, rsol.Y, rsol.Z, proj, beta)
        diags.append(d)
        rows.append(d.row())
        bounds.append(state_error_bound(d.delta, grid, L_mu, L_sigma, proj.U)
                      if L_mu is not None else float("nan"))
    res = SweepResult(rows, diags, bounds)
    if out_root is not None:
        run_dir = Path(out_root) / f"{cfg.digest()[:12]}-seed{cfg.seed}-factors"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_diagnostics_csv(run_dir / "factor_sweep.csv", rows)
        if figures:
            arr = np.asarray(rows, float)
            plotting.plot_factor_sweep(run_dir / "factor_sweep.png", arr[:, 0], {
                "Delta_T": arr[:, 1], "err_S": arr[:, 2], "err_Y": arr[:, 3],
                "err_Z": arr[:, 4], "residual_Z": arr[:, 5]})
        res.run_dir = run_dir
    return res
