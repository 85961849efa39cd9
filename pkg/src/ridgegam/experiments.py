"""Config-driven experiment runs: the 2-D quadratic illustration, the
width sweep comparing ridge networks with additive-spline fits, the
training-time sweep for gradient flow vs ridge, the direction-refinement
sweep, and the 1-D consistency run.

Every run is a pure function of (config, seed) and writes deterministic CSV
and JSON artifacts into its output directory.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ridgegam import gam, metrics, rsn, sphere, train, weighting
from ridgegam.train import DatasetLoss


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    out_dir: str = "out"
    options: dict = field(default_factory=dict)

    @staticmethod
    def from_json_file(path) -> "ExperimentConfig":
        with open(path) as fh:
            obj = json.load(fh)
        kind = obj.pop("kind")
        seed = obj.pop("seed", 0)
        out_dir = obj.pop("out_dir", "out")
        options = obj.pop("options", None)
        if options is None:
            options = obj
        else:
            options.update(obj)
        return ExperimentConfig(kind=kind, seed=seed, out_dir=out_dir,
                                options=options)

    def opt(self, name, default):
        return self.options.get(name, default)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v))
                             if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def quadratic_dataset(N: int, noise: float, seed: int, d: int = 2) -> DatasetLoss:
    """Gaussian inputs scaled into the [-1,1] cube, targets |x|^2 + noise."""
    rng = np.random.default_rng(seed)
    if N == 0:
        return DatasetLoss(np.zeros((0, d)), np.zeros((0, 1)))
    X = rng.normal(size=(N, d))
    X = X / np.abs(X).max()
    Y = np.sum(X * X, axis=1, keepdims=True)
    if noise > 0:
        Y = Y + noise * rng.normal(size=Y.shape)
    return DatasetLoss(X, Y)


def dataset_from_csv(path) -> DatasetLoss:
    """CSV with columns x1..xd then one or more y columns prefixed 'y'."""
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    arr = np.array(rows)
    return DatasetLoss(arr[:, xcols], arr[:, ycols])


def coupled_lambda(lam: float, n: int, gbar_val: float) -> float:
    return lam * n * gbar_val


# ---------------------------------------------------------------------------


def run_quadratic2d(config: ExperimentConfig) -> dict:
    """Fit |x|^2 data with a wide net via gradient descent / exact flow."""
    os.makedirs(config.out_dir, exist_ok=True)
    N = config.opt("n_data", 64)
    noise = config.opt("noise", 0.05)
    n = config.opt("n_neurons", 2 ** 12)
    c = config.opt("init_cube", 0.05)
    method = config.opt("method", "flow")  # "flow" or "gd"
    T = config.opt("T", 1.0)
    gamma = config.opt("gamma", 2.0 ** -15)
    tau = config.opt("tau", 2 ** 15)

    ds = quadratic_dataset(N, noise, config.seed)
    init = rsn.InitDistribution("uniform_cube", c=c, seed=config.seed + 1)
    params = rsn.sample_rsn(n, 2, 1, init)
    F = rsn.features(params, ds.X)
    if N == 0:
        W = np.zeros((1, n))
    elif method == "gd":
        W = train.gradient_descent(F, ds.Y, gamma, tau,
                                   record_loss=False).W_star
    else:
        W = train.gradient_flow_exact(F, ds.Y, T)
    f = metrics.RsnFunction(params, W)

    near = metrics.EvalGrid([-1.0, -1.0], [1.0, 1.0],
                            config.opt("near_resolution", 41))
    far = metrics.EvalGrid([-10.0, -10.0], [10.0, 10.0],
                           config.opt("far_resolution", 81))

    def field_rows(grid):
        X = grid.points()
        vals = f(X)[:, 0]
        grads = f.grad(X)[:, 0, :]
        return [(float(x[0]), float(x[1]), float(v), float(g[0]), float(g[1]))
                for x, v, g in zip(X, vals, grads)]

    header = ["x1", "x2", "f", "df_dx1", "df_dx2"]
    near_rows = field_rows(near)
    far_rows = field_rows(far)
    _write_csv(os.path.join(config.out_dir, "contours.csv"), header, near_rows)
    _write_csv(os.path.join(config.out_dir, "grad_near.csv"), header, near_rows)
    _write_csv(os.path.join(config.out_dir, "grad_far.csv"), header, far_rows)
    _write_csv(os.path.join(config.out_dir, "points.csv"), ["x1", "x2", "y"],
               [(float(x[0]), float(x[1]), float(y[0]))
                for x, y in zip(ds.X, ds.Y)])

    Xn = near.points()
    gn = f.grad(Xn)[:, 0, :]
    near_err = float(np.median(np.linalg.norm(gn - 2.0 * Xn, axis=1)))

    Xf = far.points()
    rad = np.linalg.norm(Xf, axis=1)
    ring = (rad >= 5.0) & (rad <= 10.0)
    gf = f.grad(Xf[ring])[:, 0, :]
    gf_norm = np.linalg.norm(gf, axis=1)
    unit = Xf[ring] / rad[ring][:, None]
    with np.errstate(invalid="ignore"):
        cosine = np.where(gf_norm > 0,
                          np.sum(gf * unit, axis=1) / np.maximum(gf_norm, 1e-300),
                          0.0)
    summary = {
        "method": method,
        "n_neurons": n,
        "n_data": N,
        "seed": config.seed,
        "near_field_median_grad_error": near_err,
        "far_field_median_grad_norm": float(np.median(gf_norm)),
        "far_field_median_direction_cosine": float(np.median(cosine)),
        "tolerances": "implementer-calibrated; source figures are visual",
    }
    _write_json(os.path.join(config.out_dir, "summary.json"), summary)
    return summary


def run_T_sweep(config: ExperimentConfig) -> dict:
    """Ridge at penalty 1/T vs exact gradient flow at time T."""
    os.makedirs(config.out_dir, exist_ok=True)
    n = config.opt("n_neurons", 64)
    N = config.opt("n_data", 32)
    c = config.opt("init_cube", 1.0)
    T_list = config.opt("T_list", [1.0, 10.0, 100.0, 1000.0])
    target = config.opt("target", "spectral")

    ds = quadratic_dataset(N, config.opt("noise", 0.0), config.seed)
    init = rsn.InitDistribution("uniform_cube", c=c, seed=config.seed + 1)
    params = rsn.sample_rsn(n, 2, 1, init)
    F = rsn.features(params, ds.X)
    Y = ds.Y
    if target == "spectral":
        # targets spanned by the dominant Gram eigendirections: components
        # below the cutoff have not left the transient regime by T = 1e3 and
        # would mask the flow-vs-ridge limit at desk scale
        lam_m, U = np.linalg.eigh(F @ F.T)
        keep = lam_m >= config.opt("eig_cutoff", 2.0)
        rng = np.random.default_rng(config.seed + 100)
        Y = U[:, keep] @ rng.normal(size=(int(keep.sum()), ds.Y.shape[1]))
    grid = metrics.EvalGrid([-1.0, -1.0], [1.0, 1.0],
                            config.opt("resolution", 32))

    rows = []
    for T in T_list:
        W_flow = train.gradient_flow_exact(F, Y, T)
        W_ridge = train.ridge_solve(F, Y, 1.0 / T).W_star
        W_early = train.ridge_solve(F, Y,
                                    train.early_stopping_lambda(T)).W_star
        dist = metrics.sobolev_distance(metrics.RsnFunction(params, W_ridge),
                                        metrics.RsnFunction(params, W_flow),
                                        grid)
        dist_early = metrics.sobolev_distance(
            metrics.RsnFunction(params, W_early),
            metrics.RsnFunction(params, W_flow), grid)
        rows.append((float(T), dist, dist_early))
    _write_csv(os.path.join(config.out_dir, "sweep.csv"),
               ["T", "distance", "distance_early_stopping"], rows)
    summary = {
        "seed": config.seed, "n_neurons": n, "n_data": N,
        "distances": {str(r[0]): r[1] for r in rows},
        "ratio_last_to_first": rows[-1][1] / rows[0][1],
    }
    _write_json(os.path.join(config.out_dir, "summary.json"), summary)
    return summary


def _shared_weighting(config: ExperimentConfig, d: int):
    init = rsn.InitDistribution(config.opt("init_kind", "uniform_cube"),
                                c=config.opt("init_cube", 1.0),
                                seed=config.opt("weighting_seed", 12345))
    return init, weighting.estimate_weighting(
        init, d,
        dir_grid=config.opt("dir_grid", 64 if d > 1 else 2),
        pos_grid=config.opt("pos_grid", 192),
        n_samples=config.opt("n_samples", 500_000))


def run_n_sweep(config: ExperimentConfig) -> dict:
    """Width sweep of the ridge net against its additive-spline comparator."""
    os.makedirs(config.out_dir, exist_ok=True)
    lam = config.opt("lambda", 0.2)
    n_list = config.opt("n_list", [256, 512, 1024, 2048, 4096])
    seeds = config.opt("seeds", 5)
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    N = config.opt("n_data", 48)

    ds = quadratic_dataset(N, config.opt("noise", 0.05), config.seed)
    init, wgrid = _shared_weighting(config, 2)
    gbar_val = wgrid.gbar
    grid = metrics.EvalGrid([-1.0, -1.0], [1.0, 1.0],
                            config.opt("resolution", 32))

    rows = []
    for n in n_list:
        m_dir = int(np.ceil(np.sqrt(n)))
        partition = sphere.partition_circle(m_dir)
        cw = weighting.cell_weights(wgrid, partition)
        agam_sol = gam.solve_agam(ds, partition, cw, lam)
        for s in seeds:
            net_init = rsn.InitDistribution(init.kind, c=init.c,
                                            seed=10_000 + 97 * s + n)
            params = rsn.sample_rsn(n, 2, 1, net_init)
            F = rsn.features(params, ds.X)
            lt = coupled_lambda(lam, n, gbar_val)
            rep = train.ridge_solve(F, ds.Y, lt)
            dist = metrics.sobolev_distance(
                metrics.RsnFunction(params, rep.W_star), agam_sol, grid)
            rows.append((n, s, dist, rep.loss_value, agam_sol.loss,
                         agam_sol.penalty, lt, lam, gbar_val))
    _write_csv(os.path.join(config.out_dir, "sweep.csv"),
               ["n", "seed", "distance", "rn_loss", "agam_loss",
                "agam_penalty", "lambda_tilde", "lambda", "gbar"], rows)

    med = {}
    iqr = {}
    for n in n_list:
        dists = sorted(r[2] for r in rows if r[0] == n)
        med[str(n)] = float(np.median(dists))
        iqr[str(n)] = float(np.subtract(*np.percentile(dists, [75, 25])))
    summary = {
        "lambda": lam, "gbar": gbar_val, "medians": med, "iqr": iqr,
        "coupling_check": max(abs(coupled_lambda(lam, n, gbar_val)
                                  - lam * n * gbar_val) for n in n_list),
    }
    _write_json(os.path.join(config.out_dir, "summary.json"), summary)
    return summary


def smooth_profile_family(wgrid: weighting.WeightGrid):
    """Fixed smooth direction-continuum profiles inside the weighting support.

    Bump profiles phi_s(r) = c(s) * (1 - (r/R)^2)^2 on |r| < R, direction
    modulation c depending smoothly on the first coordinate of s.
    """
    # Confine the bump to the central 80% of the kink-position mass so the
    # curvature stays where the density is well resolved; the full support
    # reaches far into the heavy tails where 1/g blows the penalty up.
    r_grid = wgrid.positions
    nd = wgrid.directions.shape[0]
    lo = np.empty(nd)
    hi = np.empty(nd)
    for i in range(nd):
        cdf = np.cumsum(wgrid.joint[i])
        cdf /= cdf[-1]
        lo[i] = r_grid[int(np.searchsorted(cdf, 0.10))]
        hi[i] = r_grid[int(np.searchsorted(cdf, 0.90))]
    R = 0.45 * float(np.min(hi - lo))
    mid = 0.5 * (lo + hi)
    r = r_grid
    phi = np.zeros((nd, r.size, 1))
    for i in range(nd):
        u = (r - mid[i]) / R
        bump = np.where(np.abs(u) < 1.0, (1.0 - u * u) ** 2, 0.0)
        cmod = 1.0 + 0.5 * wgrid.directions[i, 0]
        phi[i, :, 0] = cmod * bump
    return gam.ProfileSet(directions=wgrid.directions.copy(),
                          positions=r.copy(), phi=phi,
                          supp=wgrid.support.copy(), lam=1.0,
                          gbar_used=wgrid.gbar, eps=wgrid.eps_floor())


def run_direction_sweep(config: ExperimentConfig) -> dict:
    """Refinement in the number of directions of the additive model."""
    os.makedirs(config.out_dir, exist_ok=True)
    lam = config.opt("lambda", 0.2)
    m_list = config.opt("m_list", [8, 16, 32, 64])
    N = config.opt("n_data", 48)
    n = config.opt("n_neurons", 1024)

    ds = quadratic_dataset(N, config.opt("noise", 0.05), config.seed)
    # Direction grid deliberately finer than the largest partition so that
    # every refinement level keeps a nonzero quadrature error.
    config.options.setdefault("dir_grid", 2 * max(m_list))
    init, wgrid = _shared_weighting(config, 2)
    grid = metrics.EvalGrid([-1.0, -1.0], [1.0, 1.0],
                            config.opt("resolution", 32))
    family = smooth_profile_family(wgrid)
    p_igam = gam.penalty_igam(family, wgrid)

    net_init = rsn.InitDistribution(init.kind, c=init.c, seed=config.seed + 7)
    params = rsn.sample_rsn(n, 2, 1, net_init)
    F = rsn.features(params, ds.X)
    lt = coupled_lambda(lam, n, wgrid.gbar)
    W_plain = train.ridge_solve(F, ds.Y, lt).W_star
    f_plain = metrics.RsnFunction(params, W_plain)

    sols = {}
    rows = []
    for m in m_list:
        partition = sphere.partition_circle(m)
        cw = weighting.cell_weights(wgrid, partition)
        sols[m] = gam.solve_agam(ds, partition, cw, lam)
        cells = gam.agam_from_igam(family, partition)
        p_agam = gam.penalty_agam(cells, cw)
        snapped = sphere.snap_directions(params, partition)
        Fs = rsn.features(snapped, ds.X)
        W_snap = train.ridge_solve(Fs, ds.Y, lt).W_star
        fd_dist = metrics.sobolev_distance(
            metrics.RsnFunction(snapped, W_snap), f_plain, grid)
        rows.append([m, partition.mesh, abs(p_agam - p_igam), fd_dist])

    for i, m in enumerate(m_list[:-1]):
        succ = metrics.sobolev_distance(sols[m], sols[m_list[i + 1]], grid)
        rows[i].append(succ)
    rows[-1].append(float("nan"))

    _write_csv(os.path.join(config.out_dir, "sweep.csv"),
               ["m", "mesh", "riemann_penalty_gap", "fd_rsn_distance",
                "successive_distance"], rows)
    summary = {
        "lambda": lam,
        "penalty_igam_reference": p_igam,
        "gaps": {str(r[0]): r[2] for r in rows},
        "successive": {str(r[0]): r[4] for r in rows[:-1]},
    }
    _write_json(os.path.join(config.out_dir, "summary.json"), summary)
    return summary


def run_d1_consistency(config: ExperimentConfig) -> dict:
    """1-D check: two-direction additive model vs ridge nets."""
    os.makedirs(config.out_dir, exist_ok=True)
    lam = config.opt("lambda", 0.2)
    n_list = config.opt("n_list", [256, 1024, 4096])
    seeds = config.opt("seeds", 5)
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    N = config.opt("n_data", 24)

    rng = np.random.default_rng(config.seed)
    X = np.sort(rng.uniform(-1, 1, size=(N, 1)), axis=0)
    Y = np.sin(2.0 * X) + 0.05 * rng.normal(size=(N, 1))
    ds = DatasetLoss(X, Y)

    init, wgrid = _shared_weighting(config, 1)
    partition = sphere.partition_pm1()
    cw = weighting.cell_weights(wgrid, partition)
    agam_sol = gam.solve_agam(ds, partition, cw, lam)
    grid = metrics.EvalGrid([-1.0], [1.0], config.opt("resolution", 64))

    # symmetry of the estimated weighting under r -> -r, direction flip
    gp = wgrid.g_table[0]
    gm = np.interp(-wgrid.positions, wgrid.positions,
                   wgrid.g_table[1], left=0.0, right=0.0)
    sym_gap = float(np.max(np.abs(gp - gm)) / max(wgrid.g_table.max(), 1e-300))

    rows = []
    for n in n_list:
        for s in seeds:
            net_init = rsn.InitDistribution(init.kind, c=init.c,
                                            seed=20_000 + 31 * s + n)
            params = rsn.sample_rsn(n, 1, 1, net_init)
            F = rsn.features(params, ds.X)
            lt = coupled_lambda(lam, n, wgrid.gbar)
            rep = train.ridge_solve(F, ds.Y, lt)
            dist = metrics.sobolev_distance(
                metrics.RsnFunction(params, rep.W_star), agam_sol, grid)
            rows.append((n, s, dist, lt))
    _write_csv(os.path.join(config.out_dir, "sweep.csv"),
               ["n", "seed", "distance", "lambda_tilde"], rows)
    med = {str(n): float(np.median([r[2] for r in rows if r[0] == n]))
           for n in n_list}
    summary = {"medians": med, "symmetry_gap": sym_gap, "gbar": wgrid.gbar}
    _write_json(os.path.join(config.out_dir, "summary.json"), summary)
    return summary


RUNNERS = {
    "quad2d": run_quadratic2d,
    "n_sweep": run_n_sweep,
    "t_sweep": run_T_sweep,
    "dir_sweep": run_direction_sweep,
    "d1": run_d1_consistency,
}
