"""Command-line entry point.

Subcommands: forward, oracle-compare, gradient-check, reconstruct,
convergence, lemmas.  Every run resolves its configuration (JSON file plus
overriding flags), writes the full resolution to ``manifest.json`` in the
output directory before any solve, then streams CSV outputs and PNG figures
as they are produced.  Identical configuration and seed give bit-identical
numeric outputs.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, adjoint, fem, oracle, plots, recon, verification
from .fracquad import check_alpha
from .pat import build_pat_model
from .recon import PRESETS, PRESET_COMMON

FLOAT_FMT = "%.17g"

# parameters of the separable 2D validation run; chosen so that the first
# Laplace eigenmode of the unit square evolves exactly by the closed-form
# relaxation solution (A = 4/3^(3/4), B = 1 with lambda_1 = 2 pi^2)
MODE2D_C2 = 1.0 / (2.0 * np.pi**2)
MODE2D_B = 2.0 / (3.0**0.75 * np.pi**2)
SNAPSHOT_TIMES = (0.0, 0.8, 1.6, 2.4, 3.2, 4.0)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def _fail(msg):
    raise SystemExit(f"error: {msg}")


class RunContext:
    """Output directory plus the manifest lifecycle."""

    def __init__(self, out_dir, command, config):
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.manifest = {
            "command": command,
            "version": __version__,
            "config": config,
            "rng_algorithm": "numpy-pcg64",
            "threads": os.environ.get("FRACWAVE_THREADS"),
            "status": "running",
            "outputs": [],
        }
        self.write_manifest()

    def path(self, name):
        self.manifest["outputs"].append(name)
        return os.path.join(self.out, name)

    def write_manifest(self):
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, status="ok", **extra):
        self.manifest["status"] = status
        self.manifest.update(extra)
        self.write_manifest()


def _load_config(args, defaults):
    """Merge defaults < JSON file < explicit flags; reject unknown keys and
    out-of-range values."""
    config = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            file_cfg = json.load(fh)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            _fail(f"unknown config keys: {', '.join(unknown)} (known: {', '.join(sorted(defaults))})")
        config.update(file_cfg)
    for key in defaults:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            config[key] = val
    if config.get("alpha") is not None:
        try:
            check_alpha(config["alpha"])
        except ValueError as exc:
            _fail(str(exc))
    for key in ("dt", "t_final", "c_squared", "b_damping"):
        if key in config and config[key] is not None and config[key] <= 0:
            _fail(f"{key} must be positive, got {config[key]} (expected > 0)")
    for key in ("nx", "n_steps", "levels", "trials"):
        if key in config and config[key] is not None and int(config[key]) < 1:
            _fail(f"{key} must be a positive integer, got {config[key]}")
    if config.get("scheme") not in (None, "galerkin", "l1"):
        _fail(f"scheme must be 'galerkin' or 'l1', got {config['scheme']!r}")
    return config


def cmd_forward(args):
    defaults = {
        "nx": 32,
        "n_steps": 50,
        "t_final": 4.0,
        "alpha": 0.5,
        "scheme": "galerkin",
        "c_squared": MODE2D_C2,
        "b_damping": MODE2D_B,
        "snapshot_times": list(SNAPSHOT_TIMES),
        "seed": 0,
        "vtk": False,
    }
    cfg = _load_config(args, defaults)
    ctx = RunContext(args.out, "forward", cfg)

    from .fracquad import ConvolutionWeights, TimeGrid
    from .timestepper import NewmarkParams, SemidiscreteSystem, run_forward

    nx = int(cfg["nx"])
    n_steps = int(cfg["n_steps"])
    mesh = fem.rectangle_mesh((0.0, 0.0), (1.0, 1.0), nx, nx)
    M = fem.assemble_mass(mesh)
    K = fem.assemble_stiffness(mesh)
    M_e, _ = fem.apply_dirichlet(M, None, mesh.boundary_nodes)
    K_e, _ = fem.apply_dirichlet(K, None, mesh.boundary_nodes)
    system = SemidiscreteSystem(M_e, cfg["b_damping"] * K_e, cfg["c_squared"] * K_e)
    grid = TimeGrid(cfg["t_final"] / n_steps, n_steps)
    maker = ConvolutionWeights.galerkin if cfg["scheme"] == "galerkin" else ConvolutionWeights.l1
    weights = maker(cfg["alpha"], grid.dt, n_steps + 1)

    x, y = mesh.points[:, 0], mesh.points[:, 1]
    u0 = np.sin(np.pi * x) * np.sin(np.pi * y)
    u0[mesh.boundary] = 0.0
    history = run_forward(system, NewmarkParams(), weights, grid, u0)

    times = grid.times
    for t_snap in cfg["snapshot_times"]:
        n = int(round(t_snap / grid.dt))
        if not 0 <= n <= n_steps:
            continue
        tag = f"t{t_snap:g}".replace(".", "p")
        fem.save_field_csv(mesh, history.d[n], ctx.path(f"field_{tag}.csv"))
        if cfg["vtk"]:
            fem.save_field_vtk(mesh, history.d[n], ctx.path(f"field_{tag}.vtk"))
        plots.field_figure(mesh, history.d[n], ctx.path(f"field_{tag}.png"),
                           title=f"pressure at t = {t_snap:g}")
        ctx.write_manifest()

    # probe at the center node; its value normalized by u0 is the mode amplitude
    center = mesh.node_index(nx // 2, nx // 2)
    amp = u0[center]
    rows = [(float(t), float(history.d[n, center])) for n, t in enumerate(times)]
    _write_csv(ctx.path("probe_center.csv"), ["t", "value"], rows)
    curve = [r[1] / amp if amp else r[1] for r in rows]
    plots.curves_figure(times, [("numeric mode amplitude", curve)],
                        ctx.path("probe_center.png"), ylabel="w(t)")
    ctx.finish()
    return 0


def cmd_oracle_compare(args):
    defaults = {"dt": 0.08, "t_final": 4.0, "scheme": "galerkin"}
    cfg = _load_config(args, defaults)
    ctx = RunContext(args.out, "oracle-compare", cfg)
    grid, hist = verification.scalar_relaxation_run(cfg["dt"], cfg["t_final"], cfg["scheme"])
    rows = []
    for n, t in enumerate(grid.times):
        w_ex = oracle.exact_w_half(float(t))
        w_num = float(hist.d[n, 0])
        rows.append((float(t), w_ex, w_num, w_num - w_ex))
    _write_csv(ctx.path("oracle_compare.csv"), ["t", "w_exact", "w_numeric", "error"], rows)
    plots.curves_figure(grid.times,
                        [("exact", [r[1] for r in rows]), ("numeric", [r[2] for r in rows])],
                        ctx.path("oracle_compare.png"), ylabel="w(t)")
    plots.curves_figure(grid.times, [("abs error", [abs(r[3]) for r in rows])],
                        ctx.path("oracle_error.png"), ylabel="|error|", logy=True)
    max_err = max(abs(r[3]) for r in rows)
    ctx.finish(max_abs_error=max_err)
    print(f"max |w_numeric - w_exact| = {max_err:.3e}")
    return 0


def cmd_gradient_check(args):
    defaults = {"alpha": 0.5, "nx": 8, "n_steps": 20, "directions": 5, "seed": 0,
                "mode": "exact", "delta": 0.01}
    cfg = _load_config(args, defaults)
    ctx = RunContext(args.out, "gradient-check", cfg)

    model = build_pat_model(nx=int(cfg["nx"]), n_steps=int(cfg["n_steps"]), alpha=cfg["alpha"])
    data = recon.generate_data(model, recon.disk_inclusion((0.4, 0.1), 0.2),
                               noise_delta=cfg["delta"], seed=int(cfg["seed"]))
    prior = recon.BiLaplacianPrior(10.0, 0.03, model.mass_omega, model.stiffness_omega)
    problem = recon.ReconProblem(model, data.trace, data.noise_sigma, prior)
    rng = np.random.default_rng(int(cfg["seed"]))
    u0 = 0.3 * rng.standard_normal(model.n_omega)
    g, _ = adjoint.compute_gradient(model, u0, data.trace, prior, data.noise_sigma,
                                    mode=cfg["mode"])

    h_values = [10.0 ** (-k) for k in range(2, 7)]
    all_best = []
    for k in range(int(cfg["directions"])):
        du = rng.standard_normal(model.n_omega)
        gd = float(np.dot(g, du))
        rows = []
        for h in h_values:
            jp = recon.cost(problem, u0 + h * du)
            jm = recon.cost(problem, u0 - h * du)
            fd = (jp - jm) / (2.0 * h)
            rel = abs(fd - gd) / max(abs(fd), 1e-300)
            rows.append((h, fd, gd, rel))
        _write_csv(ctx.path(f"gradient_check_dir{k}.csv"),
                   ["h", "fd_value", "adjoint_value", "rel_error"], rows)
        all_best.append(min(r[3] for r in rows))
        plots.loglog_figure(h_values, [(f"direction {k}", [r[3] for r in rows])],
                            ctx.path(f"gradient_check_dir{k}.png"),
                            xlabel="h", ylabel="relative error")
        ctx.write_manifest()
    worst = max(all_best)
    ctx.finish(worst_plateau_rel_error=worst)
    print(f"worst plateau relative error over {cfg['directions']} directions: {worst:.3e}")
    return 0 if worst <= 1e-3 else 1


def _resolve_prior(preset_name, alpha, cfg):
    gamma, rho = cfg.get("gamma"), cfg.get("rho")
    if gamma is not None and rho is not None:
        return float(gamma), float(rho)
    table = PRESETS[preset_name]["prior"]
    key = min(table, key=lambda a: abs(a - alpha))
    g0, r0 = table[key]
    return (float(gamma) if gamma is not None else g0,
            float(rho) if rho is not None else r0)


def cmd_reconstruct(args):
    defaults = {
        "preset": "paper-example-1",
        "alpha": None,          # None: run the preset's alpha sweep
        "nx": 16,
        "n_steps": None,        # None: take the time preset's step count
        "time_preset": "default",
        "fine_factor": 2,
        "delta": PRESET_COMMON["noise_delta"],
        "seed": 0,
        "gamma": None,
        "rho": None,
        "scheme": "galerkin",
        "max_iter": 200,
        "grad_tol": 1e-6,
        "method": "lbfgs",
    }
    cfg = _load_config(args, defaults)
    if cfg["preset"] not in PRESETS:
        _fail(f"unknown preset {cfg['preset']!r} (available: {', '.join(sorted(PRESETS))})")
    if cfg["time_preset"] not in recon.TIME_PRESETS:
        _fail(f"unknown time preset {cfg['time_preset']!r} "
              f"(available: {', '.join(sorted(recon.TIME_PRESETS))})")
    if cfg["n_steps"] is None:
        cfg["n_steps"] = recon.TIME_PRESETS[cfg["time_preset"]]
    ctx = RunContext(args.out, "reconstruct", cfg)

    alphas = [cfg["alpha"]] if cfg["alpha"] is not None else list(PRESET_COMMON["alphas"])
    sweep = len(alphas) > 1
    inclusion = PRESETS[cfg["preset"]]["inclusion"]
    u0_fn = recon.disk_inclusion(inclusion["center"], inclusion["radius"], inclusion["value"])

    def solve_one(a):
        model = build_pat_model(
            nx=int(cfg["nx"]),
            lower=PRESET_COMMON["lower"],
            upper=PRESET_COMMON["upper"],
            sigma_radius=PRESET_COMMON["sigma_radius"],
            n_steps=int(cfg["n_steps"]),
            t_final=PRESET_COMMON["t_final"],
            alpha=a,
            c_squared=PRESET_COMMON["c_squared"],
            b_damping=PRESET_COMMON["b_damping"],
            scheme=cfg["scheme"],
        )
        data = recon.generate_data(model, u0_fn, int(cfg["fine_factor"]),
                                   float(cfg["delta"]), int(cfg["seed"]))
        gamma, rho = _resolve_prior(cfg["preset"], a, cfg)
        prior = recon.BiLaplacianPrior(gamma, rho, model.mass_omega, model.stiffness_omega)
        settings = recon.OptimizerSettings(max_iter=int(cfg["max_iter"]),
                                           grad_tol=float(cfg["grad_tol"]),
                                           method=cfg["method"])
        problem = recon.ReconProblem(model, data.trace, data.noise_sigma, prior,
                                     settings=settings)
        u_rec, records = recon.minimize(problem)
        return model, data, (gamma, rho), u_rec, records

    # sweep members are independent problems; solve them concurrently but
    # emit files in fixed alpha order so outputs stay deterministic
    if sweep:
        from concurrent.futures import ThreadPoolExecutor

        workers = int(os.environ.get("FRACWAVE_THREADS", "0")) or min(len(alphas), os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve_one, [float(a) for a in alphas]))
    else:
        solved = [solve_one(float(alphas[0]))]

    trend_rows = []
    for a, (model, data, (gamma, rho), u_rec, records) in zip(map(float, alphas), solved):
        tag = f"_alpha{a:g}".replace(".", "p") if sweep else ""
        pts = model.mesh.points
        u_true_nodal = np.asarray(u0_fn(pts[:, 0], pts[:, 1]), dtype=float)
        u_true_nodal[model.mesh.boundary] = 0.0
        u_rec_full = model.embed(u_rec)
        fem.save_field_csv(model.mesh, u_true_nodal, ctx.path(f"u0_true{tag}.csv"))
        fem.save_field_csv(model.mesh, u_rec_full, ctx.path(f"u0_rec{tag}.csv"))
        plots.field_figure(model.mesh, u_true_nodal, ctx.path(f"u0_true{tag}.png"),
                           title=f"true initial pressure (alpha={a:g})", sampler=model.sampler)
        plots.field_figure(model.mesh, u_rec_full, ctx.path(f"u0_rec{tag}.png"),
                           title=f"reconstruction (alpha={a:g}, gamma={gamma:g}, rho={rho:g})",
                           sampler=model.sampler)

        times = model.grid.times
        header = ["t"] + [f"sigma_{k:03d}" for k in range(model.sampler.n_nodes)]
        rows = [(float(times[n]), *data.trace.values[:, n].astype(float)) for n in range(len(times))]
        _write_csv(ctx.path(f"trace{tag}.csv"), header, rows)
        plots.trace_figure(times, data.trace.values, ctx.path(f"trace{tag}.png"))

        _write_csv(ctx.path(f"iterations{tag}.csv"),
                   ["iter", "cost", "misfit", "grad_norm", "step"],
                   [(r.iteration, r.cost, r.misfit, r.grad_norm, r.step) for r in records])
        plots.curves_figure([r.iteration for r in records],
                            [("cost", [r.cost for r in records]),
                             ("misfit", [r.misfit for r in records])],
                            ctx.path(f"iterations{tag}.png"), xlabel="iteration", logy=True)

        err = None
        u_true_omega = model.restrict(u_true_nodal)
        denom = np.linalg.norm(u_true_omega)
        if denom > 0:
            err = float(np.linalg.norm(u_rec - u_true_omega) / denom)
        trend_rows.append((a, gamma, rho, records[-1].cost, records[-1].misfit,
                           records[-1].grad_norm, err if err is not None else np.nan))
        ctx.write_manifest()

    _write_csv(ctx.path("alpha_trend.csv"),
               ["alpha", "gamma", "rho", "final_cost", "final_misfit", "final_grad_norm",
                "rel_l2_error"], trend_rows)
    ctx.finish(alphas=[float(a) for a in alphas])
    for row in trend_rows:
        print(f"alpha={row[0]:g}: final misfit {row[4]:.6g}, rel error {row[6]:.4f}")
    return 0


def cmd_convergence(args):
    defaults = {"levels": 4, "dt0": 0.08, "t_final": 4.0, "family": "relaxation",
                "scheme": "galerkin"}
    cfg = _load_config(args, defaults)
    ctx = RunContext(args.out, "convergence", cfg)
    dts = [cfg["dt0"] / 2**k for k in range(int(cfg["levels"]))]
    report = verification.convergence_study(cfg["family"], dts, cfg["t_final"], cfg["scheme"])
    _write_csv(ctx.path("convergence.csv"),
               ["dt", "energy_error", "velocity_error", "displacement_error", "max_error"],
               list(report.rows()))
    plots.loglog_figure(dts, [("energy error", report.energy_errors),
                              ("max displacement error", report.max_errors)],
                        ctx.path("convergence.png"), order_guides=(2.0,))
    ctx.finish(fitted_order=report.fitted_order)
    print(f"fitted order ({cfg['family']}): {report.fitted_order:.3f}")
    return 0


def cmd_lemmas(args):
    defaults = {"trials": 100, "seed": 0}
    cfg = _load_config(args, defaults)
    ctx = RunContext(args.out, "lemmas", cfg)
    rows = verification.lemma_suite(int(cfg["trials"]), int(cfg["seed"]))
    out_rows = []
    n_fail = 0
    for trial, lemma, value, scale in rows:
        tol = 1e-12 * scale
        ok = (abs(value) <= tol) if lemma == 1 else (value >= -tol)
        n_fail += not ok
        out_rows.append((trial, lemma, value, scale, tol, "pass" if ok else "FAIL"))
    _write_csv(ctx.path("lemmas.csv"),
               ["trial", "lemma", "gap_or_slack", "scale", "tolerance", "result"], out_rows)
    coe = verification.coercivity_suite()
    coe_fail = sum(1 for r in coe if r["min_eig"] < -1e-12 * r["scale"])
    _write_csv(ctx.path("coercivity.csv"), ["J", "alpha", "min_eig", "scale"],
               [(r["J"], r["alpha"], r["min_eig"], r["scale"]) for r in coe])
    with open(ctx.path("summary.txt"), "w") as fh:
        fh.write(f"lemma identity/bound checks: {len(out_rows)} runs, {n_fail} failures\n")
        fh.write(f"coercivity checks: {len(coe)} matrices, {coe_fail} failures\n")
        for r in coe:
            fh.write(f"  J={r['J']} alpha={r['alpha']}: min_eig={r['min_eig']:.3e}\n")
    status = "ok" if n_fail == 0 and coe_fail == 0 else "failed"
    ctx.finish(status=status, lemma_failures=n_fail, coercivity_failures=coe_fail)
    print(f"lemmas: {n_fail} failures; coercivity: {coe_fail} failures")
    return 0 if status == "ok" else 1


def _add_common(sub):
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--out", default="out", help="output directory")


def main(argv=None):
    if os.environ.get("FRACWAVE_THREADS"):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, os.environ["FRACWAVE_THREADS"])

    parser = argparse.ArgumentParser(prog="fracwave", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("forward", help="2D forward run with snapshot dumps")
    _add_common(p)
    p.add_argument("--nx", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--scheme", choices=["galerkin", "l1"])
    p.add_argument("--c-squared", dest="c_squared", type=float)
    p.add_argument("--b-damping", dest="b_damping", type=float)
    p.add_argument("--vtk", action="store_const", const=True)
    p.set_defaults(func=cmd_forward)

    p = subs.add_parser("oracle-compare", help="scheme vs closed-form relaxation solution")
    _add_common(p)
    p.add_argument("--dt", type=float)
    p.add_argument("--T", dest="t_final", type=float)
    p.add_argument("--scheme", choices=["galerkin", "l1"])
    p.set_defaults(func=cmd_oracle_compare)

    p = subs.add_parser("gradient-check", help="adjoint gradient vs central differences")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["exact", "pde"])
    p.set_defaults(func=cmd_gradient_check)

    p = subs.add_parser("reconstruct", help="MAP reconstruction from noisy traces")
    _add_common(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--alpha", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--time-preset", dest="time_preset",
                   choices=["default", "paper-replication"])
    p.add_argument("--fine-factor", dest="fine_factor", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--scheme", choices=["galerkin", "l1"])
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--method", choices=["lbfgs", "gd"])
    p.set_defaults(func=cmd_reconstruct)

    p = subs.add_parser("convergence", help="time-refinement order study")
    _add_common(p)
    p.add_argument("--levels", type=int)
    p.add_argument("--dt0", type=float)
    p.add_argument("--family", choices=["relaxation", "undamped"])
    p.add_argument("--scheme", choices=["galerkin", "l1"])
    p.set_defaults(func=cmd_convergence)

    p = subs.add_parser("lemmas", help="summation identities and coercivity checks")
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_lemmas)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        # leave a structured record for scripted callers, then fail loudly
        try:
            with open(os.path.join(args.out, "manifest.json")) as fh:
                manifest = json.load(fh)
        except Exception:
            manifest = {"command": args.command, "version": __version__}
        manifest["status"] = "error"
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
