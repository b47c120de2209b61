"""Command-line entry points.

Exit codes: 0 on success, 1 on validation errors (bad inputs or
configuration), 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from .density import INTENSITY, eval_kde, fit_kde
from .errors import NumericalError, ValidationError
from .geometry import (CovariateField, build_integration_grid, build_knots,
                       load_window, window_to_dict)
from .gp import GPParams, fix_phi
from .inference import (build_case_nhpp_model, build_case_parametric_model,
                        build_shared_model, diagnostics, ess, fit_logistic,
                        mcse, run_mcmc, summarize, waic)
from .io import (RunConfig, load_config, load_events, save_grid_table,
                 save_pattern, write_config_echo, write_json)
from .model import logistic_design, pp_weights
from .reproduce import render_report, reproduce_table
from .simulate import (LAMBDA_MAX_SAFETY, IntensitySpec, shared_weights,
                       simulate_by_thinning, simulate_case_control,
                       simulate_shared_pair)
from . import __version__


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _resolved_config(args) -> RunConfig:
    config = load_config(args.config)
    updates = {}
    if getattr(args, "model", None):
        updates["model"] = args.model.replace("-", "_")
    if getattr(args, "window", None):
        updates["window"] = args.window
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    return dataclasses.replace(config, **updates) if updates else config


def _window_and_grid(config: RunConfig):
    covs = {k: tuple(v) for k, v in config.window_covariates.items()}
    window = load_window(config.window, seed=config.window_seed,
                         covariates=covs or None)
    config.validate_against(window)
    grid = build_integration_grid(window, config.grid_size)
    return window, CovariateField(window), grid


def _save_chain(chain, path: str) -> None:
    save_grid_table(path, dict(zip(chain.names, chain.draws.T)))


def _load_chain(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        draws = np.array([[float(v) for v in row] for row in reader])
    if draws.size == 0:
        raise ValidationError(f"{path}: chain has no draws")
    return names, draws


def cmd_simulate(args) -> None:
    config = _resolved_config(args)
    out = _ensure_dir(args.out)
    window, field, grid = _window_and_grid(config)
    truth = config.truth
    if not truth:
        raise ValidationError("simulate needs a 'truth' section in the config")
    if config.model == "shared":
        spec = IntensitySpec(
            beta1=truth["beta1"], beta2=truth["beta2"],
            cols1=config.cols1, cols2=config.cols2, delta=truth["delta"],
            gp=GPParams(truth["sigma"], truth.get("phi") or fix_phi(grid.nodes)),
            weighting=config.weighting)
        sim = simulate_shared_pair(window, field, spec, None, grid, config.seed)
        save_pattern(sim.pattern1, os.path.join(out, "events1.csv"))
        save_pattern(sim.pattern2, os.path.join(out, "events2.csv"))
        save_grid_table(os.path.join(out, "shared_truth.csv"),
                        {"x": grid.nodes[:, 0], "y": grid.nodes[:, 1],
                         "shared": sim.gp_at_nodes})
        counts = {"events1": len(sim.pattern1), "events2": len(sim.pattern2)}
    elif config.model == "nhpp":
        betas = np.asarray(truth["betas"], dtype=float)
        cols = truth.get("cols", config.cols1)
        idx = [field.names.index(c) for c in cols]
        if len(betas) != len(cols) + 1:
            raise ValidationError("nhpp truth needs an intercept plus one "
                                  "coefficient per covariate")

        def intensity(points):
            z = field.at(points)
            return np.exp(betas[0] + z[:, idx] @ betas[1:])

        lam_max = intensity(grid.nodes).max() * LAMBDA_MAX_SAFETY
        pat = simulate_by_thinning(window, intensity, lam_max, config.seed,
                                   grid=grid)
        save_pattern(pat, os.path.join(out, "events1.csv"))
        counts = {"events1": len(pat)}
    else:
        control, case = simulate_case_control(
            window, field, truth["control_betas"], truth["case_betas"],
            seed=config.seed, control_cols=config.cols2 or None,
            case_cols=config.cols1 or None, grid=grid)
        save_pattern(case, os.path.join(out, "events1.csv"))
        save_pattern(control, os.path.join(out, "events2.csv"))
        counts = {"events1": len(case), "events2": len(control)}
    write_json(window_to_dict(window), os.path.join(out, "window.json"))
    write_config_echo(config, out)
    write_json(counts, os.path.join(out, "counts.json"))
    print(f"wrote {out}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def cmd_kde(args) -> None:
    window = load_window(args.window) if args.window else None
    loaded = load_events(args.events, window)
    if args.bandwidth in (None, "auto"):
        bandwidth = None
    else:
        try:
            bandwidth = float(args.bandwidth)
        except ValueError:
            raise ValidationError(f"bandwidth must be a number or 'auto', "
                                  f"got {args.bandwidth!r}")
    est = fit_kde(loaded.pattern, bandwidth)
    if window is not None:
        nodes = build_integration_grid(window, args.grid).nodes
    else:
        pts = loaded.pattern.points
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        side = int(np.ceil(np.sqrt(args.grid)))
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], side),
                             np.linspace(lo[1], hi[1], side))
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
    values = eval_kde(est, nodes)
    parent = os.path.dirname(os.path.abspath(args.out))
    _ensure_dir(parent)
    save_grid_table(args.out, {"x": nodes[:, 0], "y": nodes[:, 1],
                               "value": values})
    print(f"wrote {args.out} ({loaded.report()}, "
          f"bandwidth {est.bandwidth:.6g})")


def _fit_logistic_route(config, field, pat1, pat2, out):
    if pat2 is None:
        raise ValidationError("logistic regression needs --events2 (controls)")
    labels, design = logistic_design(pat1, pat2, field,
                                     config.cols1 or None)
    fit = fit_logistic(design, labels)
    names = ["b0"] + [f"beta_{c}" for c in (config.cols1 or field.names)]
    params = dict(zip(names, fit.params.values()))
    summary = dataclasses.replace(fit, params=params)
    write_json(summary.to_dict(), os.path.join(out, "summary.json"))
    return summary


def _build_model(config: RunConfig, field, grid, pat1, pat2, bandwidth):
    if config.model == "shared":
        knots = build_knots(field.window, config.knots)
        if pat2 is None:
            raise ValidationError("the shared model needs --events2")
        return build_shared_model((pat1, pat2), field, grid, knots,
                                  config.cols1, config.cols2,
                                  weighting=config.weighting,
                                  priors=config.priors)
    if config.model == "case_parametric":
        if pat2 is None:
            raise ValidationError("the parametric case-control model needs "
                                  "--events2 (controls)")
        return build_case_parametric_model(pat2, pat1, field, grid,
                                           config.cols1, config.cols2,
                                           priors=config.priors)
    if config.model == "case_nhpp":
        # plug-in baseline estimated from the control events
        if pat2 is None:
            raise ValidationError("the plug-in baseline model needs "
                                  "--events2 (controls)")
        kde = fit_kde(pat2, bandwidth)
        model = build_case_nhpp_model(pat1, field, grid, kde, config.cols1,
                                      priors=config.priors)
        model.kde = kde
        return model
    raise ValidationError(
        f"model {config.model!r} cannot be fitted; choose one of "
        "logistic, case-nhpp, case-parametric, shared")


def cmd_fit(args) -> None:
    config = _resolved_config(args)
    out = _ensure_dir(args.out)
    window, field, grid = _window_and_grid(config)
    pat1 = load_events(args.events1, window).pattern
    pat2 = load_events(args.events2, window).pattern if args.events2 else None
    write_json(window_to_dict(window), os.path.join(out, "window.json"))
    write_config_echo(config, out)
    save_pattern(pat1, os.path.join(out, "events1.csv"))
    if pat2 is not None:
        save_pattern(pat2, os.path.join(out, "events2.csv"))

    if config.model == "logistic":
        summary = _fit_logistic_route(config, field, pat1, pat2, out)
        chain = None
    else:
        model = _build_model(config, field, grid, pat1, pat2, args.bandwidth)
        chain = run_mcmc(model, config.mcmc)
        score = {}
        if model.pointwise is not None and len(chain.draws) >= 100:
            score["waic"] = waic(model.pointwise(chain.draws))
        summary = summarize(chain, score)
        _save_chain(chain, os.path.join(out, "chain.csv"))
        write_json(summary.to_dict(), os.path.join(out, "summary.json"))
        write_json(diagnostics(chain), os.path.join(out, "diagnostics.json"))

    lines = [f"{name:<22}{p.point:>12.5g}  ({p.lower:.5g}, {p.upper:.5g})"
             for name, p in summary.params.items()]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    if chain is not None:
        for warning in chain.warnings():
            print(f"warning: {warning}", file=sys.stderr)


def cmd_diagnose(args) -> None:
    names, draws = _load_chain(args.chain)
    report = {"draws": len(draws), "ess": {}, "mcse": {}}
    for j, name in enumerate(names):
        report["ess"][name] = ess(draws[:, j])
        report["mcse"][name] = mcse(draws[:, j])
    if args.out:
        _ensure_dir(args.out)
        write_json(report, os.path.join(args.out, "diagnostics.json"))
    for name in names:
        print(f"{name:<22} ess {report['ess'][name]:>10.1f}   "
              f"mcse {report['mcse'][name]:.3g}")


def cmd_predict_grid(args) -> None:
    fit_dir = args.fit
    config = load_config(os.path.join(fit_dir, "config.json"))
    out = _ensure_dir(args.out)
    window, field, grid = _window_and_grid(config)
    names, draws = _load_chain(os.path.join(fit_dir, "chain.csv"))
    mean = dict(zip(names, draws.mean(axis=0)))
    nodes = grid.nodes
    shared = np.full(grid.n, np.nan)
    if config.model == "shared":
        knots = build_knots(window, config.knots)
        ev1 = load_events(os.path.join(fit_dir, "events1.csv"), window).pattern
        ev2 = load_events(os.path.join(fit_dir, "events2.csv"), window).pattern
        phi = fix_phi(np.vstack([ev1.points, ev2.points]))
        w_grid = pp_weights(knots, nodes, GPParams(1.0, phi))
        vcols = [names.index(f"knot_{i}") for i in range(knots.count)]
        shared = w_grid @ draws[:, vcols].mean(axis=0)
        w1, w2 = shared_weights(config.weighting, mean["delta"])
        z = field.at(nodes)
        b1 = np.array([mean[f"beta1_{c}"] for c in config.cols1])
        b2 = np.array([mean[f"beta2_{c}"] for c in config.cols2])
        i1 = [field.names.index(c) for c in config.cols1]
        i2 = [field.names.index(c) for c in config.cols2]
        lam1 = np.exp(w1 * shared + z[:, i1] @ b1)
        lam2 = np.exp(w2 * shared + mean["beta2_0"] + z[:, i2] @ b2)
    elif config.model == "case_parametric":
        z = field.at(nodes)
        bk = np.array([mean[f"beta_{c}"] for c in config.cols1])
        bc = np.array([mean[f"beta_control_{c}"] for c in config.cols2])
        ik = [field.names.index(c) for c in config.cols1]
        ic = [field.names.index(c) for c in config.cols2]
        lam2 = np.exp(mean["b0_control"] + z[:, ic] @ bc)
        lam1 = np.exp(mean["b0_sum"] + z[:, ik] @ bk + z[:, ic] @ bc)
    elif config.model == "case_nhpp":
        # baseline KDE refit from the stored control events
        controls = load_events(os.path.join(fit_dir, "events2.csv"),
                               window).pattern
        kde = fit_kde(controls, args.bandwidth)
        base = eval_kde(kde, nodes, INTENSITY)
        z = field.at(nodes)
        beta = np.array([mean[f"beta_{c}"] for c in config.cols1])
        idx = [field.names.index(c) for c in config.cols1]
        lam2 = base
        lam1 = base * np.exp(mean["alpha"] + z[:, idx] @ beta)
    else:
        raise ValidationError(f"predict-grid does not support model "
                              f"{config.model!r}")
    save_grid_table(os.path.join(out, "predict.csv"),
                    {"x": nodes[:, 0], "y": nodes[:, 1],
                     "lambda1": lam1, "lambda2": lam2, "shared": shared})
    print(f"wrote {out}/predict.csv ({grid.n} nodes)")


def cmd_reproduce(args) -> None:
    report = reproduce_table(args.table, seed=args.seed,
                             replicates=args.replicates)
    text = render_report(report)
    if args.out:
        _ensure_dir(args.out)
        write_json(report, os.path.join(args.out, "report.json"))
        with open(os.path.join(args.out, "report.txt"), "w") as fh:
            fh.write(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppshare",
        description="Simulate and fit bivariate spatial point-process models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate event patterns from a config")
    p.add_argument("--model", choices=["nhpp", "case-control", "shared"],
                   default=None, help="override the config's model kind")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's simulation seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kde", help="kernel intensity estimate of an event file")
    p.add_argument("--events", required=True)
    p.add_argument("--bandwidth", default="auto",
                   help="kernel bandwidth, a number or 'auto'")
    p.add_argument("--window", default=None)
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("fit", help="fit a model to event files")
    p.add_argument("--model",
                   choices=["logistic", "case-nhpp", "case-parametric",
                            "shared"],
                   default=None, help="override the config's model kind")
    p.add_argument("--events1", required=True,
                   help="process-1 (case) events CSV")
    p.add_argument("--events2", default=None,
                   help="process-2 (control) events CSV")
    p.add_argument("--window", default=None,
                   help="override the config's window spec")
    p.add_argument("--config", required=True)
    p.add_argument("--bandwidth", type=float, default=None,
                   help="KDE bandwidth for the plug-in baseline model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="ESS and MCSE of a saved chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("predict-grid",
                       help="fitted intensities on the integration grid")
    p.add_argument("--fit", required=True, help="directory written by fit")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_grid)

    p = sub.add_parser("reproduce",
                       help="rerun a simulated recovery study end to end")
    p.add_argument("--table", required=True, choices=["1", "2", "3"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; 2 means
        return 0 if exc.code in (0, None) else 1  # numerical failure here
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
