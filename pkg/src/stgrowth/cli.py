"""Command-line front end: fit, simulate, predict, evaluate, summarize, plot.

All commands write under a single output directory and are deterministic:
the same options and seed give byte-identical artifacts.  ``fit`` emits
``run_config.json``, ``panel.csv``, ``graph.csv``, ``holdout.json`` (when
masking), ``draws.csv`` (one row per retained draw, columns named like the
summary), ``summary.json``, ``metrics.json``, and ``sampler_log.jsonl``;
downstream commands reload those files rather than refitting.  On any failure
after writing has begun a ``FAILED`` marker lands in the output directory and
the exit code is nonzero.

Options may come from flags or from a JSON config file (``--config``); any
flag given explicitly overrides the file.  Data or graph paths of the form
``bundled:<name>`` resolve to files shipped with the package.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .datapipe import (
    WAVE1,
    WAVE2,
    HoldoutMask,
    aggregate_weekly,
    apply_holdout,
    bundled_path,
    load_daily_csv,
    load_panel_csv,
    make_holdout,
    simulate_panel,
    write_panel_csv,
)
from .gmrf import CarArState
from .graph import (
    disconnected_graph,
    load_graph_csv,
    ring_graph,
    write_graph_csv,
)
from .inference import (
    coverage_piw_rmse,
    fit_model,
    loo,
    predictive_from_constrained,
    summary_records,
    waic,
)
from .model import (
    FORMULA_EXACT,
    FORMULA_FLAT,
    FORMULA_LINEARIZED,
    CountPanel,
    ModelSpec,
    ParamBlock,
    ParamLayout,
    loglik_from_draws,
)
from .richards import RichardsParams, trend_values
from .sampler import NutsConfig

__all__ = ["main", "build_parser"]

_FORMULAS = {"linear": FORMULA_LINEARIZED, "exact": FORMULA_EXACT, "flat": FORMULA_FLAT}

FIT_DEFAULTS = {
    "data": None,
    "graph": None,
    "model": None,  # inferred: m1 when --graph given, else m0
    "trend": "common",
    "formula": "linear",
    "wave": 1,
    "chains": 2,
    "iter": 1500,
    "warmup": 500,
    "seed": 2020,
    "holdout": 0.15,
    "out": None,
    "progress": False,
}

SIMULATE_DEFAULTS = {
    "regions": 6,
    "times": 20,
    "seed": 2020,
    "graph": None,  # default: ring
    "alpha": 0.8,
    "rho": 0.85,
    "tau": 4.0,
    "b": 0.05,
    "r": 23.0,
    "h": 0.62,
    "p": None,  # default 0.4 * times
    "s": 7.8,
    "out": None,
}


class CliError(Exception):
    """User-facing input or state problem; message printed without traceback."""


def _resolve_path(p: str) -> str:
    if isinstance(p, str) and p.startswith("bundled:"):
        return bundled_path(p[len("bundled:"):])
    return p


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    opts = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            file_vals = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config file {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {config_path} is not valid JSON: {exc}") from exc
        unknown = set(file_vals) - set(defaults)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        opts.update(file_vals)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            opts[key] = val
    return opts


def _load_panel(opts: dict) -> CountPanel:
    path = _resolve_path(opts["data"])
    if not path:
        raise CliError("--data is required")
    if not os.path.exists(path):
        raise CliError(f"data file not found: {path}")
    cols = set(pd.read_csv(path, nrows=0).columns)
    if {"region", "week", "count", "population"} <= cols:
        return load_panel_csv(path)
    if {"data", "denominazione_regione", "totale_casi", "tamponi"} <= cols:
        window = {1: WAVE1, 2: WAVE2}[int(opts["wave"])]
        return aggregate_weekly(load_daily_csv(path), window)
    raise CliError(f"unrecognized data schema in {path}")


def _resolve_graph(opts: dict, n_regions: int):
    model = opts["model"] or ("m1" if opts.get("graph") else "m0")
    if model not in ("m0", "m1", "m2"):
        raise CliError(f"unknown model {model!r} (choose m0, m1, or m2)")
    if model == "m0":
        return model, disconnected_graph(n_regions)
    path = _resolve_path(opts.get("graph"))
    if not path:
        raise CliError(f"model {model} requires --graph")
    if not os.path.exists(path):
        raise CliError(f"graph file not found: {path}")
    # m1 uses binary adjacency; m2 keeps the weights as given
    graph = load_graph_csv(path, binarize=(model == "m1"), n_regions=n_regions)
    if graph.n_regions != n_regions:
        raise CliError(
            f"graph has {graph.n_regions} regions, data has {n_regions}"
        )
    return model, graph


def _build_spec(panel: CountPanel, opts: dict) -> ModelSpec:
    formula = opts["formula"]
    if formula not in _FORMULAS:
        raise CliError(f"unknown formula {formula!r} (choose linear or exact)")
    if opts["trend"] not in ("common", "regional"):
        raise CliError(f"unknown trend {opts['trend']!r} (choose common or regional)")
    return ModelSpec(
        n_regions=panel.n_regions,
        n_times=panel.n_times,
        trend_mode=opts["trend"],
        trend_formula=_FORMULAS[formula],
        n_covariates=panel.n_covariates,
    )


def _constrained_from_table(df: pd.DataFrame, spec: ModelSpec) -> dict[str, np.ndarray]:
    """Rebuild the constrained draw dictionary from a draws.csv table."""
    names = ParamLayout(spec).names()
    missing = [n for n in names if n not in df.columns]
    if missing:
        raise CliError(f"draws table is missing columns like {missing[0]!r}")
    arr = df[names].to_numpy(dtype=float)
    s = arr.shape[0]
    nb = spec.n_trend_blocks
    gam = arr[:, : 5 * nb].reshape(s, nb, 5)
    k = spec.n_covariates
    base = 5 * nb
    return {
        "b": gam[:, :, 0], "r": gam[:, :, 1], "h": gam[:, :, 2],
        "p": gam[:, :, 3], "s": gam[:, :, 4],
        "beta": arr[:, base: base + k],
        "alpha": arr[:, base + k],
        "rho": arr[:, base + k + 1],
        "tau": arr[:, base + k + 2],
        "phi": arr[:, base + k + 3:].reshape(s, spec.n_times, spec.n_regions),
    }


def _predictive(cd, panel, spec, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    return predictive_from_constrained(cd, panel, spec, rng)


def _metrics_payload(panel, fit_panel, spec, cd, holdout, seed,
                     divergences: int) -> dict:
    pred = _predictive(cd, panel, spec, seed)
    coverage = piw = rmse = None
    if holdout is not None:
        mask = holdout.bool_matrix(panel.n_regions, panel.n_times)
        coverage, piw, rmse = coverage_piw_rmse(pred, panel, mask)
    ll_obs = loglik_from_draws(cd, fit_panel, spec)[:, fit_panel.observed]
    loo_val, _, khats = loo(ll_obs, return_detail=True)
    khat_max = float(np.nanmax(khats)) if np.any(np.isfinite(khats)) else None
    return {
        "coverage": coverage,
        "piw": piw,
        "rmse": rmse,
        "waic": waic(ll_obs),
        "loo": loo_val,
        "khat_max": khat_max,
        "divergences": int(divergences),
        "n_heldout": int(holdout.n_masked) if holdout is not None else 0,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _prepare_out(opts: dict) -> Path:
    if not opts.get("out"):
        raise CliError("--out is required")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    return out


def cmd_fit(opts: dict) -> int:
    out = _prepare_out(opts)
    panel = _load_panel(opts)
    model, graph = _resolve_graph(opts, panel.n_regions)
    opts = dict(opts, model=model)

    holdout = None
    fit_panel = panel
    if float(opts["holdout"]) > 0:
        holdout = make_holdout(panel, float(opts["holdout"]), seed=int(opts["seed"]))
        fit_panel = apply_holdout(panel, holdout)

    spec = _build_spec(panel, opts)
    config = NutsConfig(
        n_chains=int(opts["chains"]), n_iter=int(opts["iter"]),
        n_warmup=int(opts["warmup"]), seed=int(opts["seed"]),
        progress=bool(opts["progress"]),
    )
    n_workers = int(os.environ.get("STGROWTH_WORKERS", "1"))
    fit = fit_model(fit_panel, spec, graph, config, n_workers=n_workers,
                    log_path=out / "sampler_log.jsonl")

    write_panel_csv(panel, out / "panel.csv")
    write_graph_csv(graph, out / "graph.csv", names=list(panel.regions))
    if holdout is not None:
        _write_json(out / "holdout.json", holdout.to_dict())
    flat = fit.constrained.reshape(-1, fit.constrained.shape[2])
    pd.DataFrame(flat, columns=fit.names).to_csv(out / "draws.csv", index=False)
    _write_json(out / "summary.json", summary_records(fit))

    cd = _constrained_from_table(pd.read_csv(out / "draws.csv"), spec)
    metrics = _metrics_payload(panel, fit_panel, spec, cd, holdout,
                               int(opts["seed"]), fit.divergences)
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "run_config.json", {
        "command": "fit",
        "options": {k: opts[k] for k in FIT_DEFAULTS},
        "n_regions": panel.n_regions,
        "n_times": panel.n_times,
        "n_covariates": panel.n_covariates,
        "n_chains": config.n_chains,
        "n_kept": config.n_kept,
        "param_names": fit.names,
    })
    div = metrics["divergences"]
    print(f"fit complete: {config.n_chains} chains x {config.n_kept} draws, "
          f"{div} divergent; WAIC {metrics['waic']:.1f}, LOO {metrics['loo']:.1f}")
    if holdout is not None:
        print(f"holdout coverage {metrics['coverage']:.3f}, "
              f"PIW {metrics['piw']:.1f}, RMSE {metrics['rmse']:.1f}")
    return 0


def _load_fit_dir(opts: dict):
    out = Path(opts["out"] or "")
    rc_path = out / "run_config.json"
    if not rc_path.exists():
        raise CliError(f"no fit artifacts under {out or '.'}: missing run_config.json")
    rc = json.loads(rc_path.read_text())
    panel = load_panel_csv(out / "panel.csv")
    if panel.n_covariates != rc["n_covariates"]:
        raise CliError("panel.csv no longer matches the fitted covariate count")
    fit_opts = rc["options"]
    spec = _build_spec(panel, fit_opts)
    cd = _constrained_from_table(pd.read_csv(out / "draws.csv"), spec)
    holdout = None
    if (out / "holdout.json").exists():
        holdout = HoldoutMask.from_dict(json.loads((out / "holdout.json").read_text()))
    return out, rc, panel, spec, cd, holdout


def cmd_evaluate(opts: dict) -> int:
    out, rc, panel, spec, cd, holdout = _load_fit_dir(opts)
    if holdout is None or holdout.n_masked == 0:
        raise CliError("this fit has no held-out cells to evaluate")
    fit_panel = apply_holdout(panel, holdout)
    summary = json.loads((out / "summary.json").read_text())
    metrics = _metrics_payload(panel, fit_panel, spec, cd, holdout,
                               int(rc["options"]["seed"]), summary["divergences"])
    _write_json(out / "metrics.json", metrics)
    print(json.dumps(metrics, indent=2))
    return 0


def cmd_predict(opts: dict) -> int:
    out, rc, panel, spec, cd, holdout = _load_fit_dir(opts)
    pred = _predictive(cd, panel, spec, int(rc["options"]["seed"]))
    lo, hi = pred.interval(0.95)
    mean = pred.mu.mean(axis=0)
    observed = np.ones((panel.n_regions, panel.n_times), dtype=bool)
    if holdout is not None:
        observed = ~holdout.bool_matrix(panel.n_regions, panel.n_times)
    rows = []
    for gi, region in enumerate(panel.regions):
        for ti, week in enumerate(panel.weeks):
            rows.append((
                region, week, int(panel.y[gi, ti]), bool(observed[gi, ti]),
                mean[gi, ti], lo[gi, ti], hi[gi, ti],
            ))
    df = pd.DataFrame(rows, columns=[
        "region", "week", "count", "observed", "pred_mean", "pred_q2.5", "pred_q97.5",
    ])
    df.to_csv(out / "predicted.csv", index=False)
    print(f"wrote {out / 'predicted.csv'} ({len(df)} cells)")
    return 0


def cmd_summarize(opts: dict) -> int:
    out, rc, panel, spec, cd, holdout = _load_fit_dir(opts)
    summary = json.loads((out / "summary.json").read_text())
    rows = [r for r in summary["params"] if not r["name"].startswith(("phi[", "lam["))]
    header = f"{'param':>10} {'mean':>10} {'sd':>10} {'q2.5':>10} {'q97.5':>10} {'rhat':>7} {'ess':>8}"
    print(header)
    print("-" * len(header))
    for r in rows:
        rhat = f"{r['rhat']:.3f}" if r["rhat"] is not None else "nan"
        ess = f"{r['ess_bulk']:.0f}" if r["ess_bulk"] is not None else "nan"
        print(f"{r['name']:>10} {r['mean']:>10.4g} {r['sd']:>10.4g} "
              f"{r['q2.5']:>10.4g} {r['q97.5']:>10.4g} {rhat:>7} {ess:>8}")
    all_rhat = [r["rhat"] for r in summary["params"] if r["rhat"] is not None]
    all_ess = [r["ess_bulk"] for r in summary["params"] if r["ess_bulk"] is not None]
    if all_rhat:
        print(f"\nmax rhat {max(all_rhat):.3f}, min bulk ESS {min(all_ess):.0f} "
              f"over {len(summary['params'])} quantities")
    print(f"divergences: {summary['divergences']}")
    return 0


def cmd_plot(opts: dict) -> int:
    from . import plots

    out, rc, panel, spec, cd, holdout = _load_fit_dir(opts)
    lam = trend_values(
        cd["b"][:, :, None], cd["r"][:, :, None], cd["h"][:, :, None],
        cd["p"][:, :, None], cd["s"][:, :, None],
        spec.t_grid()[None, None, :], spec.trend_formula,
    )
    plots.save_trend_plot(
        lam[:, 0, :] if spec.n_trend_blocks == 1 else lam,
        out / "trend_curve.svg", week_labels=panel.weeks,
        block_labels=None if spec.n_trend_blocks == 1 else panel.regions,
    )
    plots.save_phi_heatmap(cd["phi"].mean(axis=0), out / "phi_heatmap.svg",
                           regions=panel.regions)
    show_panel = panel
    if holdout is not None:
        show_panel = apply_holdout(panel, holdout)
    pred = _predictive(cd, panel, spec, int(rc["options"]["seed"]))
    plots.save_region_fit_plot(show_panel, pred, out / "region_fits.svg")
    for name in ("trend_curve.svg", "phi_heatmap.svg", "region_fits.svg"):
        print(f"wrote {out / name}")
    return 0


def cmd_simulate(opts: dict) -> int:
    out = _prepare_out(opts)
    g_n, t_n = int(opts["regions"]), int(opts["times"])
    seed = int(opts["seed"])
    if opts.get("graph"):
        graph = load_graph_csv(_resolve_path(opts["graph"]), n_regions=g_n)
    else:
        graph = ring_graph(g_n)
    if graph.n_regions != g_n:
        raise CliError(f"graph has {graph.n_regions} regions, asked for {g_n}")
    p = float(opts["p"]) if opts["p"] is not None else 0.4 * t_n
    gamma = RichardsParams(b=float(opts["b"]), r=float(opts["r"]),
                           h=float(opts["h"]), p=p, s=float(opts["s"]))
    spec = ModelSpec(n_regions=g_n, n_times=t_n)
    car = CarArState(phi=np.zeros((t_n, g_n)), alpha=float(opts["alpha"]),
                     rho=float(opts["rho"]), tau=float(opts["tau"]))
    params = ParamBlock(gamma=[gamma], beta=np.zeros(0), car=car)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    panel = simulate_panel(params, spec, graph, rng,
                           offset_log=np.full(g_n, np.log(2.0)))
    write_panel_csv(panel, out / "panel.csv")
    write_graph_csv(graph, out / "graph.csv", names=list(panel.regions))
    _write_json(out / "truth.json", {
        "gamma": {"b": gamma.b, "r": gamma.r, "h": gamma.h, "p": gamma.p, "s": gamma.s},
        "alpha": car.alpha, "rho": car.rho, "tau": car.tau,
        "phi": np.asarray(panel.phi_true).tolist(),
        "seed": seed,
    })
    print(f"simulated {g_n} regions x {t_n} weeks into {out}")
    return 0


COMMANDS = {
    "fit": (cmd_fit, FIT_DEFAULTS),
    "simulate": (cmd_simulate, SIMULATE_DEFAULTS),
    "predict": (cmd_predict, {"out": None}),
    "evaluate": (cmd_evaluate, {"out": None}),
    "summarize": (cmd_summarize, {"out": None}),
    "plot": (cmd_plot, {"out": None}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgrowth",
        description="Spatio-temporal growth-curve models for weekly count panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="sample the posterior and write artifacts")
    fit.add_argument("--data", help="panel CSV or daily cumulative CSV "
                     "(schema sniffed from the header; bundled:<name> allowed)")
    fit.add_argument("--graph", help="graph CSV, dense or i,j,weight edge list")
    fit.add_argument("--model", choices=["m0", "m1", "m2"],
                     help="m0 no edges; m1 binary adjacency; m2 weighted graph")
    fit.add_argument("--trend", choices=["common", "regional"])
    fit.add_argument("--formula", choices=["linear", "exact"])
    fit.add_argument("--wave", type=int, choices=[1, 2],
                     help="analysis window for daily input")
    fit.add_argument("--chains", type=int)
    fit.add_argument("--iter", type=int, help="iterations per chain incl. warmup")
    fit.add_argument("--warmup", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--holdout", type=float,
                     help="fraction of weeks masked per region (0 disables)")
    fit.add_argument("--out", help="output directory")
    fit.add_argument("--progress", action="store_true")
    fit.add_argument("--config", help="JSON file of option values; flags override")

    sim = sub.add_parser("simulate", help="draw a synthetic panel from the model")
    sim.add_argument("--regions", type=int)
    sim.add_argument("--times", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--graph", help="graph CSV (default: ring)")
    for name in ("alpha", "rho", "tau", "b", "r", "h", "p", "s"):
        sim.add_argument(f"--{name}", type=float)
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--config", help="JSON file of option values; flags override")

    for name, help_text in (
        ("predict", "write per-cell predictive means and intervals"),
        ("evaluate", "recompute holdout metrics from fit artifacts"),
        ("summarize", "print the posterior summary table"),
        ("plot", "emit trend, random-effect, and per-region SVG figures"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", help="fit output directory")
        p.add_argument("--config", help="JSON file of option values; flags override")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, defaults = COMMANDS[args.command]
    opts: dict = {}
    try:
        opts = _merge_options(args, defaults)
        return fn(opts)
    except CliError as exc:
        failure = str(exc)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        failure = f"{type(exc).__name__}: {exc}"
    print(f"error: {failure}", file=sys.stderr)
    out = opts.get("out")
    if out and Path(out).is_dir():
        (Path(out) / "FAILED").write_text(failure + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
