"""``isl`` command line: fit, predict, simulate, cost, spectrum and replay.

Every run writes its outputs plus a ``manifest.json`` into ``--out``.
``isl replay manifest.json`` re-runs the recorded command, and the outputs
it writes are identical to the originals.

Exit codes: 0 ok, 2 usage, 3 unreadable or malformed input, 4 domain or
estimation error, 5 fit did not converge, 6 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .correlated import (
    CorrelatedTrialModel,
    eigen_spectrum,
    error_correlation_matrix,
    estimate_kappa,
    plateau_coverage,
    read_trial_matrix_csv,
    TrialMatrix,
    write_trial_matrix_csv,
)
from .cost import (
    CostParams,
    completions_for_budget,
    coverage_of_cost,
    k_for_target_coverage,
    loss_of_cost,
    total_cost,
)
from .coverage import BetaFailureModel, inference_loss, pass_at_k_asymptotic, pass_at_k_exact
from .curve import format_float, read_curve_csv, write_curve_csv
from .errors import (
    DomainError,
    EstimationError,
    ISLError,
    NonConvergenceError,
    ParseError,
    ResourceGuardError,
)
from .fitting import OBJECTIVES, fit_beta_model, fit_correlated_model, goodness_of_fit, parameter_band
from .simulator import SimConfig, parse_model_spec, sample_failure_probs, simulate_correlated, simulate_independent

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_DOMAIN = 4
EXIT_NONCONVERGENCE = 5
EXIT_RESOURCE = 6

# CSV export of a full trial matrix is capped; the packed form is far smaller
MAX_MATRIX_CSV_ENTRIES = 50_000_000
MAX_PREDICT_POINTS = 1_000_000

_MODEL_FIELDS = {
    "beta": ("ceiling", "alpha", "beta"),
    "correlated": ("ceiling", "failure", "kappa"),
}


@dataclass
class RunManifest:
    command: str
    input_paths: list[str]
    parameters: dict
    seed: int | None
    output_dir: str
    tool_version: str = __version__
    argv: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> None:
        _write_json(out_dir / "manifest.json", asdict(self))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, (int, np.integer)) else format_float(v) for v in row) + "\n")


def load_model_json(path: str | Path):
    """Read a model record; schema problems are reported by field name."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read model file: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=str(path)) from None
    if not isinstance(data, dict):
        raise ParseError("model JSON must be an object", path=str(path))
    # a fit report carries the model under "model"
    if isinstance(data.get("model"), dict) and "objective" in data:
        data = data["model"]
    kind = data.get("kind")
    if kind not in _MODEL_FIELDS:
        raise ParseError(f"field 'kind': expected 'beta' or 'correlated', got {kind!r}", path=str(path))
    fields = _MODEL_FIELDS[kind]
    for extra in sorted(set(data) - set(fields) - {"kind"}):
        raise ParseError(f"field {extra!r}: not part of the {kind} model schema", path=str(path))
    values = []
    for name in fields:
        if name not in data:
            raise ParseError(f"field {name!r}: missing", path=str(path))
        v = data[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"field {name!r}: expected a number, got {v!r}", path=str(path))
        values.append(float(v))
    try:
        return BetaFailureModel(*values) if kind == "beta" else CorrelatedTrialModel(*values)
    except DomainError as exc:
        raise ParseError(f"invalid {kind} model: {exc}", path=str(path)) from None


def _k_values(args) -> np.ndarray:
    if args.k is not None:
        try:
            ks = np.array(sorted({int(s) for s in args.k.split(",") if s.strip()}), dtype=np.int64)
        except ValueError:
            raise DomainError(f"--k expects comma-separated integers, got {args.k!r}") from None
    else:
        lo, hi = args.k_range
        if not (1 <= lo <= hi):
            raise DomainError("--k-range needs 1 <= LO <= HI")
        if args.points:
            ks = np.unique(np.round(np.geomspace(lo, hi, args.points)).astype(np.int64))
        else:
            if hi - lo + 1 > MAX_PREDICT_POINTS:
                raise ResourceGuardError(f"--k-range spans more than {MAX_PREDICT_POINTS} values; add --points")
            ks = np.arange(lo, hi + 1, dtype=np.int64)
    if ks.size == 0 or ks[0] < 1:
        raise DomainError("k values must be >= 1")
    return ks


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# subcommands ---------------------------------------------------------------


def cmd_fit(args, out: Path) -> int:
    curve = read_curve_csv(args.curve)
    fitter = fit_beta_model if args.model == "beta" else fit_correlated_model
    status = EXIT_OK
    try:
        result = fitter(curve, objective=args.objective)
    except NonConvergenceError as exc:
        if exc.result is None:
            raise
        result = exc.result
        status = EXIT_NONCONVERGENCE
        print(f"isl: warning: {exc}; writing best-effort result", file=sys.stderr)
    model = result.model
    gof = goodness_of_fit(curve, model)
    band_name = "beta" if args.model == "beta" else "kappa"
    band = parameter_band(curve, result, band_name, z=args.z)
    report = result.to_dict()
    report["goodness_of_fit"] = {
        "rmse": gof.rmse,
        "max_abs_err": gof.max_abs_err,
        "r2_logspace": gof.r2_logspace,
        "warnings": list(gof.warnings),
    }
    report["band"] = {
        "parameter": band_name,
        "z": args.z,
        "lower": _json_float(band[0]),
        "upper": _json_float(band[1]),
        "method": "local linearization of the objective residuals",
    }
    if args.model == "beta":
        report["summary"] = {"mean_failure": model.mean_failure(), "concentration": model.concentration()}
    else:
        report["summary"] = {"plateau_coverage": plateau_coverage(model)}
    _write_json(out / "fit.json", report)

    fitted = model.coverage(curve.ks)
    _write_rows(
        out / "fitted.csv",
        ["k", "observed", "fitted", "residual"],
        zip(curve.ks, curve.coverage, fitted, fitted - curve.coverage),
    )
    k_hi = max(int(curve.ks.max()) * 10, 10)
    grid = np.unique(np.round(np.geomspace(1, k_hi, 200)).astype(np.int64))
    _write_rows(out / "prediction.csv", ["k", "coverage", "loss"], zip(grid, model.coverage(grid), model.loss(grid)))

    params = ", ".join(f"{k}={format_float(v)}" for k, v in model.to_dict().items() if k != "kind")
    _say(args, f"{args.model} fit: {params}")
    _say(args, f"objective ({result.objective}) = {result.objective_value:.6g}, converged = {result.converged}")
    _say(args, f"rmse = {gof.rmse:.3g}, max |err| = {gof.max_abs_err:.3g}")
    if band[0] > -math.inf:
        _say(args, f"{band_name} approx. band (z={args.z:g}): [{band[0]:.4g}, {band[1]:.4g}]")
    if args.model == "beta":
        _say(args, f"mean failure alpha/(alpha+beta) = {model.mean_failure():.4g}")
        _say(args, f"concentration alpha+beta = {model.concentration():.4g}")
    else:
        _say(args, f"plateau coverage = {plateau_coverage(model):.6g}")
    if result.degenerate:
        _say(args, "note: " + "; ".join(result.notes))
    return status


def cmd_predict(args, out: Path) -> int:
    model = load_model_json(args.model_json)
    ks = _k_values(args)
    if args.asymptotic:
        if not isinstance(model, BetaFailureModel):
            raise DomainError("--asymptotic is only defined for beta models")
        cov = pass_at_k_asymptotic(model, ks)
        loss = inference_loss(model, ks, asymptotic=True)
    else:
        cov = model.coverage(ks)
        loss = model.loss(ks)
    header = ["k", "coverage"]
    cols = [ks, cov]
    if args.loss:
        header.append("loss")
        cols.append(loss)
    _write_rows(out / "predict.csv", header, zip(*cols))
    _say(args, f"wrote {ks.size} rows to {out / 'predict.csv'}")
    return EXIT_OK


def _parse_sim_model(text: str):
    if text.startswith("correlated:"):
        try:
            p, kappa = (float(v) for v in text.split(":", 1)[1].split(","))
        except ValueError:
            raise DomainError(f"cannot parse model spec {text!r}; expected correlated:p,kappa") from None
        return ("correlated", p, kappa)
    return parse_model_spec(text)


def cmd_simulate(args, out: Path) -> int:
    spec = _parse_sim_model(args.model)
    want_matrix = args.emit in ("matrix", "both")
    if want_matrix and args.n * args.kmax > MAX_MATRIX_CSV_ENTRIES:
        raise ResourceGuardError(
            f"a {args.n} x {args.kmax} matrix CSV exceeds {MAX_MATRIX_CSV_ENTRIES} entries; "
            "lower --n or --kmax, or emit only the curve"
        )
    if isinstance(spec, tuple):
        _, p, kappa = spec
        config = SimConfig(args.n, args.kmax, args.seed)
        res = simulate_correlated(config, p, kappa, keep_latent=want_matrix)
    else:
        config = SimConfig(args.n, args.kmax, args.seed, spec)
        probs = sample_failure_probs(config)
        res = simulate_independent(config, probs, keep_matrix=want_matrix)
    if args.emit in ("curve", "both"):
        write_curve_csv(res.empirical_curve, out / "curve.csv")
    if want_matrix:
        write_trial_matrix_csv(res.success_matrix.to_dense(), out / "matrix.csv", integer=True)
        if res.latent is not None:
            write_trial_matrix_csv(res.latent.values, out / "latent.csv")
    _say(args, f"simulated {args.n} samples x {args.kmax} trials ({res.draw_count} draws), seed {args.seed}")
    return EXIT_OK


def cmd_cost(args, out: Path) -> int:
    model = load_model_json(args.model_json)
    if not isinstance(model, BetaFailureModel):
        raise DomainError("cost sweeps need a beta model")
    params = CostParams(args.np, args.nd, args.flops)
    rows = []
    if args.budgets is not None or args.budget_range is not None:
        if args.budgets is not None:
            try:
                budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
            except ValueError:
                raise DomainError(f"--budgets expects comma-separated numbers, got {args.budgets!r}") from None
        else:
            lo, hi = args.budget_range
            budgets = list(np.geomspace(lo, hi, args.points or 50))
        for b in budgets:
            k = completions_for_budget(params, b)
            rows.append(
                (
                    k,
                    b,
                    pass_at_k_exact(model, k),
                    inference_loss(model, k),
                    coverage_of_cost(model, params, b),
                    loss_of_cost(model, params, b),
                )
            )
    else:
        args.k, args.k_range = None, args.k_range or (1, 1000)
        for k in _k_values(args):
            c = total_cost(params, int(k))
            rows.append(
                (
                    int(k),
                    c,
                    pass_at_k_exact(model, int(k)),
                    inference_loss(model, int(k)),
                    coverage_of_cost(model, params, c),
                    loss_of_cost(model, params, c),
                )
            )
    _write_rows(
        out / "cost.csv",
        ["k", "cost", "coverage", "loss", "coverage_asymptotic", "loss_asymptotic"],
        rows,
    )
    if args.target is not None:
        k = k_for_target_coverage(model, args.target)
        cost = total_cost(params, k)
        _write_json(out / "target.json", {"target": args.target, "k": k, "cost": cost})
        _say(args, f"coverage {args.target:g} needs k = {k} completions, cost = {cost:.6g} FLOPs")
    _say(args, f"wrote {len(rows)} rows to {out / 'cost.csv'}")
    return EXIT_OK


def cmd_spectrum(args, out: Path) -> int:
    trials = read_trial_matrix_csv(args.matrix)
    if args.input == "successes":
        v = trials.values
        if not np.all((v == 0) | (v == 1)):
            raise DomainError("--input successes needs a 0/1 matrix")
        trials = TrialMatrix(1.0 - v)
    eps = error_correlation_matrix(trials, center=args.center)
    spectrum = eigen_spectrum(eps, method=args.method)
    rank_range = tuple(args.rank_range) if args.rank_range else None
    est = estimate_kappa(spectrum, rank_range)
    _write_rows(out / "eigenvalues.csv", ["rank", "eigenvalue"], zip(spectrum.ranks, spectrum.eigenvalues))
    _write_json(
        out / "kappa.json",
        {
            "kappa": est.kappa,
            "r2": est.r2,
            "rank_range": list(est.rank_range),
            "warnings": list(est.warnings),
            "n": trials.n,
            "k": trials.k,
            "input": args.input,
            "centered": args.center,
        },
    )
    _say(args, f"kappa = {est.kappa:.4g} (r^2 = {est.r2:.4f}, ranks {est.rank_range[0]}..{est.rank_range[1]})")
    for w in est.warnings:
        _say(args, f"warning: {w}")
    return EXIT_OK


# parser ----------------------------------------------------------------------


def _add_k_args(p: argparse.ArgumentParser, required: bool) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--k", help="comma-separated k values")
    g.add_argument("--k-range", type=int, nargs=2, metavar=("LO", "HI"), help="inclusive k range")
    p.add_argument("--points", type=int, help="log-spaced points over the range instead of every integer")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory (created if missing)")
    common.add_argument("--quiet", action="store_true", help="suppress human-readable summaries")

    parser = argparse.ArgumentParser(prog="isl", description="Inference scaling laws toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a coverage law to a k,coverage CSV")
    p.add_argument("curve")
    p.add_argument("--model", choices=("beta", "correlated"), default="beta")
    p.add_argument("--objective", choices=OBJECTIVES, default="log-complement")
    p.add_argument("--z", type=float, default=1.96, help="band half-width in standard errors")
    p.set_defaults(func=cmd_fit, inputs=("curve",))

    p = sub.add_parser("predict", parents=[common], help="evaluate a model at given k")
    p.add_argument("model_json")
    _add_k_args(p, required=True)
    p.add_argument("--loss", action="store_true", help="add a loss column")
    p.add_argument("--asymptotic", action="store_true", help="large-k form instead of the exact one")
    p.set_defaults(func=cmd_predict, inputs=("model_json",))

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo pass@k")
    p.add_argument("--model", required=True, help="beta:a,b | point:p | correlated:p,kappa")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--kmax", type=int, required=True, help="trials per sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit", choices=("curve", "matrix", "both"), default="curve")
    p.set_defaults(func=cmd_simulate, inputs=())

    p = sub.add_parser("cost", parents=[common], help="coverage and loss against inference FLOPs")
    p.add_argument("model_json")
    p.add_argument("--np", type=int, required=True, help="prompt tokens")
    p.add_argument("--nd", type=int, required=True, help="decode tokens per completion")
    p.add_argument("--flops", type=float, required=True, help="FLOPs per token")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", help="comma-separated k values")
    g.add_argument("--k-range", type=int, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--budgets", help="comma-separated budgets in FLOPs")
    g.add_argument("--budget-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--points", type=int, help="log-spaced points over a range")
    p.add_argument("--target", type=float, help="report the smallest k and cost reaching this coverage")
    p.set_defaults(func=cmd_cost, inputs=("model_json",))

    p = sub.add_parser("spectrum", parents=[common], help="eigenvalue spectrum and kappa of a trial matrix")
    p.add_argument("matrix")
    p.add_argument("--input", choices=("errors", "successes"), default="errors")
    p.add_argument("--rank-range", type=int, nargs=2, metavar=("FIRST", "LAST"))
    p.add_argument("--center", action="store_true", help="subtract column means first")
    p.add_argument("--method", choices=("auto", "jacobi", "ql"), default="auto")
    p.set_defaults(func=cmd_spectrum, inputs=("matrix",))

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the recorded one)")
    p.add_argument("--seed", type=int, help="override the recorded seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=None, inputs=())
    return parser


def _canonical_argv(parser: argparse.ArgumentParser, args) -> list[str]:
    """Rebuild an argv with absolute input paths and without --out/--quiet."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        dest = action.dest
        if dest in ("help", "out", "quiet"):
            continue
        value = getattr(args, dest, None)
        if not action.option_strings:
            argv.append(str(Path(value).resolve()) if dest in args.inputs else str(value))
            continue
        if value is None or value is False:
            continue
        flag = action.option_strings[-1]
        if value is True:
            argv.append(flag)
        elif isinstance(value, (list, tuple)):
            argv += [flag] + [str(v) for v in value]
        else:
            argv += [flag, str(value)]
    return argv


def _replay_argv(args) -> list[str]:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        argv = list(manifest["argv"])
        out = args.out or manifest["output_dir"]
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc}", path=str(path)) from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"not a run manifest ({exc})", path=str(path)) from None
    if args.seed is not None:
        if "--seed" not in argv:
            raise DomainError(f"the recorded {argv[0]} command takes no seed")
        argv[argv.index("--seed") + 1] = str(args.seed)
    argv += ["--out", out]
    if args.quiet:
        argv.append("--quiet")
    return argv


def _run(argv: list[str] | None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        args = parser.parse_args(_replay_argv(args))
        if args.command == "replay":
            raise DomainError("a manifest cannot replay another replay")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    canon = _canonical_argv(parser, args)
    status = args.func(args, out)
    params = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "inputs", "out", "quiet", "command", "seed")
    }
    for k in args.inputs:
        params[k] = str(Path(params[k]).resolve())
    RunManifest(
        command=args.command,
        input_paths=[params[k] for k in args.inputs],
        parameters=params,
        seed=getattr(args, "seed", None),
        output_dir=str(out.resolve()),
        argv=canon,
    ).write(out)
    return status


def main(argv: list[str] | None = None) -> int:
    try:
        return _run(argv)
    except ParseError as exc:
        code, exc_ = EXIT_PARSE, exc
    except ResourceGuardError as exc:
        code, exc_ = EXIT_RESOURCE, exc
    except NonConvergenceError as exc:
        code, exc_ = EXIT_NONCONVERGENCE, exc
    except (DomainError, EstimationError) as exc:
        code, exc_ = EXIT_DOMAIN, exc
    except ISLError as exc:
        code, exc_ = EXIT_DOMAIN, exc
    print(f"isl: error: {exc_}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
