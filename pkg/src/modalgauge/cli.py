"""Command-line interface: measure, correlate, fit, predict, plot-data."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .embed_io import load_task
from .errors import ModalGaugeError
from .measures import MEASURE_NAMES, MeasureOptions, MeasureReport, measure_suite
from .stats import RegressionFit, predict_with_band
from .transfer import (
    TARGETS,
    build_gain_table,
    correlate_all,
    fit_transfer_model,
    predict_transfer,
    read_measures_csv,
    read_outcomes_csv,
)

log = logging.getLogger("modalgauge")


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MODALGAUGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer MODALGAUGE_THREADS=%r", env)
    return os.cpu_count() or 1


def _reports_to_csv(reports: list[MeasureReport]) -> str:
    names: list[str] = []
    for rep in reports:
        for name in rep.values:
            if name not in names:
                names.append(name)
    lines = [",".join(["model_id", "task"] + names)]
    for rep in reports:
        cells = [rep.model_id, rep.task_id]
        cells += [repr(rep.values[n]) if n in rep.values else "" for n in names]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_measure(args) -> int:
    selection = [s.strip() for s in args.measures.split(",") if s.strip()]
    if "all" in selection:
        selection = list(MEASURE_NAMES)
    unknown = [s for s in selection if s not in MEASURE_NAMES]
    if unknown:
        return _fail(f"unknown measure(s): {', '.join(unknown)}")
    if not selection:
        return _fail("no measures selected")
    options = MeasureOptions(
        seed=args.seed,
        silhouette_subsample=args.silhouette_subsample,
        entropy_bandwidth=(
            args.entropy_bandwidth
            if args.entropy_bandwidth in ("scott", "silverman")
            else float(args.entropy_bandwidth)
        ),
    )

    def run_one(manifest: str) -> MeasureReport | Exception:
        try:
            task = load_task(manifest)
            return measure_suite(task, selection, options)
        except Exception as exc:
            return exc

    with ThreadPoolExecutor(max_workers=_thread_count(args)) as pool:
        results = list(pool.map(run_one, args.manifest))  # input order preserved

    reports: list[MeasureReport] = []
    had_failure = False
    for manifest, result in zip(args.manifest, results):
        if isinstance(result, Exception):
            had_failure = True
            print(f"error: {manifest}: {type(result).__name__}: {result}", file=sys.stderr)
            reports.append(
                MeasureReport(
                    task_id=str(manifest),
                    model_id="",
                    metadata={"errors": {"load": f"{type(result).__name__}: {result}"}},
                )
            )
            continue
        if result.metadata.get("errors"):
            had_failure = True
            for name, msg in result.metadata["errors"].items():
                print(f"error: {manifest}: {name}: {msg}", file=sys.stderr)
        if result.values.get("iimm", 0.0) < 0.0:
            print(
                f"note: {result.task_id}: iimm={result.values['iimm']:.6f} is negative; "
                "cosine terms admit values below the nominal [0,1] range",
                file=sys.stderr,
            )
        reports.append(result)

    out = Path(args.out)
    if args.format == "json":
        _atomic_write_text(out, _json_text([r.to_dict() for r in reports]))
    else:
        _atomic_write_text(out, _reports_to_csv(reports))
    return 2 if had_failure else 0


def _gain_table_for(args, outcomes_path: str, model: str | None):
    records = read_outcomes_csv(outcomes_path)
    models = sorted({r.model_id for r in records})
    if model is not None:
        records = [r for r in records if r.model_id == model]
        if not records:
            raise ModalGaugeError(f"no outcome rows for model {model!r}")
    elif len(models) > 1:
        raise ModalGaugeError(
            f"outcomes hold multiple models {models}; pick one with --model"
        )
    return build_gain_table(records)


def _measures_for(args, measures_path: str, model: str | None):
    reports = read_measures_csv(measures_path)
    if model is not None:
        reports = [r for r in reports if r.model_id == model]
    return reports


def cmd_correlate(args) -> int:
    gains = _gain_table_for(args, args.outcomes, args.model)
    reports = _measures_for(args, args.measures, args.model)
    table = correlate_all(reports, gains, target=args.target)
    lines = ["measure,rho,p_value,n,method"]
    for name, res in table.items():
        if isinstance(res, str):
            lines.append(f"{name},,,,{res}")
        else:
            lines.append(f"{name},{res.rho!r},{res.p_value!r},{res.n},{res.method}")
    _atomic_write_text(Path(args.out), "\n".join(lines) + "\n")
    return 0


def cmd_fit(args) -> int:
    gains = _gain_table_for(args, args.outcomes, args.model)
    reports = _measures_for(args, args.measures, args.model)
    fit = fit_transfer_model(
        reports, gains, args.measure_name, target=args.target,
        confidence_level=args.confidence,
    )
    _atomic_write_text(Path(args.out), _json_text(fit.to_dict()))
    return 0


def _load_fit(path: str) -> RegressionFit:
    with open(path, "r", encoding="utf-8") as fh:
        return RegressionFit.from_dict(json.load(fh))


def cmd_predict(args) -> int:
    fit = _load_fit(args.fit)
    task = load_task(args.manifest)
    pred = predict_transfer(fit, task, MeasureOptions(seed=args.seed))
    if pred.extrapolation_flag:
        print(
            f"warning: extrapolation: measure value {pred.measure_value!r} lies outside "
            f"the fit domain [{fit.x_min!r}, {fit.x_max!r}]",
            file=sys.stderr,
        )
    if pred.note:
        print(f"note: {pred.note}", file=sys.stderr)
    payload = {
        "task": pred.task,
        "measure_name": fit.measure_name,
        "measure_value": pred.measure_value,
        "predicted_gain": pred.predicted_gain,
        "band_lower": pred.band[0],
        "band_upper": pred.band[1],
        "confidence_level": fit.confidence_level,
        "extrapolation_flag": pred.extrapolation_flag,
        "note": pred.note,
    }
    _atomic_write_text(Path(args.out), _json_text(payload))
    return 0


def cmd_plot_data(args) -> int:
    fit = _load_fit(args.fit)
    gains = _gain_table_for(args, args.outcomes, args.model)
    reports = _measures_for(args, args.measures, args.model)
    gain_by_task = {g.task: g for g in gains}

    scatter = ["task,x,y"]
    for rep in reports:
        if fit.measure_name not in rep.values or rep.task_id not in gain_by_task:
            continue
        g = gain_by_task[rep.task_id]
        y = {"gain_over_zse": g.gain_over_zse, "avg_ood_delta": g.avg_ood_delta,
             "accuracy": g.finetuned_acc}[args.target]
        if y is None:
            continue
        scatter.append(f"{rep.task_id},{rep.values[fit.measure_name]!r},{y!r}")

    band = ["x,y_hat,lower,upper"]
    for x0 in np.linspace(fit.x_min, fit.x_max, 100):
        y_hat, lower, upper, _ = predict_with_band(fit, float(x0))
        band.append(f"{float(x0)!r},{y_hat!r},{lower!r},{upper!r}")

    _atomic_write_text(Path(args.out), "\n".join(scatter + band) + "\n")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: MODALGAUGE_THREADS or logical cores)")
    p.add_argument("--log-level", default="warning",
                   choices=["debug", "info", "warning", "error"], help="logging verbosity")


def _add_model_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default=None,
                   help="restrict to one model_id when files hold several")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalgauge",
        description="Embedding-space measures and linear transfer predictors "
                    "for dual-encoder models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="compute measures for one or more task manifests")
    p.add_argument("--manifest", action="append", required=True,
                   help="path to a task manifest JSON (repeatable)")
    p.add_argument("--measures", default="iimm",
                   help=f"comma-separated measure names or 'all'; known: {', '.join(MEASURE_NAMES)}")
    p.add_argument("--out", required=True, help="output file path")
    p.add_argument("--format", choices=["json", "csv"], default="json", help="output format")
    p.add_argument("--silhouette-subsample", type=int, default=None,
                   help="subsample image points for Euclidean silhouette past this size")
    p.add_argument("--entropy-bandwidth", default="scott",
                   help="scott, silverman, or a fixed positive number")
    _add_common(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("correlate", help="Spearman correlation of each measure with a target")
    p.add_argument("--measures", required=True, help="measures CSV (model_id,task,<columns>)")
    p.add_argument("--outcomes", required=True, help="outcomes CSV (long format)")
    p.add_argument("--target", choices=TARGETS, default="gain_over_zse",
                   help="analysis target")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_model_flag(p)
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="fit a linear predictor of a target on one measure")
    p.add_argument("--measures", required=True, help="measures CSV")
    p.add_argument("--outcomes", required=True, help="outcomes CSV")
    p.add_argument("--measure-name", default="iimm", help="measure column to fit on")
    p.add_argument("--target", choices=TARGETS, default="gain_over_zse", help="analysis target")
    p.add_argument("--confidence", type=float, default=0.96,
                   help="confidence level for bands (default 0.96)")
    p.add_argument("--out", required=True, help="output fit.json path")
    _add_model_flag(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict the fitted target for a new task")
    p.add_argument("--fit", required=True, help="fit.json from the fit command")
    p.add_argument("--manifest", required=True, help="task manifest JSON")
    p.add_argument("--out", required=True, help="output prediction JSON path")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plot-data", help="emit scatter and confidence-band rows for plotting")
    p.add_argument("--fit", required=True, help="fit.json from the fit command")
    p.add_argument("--measures", required=True, help="measures CSV")
    p.add_argument("--outcomes", required=True, help="outcomes CSV")
    p.add_argument("--target", choices=TARGETS, default="gain_over_zse", help="analysis target")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_model_flag(p)
    _add_common(p)
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    try:
        return args.func(args)
    except ModalGaugeError as exc:
        return _fail(f"{type(exc).__name__}: {exc}")
    except OSError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
