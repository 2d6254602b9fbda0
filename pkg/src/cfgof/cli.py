"""Command-line front end.

Usage::

    cfgof gof-test data.csv --response y --covariates x --transform box-cox
    cfgof normality-test data.csv --weight gauss --c 0.25
    cfgof symmetry-test data.csv --weight gauss --c 0.25
    cfgof simulate --model A --eta 0 --nu inf --n 100 --M 1000 --kernel gauss --c 1 --seed 1
    cfgof estimate-theta data.csv --transform box-cox --curve profile.csv

Test commands print one JSON document on stdout and a short summary on
stderr.  Every option may also be given in a ``key = value`` file passed
with ``--config``; options on the command line win.

Exit codes: 0 completed, 2 input or configuration error, 3 numerical or
estimation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, estimation, resampling, simulation, smoothing, statistics
from .errors import (
    BootstrapDegeneracyError,
    EstimationError,
    InvalidInputError,
    StudyAborted,
)
from .transform import TransformFamily

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

NO_TRANSFORM = "none"


class DataError(InvalidInputError):
    """Malformed input file; the message names the row and column."""


# ---------------------------------------------------------------------------
# Input


@dataclass(frozen=True)
class DataFile:
    path: Path
    response_column: str | int | None = None  # None: first column
    covariate_columns: tuple = ()  # empty: every other column
    delimiter: str = ","
    header: bool = True


def _column_index(spec, names, what):
    if isinstance(spec, int):
        index = spec
    elif names is not None and spec in names:
        return names.index(spec)
    else:
        try:
            index = int(spec)
        except ValueError:
            raise DataError(f"{what} column {spec!r} not found in header") from None
    if index < 0 or (names is not None and index >= len(names)):
        raise DataError(f"{what} column index {index} out of range")
    return index


def read_data(data):
    """Parse ``data`` into a :class:`~cfgof.smoothing.Sample`."""
    try:
        text = Path(data.path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {data.path}: {exc.strerror}") from None
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=data.delimiter)
            if any(cell.strip() for cell in r)]
    names = None
    first_line = 1
    if data.header:
        if not rows:
            raise DataError("file is empty")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    if not rows:
        raise DataError("file has no data rows")
    width = len(names) if names is not None else len(rows[0])
    resp = _column_index(data.response_column if data.response_column is not None else 0,
                         names, "response")
    if data.covariate_columns:
        cov = [_column_index(c, names, "covariate") for c in data.covariate_columns]
    else:
        cov = [i for i in range(width) if i != resp]
    if max([resp] + cov) >= width:
        raise DataError(f"column index {max([resp] + cov)} out of range for {width} fields")
    if resp in cov:
        raise DataError("response and covariate columns must be disjoint")
    if not cov:
        raise DataError("at least one covariate column is required")

    def label(i):
        return repr(names[i]) if names is not None else str(i)

    values = np.empty((len(rows), 1 + len(cov)))
    for r, row in enumerate(rows):
        line = first_line + r
        if len(row) != width:
            raise DataError(f"row {line}: expected {width} fields, found {len(row)}")
        for k, col in enumerate([resp] + cov):
            cell = row[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"row {line}, column {label(col)}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(value):
                raise DataError(f"row {line}, column {label(col)}: value {cell!r} is not finite")
            values[r, k] = value
    return smoothing.Sample(values[:, 0], values[:, 1:])


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for number, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config(parser, argv):
    """Turn config-file entries into parser defaults so flags override them."""
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    entries = read_config_file(known.config)
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, value in entries.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "command"):
            raise DataError(f"config key {key!r} is not an option of this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            lowered = value.lower()
            if lowered not in _TRUE | _FALSE:
                raise DataError(f"config key {key!r} expects true or false")
            defaults[key] = lowered in _TRUE
        elif action.nargs in ("+", "*"):
            conv = action.type or str
            try:
                defaults[key] = [conv(v) for v in value.replace(",", " ").split()]
            except (TypeError, ValueError):
                raise DataError(f"config key {key!r}: bad value {value!r}") from None
        else:
            conv = action.type or str
            try:
                defaults[key] = conv(value)
            except (TypeError, ValueError, argparse.ArgumentTypeError):
                raise DataError(f"config key {key!r}: bad value {value!r}") from None
            if action.choices is not None and defaults[key] not in action.choices:
                raise DataError(f"config key {key!r}: {value!r} is not one of {action.choices}")
        if action.required:
            action.required = False
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# Output


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    started: str = ""
    finished: str = ""
    diagnostics: dict = field(default_factory=dict)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _write_manifest(args, manifest):
    if getattr(args, "manifest", None):
        Path(args.manifest).write_text(json.dumps(_jsonable(asdict(manifest)), indent=2) + "\n")


def _config_dict(args):
    return {k: v for k, v in vars(args).items() if k not in ("handler",)}


# ---------------------------------------------------------------------------
# Argument groups


def _float_or_inf(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _add_common(p):
    p.add_argument("--config", help="key = value file with defaults for any option")
    p.add_argument("--manifest", help="write a run manifest (JSON) to this path")


def _add_data(p):
    p.add_argument("data", type=Path, help="CSV file with response and covariates")
    p.add_argument("--response", default=None,
                   help="response column name or 0-based index (default: first)")
    p.add_argument("--covariates", nargs="+", default=[],
                   help="covariate column names or indices (default: all others)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", dest="header", action="store_false",
                   help="the file has no header line")


def _add_model(p):
    p.add_argument("--transform", choices=[f.value for f in TransformFamily] + [NO_TRANSFORM],
                   default=TransformFamily.YEO_JOHNSON.value,
                   help="transformation family, or 'none' for the untransformed model")
    p.add_argument("--homoskedastic", action="store_true",
                   help="constant scale instead of a smoothed scale function")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="regression bandwidth (default: data driven)")
    p.add_argument("--smoother", choices=[m.value for m in smoothing.Method],
                   default=smoothing.Method.LOCAL_LINEAR.value)
    p.add_argument("--theta-lo", type=float, default=-2.0)
    p.add_argument("--theta-hi", type=float, default=4.0)
    p.add_argument("--grid-points", type=int, default=61)


def _add_bootstrap(p, test_command=True):
    if test_command:
        p.add_argument("--B", type=int, default=200, help="bootstrap replications")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--clip", choices=[m.value for m in resampling.ClipMode],
                   default=resampling.ClipMode.CLAMP.value)
    p.add_argument("--no-standardize", dest="standardize", action="store_false",
                   help="use raw residuals in the bootstrap")
    p.add_argument("--reselect-bandwidth", action="store_true",
                   help="choose the bandwidth afresh on every bootstrap sample")
    p.add_argument("--bootstrap-theta", choices=list(_BOOTSTRAP_THETA), default="auto",
                   help="estimate the transformation parameter in every replication "
                        "(auto: only for the normality and symmetry tests)")


_BOOTSTRAP_THETA = {"auto": None, "reestimate": True, "fixed": False}


def _add_kernel(p):
    p.add_argument("--kernel", choices=["gauss", "stable", "laplace"], default="gauss",
                   help="characteristic kernel; gauss is stable with gamma 2")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--c", type=float, default=1.0)


def _add_weight(p):
    p.add_argument("--weight", choices=[w.value for w in statistics.WeightFamily],
                   default=statistics.WeightFamily.GAUSS_EXP.value)
    p.add_argument("--c", type=float, default=0.25)


def _kernel_from(name, gamma, c):
    if name == "gauss":
        return statistics.CharacteristicKernel.gaussian(c)
    family = (statistics.KernelFamily.SPHERICAL_STABLE if name == "stable"
              else statistics.KernelFamily.GENERALIZED_LAPLACE)
    return statistics.CharacteristicKernel(family, gamma, c)


def _model_spec(args):
    smoother = smoothing.SmootherConfig(
        bandwidth=args.bandwidth,
        homoskedastic=args.homoskedastic,
        method=smoothing.Method(args.smoother),
    )
    profile = estimation.ProfileConfig(args.theta_lo, args.theta_hi, args.grid_points)
    if args.transform == NO_TRANSFORM:
        return resampling.ModelSpec(TransformFamily.YEO_JOHNSON, 1.0, smoother, profile)
    return resampling.ModelSpec(TransformFamily(args.transform), None, smoother, profile)


def _bootstrap_config(args, kind):
    return resampling.BootstrapConfig(
        scheme=resampling.DEFAULT_SCHEME[kind],
        B=args.B,
        alpha=args.alpha,
        seed=args.seed,
        clip_policy=resampling.ClipPolicy(resampling.ClipMode(args.clip)),
        standardize_residuals=args.standardize,
        reselect_bandwidth=args.reselect_bandwidth,
        reestimate_theta=_BOOTSTRAP_THETA[args.bootstrap_theta],
    )


def _data_file(args):
    return DataFile(args.data, args.response, tuple(args.covariates), args.delimiter,
                    args.header)


# ---------------------------------------------------------------------------
# Commands


def _weight_record(weight):
    if isinstance(weight, statistics.WeightSpec):
        k = weight.residual
        return {"kind": "product-kernel", "family": k.family.value, "gamma": k.gamma, "c": k.c}
    return {"kind": "univariate", "family": weight.family.value, "c": weight.c}


def _run_test_command(args, kind, weight):
    started = _now()
    sample = read_data(_data_file(args))
    spec = _model_spec(args)
    config = _bootstrap_config(args, kind)
    runner = {
        resampling.TestKind.INDEPENDENCE: resampling.run_test,
        resampling.TestKind.NORMALITY: resampling.run_normality_test,
        resampling.TestKind.SYMMETRY: resampling.run_symmetry_test,
    }[kind]
    result = runner(sample, weight, spec.smoother, spec.profile, config,
                    family=spec.family, theta=spec.theta)
    diagnostics = {
        "n": sample.n,
        "p": sample.p,
        "B_used": result.B_used,
        "clip_events": result.clip_events,
        "refit_failures": result.refit_failures,
        "transform": args.transform,
        "homoskedastic": args.homoskedastic,
    }
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "test": kind.value,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "critical_value": result.critical_value,
        "alpha": result.alpha,
        "reject": bool(result.reject),
        "theta_hat": result.theta_hat,
        "weights": _weight_record(weight),
        "diagnostics": diagnostics,
        "seed": args.seed,
        "version": __version__,
    }
    print(json.dumps(_jsonable(payload), indent=2))
    theta = "n/a" if result.theta_hat is None else f"{result.theta_hat:.4f}"
    decision = "reject" if result.reject else "do not reject"
    print(f"{kind.value} test: theta_hat={theta} statistic={result.statistic:.6g} "
          f"p-value={result.p_value:.4f} ({decision} at alpha={result.alpha:g})",
          file=sys.stderr)
    _write_manifest(args, RunManifest(args.command, _config_dict(args), args.seed,
                                      started=started, finished=_now(),
                                      diagnostics=diagnostics))
    return EXIT_OK


def cmd_gof_test(args):
    weight = statistics.WeightSpec.same(_kernel_from(args.kernel, args.gamma, args.c))
    return _run_test_command(args, resampling.TestKind.INDEPENDENCE, weight)


def cmd_normality_test(args):
    weight = statistics.UnivariateWeight(args.weight, args.c)
    return _run_test_command(args, resampling.TestKind.NORMALITY, weight)


def cmd_symmetry_test(args):
    weight = statistics.UnivariateWeight(args.weight, args.c)
    return _run_test_command(args, resampling.TestKind.SYMMETRY, weight)


def _error_model(args):
    return simulation.ErrorModel(args.model, eta=args.eta, nu=args.nu, kappa=args.kappa)


def cmd_simulate(args):
    started = _now()
    model = _error_model(args)
    if args.emit_data:
        rng = np.random.default_rng([args.seed])
        sample = simulation.gen_sample(model, args.n, rng)
        with open(args.emit_data, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["y", "x"])
            for y, x in zip(sample.y, sample.x[:, 0]):
                writer.writerow([repr(float(y)), repr(float(x))])
        print(f"wrote {args.n} observations to {args.emit_data}", file=sys.stderr)
        _write_manifest(args, RunManifest(args.command, _config_dict(args), args.seed,
                                          started=started, finished=_now()))
        return EXIT_OK

    kind = resampling.TestKind(args.test)
    if kind is resampling.TestKind.INDEPENDENCE:
        if args.kernel not in ("gauss", "stable", "laplace"):
            raise InvalidInputError("independence studies take --kernel gauss, stable or laplace")
        weights = [statistics.WeightSpec.same(_kernel_from(args.kernel, args.gamma, c))
                   for c in args.c]
    else:
        if args.kernel not in [w.value for w in statistics.WeightFamily]:
            raise InvalidInputError("normality and symmetry studies take --kernel gauss, abs or cauchy")
        weights = [statistics.UnivariateWeight(args.kernel, c) for c in args.c]
    spec = _model_spec(args)
    boot = resampling.BootstrapConfig(
        scheme=resampling.DEFAULT_SCHEME[kind],
        seed=args.seed,
        clip_policy=resampling.ClipPolicy(resampling.ClipMode(args.clip)),
        standardize_residuals=args.standardize,
        reselect_bandwidth=args.reselect_bandwidth,
        reestimate_theta=_BOOTSTRAP_THETA[args.bootstrap_theta],
    )
    study = simulation.StudyConfig(model, args.n, weights, kind=kind, M=args.M,
                                   alpha=args.alpha, seed=args.seed, spec=spec,
                                   bootstrap=boot, full_B=args.full_B)
    result = simulation.warp_speed_study(study)
    buffer = io.StringIO()
    simulation.write_study_csv(result.rows, buffer)
    if args.output:
        Path(args.output).write_text(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    if args.table:
        Path(args.table).write_text(simulation.format_study_table(result.rows))
    print(simulation.format_study_table(result.rows), end="", file=sys.stderr)
    _write_manifest(args, RunManifest(
        args.command, _config_dict(args), args.seed, started=started, finished=_now(),
        diagnostics={"failures": result.failures, "clip_events": result.clip_events}))
    return EXIT_OK


def cmd_estimate_theta(args):
    started = _now()
    if args.transform == NO_TRANSFORM:
        raise InvalidInputError("estimate-theta needs a transformation family")
    sample = read_data(_data_file(args))
    spec = _model_spec(args)
    res = estimation.profile_search(sample, spec.smoother, spec.profile, spec.family)
    if args.curve:
        with open(args.curve, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta", "loglik"])
            points = sorted(list(zip(res.grid.tolist(), res.grid_loglik.tolist())) +
                            [(res.theta, res.loglik)])
            for theta, value in points:
                writer.writerow([repr(theta), repr(value)])
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "theta_hat": res.theta,
        "loglik": res.loglik,
        "family": spec.family.value,
        "diagnostics": {"n": sample.n, "p": sample.p, "evaluations": res.evaluations,
                        "homoskedastic": args.homoskedastic},
        "version": __version__,
    }
    print(json.dumps(_jsonable(payload), indent=2))
    print(f"theta_hat={res.theta:.4f}", file=sys.stderr)
    _write_manifest(args, RunManifest(args.command, _config_dict(args), None,
                                      started=started, finished=_now()))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfgof",
        description="Characteristic-function goodness-of-fit tests for transformation models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gof-test", help="test independence of errors and covariates")
    _add_data(p), _add_model(p), _add_kernel(p), _add_bootstrap(p), _add_common(p)
    p.set_defaults(handler=cmd_gof_test)

    p = sub.add_parser("normality-test", help="test standard normal errors")
    _add_data(p), _add_model(p), _add_weight(p), _add_bootstrap(p), _add_common(p)
    p.set_defaults(handler=cmd_normality_test)

    p = sub.add_parser("symmetry-test", help="test symmetric errors")
    _add_data(p), _add_model(p), _add_weight(p), _add_bootstrap(p), _add_common(p)
    p.set_defaults(handler=cmd_symmetry_test)

    p = sub.add_parser("simulate", help="warp-speed Monte Carlo study of size and power")
    p.add_argument("--model", choices=list("ABCD"), default="A")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--nu", type=_float_or_inf, default=math.inf)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--M", type=int, default=1000)
    p.add_argument("--test", choices=[k.value for k in resampling.TestKind],
                   default=resampling.TestKind.INDEPENDENCE.value)
    p.add_argument("--kernel", choices=["gauss", "stable", "laplace", "abs", "cauchy"],
                   default="gauss",
                   help="gauss/stable/laplace kernels for independence, "
                        "gauss/abs/cauchy weights otherwise")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--c", type=float, nargs="+", default=[1.0])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--full-B", type=int, default=None,
                   help="full bootstrap with this many draws per sample (slow)")
    p.add_argument("--emit-data", default=None,
                   help="write one generated sample as CSV to this path and exit")
    p.add_argument("--output", default=None, help="CSV path (default: stdout)")
    p.add_argument("--table", default=None, help="also write a plain-text table")
    _add_model(p)
    _add_bootstrap(p, test_command=False)
    _add_common(p)
    p.set_defaults(handler=cmd_simulate, transform=TransformFamily.YEO_JOHNSON.value)

    p = sub.add_parser("estimate-theta", help="profile-likelihood estimate of theta")
    _add_data(p), _add_model(p), _add_common(p)
    p.add_argument("--curve", default=None, help="write the (theta, loglik) grid as CSV")
    p.set_defaults(handler=cmd_estimate_theta)
    return parser


def _subparser(parser, argv):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for token in argv:
                if token in action.choices:
                    return action.choices[token]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        sub = _subparser(parser, argv)
        if sub is not None:
            _apply_config(sub, argv)
        args = parser.parse_args(argv)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.handler(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, BootstrapDegeneracyError, StudyAborted, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
