"""Experiment orchestration and command-line entry point.

Reads a TOML experiment description, sweeps the link distance (and any
parameter given as a list), evaluates the selected analysis, bound, and
Monte-Carlo modes at each grid point, and writes the resulting curve
records as CSV or JSON with a JSON sidecar carrying the fully resolved
configuration and seed. Reruns with the same file and seed reproduce the
numeric columns exactly.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from clustalign.alignment import ConvergenceError, FeasibilityError
from clustalign.analysis import (
    DEFAULT_QUAD,
    NetworkParams,
    QuadratureError,
    QuadratureParams,
    c_alpha,
    ppp_baseline,
    success_prob_ia,
    success_prob_siso,
    upper_bound_1d,
    upper_bound_closed_form,
)
from clustalign.montecarlo import Mode, PrecoderMode, TrialConfig, estimate_success

__all__ = [
    "CurveMode",
    "CompareMetric",
    "ConfigError",
    "GridMismatchError",
    "ExperimentSpec",
    "CurveRecord",
    "CurveComparison",
    "default_d_grid",
    "load_spec",
    "run_experiment",
    "write_records",
    "read_records",
    "compare_curves",
    "main",
]


class CurveMode(Enum):
    IA_ANALYSIS = "ia_analysis"
    SISO_ANALYSIS = "siso_analysis"
    IA_MC = "ia_mc"
    SISO_MC = "siso_mc"
    BOUND_1D = "bound_1d"
    BOUND_CLOSED = "bound_closed"
    PPP_BASELINE = "ppp_baseline"


_MC_MODES = frozenset({CurveMode.IA_MC, CurveMode.SISO_MC})


class CompareMetric(Enum):
    RATIO = "ratio"
    RELATIVE_GAIN = "relative_gain"
    ABS_DIFF = "abs_diff"


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


class GridMismatchError(ValueError):
    """Curves under comparison do not share a d_ii grid."""


def default_d_grid() -> tuple[float, ...]:
    """Link-distance grid used when a config gives none: 0.1 to 1.5."""
    return tuple(round(0.1 * i, 10) for i in range(1, 16))


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one experiment run.

    Exactly one of ``lambda_p`` and ``lambda_total`` must be given;
    ``lambda_total`` fixes the overall transmitter density and derives
    the parent density as ``lambda_total / cbar`` for each swept
    cluster size. All tuple-valued parameter fields are swept as a
    cartesian product; ``d_ii`` is the curve abscissa.
    """

    modes: tuple[CurveMode, ...]
    cbar: tuple[int, ...] = (3,)
    sigma: tuple[float, ...] = (0.25,)
    alpha: tuple[float, ...] = (4.0,)
    threshold: tuple[float, ...] = (0.1,)
    d_ii: tuple[float, ...] = field(default_factory=default_d_grid)
    lambda_p: tuple[float, ...] | None = (0.25,)
    lambda_total: tuple[float, ...] | None = None
    mu: float = 1.0
    noise_var: float = 0.0
    trials: int = 20_000
    seed: int = 1
    out: str | None = None
    format: str = "csv"
    n_t: int | None = None
    n_r: int | None = None
    precoder_mode: PrecoderMode = PrecoderMode.ISOTROPIC
    quad: QuadratureParams = DEFAULT_QUAD

    def __post_init__(self) -> None:
        if not self.modes:
            raise ConfigError("run.modes: at least one mode must be selected")
        if (self.lambda_p is None) == (self.lambda_total is None):
            raise ConfigError(
                "params: exactly one of lambda_p and lambda_total is required"
            )
        for name, values, low in (
            ("lambda_p", self.lambda_p, 0.0),
            ("lambda_total", self.lambda_total, 0.0),
            ("sigma", self.sigma, 0.0),
            ("threshold", self.threshold, None),
            ("d_ii", self.d_ii, 0.0),
        ):
            if values is None:
                continue
            if not values:
                raise ConfigError(f"params.{name}: sweep list must be non-empty")
            for v in values:
                if low is not None and not v > low:
                    raise ConfigError(f"params.{name}: values must be > {low}")
                if low is None and v < 0:
                    raise ConfigError(f"params.{name}: values must be >= 0")
        if not self.cbar or any(c < 1 for c in self.cbar):
            raise ConfigError("params.cbar: values must be integers >= 1")
        if not self.alpha or any(a < 2 for a in self.alpha):
            raise ConfigError("params.alpha: values must be >= 2")
        if any(b >= a for a, b in zip(self.d_ii[1:], self.d_ii)):
            raise ConfigError("params.d_ii: grid must be strictly increasing")
        if not self.mu > 0:
            raise ConfigError("params.mu: must be positive")
        if self.noise_var < 0:
            raise ConfigError("params.noise_var: must be >= 0")
        if self.format not in ("csv", "json"):
            raise ConfigError("run.format: must be 'csv' or 'json'")
        if _MC_MODES & set(self.modes) and self.trials < 100:
            raise ConfigError("run.trials: Monte-Carlo modes need >= 100 trials")
        analysis_modes = set(self.modes) - _MC_MODES
        if analysis_modes and self.noise_var != 0:
            raise ConfigError(
                "params.noise_var: analysis and bound modes require zero noise"
            )
        if analysis_modes and any(a <= 2 for a in self.alpha):
            raise ConfigError(
                "params.alpha: analysis and bound modes require alpha > 2"
            )
        if CurveMode.BOUND_1D in self.modes and any(a > 4 for a in self.alpha):
            raise ConfigError("params.alpha: BOUND_1D requires 2 <= alpha <= 4")
        if CurveMode.BOUND_CLOSED in self.modes and any(
            a != 4 for a in self.alpha
        ):
            raise ConfigError("params.alpha: BOUND_CLOSED requires alpha = 4")

    def param_combos(self) -> list[NetworkParams]:
        """Resolved parameter sets, one per sweep combination (d_ii=1)."""
        lam_axis = (
            [("lambda_p", v) for v in self.lambda_p]
            if self.lambda_p is not None
            else [("lambda_total", v) for v in self.lambda_total]
        )
        combos = []
        for (kind, lam), cbar, sigma, alpha, thr in itertools.product(
            lam_axis, self.cbar, self.sigma, self.alpha, self.threshold
        ):
            lambda_p = lam / cbar if kind == "lambda_total" else lam
            combos.append(
                NetworkParams(
                    lambda_p=lambda_p,
                    cbar=cbar,
                    sigma=sigma,
                    alpha=alpha,
                    threshold=thr,
                    d_ii=1.0,
                    mu=self.mu,
                    noise_var=self.noise_var,
                )
            )
        return combos


@dataclass(frozen=True)
class CurveRecord:
    """One evaluated point: a (d_ii, mode) pair with value and error.

    ``meta`` carries the resolved sweep parameters and per-point
    bookkeeping (trial counts or quadrature tolerances, wall time) as
    string key-value pairs.
    """

    d_ii: float
    mode: CurveMode
    value: float
    err: float
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"curve value {self.value} outside [0, 1]")
        if not self.err >= 0.0:
            raise ValueError(f"error measure {self.err} must be >= 0")


@dataclass(frozen=True)
class CurveComparison:
    """Pointwise metric between two curves plus its maximizer."""

    metric: CompareMetric
    d_ii: tuple[float, ...]
    values: tuple[float, ...]
    argmax_d: float
    max_value: float


def _coerce_number_list(
    raw: object, path: str, integer: bool = False
) -> tuple:
    scalar_types = (int,) if integer else (int, float)
    if isinstance(raw, bool):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if isinstance(raw, scalar_types):
        return (raw,)
    if isinstance(raw, list) and raw and all(
        isinstance(v, scalar_types) and not isinstance(v, bool) for v in raw
    ):
        return tuple(raw)
    kind = "integer" if integer else "number"
    raise ConfigError(f"{path}: expected a {kind} or non-empty list of them")


def _coerce_scalar(raw: object, path: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    return float(raw)


def load_spec(path: str) -> ExperimentSpec:
    """Parse an experiment config file into a validated spec.

    Raises:
        ConfigError: On unreadable files, TOML syntax errors, unknown
            keys, or invalid values; the message names the field.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid TOML: {exc}") from exc
    return spec_from_dict(data)


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from parsed config data."""
    params = dict(data.get("params", {}))
    run = dict(data.get("run", {}))
    mc = dict(data.get("mc", {}))
    unknown = set(data) - {"params", "run", "mc"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")

    kwargs: dict = {}
    if "lambda_p" in params and "lambda_total" in params:
        raise ConfigError(
            "params: exactly one of lambda_p and lambda_total is required"
        )
    if "lambda_total" in params:
        kwargs["lambda_p"] = None
        kwargs["lambda_total"] = tuple(
            float(v)
            for v in _coerce_number_list(
                params.pop("lambda_total"), "params.lambda_total"
            )
        )
    elif "lambda_p" in params:
        kwargs["lambda_p"] = tuple(
            float(v)
            for v in _coerce_number_list(params.pop("lambda_p"), "params.lambda_p")
        )
    for name, integer in (
        ("cbar", True),
        ("sigma", False),
        ("alpha", False),
        ("threshold", False),
        ("d_ii", False),
    ):
        if name in params:
            values = _coerce_number_list(
                params.pop(name), f"params.{name}", integer=integer
            )
            kwargs[name] = values if integer else tuple(float(v) for v in values)
    for name in ("mu", "noise_var"):
        if name in params:
            kwargs[name] = _coerce_scalar(params.pop(name), f"params.{name}")
    if params:
        raise ConfigError(f"params: unknown key(s) {sorted(params)}")

    if "modes" in run:
        raw_modes = run.pop("modes")
        if not isinstance(raw_modes, list) or not all(
            isinstance(m, str) for m in raw_modes
        ):
            raise ConfigError("run.modes: expected a list of mode names")
        kwargs["modes"] = _parse_modes(raw_modes)
    else:
        raise ConfigError("run.modes: at least one mode must be selected")
    for name, caster in (("trials", int), ("seed", int)):
        if name in run:
            value = run.pop(name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"run.{name}: expected an integer")
            kwargs[name] = caster(value)
    for name in ("out", "format"):
        if name in run:
            value = run.pop(name)
            if not isinstance(value, str):
                raise ConfigError(f"run.{name}: expected a string")
            kwargs[name] = value
    if run:
        raise ConfigError(f"run: unknown key(s) {sorted(run)}")

    for name in ("n_t", "n_r"):
        if name in mc:
            value = mc.pop(name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"mc.{name}: expected an integer")
            kwargs[name] = value
    if "precoder_mode" in mc:
        raw = mc.pop("precoder_mode")
        try:
            kwargs["precoder_mode"] = PrecoderMode(str(raw).lower())
        except ValueError:
            valid = ", ".join(m.value for m in PrecoderMode)
            raise ConfigError(
                f"mc.precoder_mode: {raw!r} is not one of {valid}"
            ) from None
    if mc:
        raise ConfigError(f"mc: unknown key(s) {sorted(mc)}")

    return ExperimentSpec(**kwargs)


def _parse_modes(names: list[str]) -> tuple[CurveMode, ...]:
    modes = []
    for name in names:
        try:
            modes.append(CurveMode[name.strip().upper()])
        except KeyError:
            valid = ", ".join(m.name for m in CurveMode)
            raise ConfigError(
                f"run.modes: {name!r} is not one of {valid}"
            ) from None
    return tuple(modes)


def _format_float(x: float) -> str:
    return repr(float(x))


def _point_meta(params: NetworkParams) -> dict[str, str]:
    return {
        "lambda_p": _format_float(params.lambda_p),
        "cbar": str(params.cbar),
        "sigma": _format_float(params.sigma),
        "alpha": _format_float(params.alpha),
        "threshold": _format_float(params.threshold),
    }


def _evaluate_point(
    spec: ExperimentSpec, params: NetworkParams, mode: CurveMode
) -> CurveRecord:
    start = time.perf_counter()
    extra: dict[str, str]
    if mode is CurveMode.IA_ANALYSIS:
        res = success_prob_ia(params, spec.quad)
        value, err = res.value, res.error
        extra = {"abs_tol": _format_float(spec.quad.abs_tol)}
    elif mode is CurveMode.SISO_ANALYSIS:
        res = success_prob_siso(params, spec.quad)
        value, err = res.value, res.error
        extra = {"abs_tol": _format_float(spec.quad.abs_tol)}
    elif mode is CurveMode.BOUND_1D:
        res = upper_bound_1d(params, spec.quad)
        value, err = res.value, res.error
        extra = {"abs_tol": _format_float(spec.quad.abs_tol)}
    elif mode is CurveMode.BOUND_CLOSED:
        value, err = upper_bound_closed_form(params), 0.0
        extra = {}
    elif mode is CurveMode.PPP_BASELINE:
        value, err = ppp_baseline(params), 0.0
        extra = {"c_alpha": _format_float(c_alpha(params.alpha))}
    else:
        trial_mode = Mode.MIMO_IA if mode is CurveMode.IA_MC else Mode.SISO
        config = TrialConfig(
            params=params,
            mode=trial_mode,
            n_t=spec.n_t if trial_mode is Mode.MIMO_IA else None,
            n_r=spec.n_r if trial_mode is Mode.MIMO_IA else None,
            trials=spec.trials,
            master_seed=spec.seed,
            interferer_precoder_mode=spec.precoder_mode,
        )
        est = estimate_success(config)
        value, err = est.p_hat, est.ci_half_width
        extra = {"trials": str(est.trials), "seed": str(est.seed)}
    meta = _point_meta(params)
    meta.update(extra)
    meta["wall_ms"] = f"{(time.perf_counter() - start) * 1e3:.3f}"
    return CurveRecord(
        d_ii=params.d_ii, mode=mode, value=float(value), err=float(err), meta=meta
    )


def run_experiment(spec: ExperimentSpec) -> list[CurveRecord]:
    """Evaluate every (sweep combo, d_ii, mode) point of the spec.

    All Monte-Carlo points share the spec's master seed, so points
    along a curve are positively correlated (common random numbers)
    and curve differences have lower variance than independent seeding
    would give.

    Returns:
        Records ordered by sweep combination, then d_ii, then mode.
    """
    records = []
    for base in spec.param_combos():
        for d in spec.d_ii:
            params = dataclasses.replace(base, d_ii=d)
            for mode in spec.modes:
                records.append(_evaluate_point(spec, params, mode))
    return records


def _spec_to_jsonable(spec: ExperimentSpec) -> dict:
    out = dataclasses.asdict(spec)
    out["modes"] = [m.name for m in spec.modes]
    out["precoder_mode"] = spec.precoder_mode.value
    return out


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records(
    records: list[CurveRecord],
    path: str,
    fmt: str = "csv",
    spec: ExperimentSpec | None = None,
) -> None:
    """Write curve records atomically, plus a spec sidecar if given.

    CSV output has the header ``d_ii,mode,value,err,meta`` with floats
    in full-precision repr form, so reading the file back reproduces the
    records exactly. The sidecar lands at ``<path>.spec.json``.
    """
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["d_ii", "mode", "value", "err", "meta"])
        for rec in records:
            meta = ";".join(f"{k}={v}" for k, v in rec.meta.items())
            writer.writerow(
                [
                    _format_float(rec.d_ii),
                    rec.mode.name,
                    _format_float(rec.value),
                    _format_float(rec.err),
                    meta,
                ]
            )
        _atomic_write_text(path, buf.getvalue())
    elif fmt == "json":
        payload = [
            {
                "d_ii": rec.d_ii,
                "mode": rec.mode.name,
                "value": rec.value,
                "err": rec.err,
                "meta": rec.meta,
            }
            for rec in records
        ]
        _atomic_write_text(path, json.dumps(payload, indent=1) + "\n")
    else:
        raise ConfigError(f"run.format: unknown output format {fmt!r}")
    if spec is not None:
        sidecar = {"seed": spec.seed, "spec": _spec_to_jsonable(spec)}
        _atomic_write_text(path + ".spec.json", json.dumps(sidecar, indent=1) + "\n")


def read_records(path: str) -> list[CurveRecord]:
    """Read records written by write_records; format from the content."""
    with open(path, newline="") as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "[":
            payload = json.load(fh)
            return [
                CurveRecord(
                    d_ii=float(row["d_ii"]),
                    mode=CurveMode[row["mode"]],
                    value=float(row["value"]),
                    err=float(row["err"]),
                    meta=dict(row["meta"]),
                )
                for row in payload
            ]
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["d_ii", "mode", "value", "err", "meta"]:
            raise ValueError(f"unexpected header {header!r} in {path!r}")
        records = []
        for row in reader:
            d, mode, value, err, meta_raw = row
            meta = {}
            if meta_raw:
                for item in meta_raw.split(";"):
                    key, _, val = item.partition("=")
                    meta[key] = val
            records.append(
                CurveRecord(
                    d_ii=float(d),
                    mode=CurveMode[mode],
                    value=float(value),
                    err=float(err),
                    meta=meta,
                )
            )
        return records


def compare_curves(
    a: list[CurveRecord], b: list[CurveRecord], metric: CompareMetric
) -> CurveComparison:
    """Pointwise metric of curve ``a`` against curve ``b``.

    Both inputs must be single curves (one record per d_ii) on the same
    strictly increasing grid. RATIO is a/b, RELATIVE_GAIN is (a-b)/b,
    ABS_DIFF is a-b; a zero denominator yields an infinite (or NaN)
    entry rather than an error.

    Raises:
        GridMismatchError: If the grids differ in length or values.
    """
    grid_a = tuple(rec.d_ii for rec in a)
    grid_b = tuple(rec.d_ii for rec in b)
    if grid_a != grid_b:
        raise GridMismatchError(
            f"curve grids differ: {len(grid_a)} point(s) vs {len(grid_b)}"
            if len(grid_a) != len(grid_b)
            else f"curve grids differ in values: {grid_a} vs {grid_b}"
        )
    if len(set(grid_a)) != len(grid_a):
        raise GridMismatchError("curves must contain one record per d_ii")
    values = []
    for rec_a, rec_b in zip(a, b):
        if metric is CompareMetric.ABS_DIFF:
            values.append(rec_a.value - rec_b.value)
            continue
        num = (
            rec_a.value
            if metric is CompareMetric.RATIO
            else rec_a.value - rec_b.value
        )
        if rec_b.value == 0.0:
            values.append(math.nan if num == 0.0 else math.inf)
        else:
            values.append(num / rec_b.value)
    finite = [
        (v, d) for v, d in zip(values, grid_a) if not math.isnan(v)
    ]
    if not finite:
        raise GridMismatchError("comparison produced no finite values")
    max_value, argmax_d = max(finite)
    return CurveComparison(
        metric=metric,
        d_ii=grid_a,
        values=tuple(values),
        argmax_d=argmax_d,
        max_value=max_value,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustalign",
        description=(
            "Sweep link distances and network parameters, evaluating "
            "success-probability curves by quadrature, bounds, and "
            "Monte-Carlo simulation."
        ),
    )
    parser.add_argument("--spec", required=True, help="experiment config (TOML)")
    parser.add_argument("--out", help="output path (overrides the config)")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--trials", type=int, help="MC trial count override")
    parser.add_argument(
        "--mode",
        help="comma-separated mode names overriding the config",
    )
    parser.add_argument(
        "--format", choices=("csv", "json"), help="output format override"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI entry point. Returns the process exit code.

    Exit codes: 0 success, 2 configuration error, 3 infeasible
    antenna/cluster combination, 4 numerical failure.
    """
    args = _build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        overrides: dict = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.format is not None:
            overrides["format"] = args.format
        if args.out is not None:
            overrides["out"] = args.out
        if args.mode is not None:
            overrides["modes"] = _parse_modes(args.mode.split(","))
        if overrides:
            spec = dataclasses.replace(spec, **overrides)
        records = run_experiment(spec)
        out_path = spec.out or f"curves.{spec.format}"
        write_records(records, out_path, spec.format, spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FeasibilityError as exc:
        print(f"feasibility error: {exc}", file=sys.stderr)
        return 3
    except (QuadratureError, ConvergenceError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    print(
        f"wrote {len(records)} records to {out_path} "
        f"(sidecar {out_path}.spec.json)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
