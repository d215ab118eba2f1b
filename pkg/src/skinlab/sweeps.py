"""Parameter sweeps, figure presets and result files.

A sweep is described by a flat ``key = value`` config; repeating a key adds
another grid value::

    task = spectrum
    g = 0.25
    alpha = 2
    L = 10
    L = 20

Unless ``J_L``/``J_R`` pairs are given, couplings follow ``J_L = e^g``,
``J_R = e^-g``. ``alpha = inf`` is the nearest-neighbour chain.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import signal
import threading
import time
from concurrent.futures import ProcessPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from skinlab import __version__
from skinlab.dynamics import correlation_from_orbitals, default_dt, init_cdw, trajectory
from skinlab.entanglement import (
    cft_fit,
    crossover_size,
    entropy_from_correlation,
    steady_entropy_curve,
)
from skinlab.localization import (
    InsufficientDataError,
    analytic_xi,
    collapse_fit,
    fit_localization_length,
    localization_vs_size,
    rescaled_profile,
)
from skinlab.model import NEAREST_NEIGHBOR, ModelParams, build_full
from skinlab.spectral import (
    complex_fraction,
    eig_dense,
    model_spectrum,
    predict_critical_length,
    scan_critical_length,
)

log = logging.getLogger(__name__)

TASKS = ("spectrum", "localization", "transition", "dynamics", "entanglement")
PRESETS = ("fig1b", "fig2", "fig3b", "fig3cd", "fig4ab", "fig4de")


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    task: str
    g: list[float] = field(default_factory=list)
    J_L: list[complex] = field(default_factory=list)
    J_R: list[complex] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    L: list[int] = field(default_factory=list)
    alpha_over_g: list[float] = field(default_factory=list)
    mode_fraction: list[float] = field(default_factory=list)
    reality_tol: Optional[float] = None
    threshold: float = 0.0
    trim: float = 0.1
    dt: Optional[float] = None
    steps: int = 400
    checkpoints: int = 10
    n_samples: int = 128
    cuts: str = "all"
    seed: int = 0
    workers: int = 1
    timeout: float = 300.0
    output: Optional[str] = None
    format: str = "csv"

    def validate(self) -> "SweepConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if len(self.J_L) != len(self.J_R):
            raise ConfigError("J_L and J_R must be given in pairs")
        if not (self.g or self.J_L or self.alpha_over_g):
            raise ConfigError("no couplings: give g, J_L/J_R pairs or alpha_over_g")
        if not self.alpha or not self.L:
            raise ConfigError("alpha and L grids must be non-empty")
        if any(L < 2 for L in self.L):
            raise ConfigError("every L must be >= 2")
        if any(a < 0 for a in self.alpha):
            raise ConfigError("alpha must be >= 0 (inf for nearest-neighbour)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("reality_tol", "dt", "timeout", "trim"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be > 0, got {v}")
        if self.n_samples < 1 or self.steps < 1 or self.checkpoints < 1:
            raise ConfigError("n_samples, steps and checkpoints must be >= 1")
        if self.cuts not in ("all", "half"):
            raise ConfigError("cuts must be 'all' or 'half'")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        return self


_LIST_KEYS = {f.name for f in fields(SweepConfig) if f.default_factory is list}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("J_L", "J_R"):
        return complex(raw.replace(" ", "").replace("i", "j"))
    if key == "L":
        return int(raw)
    if key in ("task", "cuts", "format", "output"):
        return raw
    if key in ("steps", "checkpoints", "n_samples", "seed", "workers"):
        return int(raw)
    if raw.lower() in ("none", ""):
        return None
    return float(raw)


def parse_config(text: str) -> SweepConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(SweepConfig)}
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            val = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
        if key in _LIST_KEYS:
            values.setdefault(key, []).append(val)
        elif key in values:
            raise ConfigError(f"line {lineno}: {key} given twice")
        else:
            values[key] = val
    if "task" not in values:
        raise ConfigError("config has no task")
    return SweepConfig(**values).validate()


def _fmt(v) -> str:
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return repr(v) if isinstance(v, float) else str(v)


def config_to_text(config: SweepConfig) -> str:
    lines = []
    for f in fields(SweepConfig):
        v = getattr(config, f.name)
        if f.name in _LIST_KEYS:
            lines += [f"{f.name} = {_fmt(x)}" for x in v]
        elif v is not None:
            lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# grid


def _couplings(config: SweepConfig, alpha: float) -> list[tuple[complex, complex]]:
    pairs = [(complex(a), complex(b)) for a, b in zip(config.J_L, config.J_R)]
    pairs += [(complex(math.exp(g)), complex(math.exp(-g))) for g in config.g]
    if math.isfinite(alpha) and alpha > 0:
        for r in config.alpha_over_g:
            g = alpha / r
            pairs.append((complex(math.exp(g)), complex(math.exp(-g))))
    return pairs


def grid_points(config: SweepConfig) -> list[dict]:
    """Grid points in sorted, deterministic order.

    ``transition`` and series-mode ``localization`` use the L grid as a scan
    window, so their points carry no ``L``.
    """
    window = config.task == "transition" or (
        config.task == "localization" and config.mode_fraction
    )
    seen = set()
    points = []
    for alpha in config.alpha:
        for J_L, J_R in _couplings(config, alpha):
            sizes = [None] if window else config.L
            fracs = config.mode_fraction if config.task == "localization" and window else [None]
            for L in sizes:
                for frac in fracs:
                    key = (J_L.real, J_L.imag, J_R.real, J_R.imag, alpha, L or 0, frac or 0.0)
                    if key in seen:
                        continue
                    seen.add(key)
                    p = {"J_L": J_L, "J_R": J_R, "alpha": alpha}
                    if L is not None:
                        p["L"] = L
                    if frac is not None:
                        p["mode_fraction"] = frac
                    points.append((key, p))
    points.sort(key=lambda kp: kp[0])
    return [p for _, p in points]


# ---------------------------------------------------------------------------
# records


@dataclass
class ResultRecord:
    """One grid point: parameter echo, task, payload and provenance."""

    task: str
    point: dict
    options: dict
    payload: dict
    status: str = "ok"
    error: Optional[str] = None
    version: str = __version__
    wall_time: float = 0.0


def _task_options(config: SweepConfig) -> dict:
    opts = {
        "reality_tol": config.reality_tol,
        "threshold": config.threshold,
        "trim": config.trim,
        "dt": config.dt,
        "steps": config.steps,
        "checkpoints": config.checkpoints,
        "n_samples": config.n_samples,
        "cuts": config.cuts,
        "seed": config.seed,
    }
    if config.task == "transition" or (config.task == "localization" and config.mode_fraction):
        opts["L_window"] = list(config.L)
    if config.task == "entanglement":
        opts["L_grid"] = list(config.L)
    return opts


def _params(point: dict, L: Optional[int] = None) -> ModelParams:
    return ModelParams(point["J_L"], point["J_R"], point["alpha"], L or point.get("L", 2))


def _spectrum_payload(point, opts):
    p = _params(point)
    spec = eig_dense(build_full(p), reality_tol=opts["reality_tol"])
    return {
        "eigenvalues": list(map(complex, spec.eigenvalues)),
        "is_complex": [bool(b) for b in spec.is_complex],
        "complex_fraction": complex_fraction(spec),
    }


def _localization_payload(point, opts):
    if "mode_fraction" in point:
        template = _params(point)
        frac = point["mode_fraction"]
        window = opts["L_window"]
        fits = localization_vs_size(template, frac, window, trim=opts["trim"])
        scan = scan_critical_length(template, window, mode_fraction=frac)
        L_c = scan.L_c_detected
        series = []
        for f in fits:
            log_term = math.log((f.L - 1) / (L_c - 1)) if L_c and L_c > 1 else math.nan
            series.append({"m": f.mode_index, "L": f.L, "xi": f.xi, "fit_quality": f.fit_quality,
                           "L_over_xi": f.L / f.xi, "log_term": log_term})
        out = {"mode_fraction": frac, "L_c_mode": L_c, "series": series}
        try:
            col = collapse_fit(fits, L_c, alpha=template.alpha)
            out["collapse"] = {"slope": col.slope, "intercept": col.intercept, "residual": col.residual}
        except InsufficientDataError as exc:
            out["collapse"] = None
            out["collapse_note"] = str(exc)
        return out
    p = _params(point)
    spec = model_spectrum(p, gauge="auto")
    fits = [fit_localization_length(spec.right_eigenvectors[:, k], trim=opts["trim"])
            for k in range(p.L)]
    try:
        xi_exact = analytic_xi(p)
    except ValueError:
        xi_exact = None
    x, prof = rescaled_profile(spec.right_eigenvectors[:, 0])
    return {
        "xi": [f.xi for f in fits],
        "fit_quality": [f.fit_quality for f in fits],
        "analytic_xi": xi_exact,
        "profile_x": x.tolist(),
        "profile_L_p": prof.tolist(),
    }


def _transition_payload(point, opts):
    template = _params(point)
    scan = scan_critical_length(template, opts["L_window"], threshold=opts["threshold"])
    g = template.g
    return {
        "sizes": scan.sizes,
        "complex_fraction": scan.complex_fraction,
        "L_c_detected": scan.L_c_detected,
        "L_c_predicted": predict_critical_length(template.alpha, g),
        "alpha_over_g": template.alpha / g if g > 0 else math.inf,
    }


def _dynamics_payload(point, opts):
    p = _params(point)
    H = build_full(p)
    dt = opts["dt"] or default_dt(H)
    n = opts["checkpoints"]
    marks = [round(opts["steps"] * (k + 1) / n) for k in range(n)]
    cut = range(p.L // 2)
    times, S = [], []
    for st in trajectory(init_cdw(p.L), H, dt, marks):
        times.append(st.time)
        S.append(entropy_from_correlation(correlation_from_orbitals(st), cut))
    steady = steady_entropy_curve(H, cuts=[p.L // 2], n_samples=opts["n_samples"], seed=opts["seed"])
    return {"dt": dt, "times": times, "S_half": S, "S_half_steady": float(steady.S[0])}


def _entanglement_payload(point, opts):
    p = _params(point)
    L = p.L
    cuts = [L // 2] if opts["cuts"] == "half" else list(range(1, L))
    curve = steady_entropy_curve(build_full(p), cuts=cuts, n_samples=opts["n_samples"], seed=opts["seed"])
    out = {
        "cuts": list(map(int, curve.cuts)),
        "S": curve.S.tolist(),
        "S_half": curve.at(L // 2),
        "complex_fraction": complex_fraction(model_spectrum(p)),
        "crossover_size": crossover_size(_params(point, 2), sorted(opts["L_grid"])),
    }
    if opts["cuts"] == "all" and L >= 10:
        fit = cft_fit(curve, trim=opts["trim"])
        out["cft"] = {"c": fit.c, "s0": fit.s0, "residual": fit.residual}
    return out


_RUNNERS = {
    "spectrum": _spectrum_payload,
    "localization": _localization_payload,
    "transition": _transition_payload,
    "dynamics": _dynamics_payload,
    "entanglement": _entanglement_payload,
}


class PointTimeout(Exception):
    pass


def _alarm(signum, frame):
    raise PointTimeout()


def run_point(task: str, point: dict, options: dict, timeout: Optional[float] = None) -> ResultRecord:
    """Evaluate one grid point; failures are captured in the record."""
    t0 = time.perf_counter()
    use_alarm = (
        timeout is not None
        and threading.current_thread() is threading.main_thread()
        and hasattr(signal, "setitimer")
    )
    if use_alarm:
        old = signal.signal(signal.SIGALRM, _alarm)
        signal.setitimer(signal.ITIMER_REAL, timeout)
    try:
        payload = _RUNNERS[task](point, options)
        rec = ResultRecord(task, point, options, payload)
    except PointTimeout:
        rec = ResultRecord(task, point, options, {}, "failed", f"timeout after {timeout} s")
    except Exception as exc:  # one bad point must not abort the sweep
        log.warning("point %s failed: %s", point, exc)
        rec = ResultRecord(task, point, options, {}, "failed", f"{type(exc).__name__}: {exc}")
    finally:
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, old)
    rec.wall_time = time.perf_counter() - t0
    return rec


def rerun(record: ResultRecord) -> ResultRecord:
    """Recompute a record from its own parameter echo."""
    return run_point(record.task, record.point, record.options)


def run_sweep(config: SweepConfig) -> list[ResultRecord]:
    """Evaluate every grid point; output order is the sorted grid order."""
    config.validate()
    points = grid_points(config)
    opts = _task_options(config)
    if config.workers == 1:
        return [run_point(config.task, p, opts, config.timeout) for p in points]
    records = []
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(run_point, config.task, p, opts, config.timeout) for p in points]
        for p, fut in zip(points, futures):
            try:
                # the worker enforces the per-point limit itself; this is a backstop
                records.append(fut.result(timeout=config.timeout * len(points)))
            except FutureTimeout:
                records.append(ResultRecord(config.task, p, opts, {}, "failed", "timeout"))
            except Exception as exc:
                records.append(ResultRecord(config.task, p, opts, {}, "failed", repr(exc)))
    return records


# ---------------------------------------------------------------------------
# presets


def figure_preset(name: str) -> SweepConfig:
    """Config that regenerates the data behind one figure panel set."""
    if name == "fig1b":
        cfg = SweepConfig("localization", g=[0.25], alpha=[0.0], L=[10, 20, 30, 40, 50, 60])
    elif name == "fig2":
        cfg = SweepConfig("spectrum", g=[0.25], alpha=[2.0], L=[10, 20, 40, 60])
    elif name == "fig3b":
        g = 0.25
        cfg = SweepConfig("transition", g=[g], alpha=[g * r for r in (2, 4, 6, 8, 10, 12, 14, 16)],
                          L=list(range(2, 121)))
    elif name == "fig3cd":
        cfg = SweepConfig("localization", g=[0.25], alpha=[2.0], L=list(range(4, 201)),
                          mode_fraction=[0.0, 0.2, 0.4, 0.6, 0.8])
    elif name == "fig4ab":
        cfg = SweepConfig("entanglement", g=[0.3, 0.6, 1.2], alpha=[0.0], L=[20, 40, 60, 80, 100],
                          n_samples=64)
    elif name == "fig4de":
        cfg = SweepConfig("entanglement", g=[0.3], alpha=[0.0, 1.0, 2.0, 3.0, 4.0, NEAREST_NEIGHBOR],
                          alpha_over_g=[10.0], L=list(range(10, 122, 8)), cuts="half",
                          n_samples=512)
    else:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return cfg.validate()


# ---------------------------------------------------------------------------
# emission


_POINT_COLS = ["point", "status", "J_L_re", "J_L_im", "J_R_re", "J_R_im", "alpha", "L"]

_TASK_COLS = {
    "spectrum": ["index", "E_re", "E_im", "is_complex", "complex_fraction"],
    "localization": ["index", "xi", "fit_quality", "analytic_xi"],
    "localization_series": ["mode_fraction", "m", "L_size", "xi", "L_over_xi", "log_term",
                            "L_c_mode", "slope", "intercept"],
    "transition": ["L_size", "complex_fraction", "L_c_detected", "L_c_predicted", "alpha_over_g"],
    "dynamics": ["time", "S_half"],
    "entanglement": ["l", "S", "S_half", "complex_fraction", "crossover_size", "c", "s0"],
}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _table_kind(task: str, records: Sequence[ResultRecord]) -> str:
    if task == "localization" and any("mode_fraction" in r.point for r in records):
        return "localization_series"
    return task


def _rows(kind: str, rec: ResultRecord):
    pl = rec.payload
    if rec.status != "ok":
        yield {}
        return
    if kind == "spectrum":
        for k, (E, c) in enumerate(zip(pl["eigenvalues"], pl["is_complex"]), 1):
            yield {"index": k, "E_re": E.real, "E_im": E.imag, "is_complex": c,
                   "complex_fraction": pl["complex_fraction"]}
    elif kind == "localization":
        for k, (xi, q) in enumerate(zip(pl["xi"], pl["fit_quality"]), 1):
            yield {"index": k, "xi": xi, "fit_quality": q, "analytic_xi": pl["analytic_xi"]}
    elif kind == "localization_series":
        col = pl.get("collapse") or {}
        for s in pl["series"]:
            yield {"mode_fraction": pl["mode_fraction"], "m": s["m"], "L_size": s["L"], "xi": s["xi"],
                   "L_over_xi": s["L_over_xi"], "log_term": s["log_term"], "L_c_mode": pl["L_c_mode"],
                   "slope": col.get("slope"), "intercept": col.get("intercept")}
    elif kind == "transition":
        for L, f in zip(pl["sizes"], pl["complex_fraction"]):
            yield {"L_size": L, "complex_fraction": f, "L_c_detected": pl["L_c_detected"],
                   "L_c_predicted": pl["L_c_predicted"], "alpha_over_g": pl["alpha_over_g"]}
    elif kind == "dynamics":
        for t, S in zip(pl["times"], pl["S_half"]):
            yield {"time": t, "S_half": S}
        yield {"time": math.inf, "S_half": pl["S_half_steady"]}
    elif kind == "entanglement":
        cft = pl.get("cft") or {}
        for l, S in zip(pl["cuts"], pl["S"]):
            yield {"l": l, "S": S, "S_half": pl["S_half"], "complex_fraction": pl["complex_fraction"],
                   "crossover_size": pl["crossover_size"], "c": cft.get("c"), "s0": cft.get("s0")}


def records_to_csv(records: Sequence[ResultRecord], task: str) -> str:
    """Long-format CSV; complex values are split into ``_re``/``_im`` columns."""
    kind = _table_kind(task, records)
    header = _POINT_COLS + _TASK_COLS[kind]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, rec in enumerate(records):
        p = rec.point
        J_L, J_R = complex(p["J_L"]), complex(p["J_R"])
        base = {"point": i, "status": rec.status, "J_L_re": J_L.real, "J_L_im": J_L.imag,
                "J_R_re": J_R.real, "J_R_im": J_R.imag, "alpha": float(p["alpha"]), "L": p.get("L")}
        for row in _rows(kind, rec):
            row = {**base, **row}
            writer.writerow([_cell(row.get(c)) for c in header])
    return buf.getvalue()


def _to_jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return {"float": repr(obj)}
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if set(obj) == {"re", "im"}:
            return complex(obj["re"], obj["im"])
        if set(obj) == {"float"}:
            return float(obj["float"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_jsonable(v) for v in obj]
    return obj


def records_to_json(records: Sequence[ResultRecord], include_timing: bool = False) -> str:
    out = []
    for rec in records:
        d = asdict(rec)
        if not include_timing:
            d.pop("wall_time")
        out.append(_to_jsonable(d))
    return json.dumps(out, indent=1, sort_keys=True) + "\n"


def records_from_json(text: str) -> list[ResultRecord]:
    return [ResultRecord(**_from_jsonable(d)) for d in json.loads(text)]


def emit(
    records: Sequence[ResultRecord],
    fmt: str,
    path,
    task: Optional[str] = None,
    include_timing: bool = False,
) -> Path:
    """Write records as CSV or JSON; ``task`` is needed for an empty CSV header."""
    if task is None:
        if not records:
            raise ValueError("task is required to emit an empty record set")
        task = records[0].task
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            path.write_text(records_to_csv(records, task))
        elif fmt == "json":
            path.write_text(records_to_json(records, include_timing))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
    return path
