"""Command-line front end.

A run is described by one JSON config; command-line flags override its
fields.  Results are written atomically and depend only on (config, seed).

Exit codes: 0 success, 1 selftest failure, 2 invalid input,
3 failed assumption, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from numba.core.errors import NumbaWarning

from . import io
from .asymptotics import bm_closed_form, compare, compute_h
from .errors import AssumptionError, ConvergenceError, ValidationError
from .expfun import (
    ConstantEstimate, sample_exp_functional, tail_estimate, theorem_constant, yor_exact_sampler,
)
from .levy import LevyModel, brownian_model, solve_kappa
from .simulate import StartPoint, brownian_lamperti_model, direct_bm_exit, factorized_exit
from .spectral import ConeSpec, spectrum, spectrum_rows

COMMANDS = ("kappa", "spectrum", "expfun-tail", "exit-sim", "asymptote", "compare", "selftest")
STOCHASTIC = ("expfun-tail", "exit-sim", "compare")

EXIT_OK, EXIT_SELFTEST, EXIT_VALIDATION, EXIT_ASSUMPTION, EXIT_CONVERGENCE = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    command: str
    model: Optional[LevyModel] = None
    cone: Optional[ConeSpec] = None
    start: Optional[StartPoint] = None
    alpha: float = 2.0
    lam: Optional[float] = None
    t_grid: Optional[tuple] = None
    count: Optional[int] = None
    dt: Optional[float] = None
    seed: Optional[int] = None
    out_path: Optional[str] = None
    format: Optional[str] = None
    method: str = "factorized"
    modes: int = 200
    delta: float = 0.1
    workers: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        known = {f.name for f in fields(cls)} | {"lambda"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        if kw.get("model") is not None:
            kw["model"] = LevyModel.from_dict(kw["model"])
        if kw.get("cone") is not None:
            kw["cone"] = ConeSpec.from_dict(kw["cone"])
        if kw.get("start") is not None:
            kw["start"] = StartPoint.from_dict(kw["start"])
        if "command" not in kw:
            kw["command"] = None
        return cls(**kw)

    def normalise(self):
        """Coerce types and check the fields each command needs."""
        if self.command not in COMMANDS:
            raise ValidationError(f"command must be one of {', '.join(COMMANDS)}")
        try:
            self.alpha = float(self.alpha)
            self.lam = None if self.lam is None else float(self.lam)
            self.dt = None if self.dt is None else float(self.dt)
            self.count = None if self.count is None else _as_int(self.count, "count")
            self.seed = None if self.seed is None else _as_int(self.seed, "seed")
            self.modes = _as_int(self.modes, "modes")
            self.delta = float(self.delta)
            if self.t_grid is not None:
                self.t_grid = tuple(float(t) for t in self.t_grid)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad config value: {exc}") from exc
        if self.format is None:
            self.format = "csv" if self.out_path and str(self.out_path).endswith(".csv") else "json"
        if self.format not in ("csv", "json"):
            raise ValidationError("format must be csv or json")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.method not in ("factorized", "direct"):
            raise ValidationError("method must be factorized or direct")
        need = {
            "kappa": ("model", "lam"),
            "spectrum": ("cone",),
            "expfun-tail": ("model", "lam", "t_grid", "count", "seed"),
            "exit-sim": ("cone", "start", "t_grid", "count", "dt", "seed"),
            "asymptote": ("cone", "start"),
            "compare": ("cone", "start", "t_grid", "count", "dt", "seed"),
            "selftest": (),
        }[self.command]
        missing = [n for n in need if getattr(self, n) is None]
        if missing:
            raise ValidationError(f"{self.command} needs: {', '.join(missing)}")
        if self.count is not None and self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.dt is not None and self.dt < 0:
            raise ValidationError("dt must be >= 0")
        if self.start is not None and self.cone is not None:
            self.start.check(self.cone)
        return self

    def radial_model(self) -> LevyModel:
        """The configured model, or the Brownian radial part for the cone's dimension."""
        if self.model is not None:
            return self.model
        return brownian_lamperti_model(self.cone.dimension)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("out_path", "workers")}
        out["lambda"] = out.pop("lam")
        return out


def _as_int(v, name):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValidationError(f"{name} must be an integer")
    return int(v)


# ---------------------------------------------------------------- commands


class Output:
    """What a command produces: a JSON object, CSV rows and a summary line."""

    def __init__(self, obj, header=None, rows=None, summary=""):
        self.obj, self.header, self.rows, self.summary = obj, header, rows, summary

    def render(self, fmt):
        if fmt == "csv":
            if self.header is None:
                raise ValidationError("this command has no CSV form")
            return io.csv_text(self.header, self.rows)
        return io.dumps_json(self.obj)


def cmd_kappa(cfg: RunConfig) -> Output:
    k = solve_kappa(cfg.model, cfg.alpha, cfg.lam)
    obj = {"kappa": k, "alpha": cfg.alpha, "lambda": cfg.lam, "model": cfg.model}
    return Output(obj, ["kappa"], [(k,)], summary=f"{k:.15g}")


def cmd_spectrum(cfg: RunConfig) -> Output:
    modes = spectrum(cfg.cone, cfg.modes)
    rows = spectrum_rows(modes)
    obj = {"cone": cfg.cone, "modes": [dict(zip(("j", "eigenvalue", "mass", "sup_norm"), r)) for r in rows]}
    return Output(obj, ["j", "eigenvalue", "mass", "sup_norm"], rows,
                  summary=f"{len(rows)} modes, lambda_1={rows[0][1]:.12g}")


def cmd_expfun_tail(cfg: RunConfig) -> Output:
    model = cfg.model
    if cfg.dt in (None, 0.0):
        if not model.is_brownian:
            raise ValidationError("dt=0 selects the exact sampler, which needs a Brownian model")
        samples = yor_exact_sampler(cfg.alpha, model.sigma, model.drift, cfg.lam, cfg.count, cfg.seed)
    else:
        samples = sample_exp_functional(model, cfg.alpha, cfg.lam, cfg.dt, cfg.count, cfg.seed,
                                        workers=cfg.workers)
    est = tail_estimate(samples, cfg.t_grid)
    kappa = solve_kappa(model, cfg.alpha, cfg.lam)
    const = theorem_constant(model, cfg.alpha, cfg.lam, None if model.is_brownian else samples)
    obj = {"config": cfg, "tail": est, "kappa": kappa, "constant": const._asdict()}
    return Output(obj, ["t", "survival", "ci_low", "ci_high", "scaled"], est.rows(kappa),
                  summary=f"kappa={kappa:.12g} constant={const.value:.6g} "
                          f"scaled tail at t={est.thresholds[-1]:g}: {est.rows(kappa)[-1][4]:.6g}")


def _simulate(cfg: RunConfig):
    if cfg.method == "direct":
        if cfg.model is not None:
            raise ValidationError("the direct estimator simulates Brownian motion; drop the model")
        if cfg.alpha != 2.0:
            raise ValidationError("the direct estimator needs alpha=2")
        return direct_bm_exit(cfg.cone, cfg.start, cfg.t_grid, cfg.dt, cfg.count, cfg.seed, workers=cfg.workers)
    return factorized_exit(cfg.cone, cfg.radial_model(), cfg.alpha, cfg.start, cfg.t_grid, cfg.dt, cfg.count,
                           cfg.seed, spectrum(cfg.cone, cfg.modes), workers=cfg.workers)


def cmd_exit_sim(cfg: RunConfig) -> Output:
    est = _simulate(cfg)
    kappa = solve_kappa(cfg.radial_model(), cfg.alpha, spectrum(cfg.cone, 1)[0].eigenvalue)
    obj = {"config": cfg, "estimate": est, "kappa1": kappa}
    return Output(obj, ["t", "survival", "ci_low", "ci_high", "scaled"], est.rows(kappa),
                  summary=f"{est.method}: P(tau > {est.t_grid[-1]:g}) = {est.survival[-1]:.6g} "
                          f"+- {1.96 * est.se[-1]:.2g}")


def _report(cfg: RunConfig):
    model = cfg.radial_model()
    source = None
    if not model.is_brownian:
        if cfg.seed is None or cfg.count is None or not cfg.dt:
            raise ValidationError("a non-Brownian model needs seed, count and dt>0 for the moment")
        lam1 = spectrum(cfg.cone, 1)[0].eigenvalue
        source = sample_exp_functional(model, cfg.alpha, lam1, cfg.dt, cfg.count, cfg.seed, workers=cfg.workers)
    return compute_h(cfg.cone, model, cfg.alpha, cfg.start, source)


_REPORT_FIELDS = ("kappa1", "phi_prime", "moment", "Mx", "hx", "lambda1")


def cmd_asymptote(cfg: RunConfig) -> Output:
    rep = _report(cfg)
    obj = {"config": cfg, "report": rep}
    if cfg.model is None and cfg.alpha == 2.0:
        k, c = bm_closed_form(cfg.cone.dimension, cfg.cone.angle, cfg.start)
        obj["bm_closed_form"] = {"kappa1": k, "hx": c}
    return Output(obj, list(_REPORT_FIELDS), [tuple(getattr(rep, f) for f in _REPORT_FIELDS)],
                  summary=f"kappa1={rep.kappa1:.12g} hx={rep.hx:.12g}")


def cmd_compare(cfg: RunConfig) -> Output:
    rep = _report(cfg)
    est = _simulate(cfg)
    table = compare(rep, est, cfg.delta)
    rep = rep.with_comparisons(table)
    obj = {"config": cfg, "report": rep, "estimate": est, "delta": table.delta, "converged": table.converged}
    last = table.rows[-1]
    return Output(obj, ["t", "survival", "ci_low", "ci_high", "ratio", "ratio_low", "ratio_high"],
                  [tuple(r) for r in table.rows],
                  summary=f"ratio at t={last.t:g}: {last.ratio:.4f} [{last.ratio_low:.4f}, {last.ratio_high:.4f}]"
                          f" converged={table.converged}")


def _selftest_checks():
    """Closed-form sanity checks; each returns (name, ok)."""
    from .asymptotics import compute_M
    from .levy import AtomJumps, laplace_exponent, laplace_exponent_derivative
    from .spectral import wedge_spectrum

    quad = LevyModel(gaussian_var=2.0)
    half = ConeSpec(2, math.pi)
    top = StartPoint(1.0, math.pi / 2)
    atom = LevyModel(jumps=AtomJumps(1.0, (1.0,), (1.0,)))
    yield "phi(2) = 4 for phi(t) = t^2", math.isclose(laplace_exponent(quad, 2.0), 4.0, rel_tol=1e-14)
    yield "phi'(2) = 4 for phi(t) = t^2", math.isclose(laplace_exponent_derivative(quad, 2.0), 4.0, rel_tol=1e-14)
    yield "pure drift has phi' = 1", laplace_exponent_derivative(LevyModel(drift=1.0), 3.7) == 1.0
    yield "phi(0) = -q", laplace_exponent(LevyModel(kill_rate=0.3, gaussian_var=1.0), 0.0) == -0.3
    # |1| < 1 is false, so the unit atom is not compensated
    yield "unit atom phi(1) = e - 1", math.isclose(laplace_exponent(atom, 1.0), math.e - 1.0, rel_tol=1e-14)
    yield "kappa = 1/2 for alpha=2, sigma=1, lambda=1/2", math.isclose(
        solve_kappa(brownian_model(1.0, 0.0), 2.0, 0.5), 0.5, rel_tol=1e-12)
    modes = wedge_spectrum(half, 4)
    yield "half-plane lambda_1 = 1/2", math.isclose(modes[0].eigenvalue, 0.5, rel_tol=1e-14)
    yield "even wedge modes have zero mass", modes[1].mass == 0.0 and modes[3].mass == 0.0
    yield "M(top of half-plane) = 4/pi", math.isclose(compute_M(modes, top), 4 / math.pi, rel_tol=1e-12)
    rep = compute_h(half, brownian_lamperti_model(2), 2.0, top)
    yield "half-plane h = sqrt(2/pi)", math.isclose(rep.hx, math.sqrt(2 / math.pi), rel_tol=1e-12)
    t = np.array([0.025, 0.05, 0.1])
    from scipy.special import ndtr
    from .simulate import ExitSurvivalEstimate
    s = 2 * ndtr(1 / np.sqrt(t)) - 1
    est = ExitSurvivalEstimate(t, s, s, s, np.zeros(3), "oracle", 0, 0, 0.0)
    yield "no convergence flag at small t", not compare(rep, est, 0.1).converged
    a = io.dumps_json({"x": [1.0, float("inf")]})
    yield "JSON output is strict and stable", a == io.dumps_json({"x": [1.0, float("inf")]}) and "null" in a


def cmd_selftest(cfg: RunConfig) -> Output:
    results = [(name, bool(ok)) for name, ok in _selftest_checks()]
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    failed = sum(not ok for _, ok in results)
    obj = {"checks": [{"name": n, "ok": ok} for n, ok in results], "failed": failed}
    out = Output(obj, ["name", "ok"], [(n, str(ok).lower()) for n, ok in results],
                 summary=f"selftest: {len(results) - failed}/{len(results)} passed")
    out.failed = failed
    return out


HANDLERS = {
    "kappa": cmd_kappa, "spectrum": cmd_spectrum, "expfun-tail": cmd_expfun_tail, "exit-sim": cmd_exit_sim,
    "asymptote": cmd_asymptote, "compare": cmd_compare, "selftest": cmd_selftest,
}


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="conexit", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the config's command")
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--out", dest="out_path", help="output file; printed to stdout when omitted")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int, help="numba threads for Monte Carlo commands")
    return p


def load_config(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON in {args.config}: {exc}") from exc
    cfg = RunConfig.from_dict(raw) if raw else RunConfig(command=None)
    for name in ("command", "seed", "count", "dt", "out_path", "format", "workers"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    return cfg.normalise()


def _assumption_text(exc: AssumptionError):
    n = getattr(exc, "assumption", None)
    return f"assumption {n} violated: {exc}" if n else f"assumption violated: {exc}"


def run(cfg: RunConfig) -> int:
    out = HANDLERS[cfg.command](cfg)
    if cfg.out_path:
        io.atomic_write_text(cfg.out_path, out.render(cfg.format))
        print(f"{out.summary} -> {cfg.out_path}" if cfg.command != "kappa" else out.summary)
    elif cfg.command in ("kappa", "selftest"):
        print(out.summary)
    else:
        sys.stdout.write(out.render(cfg.format))
    return EXIT_SELFTEST if getattr(out, "failed", 0) else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # numba probes TBB first and complains about old versions; the fallback layers are fine
    warnings.filterwarnings("ignore", message=".*TBB.*", category=NumbaWarning)
    try:
        return run(load_config(args))
    except AssumptionError as exc:
        print(f"error: {_assumption_text(exc)}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ConvergenceError as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
