"""Command-line front end: parameter sweeps to CSV and quick verification suites.

Usage::

    macimmse run CONFIG [--workers N] [--output PATH]
    macimmse check [--samples N]
    macimmse version

A config file is flat ``key = value`` text.  Matrices are row-major lists
of ``(re,im)`` pairs whose shape comes from ``n_r`` and ``n_t``; the keys
``p1``, ``p2`` and ``snr`` may instead hold a range ``start:stop:step``,
which turns them into sweep axes (a power axis sets ``P = sqrt(p/n_t) I``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import itertools
import re
import sys as _sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from macimmse import __version__, _streams
from macimmse.bayes import PosteriorStats, posterior_stats, score_identity_variants
from macimmse.constellation import by_name
from macimmse.grad import compare, fd_gradient_oracle, grad_h, grad_p
from macimmse.info import immse_identity_check, low_snr_expansion, mutual_information
from macimmse.opt import (
    SolverOptions,
    mercury_waterfilling,
    solve_power_allocation,
    solve_precoders,
)
from macimmse.system import MacSystem, scalar_system

__all__ = ["ConfigError", "SweepSpec", "InterferenceReport", "parse_config", "run", "interference_report", "main"]

EXPERIMENTS = (
    "mi-surface",
    "mmse-surface",
    "per-user-mmse",
    "covariance-surface",
    "power-allocation",
    "immse-check",
    "gradient-check",
    "lowsnr-check",
    "precode",
    "mercury",
)

KEYS = {
    "experiment", "h1", "h2", "p1", "p2", "snr", "c1", "c2", "n_r", "n_t", "q1", "q2",
    "seed", "n_samples", "output", "workers", "method", "gains", "fd_step",
    "damping", "tolerance", "max_iters", "restarts", "samples_initial",
}
# keys that do not change the numbers written to the CSV
NEUTRAL_KEYS = {"output", "workers"}
AXES = ("p1", "p2", "snr")
DEFAULT_SAMPLES = 200_000

_PAIR = re.compile(r"\(\s*([^(),]+?)\s*,\s*([^(),]+?)\s*\)")
_RANGE = re.compile(r"^\s*([^:]+):([^:]+):([^:]+)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def parse_matrix(text: str, rows: int, cols: int, key: str) -> np.ndarray:
    pairs = _PAIR.findall(text)
    leftover = _PAIR.sub("", text).replace(",", "").replace(";", "").strip()
    if leftover:
        raise ConfigError(f"{key}: expected a list of (re,im) pairs, found {leftover!r}")
    if len(pairs) != rows * cols:
        raise ConfigError(f"{key}: expected {rows * cols} (re,im) pairs for a {rows}x{cols} matrix, got {len(pairs)}")
    try:
        vals = [complex(float(a), float(b)) for a, b in pairs]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return np.array(vals, dtype=complex).reshape(rows, cols)


def parse_range(text: str, key: str) -> Optional[List[float]]:
    """``start:stop:step`` with both ends included; ``None`` if not a range."""
    m = _RANGE.match(text)
    if not m:
        return None
    try:
        start, stop, step = (float(v) for v in m.groups())
    except ValueError:
        raise ConfigError(f"{key}: range must be numeric start:stop:step") from None
    if step <= 0:
        raise ConfigError(f"{key}: range step must be positive")
    if stop < start:
        raise ConfigError(f"{key}: range stop is below start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def _number(cfg: Dict[str, str], key: str, kind=float, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"{key}: missing required key")
        return default
    try:
        return kind(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {cfg[key]!r} as {kind.__name__}") from None


@dataclass(frozen=True)
class SweepSpec:
    """A validated sweep: experiment, axes, system template and run controls."""

    experiment: str
    axes: Dict[str, List[float]]
    template: MacSystem
    q1: float
    q2: float
    seed: int
    n_samples: int
    output: Optional[str]
    workers: int = 1
    method: str = "mc"
    gains: Tuple[float, ...] = ()
    fd_step: Optional[float] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    config_hash: str = ""

    def grid(self) -> List[Dict[str, float]]:
        names = [a for a in AXES if a in self.axes]
        return [dict(zip(names, vals)) for vals in itertools.product(*(self.axes[a] for a in names))]

    def system_at(self, point: Dict[str, float]) -> MacSystem:
        changes = {}
        n = self.template.n_t
        for user in ("p1", "p2"):
            if user in point:
                changes[user] = np.sqrt(point[user] / n) * np.eye(n)
        if "snr" in point:
            changes["snr"] = point["snr"]
        return self.template.with_(**changes)


def _config_dict(text: str) -> Dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[config]\n" + text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{exc.option}: duplicate key") from None
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    cfg = dict(parser["config"])
    unknown = sorted(set(cfg) - KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    return cfg


def config_hash(cfg: Dict[str, str]) -> str:
    canon = "\n".join(f"{k}={' '.join(cfg[k].split())}" for k in sorted(cfg) if k not in NEUTRAL_KEYS)
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(text: str, overrides: Optional[Dict[str, str]] = None) -> SweepSpec:
    cfg = _config_dict(text)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = str(v)
    experiment = cfg.get("experiment", "").strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}")
    n_r = _number(cfg, "n_r", int, 1)
    n_t = _number(cfg, "n_t", int, 1)
    if n_r < 1 or n_t < 1:
        raise ConfigError("n_r: dimensions must be positive")

    axes: Dict[str, List[float]] = {}
    mats = {}
    for key, shape in (("h1", (n_r, n_t)), ("h2", (n_r, n_t)), ("p1", (n_t, n_t)), ("p2", (n_t, n_t))):
        if key not in cfg:
            if key in ("h1", "h2"):
                raise ConfigError(f"{key}: missing required key")
            mats[key] = np.eye(n_t, dtype=complex)
            continue
        rng = parse_range(cfg[key], key) if key in ("p1", "p2") else None
        if rng is not None:
            if min(rng) < 0:
                raise ConfigError(f"{key}: powers must be nonnegative")
            axes[key] = rng
            mats[key] = np.eye(n_t, dtype=complex)
        else:
            mats[key] = parse_matrix(cfg[key], *shape, key)
    snr_text = cfg.get("snr", "1")
    snr_range = parse_range(snr_text, "snr")
    if snr_range is not None:
        if min(snr_range) < 0:
            raise ConfigError("snr: values must be nonnegative")
        axes["snr"] = snr_range
        snr = snr_range[0]
    else:
        snr = _number(cfg, "snr", float, 1.0)
        if snr < 0:
            raise ConfigError("snr: must be nonnegative")
    try:
        c1 = by_name(cfg.get("c1", "bpsk"), n_t)
        c2 = by_name(cfg.get("c2", "bpsk"), n_t)
    except ValueError as exc:
        raise ConfigError(f"c1/c2: {exc}") from None
    try:
        template = MacSystem(mats["h1"], mats["h2"], mats["p1"], mats["p2"], snr, c1, c2)
    except ValueError as exc:
        raise ConfigError(f"h1: {exc}") from None

    q1 = _number(cfg, "q1", float, 1.0)
    q2 = _number(cfg, "q2", float, 1.0)
    if q1 <= 0 or q2 <= 0:
        raise ConfigError("q1: power budgets must be positive")
    n_samples = _number(cfg, "n_samples", int, DEFAULT_SAMPLES)
    if n_samples < 1:
        raise ConfigError("n_samples: must be at least 1")
    workers = _number(cfg, "workers", int, 1)
    if workers < 1:
        raise ConfigError("workers: must be at least 1")
    method = cfg.get("method", "mc").strip()
    if method not in ("mc", "quadrature", "gaussian"):
        raise ConfigError("method: must be mc, quadrature or gaussian")
    if method == "gaussian" and experiment not in ("precode", "power-allocation", "mercury"):
        raise ConfigError("method: gaussian applies to the optimisation experiments only")
    gains: Tuple[float, ...] = ()
    if "gains" in cfg:
        try:
            gains = tuple(float(v) for v in cfg["gains"].replace(",", " ").split())
        except ValueError:
            raise ConfigError("gains: expected a list of numbers") from None
        if not gains or min(gains) <= 0:
            raise ConfigError("gains: channel gains must be positive")
    if experiment == "mercury" and not gains:
        raise ConfigError("gains: required for the mercury experiment")
    fd_step = _number(cfg, "fd_step", float, 0.0) or None
    try:
        solver = SolverOptions(
            damping=_number(cfg, "damping", float, 0.25),
            tolerance=_number(cfg, "tolerance", float, 1e-3),
            max_iters=_number(cfg, "max_iters", int, 100),
            restarts=_number(cfg, "restarts", int, 0),
            samples_initial=_number(cfg, "samples_initial", int, 20_000),
            seed=_number(cfg, "seed", int, 0),
            stats_method=method,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"damping/tolerance/max_iters/restarts/samples_initial: {exc}") from None
    return SweepSpec(
        experiment=experiment,
        axes=axes,
        template=template,
        q1=q1,
        q2=q2,
        seed=_number(cfg, "seed", int, 0),
        n_samples=n_samples,
        output=cfg.get("output"),
        workers=workers,
        method=method,
        gains=gains,
        fd_step=fd_step,
        solver=solver,
        config_hash=config_hash(cfg),
    )


# ---------------------------------------------------------------------------
# interference terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterferenceReport:
    """Interference matrices entering the precoder gradients.

    ``t12 = H1^H H2 P2 E[xh2 xh1^H]`` (user 2 into user 1's gradient) and
    ``t21 = H2^H H1 P1 E[xh1 xh2^H]``; both enter their gradients with the
    factor ``-snr``.  For scalar systems ``rewrite12 = p2 E[xh2 xh1^*]`` is
    the same term with the channel product ``h1^* h2`` divided out.
    """

    t12: np.ndarray
    t21: np.ndarray
    rewrite12: Optional[complex]
    rewrite21: Optional[complex]
    gradient_term12: np.ndarray
    gradient_term21: np.ndarray
    stats: PosteriorStats


def interference_report(
    sys: MacSystem, seed: int = 0, n_samples: int = DEFAULT_SAMPLES, *, method: str = "mc", workers: int = 1
) -> InterferenceReport:
    st = posterior_stats(sys, seed, n_samples, method=method, workers=workers)
    t12 = sys.h1.conj().T @ sys.h2 @ sys.p2 @ st.cross21
    t21 = sys.h2.conj().T @ sys.h1 @ sys.p1 @ st.cross12
    r12 = r21 = None
    if sys.n_r == 1 and sys.n_t == 1:
        r12 = complex(sys.p2[0, 0] * st.cross21[0, 0])
        r21 = complex(sys.p1[0, 0] * st.cross12[0, 0])
    return InterferenceReport(t12, t21, r12, r21, -sys.snr * t12, -sys.snr * t21, st)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _stats_method(spec: SweepSpec) -> str:
    return "quadrature" if spec.method == "quadrature" else "mc"


def _exp_mi(spec, sys, seed):
    m = _stats_method(spec)
    est = mutual_information(sys, seed, spec.n_samples, method=m, workers=spec.workers)
    return {"mi_bits": est.value, "mi_bits_se": est.std_error}


def _exp_mmse(spec, sys, seed):
    st = posterior_stats(sys, seed, spec.n_samples, method=_stats_method(spec), workers=spec.workers)
    se = st.std_errors
    return {
        "mmse_total": st.mmse_total, "mmse_total_se": se["mmse_total"],
        "psi": st.psi_oracle, "psi_se": se["psi_oracle"],
    }


def _exp_per_user(spec, sys, seed):
    st = posterior_stats(sys, seed, spec.n_samples, method=_stats_method(spec), workers=spec.workers)
    se = st.std_errors
    return {"mmse1": st.mmse1, "mmse1_se": se["mmse1"], "mmse2": st.mmse2, "mmse2_se": se["mmse2"]}


def _exp_covariance(spec, sys, seed):
    st = posterior_stats(sys, seed, spec.n_samples, method=_stats_method(spec), workers=spec.workers)
    se = st.std_errors
    snr = sys.snr
    t12 = float(np.trace(sys.h1.conj().T @ sys.a2 @ st.cross21).real)
    t21 = float(np.trace(sys.h2.conj().T @ sys.a1 @ st.cross12).real)
    return {
        "cross_re": float(np.trace(st.cross12).real), "cross_re_se": se["cross_re"],
        "interference12": -snr * t12, "interference12_se": snr * se["interference12"],
        "interference21": -snr * t21, "interference21_se": snr * se["interference21"],
        "psi": st.psi_oracle, "psi_se": se["psi_oracle"],
    }


def _exp_immse(spec, sys, seed):
    rep = immse_identity_check(
        sys, [sys.snr], spec.fd_step, seed, spec.n_samples, stats_method=_stats_method(spec), workers=spec.workers
    )
    return {
        "di_dsnr": rep.di_dsnr_fd[0], "di_dsnr_se": rep.di_dsnr_se[0],
        "mmse_total": rep.mmse_only[0], "psi": rep.psi[0],
        "rel_error": rep.rel_errors[0], "rel_error_mmse_only": rep.rel_errors_mmse_only[0],
    }


def _exp_gradient(spec, sys, seed):
    m = _stats_method(spec)
    st = posterior_stats(sys, seed, spec.n_samples, method=m, workers=spec.workers)
    out = {}
    for name in ("h1", "h2", "p1", "p2"):
        fn = grad_h if name[0] == "h" else grad_p
        fd = fd_gradient_oracle(sys, name, spec.fd_step, seed + 1, spec.n_samples, method=m, workers=spec.workers)
        rep = compare(fn(sys, int(name[1]), stats=st), fd)
        out[f"{name}_rel_error"] = rep.rel_error
        out[f"{name}_scale"] = rep.convention_scale
        out[f"{name}_fd_se"] = float(np.linalg.norm(fd.std_error))
    return out


def _exp_lowsnr(spec, sys, seed):
    first, second = low_snr_expansion(sys)
    est = mutual_information(sys, seed, spec.n_samples, method=_stats_method(spec), unit="nats", workers=spec.workers)
    lin = first * sys.snr
    return {
        "mi_nats": est.value, "mi_nats_se": est.std_error,
        "first_order": lin, "second_order_printed": lin + second * sys.snr ** 2,
        "rel_error_first": abs(est.value - lin) / max(abs(est.value), 1e-300),
    }


def _exp_precode(spec, sys, seed):
    opts = SolverOptions(**{**spec.solver.__dict__, "seed": seed})
    sol = solve_precoders(sys, spec.q1, spec.q2, opts)
    return {
        "mi_bits": sol.objective.value, "mi_bits_se": sol.objective.std_error,
        "kkt_residual": sol.kkt_residual, "nu1": sol.nu1, "nu2": sol.nu2,
        "power1": float(np.real(np.trace(sol.p1 @ sol.p1.conj().T))),
        "power2": float(np.real(np.trace(sol.p2 @ sol.p2.conj().T))),
        "iterations": sol.iterations, "converged": int(sol.converged),
    }


def _exp_power(spec, sys, seed):
    opts = SolverOptions(**{**spec.solver.__dict__, "seed": seed})
    n = sys.n_t
    base = sys.with_(p1=np.eye(n), p2=np.eye(n))
    pa = solve_power_allocation(base, (spec.q1, spec.q2), opts)
    out = {f"p1_{j}": v for j, v in enumerate(pa.powers1)}
    out.update({f"p2_{j}": v for j, v in enumerate(pa.powers2)})
    out.update({"gamma1": pa.gamma1, "gamma2": pa.gamma2, "kkt_residual": pa.kkt_residual,
                "iterations": pa.iterations, "converged": int(pa.converged)})
    return out


def _exp_mercury(spec, sys, seed):
    c = None if spec.method == "gaussian" else sys.c1
    if c is not None and c.dim != 1:
        raise ConfigError("c1: mercury needs a scalar constellation (n_t = 1)")
    pa = mercury_waterfilling(spec.gains, spec.q1, sys.snr, c)
    out = {f"p_{j}": v for j, v in enumerate(pa.powers1)}
    out["gamma"] = pa.gamma1
    return out


RUNNERS = {
    "mi-surface": _exp_mi,
    "mmse-surface": _exp_mmse,
    "per-user-mmse": _exp_per_user,
    "covariance-surface": _exp_covariance,
    "immse-check": _exp_immse,
    "gradient-check": _exp_gradient,
    "lowsnr-check": _exp_lowsnr,
    "precode": _exp_precode,
    "power-allocation": _exp_power,
    "mercury": _exp_mercury,
}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v) + 0.0)


def run(spec: SweepSpec, stream=None) -> str:
    """Evaluate every grid point and return the CSV text; also write ``spec.output``."""
    names = [a for a in AXES if a in spec.axes]
    rows = []
    header = None
    for idx, point in enumerate(spec.grid()):
        sys = spec.system_at(point)
        seed = _streams.derived_seed(spec.seed, idx)
        metrics = RUNNERS[spec.experiment](spec, sys, seed)
        bad = [k for k, v in metrics.items() if not np.isfinite(float(v))]
        if bad:
            where = ", ".join(f"{k}={v}" for k, v in point.items()) or "single point"
            raise ArithmeticError(f"non-finite {bad[0]} at grid point {idx} ({where})")
        if header is None:
            header = names + list(metrics)
        rows.append([_fmt(point[a]) for a in names] + [_fmt(metrics[k]) for k in header[len(names):]])

    buf = io.StringIO()
    buf.write(
        f"# macimmse {__version__} experiment={spec.experiment} config_sha256={spec.config_hash} "
        f"seed={spec.seed} n_samples={spec.n_samples}\n"
    )
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if spec.output:
        with open(spec.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if stream is not None:
        first = header[len(names)]
        vals = [float(r[len(names)]) for r in rows]
        stream.write(
            f"{spec.experiment}: {len(rows)} grid points -> {spec.output or '<stdout>'}; "
            f"{first} in [{min(vals):.6g}, {max(vals):.6g}]\n"
        )
    return text


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


def check(samples: int = DEFAULT_SAMPLES, stream=None) -> bool:
    """Fast identity checks: I-MMSE with interference, gradients, score identity."""
    stream = stream or _sys.stdout
    ok = True

    def line(name, passed, detail):
        nonlocal ok
        ok &= passed
        stream.write(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}\n")

    co = scalar_system(1.0, 1.0, 1.0, 1.0, 1.0)
    rep = immse_identity_check(co, [0.3, 1.0, 3.0], seed=1, n_samples=samples)
    line("immse", rep.max_rel_error <= 0.02, f"max relative error {rep.max_rel_error:.2e} (limit 2e-2)")

    sys2 = scalar_system(1.0, 0.8, 0.9, 0.7, 2.0)
    st = posterior_stats(sys2, method="quadrature")
    worst = 0.0
    for name in ("h1", "h2", "p1", "p2"):
        fn = grad_h if name[0] == "h" else grad_p
        fd = fd_gradient_oracle(sys2, name, method="quadrature")
        worst = max(worst, compare(fn(sys2, int(name[1]), stats=st), fd).rel_error)
    line("gradient", worst <= 1e-2, f"max relative error {worst:.2e} (limit 1e-2)")

    rng = np.random.default_rng(0)
    res = max(score_identity_variants(sys2, [complex(*rng.standard_normal(2))])["scaled_plus"] for _ in range(20))
    line("score", res <= 1e-10, f"max residual {res:.2e} (limit 1e-10)")
    return ok


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="macimmse", description="Two-user MAC I-MMSE sweeps and checks")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the sweep described by a config file")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None, help="threads for Monte-Carlo chunks")
    r.add_argument("--output", default=None, help="CSV path (overrides the config)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--n-samples", type=int, default=None, dest="n_samples")
    c = sub.add_parser("check", help="run the built-in verification suite")
    c.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    sub.add_parser("version", help="print the version")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(f"macimmse {__version__}")
        return 0
    if args.command == "check":
        return 0 if check(args.samples) else 1
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=_sys.stderr)
        return 2
    try:
        spec = parse_config(
            text, {"workers": args.workers, "output": args.output, "seed": args.seed, "n_samples": args.n_samples}
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    try:
        text = run(spec, stream=_sys.stdout)
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 3
    if not spec.output:
        _sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
