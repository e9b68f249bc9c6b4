"""Batch runner: ``pmelab <spectrum|geodesic|simulate|verify|manifold>``.

Configuration files hold ``key = value`` lines with ``#`` comments.  Command
line flags override file values.  Every run writes CSV files into the output
directory; failures exit nonzero and leave ``failure.json`` behind.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, PmeLabError

KINDS = ("spectrum", "geodesic", "simulate", "verify", "manifold")
CHECKS = ("stability", "translation", "affine", "dilation", "pressure", "criterion")
INITS = ("random", "zero", "mode", "constant")
SECTOR_DEFAULT = {1: "full_1d", 2: "full_2d"}


class ConfigValidationError(ConfigurationError):
    """All violations found while parsing a configuration."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    kind: str = "spectrum"
    N: int = 1
    sigma: float = 1.0
    sector: str | None = None
    max_degree: int = 8
    l_max: int | None = None
    radial_degree: int | None = None
    dt: float = 1e-3
    t_end: float = 1.0
    sample_dt: float = 1e-2
    scheme: str = "etdrk4"
    eps: float | None = None
    delta: float | None = None
    seed: int = 0
    init: str = "random"
    sup: float = 0.02
    lip: float = 0.02
    mode: tuple[int, ...] = (1, 1, 0)
    amplitude: float = 0.01
    check: str = "stability"
    criterion: int = 3
    z1: tuple[float, ...] = (0.5, 0.0)
    z2: tuple[float, ...] = (1.0, 0.0)
    h: float = 0.04
    K: int = 1
    window: int = 6
    Lambda_minus: float | None = None
    eps_gap: float = 1e-3
    amplitudes: tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    out: str = "out"
    plot: bool = False

    @property
    def resolved_sector(self) -> str:
        return self.sector or SECTOR_DEFAULT.get(self.N, "radial")


_PARSERS = {
    "kind": str, "N": int, "sigma": float, "sector": str, "max_degree": int, "l_max": int,
    "radial_degree": int, "dt": float, "t_end": float, "sample_dt": float, "scheme": str,
    "eps": float, "delta": float, "seed": int, "init": str, "sup": float, "lip": float,
    "mode": _ints, "amplitude": float, "check": str, "criterion": int, "z1": _floats, "z2": _floats,
    "h": float, "K": int, "window": int, "Lambda_minus": float, "eps_gap": float, "amplitudes": _floats,
    "out": str, "plot": _bool,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every invariant violation of ``cfg``, with key names."""
    v: list[str] = []
    if cfg.kind not in KINDS:
        v.append(f"kind: must be one of {', '.join(KINDS)}, got {cfg.kind!r}")
    if cfg.N < 1:
        v.append(f"N: must be an integer >= 1, got {cfg.N}")
    if not (math.isfinite(cfg.sigma) and cfg.sigma > -1):
        v.append(f"sigma: invariant sigma > -1 violated, got {cfg.sigma}")
    sec = cfg.resolved_sector
    if sec not in ("radial", "full_1d", "full_2d"):
        v.append(f"sector: must be radial, full_1d or full_2d, got {sec!r}")
    elif sec == "full_1d" and cfg.N != 1:
        v.append("sector: full_1d needs N = 1")
    elif sec == "full_2d" and cfg.N != 2:
        v.append("sector: full_2d needs N = 2")
    if cfg.max_degree < 0:
        v.append("max_degree: must be >= 0")
    for key in ("l_max", "radial_degree"):
        val = getattr(cfg, key)
        if val is not None and val < 0:
            v.append(f"{key}: must be >= 0")
    if not cfg.dt > 0:
        v.append(f"dt: must be positive, got {cfg.dt}")
    if cfg.t_end < 0:
        v.append(f"t_end: must be >= 0, got {cfg.t_end}")
    if cfg.sample_dt < cfg.dt:
        v.append("sample_dt: must be at least dt")
    if cfg.scheme not in ("if_euler", "etdrk2", "etdrk4"):
        v.append(f"scheme: must be if_euler, etdrk2 or etdrk4, got {cfg.scheme!r}")
    if (cfg.eps is None) != (cfg.delta is None):
        v.append("eps/delta: give both truncation radii or neither")
    elif cfg.eps is not None:
        if cfg.eps <= 0 or cfg.delta <= 0:
            v.append("eps/delta: truncation radii must be positive")
        s = math.sqrt(2.0) * (cfg.eps + cfg.delta)
        if s >= 1:
            v.append(f"eps/delta: invariant sqrt(2)*(eps+delta) < 1 violated, sqrt(2)*(eps+delta) = {s:.2f} >= 1")
    if not 0 <= cfg.seed < 2**64:
        v.append("seed: must be an unsigned 64-bit integer")
    if cfg.init not in INITS:
        v.append(f"init: must be one of {', '.join(INITS)}")
    if cfg.sup < 0 or cfg.lip < 0:
        v.append("sup/lip: targets must be nonnegative")
    if len(cfg.mode) != 3:
        v.append("mode: expected three integers l, n, k")
    if cfg.check not in CHECKS:
        v.append(f"check: must be one of {', '.join(CHECKS)}")
    if not 1 <= cfg.criterion <= 12:
        v.append("criterion: must lie in 1..12")
    for key in ("z1", "z2"):
        z = getattr(cfg, key)
        if len(z) != 2:
            v.append(f"{key}: expected two coordinates")
        elif z[0] ** 2 + z[1] ** 2 > 1 + 1e-12:
            v.append(f"{key}: point must lie in the closed unit disk")
    if not 0 < cfg.h < 0.5:
        v.append("h: mesh step must lie in (0, 0.5)")
    if cfg.K < 0:
        v.append("K: must be >= 0")
    if cfg.window < 1:
        v.append("window: must be >= 1")
    if cfg.eps_gap <= 0:
        v.append("eps_gap: must be positive")
    if any(a <= 0 for a in cfg.amplitudes):
        v.append("amplitudes: must be positive")
    return v


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key = value`` text; raise with the full list of violations."""
    values: dict = {}
    problems: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            problems.append(f"{key}: cannot parse {val!r} ({exc})")
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    cfg = ExperimentConfig(**values)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigValidationError(problems)
    return cfg


# ---------------------------------------------------------------------------
# execution


@dataclass
class ExitReport:
    status: int
    outputs: list[str] = field(default_factory=list)
    summary: list[tuple[str, bool]] = field(default_factory=list)
    error: dict | None = None


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


def _plot_script(csv_name: str, x: str, ys: list[str], logy: bool) -> str:
    lines = [
        "# Plot helper for an external plotting tool (matplotlib).",
        "import csv",
        "import matplotlib.pyplot as plt",
        "",
        f"with open({csv_name!r}) as fh:",
        "    rows = list(csv.DictReader(fh))",
        f"x = [float(r[{x!r}]) for r in rows]",
    ]
    for y in ys:
        lines.append(f"plt.plot(x, [abs(float(r[{y!r}])) for r in rows], label={y!r})")
    if logy:
        lines.append("plt.yscale('log')")
    lines += [f"plt.xlabel({x!r})", "plt.legend()", f"plt.savefig({csv_name.replace('.csv', '.png')!r})", ""]
    return "\n".join(lines)


def _mode_set(cfg: ExperimentConfig):
    from .measures import ModelParams
    from .spectrum import build_mode_set

    return build_mode_set(ModelParams(cfg.N, cfg.sigma), cfg.resolved_sector, cfg.max_degree,
                          l_max=cfg.l_max, radial_degree=cfg.radial_degree)


def _truncation(cfg: ExperimentConfig):
    from .solver import TruncationConfig

    return None if cfg.eps is None else TruncationConfig(cfg.eps, cfg.delta)


def _initial(cfg: ExperimentConfig, ms):
    from .solver import random_field

    if cfg.init == "zero":
        return ms.field()
    if cfg.init == "constant":
        return ms.constant(cfg.amplitude)
    if cfg.init == "mode":
        return ms.unit(*cfg.mode, amplitude=cfg.amplitude)
    return random_field(ms, cfg.seed, cfg.sup, cfg.lip)


def _solver_config(cfg: ExperimentConfig, ms):
    from .solver import SolverConfig

    return SolverConfig(ms, dt=cfg.dt, t_end=cfg.t_end, truncation=_truncation(cfg), scheme=cfg.scheme,
                        sample_dt=cfg.sample_dt)


def _run_spectrum(cfg: ExperimentConfig, out: Path, rep: ExitReport) -> None:
    from .measures import ModelParams
    from .spectrum import spectrum_table

    rows = spectrum_table(ModelParams(cfg.N, cfg.sigma), cfg.resolved_sector, cfg.max_degree)
    path = out / "spectrum.csv"
    _write_csv(path, ["l", "n", "k", "multiplicity", "lambda"], [(l, n, k, m, float(lam)) for l, n, k, m, lam in rows])
    rep.outputs.append(str(path))


def _run_geodesic(cfg: ExperimentConfig, out: Path, rep: ExitReport) -> None:
    from .geometry import geodesic_distance_exact, geodesic_distance_extrapolated, semimetric

    z1, z2 = np.array(cfg.z1), np.array(cfg.z2)
    d = semimetric(z1, z2)
    num = float(geodesic_distance_extrapolated(z1[None], z2[None], h=cfg.h)[0])
    ex = geodesic_distance_exact(z1, z2)
    path = out / "geodesic.csv"
    _write_csv(path, ["z1_x", "z1_y", "z2_x", "z2_y", "d", "d_numeric", "d_exact"],
               [(float(z1[0]), float(z1[1]), float(z2[0]), float(z2[1]), float(d), num,
                 "" if ex is None else float(ex))])
    rep.outputs.append(str(path))


def _run_simulate(cfg: ExperimentConfig, out: Path, rep: ExitReport) -> None:
    from .solver import check_comparison, evolve

    ms = _mode_set(cfg)
    record = evolve(_initial(cfg, ms), _solver_config(cfg, ms))
    header, rows = record.to_rows()
    path = out / "trajectory.csv"
    _write_csv(path, header, rows)
    rep.outputs.append(str(path))
    if record.failed:
        raise PmeLabError(f"trajectory left the admissible regime: {record.message}")
    if cfg.eps is not None:
        rep.summary.append(("comparison principle", check_comparison(record).passed))
    if cfg.plot:
        (out / "plot_trajectory.py").write_text(_plot_script("trajectory.csv", "t", ["sup", "l2"], True))
        rep.outputs.append(str(out / "plot_trajectory.py"))


def _run_verify(cfg: ExperimentConfig, out: Path, rep: ExitReport) -> None:
    from . import asymptotics as asy

    if cfg.check == "criterion":
        from .acceptance import run_criterion

        res = run_criterion(cfg.criterion)
        rows = [r for r in res.rows if r.quantity != "runtime [s]"]
        path = out / f"criterion_{cfg.criterion}.csv"
        _write_csv(path, ["quantity", "expected", "measured", "tolerance", "pass"],
                   [(r.quantity, r.expected, r.measured, r.tolerance, "pass" if r.passed else "fail") for r in rows])
        rep.outputs.append(str(path))
        (out / "timing.txt").write_text(f"{res.runtime:.3f} s (limit {res.limit:g} s)\n")
        rep.summary.append((f"criterion {cfg.criterion}", res.passed))
        return
    ms = _mode_set(cfg)
    scfg = _solver_config(cfg, ms)
    g = _initial(cfg, ms)
    fn = {
        "stability": asy.verify_stability,
        "translation": asy.verify_translation_correction,
        "affine": asy.verify_affine_correction,
        "dilation": asy.verify_dilation_correction,
        "pressure": asy.verify_pressure_laws,
    }[cfg.check]
    report = fn(g, scfg)
    path = out / f"verify_{cfg.check}.csv"
    path.write_text(report.to_csv())
    rep.outputs.append(str(path))
    rep.summary.extend((r.quantity, r.passed) for r in report.rows)


def _run_manifold(cfg: ExperimentConfig, out: Path, rep: ExitReport) -> None:
    from .manifold import ManifoldConfig, fiber_rate, graph_transform_theta
    from .solver import random_field

    ms = _mode_set(cfg)
    trunc = _truncation(cfg)
    kw = {} if trunc is None else {"truncation": trunc}
    mcfg = ManifoldConfig(ms, K=cfg.K, eps_gap=cfg.eps_gap, Lambda_minus=cfg.Lambda_minus, window=cfg.window,
                          dt=cfg.dt, scheme=cfg.scheme, **kw)
    centre = [i for i in range(ms.size) if mcfg.center_mask[i] and i != ms.constant_position]
    direction = np.zeros(ms.size)
    direction[centre[0] if centre else ms.constant_position] = 1.0
    rows = []
    for a in cfg.amplitudes:
        from .spectrum import SpectralField

        gc = SpectralField(ms, a * direction)
        res = graph_transform_theta(gc, mcfg)
        rows.append((float(gc.norm()), float(res.theta.norm()), res.iterations, float(res.contraction_factor)))
    path = out / "manifold_theta.csv"
    _write_csv(path, ["norm_gc", "norm_theta", "iterations", "contraction_factor"], rows)
    rep.outputs.append(str(path))
    g = random_field(ms, cfg.seed, cfg.sup, cfg.lip)
    fr = fiber_rate(g, mcfg)
    path = out / "fiber_rate.csv"
    _write_csv(path, ["t", "distance"], [(float(t), float(d)) for t, d in zip(fr.times, fr.distances)])
    (out / "fiber_fit.csv").write_text(
        "rate,Lambda_minus,window_start,window_end\n"
        f"{fr.rate!r},{mcfg.Lambda_minus!r},{fr.window[0]!r},{fr.window[1]!r}\n")
    rep.outputs += [str(path), str(out / "fiber_fit.csv")]
    rep.summary.append(("fiber rate <= Lambda_minus", fr.rate <= mcfg.Lambda_minus))


_RUNNERS = {
    "spectrum": _run_spectrum,
    "geodesic": _run_geodesic,
    "simulate": _run_simulate,
    "verify": _run_verify,
    "manifold": _run_manifold,
}


def run(cfg: ExperimentConfig) -> ExitReport:
    """Dispatch on ``cfg.kind`` and write outputs plus ``summary.csv``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = ExitReport(0)
    try:
        _RUNNERS[cfg.kind](cfg, out, rep)
    except PmeLabError as exc:
        rep.status = 2
        rep.error = {"kind": cfg.kind, "error": type(exc).__name__, "message": str(exc)}
        (out / "failure.json").write_text(json.dumps(rep.error, indent=2, sort_keys=True) + "\n")
        rep.outputs.append(str(out / "failure.json"))
        return rep
    _write_csv(out / "summary.csv", ["item", "pass"], [(k, "pass" if ok else "fail") for k, ok in rep.summary])
    rep.outputs.append(str(out / "summary.csv"))
    if not all(ok for _, ok in rep.summary):
        rep.status = 1
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", type=Path, help="key = value configuration file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="extra configuration entry, may repeat")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text = args.config.read_text(encoding="utf-8") if args.config else ""
    text += "\n" + "\n".join(args.set)
    overrides = {"kind": args.kind, "out": args.out, "seed": args.seed, "dt": args.dt, "t_end": args.t_end}
    try:
        cfg = parse_config(text, overrides)
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    rep = run(cfg)
    for path in rep.outputs:
        print(path)
    for item, ok in rep.summary:
        print(f"{'pass' if ok else 'FAIL'}  {item}")
    if rep.error:
        print(f"error: {rep.error['error']}: {rep.error['message']}", file=sys.stderr)
    return rep.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
