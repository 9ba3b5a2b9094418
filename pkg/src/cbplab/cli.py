"""Command-line front door: ``cbp <command> [--config PATH] [--seed N] [--threads N] [--out DIR]``.

Configuration is a flat INI file (sections of ``key = value``).  Every output
carries the config hash, the seed and the package version, and two runs with
the same config produce byte-identical files.

Exit codes: 0 success, 1 numerically inconclusive, 2 configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .busemann_petty import (AffirmativeConfig, BpConfig, GapRule, run_affirmative_scan,
                             run_counterexample)
from .fourier import (FtConfig, HomogeneousFunction, PdConfig, ft_many, moduli_lattice,
                      parseval_check, pd_test)
from .geometry import Density, Direction, StarBody, from_moduli
from .quadrature import MIN_SPHERE_COUNT, make_moduli_rule, make_sphere_rule
from .sections import body_measure, section_measure_direct, section_measure_fourier

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2
SECTION_RTOL = 1e-2


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


# (section, key, type, default); default None means required
_SCHEMA = (
    ("body", "kind", str, None),
    ("body", "n", int, None),
    ("body", "q", float, 4.0),
    ("body", "delta", float, 0.0),
    ("density", "kind", str, "one"),
    ("density", "sigma", float, 1.0),
    ("run", "seed", int, 0),
    ("quadrature", "section_count", int, 16384),
    ("quadrature", "measure_count", int, 16384),
    ("quadrature", "moduli_count", int, 24),
    ("quadrature", "ft_count", int, 8192),
    ("quadrature", "ft_replicates", int, 8),
    ("quadrature", "circle_points", int, 64),
    ("quadrature", "directions", int, 8),
    ("quadrature", "grid", int, 40),
    ("counterexample", "delta", float, 0.02),
    ("counterexample", "eps0", float, 1e-8),
    ("counterexample", "eps_floor", float, 1e-14),
    ("counterexample", "max_width", float, 0.3),
    ("counterexample", "min_width", float, 0.05),
    ("counterexample", "directions", int, 16),
    ("counterexample", "identity_rtol", float, 0.02),
    ("affirm", "bodies", str, "ball, lq1, lq2, lq4, lq8"),
    ("affirm", "densities", str, "one, gaussian"),
    ("affirm", "pairs", int, 4),
)

_MINIMUMS = {"section_count": MIN_SPHERE_COUNT, "measure_count": MIN_SPHERE_COUNT,
             "ft_count": MIN_SPHERE_COUNT, "moduli_count": 2, "ft_replicates": 2,
             "circle_points": 8, "directions": 1, "grid": 2, "pairs": 1}


@dataclass(frozen=True)
class RunConfig:
    body_kind: str
    n: int
    q: float = 4.0
    body_delta: float = 0.0
    density: str = "one"
    sigma: float = 1.0
    seed: int = 0
    section_count: int = 16384
    measure_count: int = 16384
    moduli_count: int = 24
    ft_count: int = 8192
    ft_replicates: int = 8
    circle_points: int = 64
    directions: int = 8
    grid: int = 40
    ce_delta: float = 0.02
    eps0: float = 1e-8
    eps_floor: float = 1e-14
    max_width: float = 0.3
    min_width: float = 0.05
    ce_directions: int = 16
    identity_rtol: float = 0.02
    bodies: str = "ball, lq1, lq2, lq4, lq8"
    densities: str = "one, gaussian"
    pairs: int = 4
    threads: int = 1

    @property
    def digest(self) -> str:
        """Hash of every setting that can change a number (threads cannot)."""
        d = asdict(self)
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for (sec, key, _, _), f in zip(_SCHEMA, fields(self)):
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp[sec][key] = str(getattr(self, f.name))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def ft(self, seed_offset: int = 0) -> FtConfig:
        return FtConfig(count=self.ft_count, replicates=self.ft_replicates,
                        circle_points=self.circle_points, seed=self.seed + seed_offset)


def parse_config(text: str, seed: int | None = None, threads: int = 1) -> RunConfig:
    """Parse and validate INI text; raise ConfigError with a readable message."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    values = []
    for sec, key, typ, default in _SCHEMA:
        raw = cp.get(sec, key, fallback=None)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing config key {sec}.{key}")
            values.append(default)
            continue
        try:
            values.append(typ(raw.strip()))
        except ValueError:
            raise ConfigError(f"{sec}.{key}: cannot read {raw!r} as {typ.__name__}") from None
    cfg = RunConfig(*values)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    cfg = replace(cfg, threads=max(1, threads))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.body_kind not in ("ball", "lq"):
        raise ConfigError(f"unknown body kind {cfg.body_kind!r} (expected ball or lq)")
    if cfg.n < 1:
        raise ConfigError("body.n must be >= 1")
    if cfg.body_kind == "lq" and cfg.q < 1:
        raise ConfigError("body.q must be >= 1")
    if cfg.density not in ("one", "gaussian"):
        raise ConfigError(f"unknown density kind {cfg.density!r} (expected one or gaussian)")
    if cfg.sigma <= 0:
        raise ConfigError("density.sigma must be positive")
    for name, lo in _MINIMUMS.items():
        if getattr(cfg, name) < lo:
            raise ConfigError(f"{name} = {getattr(cfg, name)} is below the minimum {lo}")
    if cfg.circle_points % 2:
        raise ConfigError("circle_points must be even")
    if not 0 < cfg.eps_floor <= cfg.eps0:
        raise ConfigError("need 0 < eps_floor <= eps0")
    for b in _split(cfg.bodies):
        _parse_body_token(b, cfg.n)
    for d in _split(cfg.densities):
        _parse_density_token(d, cfg.n, cfg.sigma)


def _split(s: str) -> list:
    return [t.strip() for t in s.split(",") if t.strip()]


def _parse_body_token(tok: str, n: int) -> StarBody:
    if tok == "ball":
        return StarBody.ball(n)
    if tok.startswith("lq"):
        try:
            return StarBody.lq(n, float(tok[2:]))
        except ValueError:
            pass
    raise ConfigError(f"unknown body {tok!r} in affirm.bodies")


def _parse_density_token(tok: str, n: int, sigma: float) -> Density:
    if tok == "one":
        return Density.constant(n)
    if tok == "gaussian":
        return Density.gaussian(n, sigma)
    raise ConfigError(f"unknown density {tok!r}")


def make_body(cfg: RunConfig) -> StarBody:
    if cfg.body_kind == "ball":
        return StarBody.ball(cfg.n)
    return StarBody.lq(cfg.n, cfg.q, cfg.body_delta)


def make_density(cfg: RunConfig) -> Density:
    return _parse_density_token(cfg.density, cfg.n, cfg.sigma)


def _body_name(cfg: RunConfig) -> str:
    if cfg.body_kind == "ball":
        return "ball"
    return f"lq{cfg.q:g}" + (f"+{cfg.body_delta:g}" if cfg.body_delta else "")


def _density_name(cfg: RunConfig) -> str:
    return "one" if cfg.density == "one" else f"gaussian{cfg.sigma:g}"


def random_directions(n: int, count: int, seed: int) -> np.ndarray:
    x = np.random.default_rng(seed).standard_normal((count, 2 * n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# -- output ----------------------------------------------------------------------

def _meta(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.digest, "seed": cfg.seed,
            "version": __version__}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path: Path, cfg: RunConfig, command: str, payload: dict) -> Path:
    doc = {"meta": _meta(cfg, command), **_clean(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def write_csv(path: Path, cfg: RunConfig, command: str, header: list, rows: list) -> Path:
    meta = _meta(cfg, command)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header + ["config_hash", "seed", "version"])
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row] + [meta["config_hash"], meta["seed"], meta["version"]])
    return path


# -- commands ---------------------------------------------------------------------
# each returns an exit status and writes its files into `out`

def cmd_measure(cfg: RunConfig, out: Path) -> int:
    body, f = make_body(cfg), make_density(cfg)
    if f.moduli_only:
        est = body_measure(body, f, make_moduli_rule(cfg.n, cfg.moduli_count))
    else:
        est = body_measure(body, f, make_sphere_rule(2 * cfg.n, cfg.measure_count, cfg.seed))
    write_csv(out / "measure.csv", cfg, "measure", ["body", "density", "value", "error"],
              [[_body_name(cfg), _density_name(cfg), est.value, est.error]])
    return EXIT_OK if math.isfinite(est.value) else EXIT_INCONCLUSIVE


def cmd_section(cfg: RunConfig, out: Path) -> int:
    if cfg.n < 2:
        raise ConfigError("sections need n >= 2")
    body, f = make_body(cfg), make_density(cfg)
    rows, status = [], EXIT_OK
    for k, xi in enumerate(random_directions(cfg.n, cfg.directions, cfg.seed)):
        d = Direction.from_vector(xi)
        direct = section_measure_direct(body, f, d, count=cfg.section_count, seed=cfg.seed + k)
        four = section_measure_fourier(body, f, d, cfg.ft(k))
        gap = abs(four.value - direct.value) / abs(direct.value)
        ok = gap <= SECTION_RTOL
        status = max(status, EXIT_OK if ok else EXIT_INCONCLUSIVE)
        rows.append([k, *(float(x) for x in xi), direct.value, direct.error, four.value,
                     four.error, gap, "OK" if ok else "MISMATCH"])
    header = (["direction"] + [f"xi{i}" for i in range(2 * cfg.n)]
              + ["direct", "direct_error", "fourier", "fourier_error", "rel_gap", "flag"])
    write_csv(out / "section.csv", cfg, "section", header, rows)
    return status


def cmd_ft(cfg: RunConfig, out: Path) -> int:
    """Long-format sign scan of the transform of ||x||_K^{-2} over the moduli lattice."""
    body = make_body(cfg)
    g = HomogeneousFunction.body_power(body, 2)
    ft = cfg.ft()
    if not body.smooth:
        ft = replace(ft, damping=PdConfig().nonsmooth_damping)
    grid = moduli_lattice(cfg.n, cfg.grid)
    vals, errs = ft_many(g, from_moduli(grid), ft, cfg.threads)
    rows = []
    for p, (r, v, e) in enumerate(zip(grid, vals, errs)):
        for j, rj in enumerate(r):
            rows.append([p, j, float(rj), float(v), float(e)])
    write_csv(out / "ft_scan.csv", cfg, "ft",
              ["point", "coordinate", "modulus", "value", "error"], rows)
    return EXIT_OK if np.all(np.isfinite(vals)) else EXIT_INCONCLUSIVE


def _pd_config(cfg: RunConfig) -> PdConfig:
    scan = replace(cfg.ft(), count=max(MIN_SPHERE_COUNT, cfg.ft_count // 4))
    refine = replace(cfg.ft(1), replicates=2 * cfg.ft_replicates,
                     count=2 * cfg.ft_count, circle_points=2 * cfg.circle_points)
    return PdConfig(grid=cfg.grid, scan=scan, refine=refine, threads=cfg.threads)


def cmd_pdtest(cfg: RunConfig, out: Path) -> int:
    rep = pd_test(make_body(cfg), _pd_config(cfg))
    write_json(out / "pdtest.json", cfg, "pdtest", {"body": _body_name(cfg), **rep.to_dict()})
    return EXIT_INCONCLUSIVE if rep.classification == "inconclusive" else EXIT_OK


def cmd_parseval(cfg: RunConfig, out: Path) -> int:
    """Pairs |x|^{-2n+2} with ||x||_K^{-2}; the ratio must match the ball's."""
    if cfg.n < 2:
        raise ConfigError("parseval needs n >= 2")
    g = HomogeneousFunction.euclidean_power(2 * cfg.n, 2 * cfg.n - 2)
    ft = cfg.ft()
    res = parseval_check(g, make_body(cfg), 2, ft, cfg.moduli_count)
    ref = parseval_check(g, StarBody.ball(cfg.n), 2, ft, cfg.moduli_count)
    dev = abs(res.ratio / ref.ratio - 1)
    tol = 5 * (res.rhs_error / abs(res.rhs) + ref.rhs_error / abs(ref.rhs)) + 1e-12
    write_json(out / "parseval.json", cfg, "parseval",
               {"body": _body_name(cfg), "lhs": res.lhs, "rhs": res.rhs, "ratio": res.ratio,
                "rhs_error": res.rhs_error, "ball_ratio": ref.ratio,
                "ratio_deviation": dev, "tolerance": tol, "consistent": dev <= tol})
    return EXIT_OK if dev <= tol else EXIT_INCONCLUSIVE


def bp_config(cfg: RunConfig) -> BpConfig:
    return BpConfig(delta=cfg.ce_delta, pd=PdConfig(grid=cfg.grid, threads=cfg.threads),
                    max_width=cfg.max_width, min_width=cfg.min_width, eps0=cfg.eps0,
                    eps_floor=cfg.eps_floor, directions=cfg.ce_directions,
                    section_rule=replace(GapRule(), seed=cfg.seed),
                    measure_rule=replace(BpConfig().measure_rule, seed=cfg.seed),
                    identity_rtol=cfg.identity_rtol, seed=cfg.seed)


def cmd_counterexample(cfg: RunConfig, out: Path) -> int:
    if cfg.body_kind != "lq":
        raise ConfigError("counterexample needs body.kind = lq")
    if cfg.n < 4 or cfg.q <= 2:
        raise ConfigError("counterexample needs n >= 4 and q > 2")
    rep = run_counterexample(cfg.n, cfg.q, make_density(cfg), bp_config(cfg))
    write_json(out / "counterexample.json", cfg, "counterexample", rep.to_dict())
    manifest = {
        "config": asdict(cfg) | {"threads": None},
        "config_ini": cfg.to_ini(),
        "seeds": {"run": cfg.seed, "section_rules": [cfg.seed + k for k in
                                                     range(cfg.ce_directions)],
                  "measure_rule": cfg.seed, "pd_scan": PdConfig().scan.seed,
                  "pd_refine": PdConfig().refine.seed},
        "stages": rep.diagnostics,
        "verdict": rep.verdict,
        "replay": "cbp counterexample --config <config_ini saved as a file>",
    }
    write_json(out / "counterexample_manifest.json", cfg, "counterexample", manifest)
    return EXIT_OK if rep.verdict == "counterexample_confirmed" else EXIT_INCONCLUSIVE


def cmd_affirm(cfg: RunConfig, out: Path) -> int:
    if cfg.n not in (2, 3):
        raise ConfigError("affirm needs n in {2, 3}")
    bodies = [_parse_body_token(b, cfg.n) for b in _split(cfg.bodies)]
    dens = [_parse_density_token(d, cfg.n, cfg.sigma) for d in _split(cfg.densities)]
    acfg = AffirmativeConfig(pd=_pd_config(cfg), section_count=cfg.section_count,
                             moduli_count=cfg.moduli_count, seed=cfg.seed)
    rep = run_affirmative_scan(cfg.n, bodies, dens, cfg.pairs, acfg)
    write_json(out / "affirm.json", cfg, "affirm", rep.to_dict())
    return EXIT_OK if rep.verdict == "affirmative_consistent" else EXIT_INCONCLUSIVE


def cmd_selftest(out: Path, only=None, seed: int = 0) -> int:
    from .acceptance import run_all

    results = run_all(only, seed=seed)
    for r in results:
        print(r.line())
    doc = {"meta": {"command": "selftest", "seed": seed, "version": __version__},
           "criteria": [_clean(r.to_dict()) for r in results]}
    (out / "selftest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INCONCLUSIVE


COMMANDS = {"measure": cmd_measure, "section": cmd_section, "ft": cmd_ft,
            "pdtest": cmd_pdtest, "parseval": cmd_parseval,
            "counterexample": cmd_counterexample, "affirm": cmd_affirm}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbp", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--threads", type=int, default=1, help="worker cap")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).split("\n")[0])
    st = sub.add_parser("selftest", parents=[common], help="run the acceptance criteria")
    st.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "selftest":
            return cmd_selftest(args.out, args.only, args.seed or 0)
        if args.config is None:
            raise ConfigError("--config is required")
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text, args.seed, args.threads)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"cbp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
