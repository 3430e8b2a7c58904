"""Command-line front end: ``helmlab {verify,sweep,resonance,oracle-compare,dimension-gate}``.

Configuration files are INI-style with the sections below; every key is
optional except ``geometry.eps`` whenever a file is given for a command that
solves for resonances.

    [geometry]   a, b, L, eps (comma-separated list), mode (e.g. "1,1")
    [truncation] k_neck, m_cavity, exterior_tol, k_levels
    [oracle]     points_across, sigma
    [verify]     gamma2_quoted
    [run]        seed, threads
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import paperlab
from .cavity import RectCavity
from .errors import ConfigError, HelmlabError, UnresolvedWidth
from .solver import (
    DEFAULT_EPS_LIST,
    ModeTruncation,
    ResonatorGeometry,
    bracket_constant,
    find_resonance,
    fit_width_law,
    sweep,
)

log = logging.getLogger("helmlab")

CSV_COLUMNS = (
    "eps",
    "rho_re",
    "im_sign",
    "im_log",
    "s_norm",
    "estimator",
    "residual",
    "k_neck",
    "a1_minus_log",
    "tail_log",
    "im_log10",
)

# section -> {key: (field name, parser)}
_SCHEMA = {
    "geometry": {
        "a": ("a", float),
        "b": ("b", float),
        "L": ("L", float),
        "eps": ("eps_list", lambda v: tuple(float(x) for x in v.split(",") if x.strip())),
        "mode": ("mode", lambda v: tuple(int(x) for x in v.split(","))),
    },
    "truncation": {
        "k_neck": ("k_neck", int),
        "m_cavity": ("m_cavity", lambda v: None if v.strip().lower() in ("", "auto", "none") else int(v)),
        "exterior_tol": ("exterior_tol", float),
        "k_levels": ("k_levels", int),
    },
    "oracle": {
        "points_across": ("points_across", int),
        "sigma": ("sigma", float),
    },
    "verify": {"gamma2_quoted": ("gamma2_quoted", float)},
    "run": {"seed": ("seed", int), "threads": ("threads", int)},
}


@dataclass(frozen=True)
class RunConfig:
    a: float = 1.0
    b: float = 1.0
    L: float = 1.0
    eps_list: tuple[float, ...] = DEFAULT_EPS_LIST
    mode: tuple[int, int] = (1, 1)
    k_neck: int = 32
    m_cavity: int | None = None
    exterior_tol: float = 1e-9
    k_levels: int = 3
    points_across: int = 48
    sigma: float = 4.0
    gamma2_quoted: float = 0.879
    seed: int = 0
    threads: int = 1
    source: str = field(default="defaults", compare=False)

    def validate(self) -> "RunConfig":
        if min(self.a, self.b, self.L) <= 0:
            raise ConfigError("geometry lengths a, b, L must be positive")
        if not self.eps_list:
            raise ConfigError("geometry.eps is empty")
        for e in self.eps_list:
            if not 0 < e < min(self.b / 2, self.L):
                raise ConfigError(f"geometry.eps value {e} outside (0, min(b/2, L))")
        if len(self.mode) != 2 or min(self.mode) < 1:
            raise ConfigError("geometry.mode must be two positive integers")
        if self.threads < 1:
            raise ConfigError("run.threads must be >= 1")
        try:
            self.truncation()
        except ValueError as exc:
            raise ConfigError(f"truncation: {exc}") from exc
        return self

    def geometry(self, eps: float | None = None) -> ResonatorGeometry:
        eps = self.eps_list[0] if eps is None else eps
        return ResonatorGeometry(RectCavity(self.a, self.b), self.L, eps, self.mode)

    def truncation(self) -> ModeTruncation:
        return ModeTruncation(self.k_neck, self.m_cavity, self.exterior_tol, self.k_levels)

    def to_ini(self) -> str:
        values = asdict(self)
        out = []
        for section, keys in _SCHEMA.items():
            out.append(f"[{section}]")
            for key, (name, _) in keys.items():
                v = values[name]
                if isinstance(v, tuple):
                    text = ",".join(_fmt(x) for x in v)
                elif v is None:
                    text = "auto"
                else:
                    text = _fmt(v)
                out.append(f"{key} = {text}")
            out.append("")
        return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def parse_config(text: str, require_eps: bool = False, source: str = "<string>") -> RunConfig:
    """Parse an INI config; unknown sections or keys raise ConfigError."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep "L" distinct from "l"
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            name, conv = _SCHEMA[section][key]
            try:
                values[name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    if require_eps and "eps_list" not in values:
        raise ConfigError("missing key geometry.eps (list of neck half-widths)")
    return RunConfig(source=source, **values).validate()


def load_config(path: str | None, require_eps: bool = False) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text(), require_eps=require_eps, source=str(p))


def _num(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return "nan"
    return f"{float(x):.17g}"


def sweep_rows(records, trunc: ModeTruncation) -> list[list[str]]:
    rows = []
    for r in records:
        if r.ok:
            res = r.result
            rows.append(
                [
                    _num(r.eps),
                    _num(res.rho_re),
                    str(res.im_sign),
                    _num(res.im_log),
                    _num(r.s_norm),
                    res.estimator,
                    _num(res.residual),
                    str(trunc.k_neck * 2 ** (trunc.k_levels - 1)),
                    _num(r.a1_minus_log),
                    _num(r.tail_log),
                    _num(res.im_log / math.log(10)),
                ]
            )
        else:
            nan = "nan"
            rows.append([_num(r.eps), nan, "0", nan, nan, "failed", nan, str(trunc.k_neck), nan, nan, nan])
    return rows


def write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _prepare_out(out: str) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- commands


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    checks = paperlab.verify_all(seed=cfg.seed, gamma2_quoted=cfg.gamma2_quoted)
    failed = [c["name"] for c in checks if not c["passed"]]
    _write_json(out / "verify.json", {"checks": checks, "failed": failed})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
        if c["name"] == "dimension_gate":
            for row in c["rows"]:
                print(f"      n={row['n']:2d}  B={row['B']:.6f}  {'pass' if row['pass'] else 'fail'}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    trunc = cfg.truncation()
    t0 = time.time()
    records = sweep(cfg.geometry(), cfg.eps_list, trunc)
    write_csv(out / "sweep.csv", sweep_rows(records, trunc))
    good = [r for r in records if r.ok]
    summary: dict = {
        "points": len(records),
        "failed": [{"eps": r.eps, "error": r.error} for r in records if not r.ok],
        "elapsed_s": time.time() - t0,
    }
    try:
        fit = fit_width_law(records, cfg.L)
        summary["fit"] = asdict(fit)
    except HelmlabError as exc:
        summary["fit"] = {"error": str(exc)}
    if good:
        c = bracket_constant(records, cfg.L, 0.2)
        summary["bracket"] = {"delta": 0.2, "C": c, "C_log": math.log(c), "passed": c <= 1e6}
        s = [r.s_norm for r in sorted(good, key=lambda r: r.eps)]
        summary["s_norm_decreasing_in_eps"] = all(x >= y for x, y in zip(s[:-1], s[1:]))
    summary["elapsed_s"] = time.time() - t0
    _write_json(out / "sweep_summary.json", summary)
    for row in sweep_rows(records, trunc):
        print(",".join(row))
    return 1 if 2 * len(summary["failed"]) > len(records) else 0


def cmd_resonance(cfg: RunConfig, out: Path) -> int:
    status = 0
    results = []
    for eps in cfg.eps_list:
        try:
            res = find_resonance(cfg.geometry(eps), cfg.truncation())
            results.append(
                {
                    "eps": eps,
                    "rho_re": res.rho_re,
                    "im_sign": res.im_sign,
                    "im_log": res.im_log,
                    "estimator": res.estimator,
                    "residual": res.residual,
                    "levels": res.diagnostics.get("levels"),
                }
            )
            print(f"eps={eps:.17g} rho_re={res.rho_re:.17g} im_log={res.im_log:.17g} ({res.estimator})")
        except HelmlabError as exc:
            status = 1
            results.append({"eps": eps, "error": f"{type(exc).__name__}: {exc}"})
            print(f"eps={eps:.17g} failed: {exc}", file=sys.stderr)
    _write_json(out / "resonance.json", {"results": results})
    return status


def oracle_compare(cfg: RunConfig, eps: float) -> dict:
    from .fdoracle import default_grid, oracle_resonance

    geom = cfg.geometry(eps)
    res = find_resonance(geom, cfg.truncation())
    entry: dict = {"eps": eps, "solver": {"rho_re": res.rho_re, "im_log": res.im_log, "estimator": res.estimator}}
    try:
        grid = default_grid(geom, points_across=cfg.points_across, sigma=cfg.sigma)
        orc = oracle_resonance(geom, grid)
        d = orc.diagnostics
        entry["oracle"] = {
            "rho": complex(d["rho"]),
            "rho_refined": complex(d["rho_refined"]),
            "h": d["h"],
            "h_refined": d["h_refined"],
            "sigma": d["sigma"],
            "resolved": bool(d["resolved"]),
        }
        if not d["resolved"]:
            raise UnresolvedWidth(f"|Im rho| = {abs(d['rho'].imag):.3e} below grid drift {d['drift']:.3e}")
        lam0 = geom.lambda0
        d_re = abs(orc.rho_re - res.rho_re)
        ratio = math.exp(abs(orc.im_log - res.im_log))
        entry["re_difference"] = d_re
        entry["re_difference_refined"] = abs(complex(d["rho_refined"]).real - res.rho_re)
        entry["width_ratio"] = ratio
        entry["verdict"] = "pass" if d_re <= 1e-3 * lam0 and ratio <= 1.5 else "fail"
    except UnresolvedWidth as exc:
        entry["verdict"] = "unresolved"
        entry["note"] = str(exc)
    return entry


def cmd_oracle_compare(cfg: RunConfig, out: Path) -> int:
    # points are independent; map keeps the output order fixed
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        entries = list(pool.map(lambda e: oracle_compare(cfg, e), cfg.eps_list))
    _write_json(out / "oracle_compare.json", {"comparisons": entries})
    for e in entries:
        print(f"eps={e['eps']:.17g} verdict={e['verdict']}")
    return 1 if any(e["verdict"] == "fail" for e in entries) else 0


def cmd_dimension_gate(cfg: RunConfig, out: Path) -> int:
    rows = []
    for n in range(2, 17):
        b, ok = paperlab.dimension_gate(n)
        rows.append({"n": n, "B": b, "pass": ok})
        print(f"n={n:2d}  B={b:.17g}  {'pass' if ok else 'fail'}")
    _write_json(out / "dimension_gate.json", {"rows": rows})
    passing = [r["n"] for r in rows if r["pass"]]
    return 0 if passing == list(range(2, 13)) else 1


COMMANDS = {
    "verify": (cmd_verify, False),
    "sweep": (cmd_sweep, True),
    "resonance": (cmd_resonance, True),
    "oracle-compare": (cmd_oracle_compare, True),
    "dimension-gate": (cmd_dimension_gate, False),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helmlab", description="Helmholtz resonator width computations")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", default="helmlab_out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for independent checks")
    p.add_argument("--seed", type=int, help="seed for quasi-random integration")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func, needs_eps = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, require_eps=needs_eps)
        overrides = {}
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.seed is not None:
            overrides["seed"] = args.seed
        if overrides:
            cfg = RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)}, **overrides}).validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = _prepare_out(args.out)
    (out / "effective_config.ini").write_text(cfg.to_ini())
    log.info("running %s with %s", args.command, cfg)
    return func(cfg, out)


if __name__ == "__main__":
    sys.exit(main())
