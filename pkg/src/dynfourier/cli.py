"""Command-line front end.

Every subcommand reads a JSON experiment configuration, validates it before
computing anything, and writes one CSV file (plus a JSON run manifest) into
the output directory.  The CSV starts with ``#`` comment lines echoing the
command, the configuration hash, the seed and every parameter in effect, so
the same configuration and seed always produce byte-identical CSV output.

Exit status is 0 on success, 2 when an audit ran correctly but found its
property violated, and 1 on any error (in which case nothing is written).

Configuration layout::

    {
      "name": "cantor",
      "system": {... system definition ...},
      "measure": {"kind": "self_similar", "p": [0.5, 0.5]},
      "params": {"T_max": 1e4, ...}
    }

The ``system`` block follows :func:`dynfourier.ifs.system_from_dict`, or
:func:`dynfourier.nonconformal.restricted_product_from_dict` when its
``kind`` is ``"restricted_product"``.  ``measure`` is optional; its kinds are
``self_similar`` (weights ``p``, uniform by default), ``gibbs`` (a ``G0``
potential given by ``values`` or a ``G1`` potential given by ``s``) and
``lebesgue`` (torus Lebesgue measure, for ``normality`` only).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .ifs import SystemDefinitionError, system_from_dict

ENV_PREFIX = "DYNFOURIER_"

COMMANDS = ("decay", "flatten", "nonconc", "decompose", "separation", "pipeline", "uni", "spectrum",
            "disintegrate", "normality", "multinomial", "plot")

# Defaults per subcommand; a config's "params" block overrides them.
DEFAULTS = {
    "decay": {"T_min": 10.0, "T_max": 1e3, "grid_step": 0.1, "tol": 1e-8, "directions": 16},
    "flatten": {"T": [1e2, 1e3], "tau": 0.1, "grid_step": 0.1, "tol": 1e-8, "directions": 16},
    "nonconc": {"eps_grid": [0.1, 0.05, 0.02, 0.01], "trials": 8, "c": 1.0},
    "decompose": {"xi": 1e6, "l": 2, "delta": 0.1, "eps": 0.1, "log_power": 3.0},
    "separation": {"xi": 1e6, "l": 2, "delta": 0.1, "eps": 0.1, "log_power": 3.0, "pair": [0, 1],
                   "form": "auto"},
    "pipeline": {"xi": 1e5, "l": 2, "delta": 0.1, "eps": 0.1, "tau": 0.1, "log_power": 3.0,
                 "pair": [0, 1], "tol": 1e-9},
    "uni": {"n_list": [4, 6], "directions": 64, "variant": "point", "radius": 0.0},
    "spectrum": {"n_max": 12, "b_list": [10.0, 50.0], "depth": 3, "q": 3, "n_betas": 8, "axis": 0},
    "disintegrate": {"n_xi": 5, "xi_max": 20.0, "n_samples": 2000, "fibre_depth": 10},
    "normality": {"A": [[2]], "k_set": [[1]], "N_schedule": [16, 64, 256], "samples": 100,
                  "scaled_bound": 2.0, "s_bound": 0.1, "floor": 0.01},
    "multinomial": {"p_vectors": [[0.5, 0.5], [0.2, 0.3, 0.5]], "n_max": 200},
    "plot": {"x": None, "y": None, "logx": True, "logy": True, "title": ""},
}


class ConfigError(ValueError):
    """A configuration that cannot be parsed or validated."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def bundled_configs() -> list[str]:
    """Names of the configurations shipped with the package."""
    root = resources.files("dynfourier") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_config_text(ref: str) -> tuple[str, str]:
    path = Path(ref)
    if path.exists():
        return path.read_text(), str(path)
    res = resources.files("dynfourier") / "configs" / f"{ref}.json"
    if res.is_file():
        return res.read_text(), f"<bundled {ref}>"
    raise ConfigError(f"{ref}: no such file or bundled configuration")


def load_config(ref: str) -> tuple[dict, str]:
    """Parse a configuration; returns the dict and the SHA-256 of its text.

    Raises
    ------
    ConfigError
        With ``path:line:column`` for syntax errors.
    """
    text, where = _read_config_text(ref)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}:1:1: configuration must be a JSON object")
    return cfg, hashlib.sha256(text.encode()).hexdigest()


def _build_system(cfg: dict):
    spec = cfg.get("system")
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("system: must be an object")
    try:
        if spec.get("kind") == "restricted_product":
            from .nonconformal import restricted_product_from_dict

            return restricted_product_from_dict(spec)
        return system_from_dict(spec)
    except (SystemDefinitionError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"system: {exc}") from None


def _build_measure(cfg: dict, system):
    from .measures import GibbsPotential, gibbs_measure, normalize_potential, self_similar
    from .equidist import Lebesgue

    spec = cfg.get("measure", {"kind": "self_similar"})
    kind = spec.get("kind", "self_similar")
    try:
        if kind == "lebesgue":
            return Lebesgue(int(spec.get("dim", 1)))
        if system is None or not hasattr(system, "maps"):
            return None
        if kind == "self_similar":
            p = spec.get("p", [1.0 / system.k] * system.k)
            return self_similar(system, p)
        if kind == "gibbs":
            if "values" in spec:
                pot = GibbsPotential("G0", values=np.asarray(spec["values"], dtype=float))
            elif "s" in spec:
                pot = GibbsPotential("G1", s=float(spec["s"]))
            else:
                raise ConfigError("measure: gibbs needs 'values' or 's'")
            pot = normalize_potential(system, system.subshift, pot, int(spec.get("depth", 1)))
            return gibbs_measure(system, pot, int(spec.get("depth", 1)))
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"measure: {exc}") from None
    raise ConfigError(f"measure: unknown kind {kind!r}")


def _weights(cfg: dict, system) -> np.ndarray:
    spec = cfg.get("measure", {})
    p = spec.get("p")
    return np.full(system.k, 1.0 / system.k) if p is None else np.asarray(p, dtype=float)


def _params(cmd: str, cfg: dict) -> dict:
    params = dict(DEFAULTS[cmd])
    given = cfg.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("params: must be an object")
    # command-specific blocks take precedence over shared keys
    shared = {k: v for k, v in given.items() if not isinstance(v, dict) or k not in COMMANDS}
    params.update({k: v for k, v in shared.items() if k in params})
    params.update(given.get(cmd, {}) if isinstance(given.get(cmd), dict) else {})
    return params


# ---------------------------------------------------------------------------
# subcommands; each returns (rows, summary, violated)
# ---------------------------------------------------------------------------


def _xi_vector(value, dim: int) -> np.ndarray:
    """A scalar ``|xi|`` becomes ``|xi| e_1``; vectors pass through."""
    xi = np.atleast_1d(np.asarray(value, dtype=float))
    if xi.size == 1 and dim > 1:
        xi = np.concatenate([xi, np.zeros(dim - 1)])
    if xi.size != dim:
        raise ConfigError(f"params: xi has {xi.size} entries, system dimension is {dim}")
    return xi


def _need_measure(ctx):
    if ctx["measure"] is None or not hasattr(ctx["measure"], "system"):
        raise ConfigError("this command needs an IFS system with a measure")
    return ctx["measure"]


def _need_ifs(ctx):
    from .ifs import IFSSystem

    if not isinstance(ctx["system"], IFSSystem):
        raise ConfigError("this command needs an IFS system")
    return ctx["system"]


def cmd_decay(ctx, P):
    from .fourier import FunctionalEquation, decay_profile, fit_decay_exponent

    mu = _need_measure(ctx)
    prof = decay_profile(mu, float(P["T_max"]), grid_step=float(P["grid_step"]),
                         evaluator=FunctionalEquation(float(P["tol"]), budget=ctx["budget"]),
                         T_min=float(P["T_min"]), directions=int(P["directions"]))
    summary = {}
    for model in ("poly", "polylog"):
        try:
            summary[model] = {k: float(v) for k, v in fit_decay_exponent(prof, model).items()
                              if isinstance(v, (int, float, np.number))}
        except Exception as exc:  # degenerate fits are reported, not fatal
            summary[model] = {"error": str(exc)}
    return list(prof.rows()), summary, False


def cmd_flatten(ctx, P):
    from .fourier import FunctionalEquation, exceptional_set_count

    mu = _need_measure(ctx)
    rep = exceptional_set_count(mu, [float(t) for t in P["T"]], float(P["tau"]), float(P["grid_step"]),
                                FunctionalEquation(float(P["tol"]), budget=ctx["budget"]),
                                int(P["directions"]))
    rows = [{"T": float(t), "count": int(c), "cells": int(n)} for t, c, n in zip(rep.T, rep.counts, rep.cells)]
    return rows, {"exponent": float(rep.exponent), "residual": float(rep.residual),
                  "applicable": bool(rep.applicable)}, False


def cmd_nonconc(ctx, P):
    from .measures import affine_nonconcentration_profile

    mu = _need_measure(ctx)
    prof = affine_nonconcentration_profile(mu, [float(e) for e in P["eps_grid"]], int(P["trials"]),
                                           ctx["seed"], c=float(P["c"]))
    rows = [{"eps": float(e), "delta": float(d)} for e, d in zip(prof.eps, prof.delta)]
    return rows, {"C": prof.C, "alpha": prof.alpha, "residual": prof.residual,
                  "flagged": bool(prof.flagged)}, bool(prof.flagged)


def cmd_decompose(ctx, P):
    from .decomposition import good_word_params, stopping_words
    from .ifs import Word

    system = _need_ifs(ctx)
    p = _weights(ctx["cfg"], system)
    params = good_word_params(system, p, _xi_vector(P["xi"], system.dim), l=float(P["l"]), delta=float(P["delta"]),
                              eps=float(P["eps"]), log_power=float(P["log_power"]))
    cut = stopping_words(system, params.xi_tilde, p, budget=ctx["budget"])
    lo, hi = params.window()
    rows = []
    for w, r, m in zip(cut.words, cut.ratios, cut.weights):
        c = Word(w).counts(system.k)
        good = bool(np.all((c >= lo) & (c <= hi))) if len(w) == params.n else ""
        rows.append({"word": "".join(map(str, w)), "length": len(w), "ratio": float(r),
                     "weight": float(m), "good": good})
    return rows, {"xi_tilde": params.xi_tilde, "n": params.n, "words": len(rows),
                  "prefix_free": bool(cut.is_prefix_free)}, False


def cmd_separation(ctx, P):
    from .decomposition import separation_check

    system = _need_ifs(ctx)
    audit = separation_check(system, _weights(ctx["cfg"], system), _xi_vector(P["xi"], system.dim), l=float(P["l"]),
                             delta=float(P["delta"]), eps=float(P["eps"]),
                             log_power=float(P["log_power"]), pair=tuple(P["pair"]), form=P["form"],
                             budget=ctx["budget"])
    rows = [{k: (v if not isinstance(v, (list, tuple, np.ndarray)) else " ".join(map(str, np.ravel(v))))
             for k, v in row.items()} for row in audit.rows]
    return rows, {"form": audit.form, "members": audit.n_members, "classes": audit.n_classes,
                  "violations": len(audit.violations), "min_gap": audit.min_gap}, not audit.ok


def cmd_pipeline(ctx, P):
    from .decomposition import average_bound_report
    from .fourier import FunctionalEquation

    mu = _need_measure(ctx)
    rep = average_bound_report(mu, _xi_vector(P["xi"], mu.system.dim), l=float(P["l"]), delta=float(P["delta"]),
                               eps=float(P["eps"]), tau=float(P["tau"]),
                               evaluator=FunctionalEquation(float(P["tol"]), budget=ctx["budget"]),
                               log_power=float(P["log_power"]), pair=tuple(P["pair"]), budget=ctx["budget"])
    row = {k: (v if np.isscalar(v) else " ".join(map(str, np.ravel(v)))) for k, v in rep.as_dict().items()}
    return [row], {"triangle_ok": rep.triangle_ok, "majorant_ok": rep.majorant_ok}, \
        not (rep.triangle_ok and rep.majorant_ok)


def cmd_uni(ctx, P):
    from .transfer import uni_margin

    system = _need_ifs(ctx)
    rows = []
    for n in P["n_list"]:
        rep = uni_margin(system, int(n), variant=P["variant"], radius=float(P["radius"]),
                         directions=int(P["directions"]), budget=ctx["budget"])
        rows.append({"n": int(n), "eps0": float(rep.eps0), "min_margin": float(np.min(rep.margins))})
    eps = [r["eps0"] for r in rows]
    return rows, {"eps0": eps}, min(eps) <= 0


def cmd_spectrum(ctx, P):
    from .nonconformal import RestrictedProductIFS, project_alphabet, random_norm_decay
    from .transfer import TwistedOperator, norm_decay

    system = ctx["system"]
    b_list = [float(b) for b in P["b_list"]]
    if isinstance(system, RestrictedProductIFS):
        data = project_alphabet(system, int(P["axis"]))
        rep = random_norm_decay(data, int(P["n_max"]), b_list, int(P["n_betas"]), ctx["seed"])
        return list(rep.rows()), {"exceptional": rep.exceptional.tolist(),
                                  "windows": rep.windows.tolist()}, False
    mu = _need_measure(ctx)
    table = norm_decay(TwistedOperator(mu.system, mu), int(P["n_max"]), b_list, depth=int(P["depth"]),
                       q=int(P["q"]))
    return list(table.rows()), {"rho": table.rho.tolist(), "rho_max": table.rho_max}, False


def cmd_disintegrate(ctx, P):
    from .nonconformal import RestrictedProductIFS, disintegration_check

    system = ctx["system"]
    if not isinstance(system, RestrictedProductIFS):
        raise ConfigError("disintegrate needs a restricted_product system")
    rng = np.random.default_rng(ctx["seed"])
    xm = float(P["xi_max"])
    xi = rng.uniform(-xm, xm, (int(P["n_xi"]), system.dim))
    rep = disintegration_check(system, xi, int(P["n_samples"]), ctx["seed"], fibre_depth=int(P["fibre_depth"]))
    rows = [{k: (" ".join(repr(float(u)) for u in v) if isinstance(v, list) else v) for k, v in r.items()}
            for r in rep.rows()]
    ok = bool(rep.agree.all() and rep.inequality.all())
    return rows, {"agree": int(rep.agree.sum()), "inequality": int(rep.inequality.sum()),
                  "frequencies": len(xi)}, not ok


def cmd_normality(ctx, P):
    from .equidist import normality_test

    mu = ctx["measure"]
    if mu is None:
        raise ConfigError("normality needs a measure")
    rep = normality_test(mu, P["A"], P["k_set"], P["N_schedule"], int(P["samples"]), ctx["seed"],
                         scaled_bound=float(P["scaled_bound"]), s_bound=float(P["s_bound"]),
                         floor=float(P["floor"]))
    bridging = sum(e.bridging["failures"] for e in rep.estimates.values())
    return list(rep.rows()), {"verdicts": {" ".join(map(str, k)): v for k, v in rep.verdicts.items()},
                              "n0": rep.n0, "bridging_failures": bridging}, bridging > 0


def cmd_multinomial(ctx, P):
    from .decomposition import multinomial_scaling

    rows, summary = [], {}
    for p in P["p_vectors"]:
        res = multinomial_scaling(p, int(P["n_max"]))
        label = " ".join(repr(float(v)) for v in p)
        for n, m, s in zip(res["n"], res["max"], res["scaled"]):
            rows.append({"p": label, "n": int(n), "max": float(m), "scaled": float(s)})
        top = res["scaled"][res["n"] >= int(P["n_max"]) // 10]
        summary[label] = {"top_decade_variation": float(top.max() / top.min() - 1)}
    return rows, summary, False


RUNNERS = {
    "decay": cmd_decay, "flatten": cmd_flatten, "nonconc": cmd_nonconc, "decompose": cmd_decompose,
    "separation": cmd_separation, "pipeline": cmd_pipeline, "uni": cmd_uni, "spectrum": cmd_spectrum,
    "disintegrate": cmd_disintegrate, "normality": cmd_normality, "multinomial": cmd_multinomial,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    return obj


def render_csv(command: str, config_hash: str, seed: int, params: dict, rows: list[dict]) -> str:
    """CSV text with the ``#`` header block."""
    buf = io.StringIO()
    buf.write(f"# dynfourier {__version__} {command}\n")
    buf.write(f"# config_sha256: {config_hash}\n")
    buf.write(f"# seed: {seed}\n")
    buf.write(f"# params: {json.dumps(_jsonable(params), sort_keys=True)}\n")
    columns = []
    for r in rows:
        columns += [k for k in r if k not in columns]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _write_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def read_csv(path) -> tuple[dict, list[dict]]:
    """Parse a CSV written by this tool into (header, rows)."""
    header, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            header[key] = val
        else:
            lines.append(line)
    return header, list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# SVG line charts
# ---------------------------------------------------------------------------


def render_svg(rows: list[dict], x: str, ys: list[str], logx: bool = True, logy: bool = True,
               title: str = "", group: str | None = None, width: int = 1000, height: int = 600) -> str:
    """A line chart of columns ``ys`` against ``x``; a pure function of the rows."""
    series = {}
    for r in rows:
        for y in ys:
            try:
                xv, yv = float(r[x]), float(r[y])
            except (KeyError, ValueError):
                continue
            if (logx and xv <= 0) or (logy and yv <= 0) or not (math.isfinite(xv) and math.isfinite(yv)):
                continue
            name = y if group is None else f"{y} {group}={r.get(group, '')}"
            series.setdefault(name, []).append((xv, yv))
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = [(tx(a), ty(b)) for s in series.values() for a, b in s]
    L, R, T, B = 80, 220, 40, 60
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>']
    if not pts:
        out.append(f'<text x="{width / 2:.1f}" y="{height / 2:.1f}" text-anchor="middle">no data</text>')
        return "\n".join(out + ["</svg>"]) + "\n"
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    W, H = width - L - R, height - T - B

    def sx(v):
        return L + (v - x0) / (x1 - x0) * W

    def sy(v):
        return T + H - (v - y0) / (y1 - y0) * H

    out.append(f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="black"/>')
    for i in range(6):
        fx, fy = x0 + (x1 - x0) * i / 5, y0 + (y1 - y0) * i / 5
        lx = f"1e{fx:.2g}" if logx else f"{fx:.3g}"
        ly = f"1e{fy:.2g}" if logy else f"{fy:.3g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{T + H + 20}" text-anchor="middle" font-size="12">{lx}</text>')
        out.append(f'<text x="{L - 8}" y="{sy(fy) + 4:.1f}" text-anchor="end" font-size="12">{ly}</text>')
    out.append(f'<text x="{L + W / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="14">{x}</text>')
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    for i, (name, s) in enumerate(sorted(series.items())):
        s = sorted(s)
        c = colours[i % len(colours)]
        path = " ".join(f"{sx(tx(a)):.2f},{sy(ty(b)):.2f}" for a, b in s)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{L + W + 10}" y="{T + 16 + 18 * i}" font-size="12" fill="{c}">{name}</text>')
    return "\n".join(out + ["</svg>"]) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name, default)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1, keeping 2 for violated audits."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dynfourier", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file or bundled configuration name")
    ap.add_argument("--out", default=None, help="output directory (env DYNFOURIER_OUT, default '.')")
    ap.add_argument("--seed", type=int, default=None, help="random seed (env DYNFOURIER_SEED, default 0)")
    ap.add_argument("--workers", type=int, default=None,
                    help="worker count recorded in the manifest (env DYNFOURIER_WORKERS, default 1)")
    ap.add_argument("--budget", type=int, default=None,
                    help="word budget for expansions (env DYNFOURIER_BUDGET, default 2000000)")
    ap.add_argument("--input", help="CSV file to plot (plot only)")
    ap.add_argument("--x", help="x column (plot only)")
    ap.add_argument("--y", help="comma-separated y columns (plot only)")
    ap.add_argument("--group", help="column splitting rows into series (plot only)")
    ap.add_argument("--linear", action="store_true", help="linear axes (plot only)")
    ap.add_argument("--list-configs", action="store_true", help="print bundled configuration names")
    return ap


def _plot(args, out: Path) -> int:
    if not args.input or not args.x or not args.y:
        raise ConfigError("plot needs --input, --x and --y")
    header, rows = read_csv(args.input)
    svg = render_svg(rows, args.x, args.y.split(","), logx=not args.linear, logy=not args.linear,
                     title=f"{Path(args.input).stem}", group=args.group)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / (Path(args.input).stem + ".svg"), svg)
    return 0


def run(argv=None) -> int:
    """Run one subcommand; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_configs:
        print("\n".join(bundled_configs()))
        return 0
    if args.command is None:
        parser.error("a command is required unless --list-configs is given")
    try:
        out = Path(args.out or _env("OUT", "."))
        seed = int(args.seed if args.seed is not None else _env("SEED", 0))
        workers = int(args.workers if args.workers is not None else _env("WORKERS", 1))
        budget = int(args.budget if args.budget is not None else _env("BUDGET", 2_000_000))
        if args.command == "plot":
            return _plot(args, out)
        if not args.config:
            raise ConfigError("--config is required")
        cfg, digest = load_config(args.config)
        system = _build_system(cfg)
        measure = _build_measure(cfg, system)
        params = _params(args.command, cfg)
        ctx = {"cfg": cfg, "system": system, "measure": measure, "seed": seed, "budget": budget,
               "workers": workers}
        t0 = time.perf_counter()
        rows, summary, violated = RUNNERS[args.command](ctx, params)
        wall = time.perf_counter() - t0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # any runtime failure: no output is written
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = render_csv(args.command, digest, seed, params, rows)
    manifest = {"command": args.command, "config": args.config, "config_sha256": digest, "seed": seed,
                "workers": workers, "budget": budget, "wall_time_s": wall,
                "versions": {"dynfourier": __version__, "numpy": np.__version__,
                             "python": sys.version.split()[0]},
                "summary": _jsonable(summary), "violated": bool(violated)}
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / f"{args.command}.csv", text)
    _write_atomic(out / f"{args.command}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"command": args.command, "violated": bool(violated), "summary": _jsonable(summary)},
                     sort_keys=True))
    return 2 if violated else 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
