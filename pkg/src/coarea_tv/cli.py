"""Command-line driver: ``coarea-tv {check,anisotropy,converge,denoise,selftest}``.

Exit codes: 0 success, 1 validation or computation failure, 2 unreadable input.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .anisotropy import AnisotropyDensity, PolyhedralSet, frank_diagram, sphere_directions
from .convergence import ConvergenceExperiment, ConvergenceRow, run_experiment
from .exceptions import ConfigurationError
from .io import grid_function_from_image, read_pgm, write_csv, write_pgm
from .stencil import (
    BUILTIN_POTENTIALS,
    StencilPotential,
    check_coercivity,
    check_submodular,
    extension_properties_check,
    load_potential,
)

EXIT_OK, EXIT_FAIL, EXIT_PARSE = 0, 1, 2


def data_path(name: str) -> str:
    return str(resources.files("coarea_tv") / "data" / name)


def resolve_potential(spec: str, relative_to: str = "") -> StencilPotential:
    """Built-in name, bundled file name, or a path (optionally relative to a config file)."""
    if spec in BUILTIN_POTENTIALS:
        return BUILTIN_POTENTIALS[spec]()
    candidates = [spec]
    if relative_to:
        candidates.append(os.path.join(relative_to, spec))
    candidates.append(data_path(spec))
    candidates.append(data_path(spec + ".pot"))
    for c in candidates:
        if os.path.isfile(c):
            return load_potential(c)
    raise ConfigurationError(f"potential {spec!r} not found")


def header_line(seed, config: str) -> str:
    digest = hashlib.sha256(config.encode()).hexdigest()[:16]
    return f"# coarea-tv {__version__} seed={seed} config={digest}"


def _config_string(args, keys) -> str:
    return ";".join(f"{k}={getattr(args, k)}" for k in keys)


# ---------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    try:
        F = resolve_potential(args.potential)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    ok = True
    print(header_line(args.seed, _config_string(args, ["potential", "samples"])))
    print(f"potential: {F.name or args.potential}  offsets={list(F.stencil.offsets)}")
    print("structure: F(0)=0, F(1)=0, F>=0: pass")
    rep = check_submodular(F)
    print(f"submodular: {'pass' if rep.ok else 'FAIL'}")
    if not rep.ok:
        u, v = rep.witness
        print(f"  witness u={u} v={v} violation={rep.worst_violation:.6g}")
        ok = False
    if F.stencil.basis_indices is None:
        print("coercivity: FAIL (stencil lacks a basis vector)")
        ok = False
    else:
        c = check_coercivity(F)
        print(f"coercivity: c={c!r} {'pass' if c > 0 else 'FAIL'}")
        ok &= c > 0
    props = extension_properties_check(F, args.samples, args.seed)
    for line in props.lines():
        print(f"extension {line}")
    for k, w in props.witnesses.items():
        print(f"  {k} witness: {[np.round(x, 6).tolist() for x in w]}")
    ok &= props.ok
    print("result: " + ("pass" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# anisotropy

def cmd_anisotropy(args) -> int:
    os.makedirs(args.output_dir, exist_ok=True)
    status = EXIT_OK
    for spec in args.potential:
        try:
            F = resolve_potential(spec)
        except (ConfigurationError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        name = F.name or os.path.splitext(os.path.basename(spec))[0]
        dens = AnisotropyDensity(F)
        head = header_line(args.seed, f"anisotropy;{spec};{args.samples}")
        theta = sphere_directions(dens.dim, args.samples)
        vals = dens.many(theta)
        ax = "xyz"[: dens.dim]
        write_csv(
            os.path.join(args.output_dir, f"phi_{name}.csv"),
            [f"nu_{a}" for a in ax] + ["phi"],
            [(*t, f) for t, f in zip(theta, vals)],
            head,
        )
        try:
            fd = frank_diagram(dens, args.samples)
        except ValueError as exc:
            print(f"refused {name}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        path = os.path.join(args.output_dir, f"frank_{name}.csv")
        write_csv(path, fd.columns(), fd.rows(), head)
        print(f"wrote {path}")
    return status


# ---------------------------------------------------------------------------
# converge

def parse_experiment_config(text: str) -> list:
    """Blank-line separated blocks of ``key=value`` lines, one block per experiment."""
    blocks, cur = [], {}
    for raw in text.splitlines() + [""]:
        line = raw.split("#", 1)[0].strip()
        if not line:
            if cur:
                blocks.append(cur)
                cur = {}
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        cur[k.strip()] = v.strip()
    return blocks


def _floats(s: str) -> list:
    return [float(eval_number(t)) for t in s.replace(",", " ").split()]


def eval_number(tok: str) -> float:
    """Numbers, ``sqrt(x)`` and ``2^-k`` / ``p/q`` forms."""
    tok = tok.strip()
    try:
        return float(tok)
    except ValueError:
        pass
    if tok.startswith("sqrt(") and tok.endswith(")"):
        return math.sqrt(eval_number(tok[5:-1]))
    if "^" in tok:
        b, e = tok.split("^", 1)
        return eval_number(b) ** eval_number(e)
    if "/" in tok:
        p, q = tok.split("/", 1)
        return eval_number(p) / eval_number(q)
    raise ConfigurationError(f"bad number {tok!r}")


def _polygon(s: str, lo, hi) -> PolyhedralSet:
    pts = [_floats(p) for p in s.split(";") if p.strip()]
    return PolyhedralSet(np.array(pts), tuple(lo[:2]), tuple(hi[:2]))


def build_experiment(cfg: dict, base_dir: str = "") -> ConvergenceExperiment:
    try:
        F = resolve_potential(cfg.get("potential_file", "nearest_neighbor"), base_dir)
        kind = cfg["kind"]
        N = F.stencil.dim
        lo = hi = None
        if "window" in cfg:
            w = _floats(cfg["window"])
            if len(w) != 2 * N:
                raise ConfigurationError("window needs lo and hi coordinates")
            lo, hi = w[:N], w[N:]
        h_max = eval_number(cfg.get("h_max", "2^-3"))
        h_min = eval_number(cfg.get("h_min", "2^-8"))
        sched = []
        h = h_max
        while h >= h_min * (1 - 1e-12):
            sched.append(h)
            h /= 2
        kw = dict(kind=kind, potential=F, h_schedule=sched, window_lo=lo, window_hi=hi)
        if "nu" in cfg:
            kw["nu"] = _floats(cfg["nu"])
        if "offset" in cfg:
            kw["offset"] = eval_number(cfg["offset"])
        if "shift" in cfg:
            kw["shift"] = _floats(cfg["shift"])
        if "base" in cfg:
            kw["base"] = eval_number(cfg["base"])
        exp = ConvergenceExperiment(**kw)
        if "polygon" in cfg:
            exp.polygon = _polygon(cfg["polygon"], exp.window_lo, exp.window_hi)
        if "layers" in cfg:
            for part in cfg["layers"].split("|"):
                w, poly = part.split(":", 1)
                exp.layers.append((eval_number(w), _polygon(poly, exp.window_lo, exp.window_hi)))
        return exp
    except KeyError as exc:
        raise ConfigurationError(f"missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def cmd_converge(args) -> int:
    blocks = []
    try:
        for path in args.config:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            for i, b in enumerate(parse_experiment_config(text)):
                b.setdefault("name", f"{os.path.splitext(os.path.basename(path))[0]}_{i}")
                blocks.append((b, os.path.dirname(os.path.abspath(path)), text))
        exps = [(b, build_experiment(b, d), t) for b, d, t in blocks]
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if not exps:
        print("no experiments")
        return EXIT_OK
    os.makedirs(args.output_dir, exist_ok=True)
    status = EXIT_OK
    for cfg, exp, text in exps:
        try:
            rows = run_experiment(exp)
        except ValueError as exc:
            print(f"{cfg['name']}: error: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        canon = ";".join(f"{k}={cfg[k]}" for k in sorted(cfg))
        path = os.path.join(args.output_dir, f"{cfg['name']}.csv")
        write_csv(path, ConvergenceRow.columns(), [r.astuple() for r in rows], header_line(args.seed, canon))
        last = rows[-1]
        print(f"{cfg['name']}: h={last.h!r} Jh={last.Jh:.6f} limit={last.limit:.6f} rel_err={last.rel_err:.4g}")
    return status


# ---------------------------------------------------------------------------
# denoise

def cmd_denoise(args) -> int:
    from .denoise import DenoiseProblem, solve_first_order, solve_oracle

    try:
        img, mapping = read_pgm(args.input)
        F = resolve_potential(args.potential)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    g = grid_function_from_image(img, args.h)
    try:
        prob = DenoiseProblem(g, F, args.fidelity_weight)
        if args.solver == "oracle":
            res = solve_oracle(prob)
        else:
            res = solve_first_order(prob, args.max_iter, args.tol, method=args.method)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_pgm(args.output, res.u.values, maxval=mapping.maxval, binary=not args.ascii)
    head = header_line(
        args.seed,
        _config_string(args, ["input", "potential", "fidelity_weight", "h", "solver", "method", "max_iter", "tol"]),
    )
    report = res.report()
    print(report)
    if args.output_dir:
        os.makedirs(args.output_dir, exist_ok=True)
        with open(os.path.join(args.output_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(head + "\n" + report + "\n")
        write_csv(os.path.join(args.output_dir, "trace.csv"), ["iter", "energy", "residual"], res.trace, head)
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest

def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(seed=args.seed, samples=args.samples)
    print(header_line(args.seed, f"selftest;{args.samples}"))
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(ok for _, ok in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coarea-tv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a potential")
    c.add_argument("potential")
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--seed", type=int, default=42)
    c.set_defaults(func=cmd_check)

    a = sub.add_parser("anisotropy", help="export phi samples and the unit-ball boundary")
    a.add_argument("potential", nargs="+")
    a.add_argument("--samples", type=int, default=360)
    a.add_argument("--output-dir", default="out")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_anisotropy)

    v = sub.add_parser("converge", help="run convergence experiments from config files")
    v.add_argument("config", nargs="*")
    v.add_argument("--output-dir", default="out")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_converge)

    d = sub.add_parser("denoise", help="denoise a PGM image")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--potential", default="nearest_neighbor")
    d.add_argument("--lambda", dest="fidelity_weight", type=float, default=1.0)
    d.add_argument("--h", type=float, default=1.0)
    d.add_argument("--solver", choices=["first_order", "oracle"], default="first_order")
    d.add_argument("--method", choices=["pdhg", "subgradient"], default="pdhg")
    d.add_argument("--max-iter", type=int, default=2000)
    d.add_argument("--tol", type=float, default=1e-5)
    d.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    d.add_argument("--output-dir", default="")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_denoise)

    s = sub.add_parser("selftest", help="run the property suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=200)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
