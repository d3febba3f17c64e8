"""Command-line entry point ``icx``.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical guard tripped.
Every file written with ``--out`` gets a ``<out>.manifest.json`` next to it;
``icx replay <manifest>`` re-runs the recorded command.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import platform
import sys
import warnings

import numpy as np

from . import SPEC_VERSION, __version__
from .errors import ICXError, NumericalGuardError, ValidationError

CSV_FMT = ".17g"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), CSV_FMT)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions() -> dict:
    import numba

    return {"icx": __version__, "spec": SPEC_VERSION, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__}


def _write_manifest(args, argv, out_path: str, inputs: list[str]):
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "flags": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "seeds": {k: getattr(args, k) for k in ("seed",) if hasattr(args, k)},
        "versions": _versions(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {out_path: _sha256(out_path)},
    }
    with open(out_path + ".manifest.json", "w") as fh:
        fh.write(_json_text(manifest))


def _emit(args, argv, text: str, inputs: list[str] | None = None):
    if getattr(args, "out", None):
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        _write_manifest(args, argv, args.out, inputs or [])
    else:
        sys.stdout.write(text)


def _integrator(args):
    from .integrators import IntegratorConfig, aligned_nodes

    nodes = args.nodes
    if nodes is None:
        # keep the default grid near 2e6 points whatever the dimension
        dim = max(1, (getattr(args, "d", None) or 1) * args.order)
        target = max(8, min(400, int(2e6 ** (1.0 / dim))))
        core = getattr(args, "sigma", None)
        nodes = aligned_nodes(args.radius, core, target) if core else target
    return IntegratorConfig(args.method, nodes=nodes, samples=args.samples, seed=args.seed,
                            workers=args.workers)


def _family_spec(args) -> dict:
    """``--family`` is a type name or a JSON file holding ``{"type": ..., ...}``."""
    name = args.family
    if name.endswith(".json"):
        with open(name) as fh:
            spec = json.load(fh)
        args._inputs.append(name)
    else:
        spec = {"type": name}
    for key in ("rho", "g", "sigma", "d", "a", "s", "configs", "bins", "rmax"):
        if key not in spec and getattr(args, key, None) is not None:
            spec[key] = getattr(args, key)
    return spec


def _build_family(spec: dict, order: int):
    from .correlations import PoissonFamily
    from .kirkwood import kirkwood_family, pair_function

    kind = spec.get("type")
    d = int(spec.get("d", 1))
    if kind == "poisson":
        return PoissonFamily(float(spec["rho"]), order, d)
    if kind == "kirkwood":
        g = pair_function(spec.get("g", "hard-rod"), d, float(spec.get("sigma", 1.0)),
                          float(spec.get("a", 0.5)), float(spec.get("s", 1.0)))
        return kirkwood_family(float(spec["rho"]), g, order)
    if kind == "empirical":
        from .estimation import empirical_family
        from .sampler import read_jsonl

        return empirical_family(read_jsonl(spec["configs"]), int(spec.get("bins", 200)),
                                float(spec.get("rmax", 10.0)), order, spec.get("sigma"))
    raise ValidationError(f"unknown family type {kind!r}")


# subcommands

def cmd_combinatorics(args, argv):
    from .partitions import (
        bell_number,
        coefficient_expansion,
        enumerate_total_partitions,
        Poly,
        total_partition_sequence,
        w_sequence,
    )

    if args.check_coefficients:
        w = w_sequence(args.kmax, Poly.D(), Poly.q())
        rows, ok = [], True
        for k in range(1, args.kmax + 1):
            match = w[k - 1] == coefficient_expansion(k)
            ok &= match
            rows.append((k, repr(w[k - 1]), match))
        _emit(args, argv, _csv_text(["k", "w_k", "matches_formula"], rows))
        return 0 if ok else 2
    if args.total_partitions:
        b = total_partition_sequence(args.kmax)
        rows = []
        for m in range(1, args.kmax + 1):
            structural = len(enumerate_total_partitions(m)) if m <= args.enumerate_max else ""
            rows.append((m, b[m], structural))
        _emit(args, argv, _csv_text(["m", "b_m", "enumerated"], rows))
        return 0
    rows = [(n, bell_number(n)) for n in range(args.kmax + 1)]
    _emit(args, argv, _csv_text(["n", "bell"], rows))
    return 0


def cmd_verify_exp(args, argv):
    from .exprep import random_site_family, random_site_space, verify_exp_identity

    rng = np.random.Generator(np.random.Philox(args.seed))
    worst, reports = 0.0, []
    for _ in range(args.trials):
        F = random_site_family(args.sites, args.order, rng, exact=args.exact)
        S = random_site_space(args.sites, rng, exact=args.exact)
        rep = verify_exp_identity(F, S, args.order)
        worst = max(worst, float(rep.max_residual))
        reports.append(rep.to_json())
    ok = worst <= args.tol
    _emit(args, argv, _json_text({"trials": reports, "max_residual": worst, "tolerance": args.tol,
                                  "exact": args.exact, "ok": ok}))
    return 0 if ok else 2


def _report_csv(report) -> str:
    return _csv_text(["k", "term", "partial_sum", "std_err", "R_halved_term"], report.rows())


def cmd_mu(args, argv):
    from .correlations import mu_expansion, tilde_family, truncate

    fam = _build_family(_family_spec(args), args.order + 1)
    rep = mu_expansion(tilde_family(truncate(fam)), args.radius, args.order, _integrator(args))
    _emit(args, argv, _report_csv(rep), args._inputs)
    return 0


def cmd_kirkwood_mu(args, argv):
    from .correlations import mu_expansion, rooted_term, tilde_family, truncate
    from .integrators import Domain
    from .kirkwood import kirkwood_family, mu_graph_expansion, pair_function, tilde_closed_form

    g = pair_function(args.g, args.d, args.sigma, args.a, args.s)
    fam = kirkwood_family(args.rho, g, args.order + 1)
    cfg = _integrator(args)
    rhoT = truncate(fam)
    dom = Domain.ball(args.radius, args.d)
    if args.route == "recursion":
        rep = mu_expansion(tilde_family(rhoT), args.radius, args.order, cfg)
        _emit(args, argv, _report_csv(rep))
        return 0
    if args.route == "graph":
        rep = mu_graph_expansion(args.rho, g, args.order, args.radius, cfg)
        text = _csv_text(["k", "graph_term", "mu_term_from_log"],
                         [(k, t, m) for k, (t, m) in enumerate(
                             zip(rep.terms, rep.diagnostics["mu_terms_from_log"]), start=1)])
        _emit(args, argv, text)
        return 0
    rows = []
    rec = mu_expansion(tilde_family(rhoT), args.radius, args.order, cfg, check_halved=False).terms
    graph = mu_graph_expansion(args.rho, g, args.order, args.radius, cfg, check_halved=False)
    for k in range(1, args.order + 1):
        closed = rooted_term(tilde_closed_form(g, rhoT, k), args.d, dom, k, cfg)[0]
        rows.append((k, rec[k - 1], closed, graph.terms[k - 1], graph.diagnostics["mu_terms_from_log"][k - 1]))
    _emit(args, argv, _csv_text(["k", "recursion", "closed_form", "graph", "graph_log"], rows))
    return 0


def cmd_pressure(args, argv):
    from .correlations import pressure_expansion, truncate

    fam = _build_family(_family_spec(args), args.order + 1)
    rep = pressure_expansion(truncate(fam), args.radius, args.order, _integrator(args))
    _emit(args, argv, _csv_text(["k", "term", "partial_sum", "std_err", "R_halved_term"], rep.rows()),
          args._inputs)
    return 0


def cmd_sample(args, argv):
    from .sampler import iter_chain, potential, write_jsonl

    if not args.out:
        raise ValidationError("sample needs --out")
    u = potential(args.potential, args.sigma)
    sink: dict = {}
    n = write_jsonl(iter_chain(args.z, u, args.L, args.d, args.sweeps, args.burn, args.thin,
                               args.seed, args.debug, sink), args.out)
    _write_manifest(args, argv, args.out, [])
    stats = sink["stats"].to_json()
    stats["configurations"] = n
    sys.stdout.write(_json_text(stats))
    return 0


def cmd_estimate_mu(args, argv):
    from .estimation import diagnostics, empirical_family, estimate_density, mu_hat
    from .integrators import IntegratorConfig, aligned_nodes
    from .sampler import read_jsonl

    configs = read_jsonl(args.configs)
    args._inputs.append(args.configs)
    fam = empirical_family(configs, args.bins, args.rmax, max(args.order + 1, 3), args.hard_core)
    dens = estimate_density(configs)
    nodes = args.nodes or (aligned_nodes(args.radius, args.hard_core, int(60 * args.radius))
                           if args.hard_core else int(60 * args.radius))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = mu_hat(fam, args.order, args.radius, IntegratorConfig("quad", nodes=nodes), se_rho=dens.std_err)
    out = est.to_json()
    diag = diagnostics(fam, min(2, fam.order - 1), R=min(args.radius, args.rmax))
    out["diagnostics"] = {k: diag[k] for k in ("D", "q", "q0", "convergent", "xi_hat")}
    out["first_term_direct"] = est.direct_first_term
    _emit(args, argv, _json_text(out), args._inputs)
    return 0


def cmd_replay(args, argv):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    rec = list(manifest["argv"])
    if args.out:
        if "--out" in rec:
            rec[rec.index("--out") + 1] = args.out
        else:
            rec += ["--out", args.out]
    return main(rec)


# parser

def _add_integration(p):
    p.add_argument("--method", choices=["quad", "mc"], default="quad")
    p.add_argument("--nodes", type=int, default=None, help="quadrature nodes per axis")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=float, default=3.0)


def _add_family(p):
    p.add_argument("--family", required=True, help="poisson | kirkwood | empirical | path/to/family.json")
    p.add_argument("--rho", type=float)
    p.add_argument("--g", default=None, help="pair function for kirkwood: hard-rod, hard-sphere, gaussian")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--configs", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--rmax", type=float, default=None)
    p.add_argument("--order", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icx", description="Chemical potential from correlation functions.")
    parser.add_argument("--version", action="version",
                        version=f"icx {__version__} (spec {SPEC_VERSION})")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="flat key=value file; flags override it")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("combinatorics", parents=[common], help="Bell, total-partition and w_k tables")
    p.add_argument("--check-coefficients", action="store_true")
    p.add_argument("--total-partitions", action="store_true")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--enumerate-max", type=int, default=5)
    p.set_defaults(func=cmd_combinatorics)

    p = sub.add_parser("verify-exp", parents=[common], help="check the exponential representation")
    p.add_argument("--sites", type=int, default=4)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_exp)

    p = sub.add_parser("mu", parents=[common], help="chemical-potential expansion of a family")
    _add_family(p)
    _add_integration(p)
    p.set_defaults(func=cmd_mu)

    p = sub.add_parser("kirkwood-mu", parents=[common], help="Kirkwood closure: compare routes")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--g", default="hard-rod")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--route", choices=["recursion", "graph", "all"], default="all")
    _add_integration(p)
    p.set_defaults(func=cmd_kirkwood_mu)

    p = sub.add_parser("pressure", parents=[common], help="pressure expansion of a family")
    _add_family(p)
    _add_integration(p)
    p.set_defaults(func=cmd_pressure)

    p = sub.add_parser("sample", parents=[common], help="grand-canonical Monte Carlo")
    p.add_argument("--potential", default="hard-rod")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--L", type=float, default=200.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--sweeps", type=int, default=100_000)
    p.add_argument("--burn", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--debug", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate-mu", parents=[common], help="mu from sampled configurations")
    p.add_argument("--configs", required=True)
    p.add_argument("--bins", type=int, default=200)
    p.add_argument("--rmax", type=float, default=10.0)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--hard-core", type=float, default=None, help="declared hard-core radius")
    p.add_argument("--nodes", type=int, default=None)
    p.set_defaults(func=cmd_estimate_mu)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)
    return parser


def _read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line without '=': {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _apply_config(parser, argv):
    """Defaults from ``--config`` (flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = _read_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd = next((a for a in argv if a in sub_action.choices), None)
    if cmd is None:
        return
    sp = sub_action.choices[cmd]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for k, v in values.items():
        if k not in actions:
            raise ValidationError(f"unknown config key {k!r} for {cmd}")
        act = actions[k]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = act.type(v) if act.type else v
            act.required = False
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        args._inputs = []
        if getattr(args, "config", None):
            args._inputs.append(args.config)
        code = args.func(args, argv)
    except SystemExit as e:
        return int(e.code or 0)
    except NumericalGuardError as e:
        sys.stderr.write(f"icx: numerical guard: {e}\n")
        return 2
    except (ValidationError, ValueError, OSError, KeyError) as e:
        sys.stderr.write(f"icx: error: {e}\n")
        return 1
    except ICXError as e:
        sys.stderr.write(f"icx: error: {e}\n")
        return 1
    return int(code)


if __name__ == "__main__":
    sys.exit(main())
