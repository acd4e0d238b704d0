"""Command-line entry point: ``regtree <command> [--config FILE] [options] [key=value ...]``.

Every command writes CSV and/or JSON artifacts into ``--out``.  Exit status is
0 on success, 2 when the requested quantity does not exist for the given
configuration (NotApplicable, NotDiscrete) and 1 on any other error.

The environment variable ``REGTREE_THREADS`` caps the threads used by the
numerical libraries.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

COMMANDS = ("info", "spectrum", "count", "oracle-check", "weyl", "bands", "hardy",
            "renewal", "logweyl", "growing", "boundaryless")
THREAD_ENV = "REGTREE_THREADS"


def _cap_threads() -> None:
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regtree", description="Eigenvalue counting for symmetric Schrödinger operators on rooted metric trees.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                   help="config overrides such as tree.b=3 (bare keys go to [tree]; values are TOML)")
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-steps", type=int)
    p.add_argument("--generations", type=int, help="truncation generation K")
    p.add_argument("--mesh", type=float, help="oracle mesh step h")
    p.add_argument("--bc", choices=("dirichlet", "neumann"))
    p.add_argument("--per-generation", action="store_true", help="add k<j> columns to count output")
    return p


def _apply_overrides(raw: dict, overrides: list) -> None:
    import tomli

    from .errors import ParseError

    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        section, _, name = key.rpartition(".")
        section = section or "tree"
        try:
            parsed = tomli.loads(f"v = {value}")["v"]
        except tomli.TOMLDecodeError:
            parsed = value
        raw.setdefault(section, {})[name] = parsed


def load_config(args):
    import tomli

    from .config import from_dict, log_grid
    from .errors import ParseError

    raw: dict = {}
    if args.config is not None:
        try:
            raw = tomli.loads(args.config.read_text())
        except tomli.TOMLDecodeError as e:
            raise ParseError(f"{args.config}: {e}") from None
    _apply_overrides(raw, args.overrides)
    if args.command == "bands":
        raw.setdefault("tree", {}).setdefault("kind", "homogeneous")
    if args.lambda_min is not None or args.lambda_max is not None or args.lambda_steps is not None:
        if None in (args.lambda_min, args.lambda_max, args.lambda_steps):
            raise ParseError("--lambda-min, --lambda-max and --lambda-steps go together")
        raw["grid"] = {"lambdas": log_grid(args.lambda_min, args.lambda_max, args.lambda_steps)}
    if args.generations is not None:
        raw.setdefault("oracle", {})["generations"] = args.generations
    if args.mesh is not None:
        raw.setdefault("oracle", {})["mesh"] = args.mesh
    if args.bc is not None:
        raw.setdefault("solver", {})["bc"] = args.bc
    return from_dict(raw)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _jsonable(x.item())
    return x


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _write_json(out: Path, name: str, obj) -> None:
    _write(out, name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _lambdas(cfg, default):
    return cfg.grid.lambdas or default


def _options(cfg, **kw):
    from .assembly import CountOptions

    return CountOptions(right_bc=cfg.solver.bc, truncation=cfg.truncation(), sampling=cfg.sampling(), **kw)


def _cmd_info(cfg, out, args):
    from .tree import reduced_multiplicity, tilde_radius, total_length

    tree = cfg.tree_spec()
    gens = range(10)
    _write_json(out, "info.json", {
        "kind": tree.kind, "radius": tree.radius, "total_length": total_length(tree),
        "tilde_radius": tilde_radius(tree),
        "t": [tree.t(k) for k in gens], "b": [tree.b_at(k) for k in gens],
        "multiplicities": [reduced_multiplicity(tree, k) for k in gens],
    })


def _cmd_spectrum(cfg, out, args):
    from .assembly import _Assembler
    from .reduced import eigenvalues_below
    from .tree import reduced_multiplicity

    lam_max = max(_lambdas(cfg, [100.0]))
    tree = cfg.tree_spec()
    asm = _Assembler(tree, cfg.potential_obj(), _options(cfg))
    rows = ["k,index,eigenvalue,multiplicity"]
    k = 0
    while True:
        vals = eigenvalues_below(asm.problem(k), lam_max, tol=cfg.solver.tolerance)
        if not vals:
            break
        m = reduced_multiplicity(tree, k)
        rows += [f"{k},{i + 1},{v!r},{m}" for i, v in enumerate(vals)]
        k += 1
    _write(out, "spectrum.csv", "\n".join(rows) + "\n")


def _cmd_count(cfg, out, args):
    from .assembly import counting_report

    rep = counting_report(cfg.tree_spec(), cfg.potential_obj(), _lambdas(cfg, [1.0, 10.0, 100.0]), _options(cfg))
    _write(out, "count.csv", rep.to_csv(per_generation=args.per_generation))


def _cmd_oracle(cfg, out, args):
    from .assembly import assembly_check

    rep = assembly_check(cfg.tree_spec(), cfg.potential_obj(), cfg.oracle.generations, cfg.oracle.mesh,
                         cfg.oracle.n, bc=cfg.solver.bc)
    _write_json(out, "assembly_check.json", rep.to_dict())


def _cmd_weyl(cfg, out, args):
    from .asymptotics import weyl_total_check

    mode = cfg.params.get("mode", "full")
    tab = weyl_total_check(cfg.tree_spec(), cfg.potential_obj(), _lambdas(cfg, [1e2, 1e3, 1e4]), mode, _options(cfg))
    _write(out, "weyl.csv", tab.to_csv())


def _cmd_bands(cfg, out, args):
    from .asymptotics import band_structure

    tree = cfg.tree_spec()
    if tree.kind != "homogeneous":
        from .errors import NotApplicable

        raise NotApplicable("band structure is defined for homogeneous trees")
    bs = band_structure(tree.b, float(cfg.params.get("lambda_max", max(_lambdas(cfg, [100.0])))))
    _write(out, "bands.csv", bs.to_csv())
    _write_json(out, "bands.json", {"b": bs.b, "theta": bs.theta, "point_eigenvalues": bs.point_eigenvalues,
                                    "recovered_edges": bs.recovered_edges})


def _cmd_hardy(cfg, out, args):
    from .asymptotics import hardy_functional

    res = hardy_functional(cfg.tree_spec(), cfg.params.get("horizon"))
    _write_json(out, "hardy.json", {"sup": res.sup, "verdict": res.verdict, "argmax": res.argmax,
                                    "history": res.history})


def _cmd_renewal(cfg, out, args):
    from .asymptotics import renewal_profile
    from .errors import NotApplicable

    tree = cfg.tree_spec()
    if tree.kind != "geometric":
        raise NotApplicable("renewal profile is defined for geometric trees")
    lams = _lambdas(cfg, [1e4, 1e8])
    rp = renewal_profile(tree.q, tree.b, math.log(min(lams)), math.log(max(lams)))
    _write(out, "renewal.csv", rp.to_csv())
    _write_json(out, "renewal.json", {"beta": rp.beta, "eta": rp.eta, "residual": rp.residual, "median": rp.median})


def _cmd_logweyl(cfg, out, args):
    from .asymptotics import log_weyl_check
    from .errors import NotApplicable

    tree = cfg.tree_spec()
    if tree.kind != "geometric" or abs(tree.b * tree.q - 1.0) > 1e-12:
        raise NotApplicable("logarithmic law needs a geometric tree with b*q = 1")
    _write(out, "logweyl.csv", log_weyl_check(tree.b, _lambdas(cfg, [1e4, 1e6])).to_csv())


def _cmd_growing(cfg, out, args):
    from .asymptotics import growing_potential_check

    rep = growing_potential_check(cfg.tree_spec(), cfg.potential_obj(), _lambdas(cfg, [1e2, 1e3]), _options(cfg))
    _write(out, "growing.csv", rep.to_csv())
    _write_json(out, "growing_diagnostics.json", rep.diagnostics)


def _cmd_boundaryless(cfg, out, args):
    from .assembly import boundaryless_counting

    tree = cfg.tree_spec()
    d = int(cfg.params.get("d", tree.b_at(1) + 1))
    rows = ["lambda,lower,upper"]
    for lam in _lambdas(cfg, [1.0, 10.0, 100.0]):
        lo, hi = boundaryless_counting(tree, d, cfg.potential_obj(), lam, _options(cfg))
        rows.append(f"{lam!r},{lo},{hi}")
    _write(out, "boundaryless.csv", "\n".join(rows) + "\n")


HANDLERS = {
    "info": _cmd_info, "spectrum": _cmd_spectrum, "count": _cmd_count, "oracle-check": _cmd_oracle,
    "weyl": _cmd_weyl, "bands": _cmd_bands, "hardy": _cmd_hardy, "renewal": _cmd_renewal,
    "logweyl": _cmd_logweyl, "growing": _cmd_growing, "boundaryless": _cmd_boundaryless,
}


def run(command: str, cfg, out: Path, args=None) -> int:
    from .errors import NotApplicable, NotDiscrete

    try:
        HANDLERS[command](cfg, out, args or argparse.Namespace(per_generation=False))
    except (NotApplicable, NotDiscrete) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # surfaced by name, status 1
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except Exception as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return run(args.command, cfg, args.out, args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
