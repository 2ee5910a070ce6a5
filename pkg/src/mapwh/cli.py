"""Command line front end.

Exit codes: 0 success, 1 a mathematical condition failed (the condition id is
printed), 2 malformed input (the offending JSON path is printed).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import examples as ex
from .friendship import NotFriendsError, bond, check_friendship
from .io import SchemaError, dumps, load_json, load_spec, save_spec, spec_to_json
from .map_core import MapSpec, MapSubordinatorSpec, phi, psi, validate_exponent
from .simulate import empirical_ladder_check, extract_ladder, ladder_rows, simulate_path
from .wh_verify import det_abs, wh_residuals

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def fmt(x) -> str:
    return f"{float(x):.17g}"


def parse_grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        n = int(n)
        if n < 1:
            raise ValueError
        return np.linspace(float(a), float(b), n)
    except ValueError:
        raise InputError(f"bad grid {text!r}; expected a:b:n") from None


def parse_pi(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise InputError(f"bad --pi {text!r}; expected comma separated numbers") from None


def _load(path, kind=None):
    try:
        spec = load_spec(path)
    except SchemaError as e:
        raise InputError(f"{path}: schema error at {e.path or '<root>'}: {e}") from None
    except (OSError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None
    if kind is MapSubordinatorSpec and not isinstance(spec, MapSubordinatorSpec):
        raise InputError(f"{path}: expected a subordinator spec")
    return spec


def _pi_for(args, *specs):
    pi = parse_pi(getattr(args, "pi", None))
    if pi is not None:
        return pi
    for s in specs:
        if s.pi is not None:
            return s.pi
    raise InputError("no --pi given and the specs carry no pi")


def _emit(args, summary: dict, human: str):
    if args.json:
        print(dumps(summary))
    else:
        print(human)


def _writer(path):
    if path is None or path == "-":
        return csv.writer(sys.stdout, lineterminator="\n"), None
    fh = open(path, "w", newline="")
    return csv.writer(fh, lineterminator="\n"), fh


# -- subcommands -------------------------------------------------------------------

def cmd_validate(args):
    spec = _load(args.spec)
    d = validate_exponent(spec)
    human = "ok" if d.ok else "\n".join(f"condition {c} failed at {w}: {m}" for c, w, m in d.failures)
    _emit(args, d.to_json(), human)
    return EXIT_OK if d.ok else EXIT_FAIL


def cmd_exponent(args):
    spec = _load(args.spec)
    grid = parse_grid(args.theta_grid)
    if args.laplace:
        if not isinstance(spec, MapSubordinatorSpec):
            raise InputError("--laplace needs a subordinator spec")
        if np.any(grid < 0):
            raise InputError("--laplace grid must be nonnegative")
        vals = np.array([phi(spec, z) for z in grid])
        head = "z"
    else:
        vals = psi(spec, grid)
        head = "theta"
    w, fh = _writer(args.output)
    w.writerow([head, "i", "j", "re", "im"])
    for t, M in zip(grid, vals):
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                w.writerow([fmt(t), i, j, fmt(M[i, j].real), fmt(M[i, j].imag)])
    if fh:
        fh.close()
    return EXIT_OK


def _friend_pair(args):
    Hp = _load(args.hp, MapSubordinatorSpec)
    Hm = _load(args.hm, MapSubordinatorSpec)
    return Hp, Hm, _pi_for(args, Hp, Hm)


def cmd_friendship(args):
    Hp, Hm, pi = _friend_pair(args)
    rep = check_friendship(Hp, Hm, pi, sufficient=args.sufficient)
    failed = rep.failed()
    human = f"verdict: {rep.verdict}" + "".join(f"\nfailed: {c}" for c in failed)
    _emit(args, rep.to_json(), human)
    if not rep.friends:
        print(f"condition failed: {', '.join(failed) or rep.verdict}", file=sys.stderr)
    return EXIT_OK if rep.friends else EXIT_FAIL


def cmd_bond(args):
    Hp, Hm, pi = _friend_pair(args)
    try:
        B = bond(Hp, Hm, pi)
    except NotFriendsError as e:
        failed = e.report.failed()
        print(f"condition failed: {', '.join(failed) or e.report.verdict}", file=sys.stderr)
        return EXIT_FAIL
    if args.output:
        save_spec(B, args.output)
    obj = spec_to_json(B)
    if args.json or not args.output:
        print(dumps(obj))
    else:
        print(f"bonding MAP written to {args.output}")
    return EXIT_OK


def cmd_verify_wh(args):
    B = _load(args.bond)
    if not isinstance(B, MapSpec):
        raise InputError(f"{args.bond}: expected a MAP spec")
    Hp = _load(args.hp, MapSubordinatorSpec)
    Hm = _load(args.hm, MapSubordinatorSpec)
    pi = _pi_for(args, B, Hp, Hm)
    grid = parse_grid(args.theta_grid)
    res = wh_residuals(B, Hp, Hm, pi, grid)
    det = det_abs(B, grid)
    w, fh = _writer(args.output)
    w.writerow(["theta", "residual_frobenius", "det_abs"])
    for t, r, d in zip(grid, res, det):
        w.writerow([fmt(t), fmt(r), fmt(d)])
    if fh:
        fh.close()
    summary = {"max_residual": float(res.max()), "tol": args.tol, "ok": bool(res.max() <= args.tol)}
    text = f"max residual {fmt(res.max())} ({'ok' if summary['ok'] else 'FAIL'})"
    print(dumps(summary) if args.json else text, file=sys.stderr if args.output is None else sys.stdout)
    if not summary["ok"]:
        print("condition failed: wh.residual", file=sys.stderr)
    return EXIT_OK if summary["ok"] else EXIT_FAIL


def cmd_gen(args):
    obj = load_json(args.params)
    try:
        if args.family == "double-exp":
            p = ex.DoubleExpParams.from_json(obj)
            Hp, Hm = ex.gen_double_exp(p)
        else:
            p = ex.SpectrallyPositiveParams.from_json(obj)
            Hp, Hm = ex.gen_spectrally_positive(p)
    except ex.ParameterError as e:
        print(f"condition failed: {e.condition}: {e}", file=sys.stderr)
        return EXIT_FAIL
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{args.params}: bad parameters: {e}") from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{args.prefix}Hp.json", out / f"{args.prefix}Hm.json"]
    save_spec(Hp, paths[0])
    save_spec(Hm, paths[1])
    _emit(args, {"Hp": str(paths[0]), "Hm": str(paths[1]), "pi": p.pi},
          f"wrote {paths[0]} and {paths[1]}")
    return EXIT_OK


def cmd_simulate(args):
    spec = _load(args.spec)
    w, fh = _writer(args.output)
    w.writerow(["path_id", "epoch", "increment", "phase_prev", "phase_at_max"])
    for k in range(args.paths):
        lad = extract_ladder(simulate_path(spec, args.T, args.h, args.seed, k), args.which)
        for pid, e, inc, pp, pm in ladder_rows([lad]):
            w.writerow([k, e, fmt(inc), pp, pm])
    if fh:
        fh.close()
    return EXIT_OK


def cmd_ladder_check(args):
    B = _load(args.bond)
    Hp = _load(args.hp, MapSubordinatorSpec)
    pi = parse_pi(args.pi)
    rep = empirical_ladder_check(B, Hp, pi, n_paths=args.paths, T=args.T, h=args.h, seed=args.seed)
    ok = rep.passed(args.rate_tol, args.switch_tol)
    summary = dict(rep.to_json(), ok=ok)
    lines = [f"ladder epochs: {rep.epochs} ({rep.jump_epochs} jumps)"]
    for j in range(Hp.n):
        lines.append(f"phase {j}: fitted rate {rep.fitted_rate[j]:.6g}, expected {rep.expected_rate[j]:.6g}")
    lines.append("ok" if ok else "FAIL")
    _emit(args, summary, "\n".join(lines + rep.warnings))
    if not ok:
        print("condition failed: ladder.shape", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine readable summary")
    ap = argparse.ArgumentParser(prog="mapwh", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", parents=[common], help="check that a spec is a MAP exponent")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("exponent", parents=[common], help="tabulate Psi (or Phi with --laplace)")
    p.add_argument("spec")
    p.add_argument("--theta-grid", required=True, help="a:b:n, endpoints inclusive")
    p.add_argument("--laplace", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_exponent)

    for name, func, hlp in (("friendship", cmd_friendship, "decide friendship of two subordinators"),
                            ("bond", cmd_bond, "construct the bonding MAP")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("hp")
        p.add_argument("hm")
        p.add_argument("--pi", help="comma separated invariant law")
        if name == "friendship":
            p.add_argument("--sufficient", action="store_true", help="also report sufficient conditions")
        else:
            p.add_argument("-o", "--output")
        p.set_defaults(func=func)

    p = sub.add_parser("verify-wh", parents=[common], help="Wiener-Hopf residual on a grid")
    p.add_argument("bond")
    p.add_argument("hp")
    p.add_argument("hm")
    p.add_argument("--pi")
    p.add_argument("--theta-grid", default="-50:50:1001")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify_wh)

    p = sub.add_parser("gen", parents=[common], help="generate a friend pair from parameters")
    p.add_argument("family", choices=["double-exp", "spectrally-positive"])
    p.add_argument("params")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", parents=[common], help="simulate paths and print ladder records")
    p.add_argument("spec")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--which", choices=["ascending", "descending"], default="ascending")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ladder-check", parents=[common], help="empirical ladder shapes against H+")
    p.add_argument("bond")
    p.add_argument("hp")
    p.add_argument("--pi")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate-tol", type=float, default=0.05)
    p.add_argument("--switch-tol", type=float, default=0.10)
    p.set_defaults(func=cmd_ladder_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, SchemaError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
