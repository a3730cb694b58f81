"""Command-line entry point ``vilab``.

Exit codes: 0 success, 1 invalid input, 2 iteration budget exhausted,
3 a study row failed, 4 a study finished but missed one of its checks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .errors import MaxIterExceeded, VIError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_MAXITER, EXIT_ROW_FAILED, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_seed(cli_seed):
    env = os.environ.get("VI_LAB_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"VI_LAB_SEED must be an integer, got {env!r}")
    return int(cli_seed)


def write_manifest(args, outdir, inputs, seed, extra=None):
    overrides = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "out", "spec", "sequence") and v is not None and not callable(v)
    }
    manifest = {
        "command": args.command if not getattr(args, "kind", None) else f"{args.command} {args.kind}",
        "inputs": list(inputs),
        "config": overrides,
        "output_dir": outdir,
        "seed": seed,
    }
    if extra:
        manifest.update(extra)
    atomic_write(os.path.join(outdir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _vector_csv(u, name="u"):
    lines = [f"index,{name}"] + [f"{i},{float(x)!r}" for i, x in enumerate(u)]
    return "\n".join(lines) + "\n"


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args):
    from .serialize import load_problem
    from .solver import SolveConfig, solve_vi

    seed = resolve_seed(args.seed)
    problem = load_problem(args.spec)
    cfg = SolveConfig(rho=args.rho, tol=args.tol, max_iter=args.max_iter, method=args.method)
    code = EXIT_OK
    try:
        rep = solve_vi(problem, cfg)
    except MaxIterExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        rep, code = exc.report, EXIT_MAXITER
    atomic_write(os.path.join(args.out, "solve_report.json"), rep.to_json(indent=2, sort_keys=True) + "\n")
    atomic_write(os.path.join(args.out, "solution.csv"), _vector_csv(rep.u))
    write_manifest(args, args.out, [args.spec], seed)
    if code == EXIT_OK:
        print(f"converged in {rep.iterations} iterations; wrote {args.out}/solution.csv")
    return code


# ---------------------------------------------------------------------------
# study


def _study_table(args, seed):
    from . import studies

    if args.kind == "penalty":
        if args.spec:
            from .hilbert import PenaltyOperator
            from .serialize import load_problem

            P = load_problem(args.spec)
            ladder = studies.StudyLadder.penalty_ladder(P, PenaltyOperator.proj_residual(P.K), args.lambdas)
        else:
            if args.preset != "scalar":
                raise ValidationError(f"unknown penalty preset {args.preset!r}")
            ladder = studies.scalar_penalty_ladder(args.lambdas)
        return studies.run_penalty_study(ladder)
    if args.kind == "data":
        ns = args.ns or [2**p for p in range(13)]
        if args.preset == "random":
            ladder = studies.random_data_ladder(np.random.default_rng(seed), args.dim or 6, ns)
        elif args.preset == "scalar":
            ladder = studies.scalar_data_ladder(ns)
        else:
            raise ValidationError(f"unknown data preset {args.preset!r}")
        return studies.run_data_study(ladder)
    if args.kind == "mosco":
        if args.preset != "interval":
            raise ValidationError(f"unknown mosco preset {args.preset!r}")
        return studies.run_mosco_study(studies.interval_mosco_ladder(args.ns or [2**p for p in range(13)]))
    if args.kind == "heat":
        from .fem_heat import assemble_heat, heat_mesh, run_heat_penalty_study

        model = assemble_heat(heat_mesh(args.dim or 1, args.nx, args.ny), args.g, args.q, args.b)
        lambdas = args.lambdas or [1.0, 0.5, 0.1, 0.05, 0.01, 1e-3, 1e-4]
        return run_heat_penalty_study(model, lambdas)
    if args.kind == "contact":
        return _contact_study(args)
    raise ValidationError(f"unknown study {args.kind!r}")


def _gnuplot(kind, csv_name, columns):
    x = 1
    y = columns.index("error") + 1
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale xy\n"
        f"set xlabel '{columns[0]}'\nset ylabel 'error'\n"
        f"set title '{kind} study'\n"
        f"plot '{csv_name}' using {x}:{y} with linespoints\n"
    )


def cmd_study(args):
    seed = resolve_seed(args.seed)
    table = _study_table(args, seed)
    csv_name = f"{args.kind}_table.csv"
    atomic_write(os.path.join(args.out, csv_name), table.to_csv())
    atomic_write(os.path.join(args.out, f"{args.kind}_manifest.json"), table.manifest_json())
    if args.emit_gnuplot:
        atomic_write(os.path.join(args.out, f"{args.kind}_plot.gp"), _gnuplot(args.kind, csv_name, table.columns))
    write_manifest(args, args.out, [args.spec] if getattr(args, "spec", None) else [], seed)
    for name, ok in table.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if table.failed_rows:
        print(f"{len(table.failed_rows)} row(s) failed", file=sys.stderr)
        return EXIT_ROW_FAILED
    return EXIT_OK if table.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# classify


def cmd_classify(args):
    from .criterion import classify_sequence
    from .serialize import load_problem, read_sequence

    seed = resolve_seed(args.seed)
    problem = load_problem(args.spec)
    with open(args.sequence, encoding="utf-8") as fh:
        seq = read_sequence(fh.read(), os.path.basename(args.sequence))
    if seq.dim != problem.dim:
        raise ValidationError(f"sequence dimension {seq.dim} does not match problem dimension {problem.dim}")
    rep = classify_sequence(problem, seq, probe_budget=args.probe_budget, seed=seed)
    atomic_write(os.path.join(args.out, "criterion.csv"), rep.to_csv())
    flags = {**rep.flags(), "D": rep.D, "D_bound": rep.D_bound}
    atomic_write(os.path.join(args.out, "flags.json"), json.dumps(flags, indent=2, sort_keys=True) + "\n")
    write_manifest(args, args.out, [args.spec, args.sequence], seed)
    print(json.dumps(rep.flags(), sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(args):
    from .selftest import run_selftest

    seed = resolve_seed(args.seed)
    results = run_selftest(seed)
    text = json.dumps({"seed": seed, "results": results}, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write(os.path.join(args.out, "selftest.json"), text)
        write_manifest(args, args.out, [], seed)
    for r in results:
        print(f"{'pass' if r['passed'] else 'FAIL'}  {r['name']}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_INVALID


# ---------------------------------------------------------------------------
# contact / heat


def _contact_data(args):
    from .fem_contact import ContactData, ElasticMaterial

    return ContactData(
        lx=args.lx,
        ly=args.ly,
        nx=args.nx,
        ny=args.ny,
        material=ElasticMaterial(args.lame_lambda, args.lame_mu),
        F=args.F,
        k=args.k,
        f0=tuple(args.f0),
        f2=tuple(args.f2),
        mu=args.mu,
    )


def _contact_study(args):
    from .fem_contact import run_theorem5_study

    ns = args.ns or [2**p for p in range(13)]
    return run_theorem5_study(_contact_data(args), ns, mu0=args.mu0)


def cmd_contact(args):
    from .fem_contact import assemble_contact, solve_contact_frictional

    seed = resolve_seed(args.seed)
    if args.action == "study":
        args.kind = "contact"
        return cmd_study(args)
    model = assemble_contact(_contact_data(args))
    rep = solve_contact_frictional(model)
    atomic_write(os.path.join(args.out, "displacement.csv"), model.displacement_csv(rep.u))
    atomic_write(os.path.join(args.out, "solve_report.json"), rep.to_json(indent=2, sort_keys=True) + "\n")
    write_manifest(args, args.out, [], seed, {"d0": model.d0})
    print(f"outer iterations {rep.outer_iterations}; wrote {args.out}/displacement.csv")
    return EXIT_OK


def cmd_heat(args):
    from .fem_heat import assemble_heat, heat_mesh, solve_constrained
    from .solver import SolveConfig, solve_penalized

    seed = resolve_seed(args.seed)
    model = assemble_heat(heat_mesh(args.dim, args.nx, args.ny), args.g, args.q, args.b)
    if args.lam is None:
        rep = solve_constrained(model)
    else:
        rep = solve_penalized(model.problem, model.penalty, args.lam, SolveConfig(tol=1e-12))
    atomic_write(os.path.join(args.out, "solution.csv"), model.nodal_csv(rep.u))
    write_manifest(args, args.out, [], seed)
    print(f"wrote {args.out}/solution.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=0, help="probe seed; VI_LAB_SEED overrides it")


def _add_mesh(p, nx=64):
    p.add_argument("--dim", type=int, choices=(1, 2), default=None, help="spatial dimension (heat)")
    p.add_argument("--nx", type=int, default=nx, help="elements in x")
    p.add_argument("--ny", type=int, default=None, help="elements in y (default: nx)")


def _add_heat_data(p):
    p.add_argument("--g", type=float, default=2.0, help="heat source")
    p.add_argument("--q", type=float, default=0.0, help="flux on gamma2")
    p.add_argument("--b", type=float, default=0.0, help="target value on gamma3")


def _add_contact(p):
    p.add_argument("--lx", type=float, default=2.0)
    p.add_argument("--ly", type=float, default=1.0)
    p.add_argument("--lame-lambda", type=float, default=1.0)
    p.add_argument("--lame-mu", type=float, default=1.0)
    p.add_argument("--F", type=float, default=0.5, help="yield limit on gamma3")
    p.add_argument("--k", type=float, default=0.05, help="layer thickness")
    p.add_argument("--f0", type=_floats, default=[0.0, -0.2], help="body force 'fx,fy'")
    p.add_argument("--f2", type=_floats, default=[0.3, -0.4], help="top traction 'fx,fy'")
    p.add_argument("--mu", type=float, default=0.0, help="friction coefficient (solve)")
    p.add_argument("--mu0", type=float, default=0.02, help="friction ladder start (study)")


def build_parser():
    ap = argparse.ArgumentParser(prog="vilab", description="Variational-inequality solver and convergence checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem document")
    p.add_argument("spec", help="problem JSON")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--rho", type=float, default=None, help="relaxation step (default: automatic)")
    p.add_argument("--method", choices=("auto", "iterate", "direct"), default="auto")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="run a convergence study")
    p.add_argument("kind", choices=("penalty", "data", "mosco", "heat", "contact"))
    p.add_argument("--preset", default=None, help="penalty: scalar; data: scalar|random; mosco: interval")
    p.add_argument("--spec", default=None, help="problem JSON (penalty study)")
    p.add_argument("--lambdas", type=_floats, default=None, help="comma-separated penalty parameters")
    p.add_argument("--ns", type=_ints, default=None, help="comma-separated ladder indices")
    p.add_argument("--emit-gnuplot", action="store_true", help="also write a gnuplot script")
    _add_mesh(p, nx=None)
    _add_heat_data(p)
    _add_contact(p)
    _add_common(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("classify", help="classify a candidate sequence")
    p.add_argument("spec", help="problem JSON")
    p.add_argument("sequence", help="CSV with one vector per row (optional 'n' column)")
    p.add_argument("--probe-budget", type=int, default=32)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("selftest", help="run the golden example suite")
    p.add_argument("--out", default=None, help="directory for selftest.json")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("contact", help="contact problem: solve or study")
    p.add_argument("action", choices=("solve", "study"))
    p.add_argument("--nx", type=int, default=4)
    p.add_argument("--ny", type=int, default=2)
    p.add_argument("--ns", type=_ints, default=None)
    p.add_argument("--emit-gnuplot", action="store_true")
    _add_contact(p)
    _add_common(p)
    p.set_defaults(func=cmd_contact)

    p = sub.add_parser("heat", help="heat problem: constrained or penalised solve")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--lam", type=float, default=None, help="penalty parameter (default: constrained)")
    _add_heat_data(p)
    _add_common(p)
    p.set_defaults(func=cmd_heat)
    return ap


def _fill_study_defaults(args):
    if args.command != "study":
        return
    if args.preset is None:
        args.preset = {"penalty": "scalar", "data": "scalar", "mosco": "interval"}.get(args.kind)
    if args.kind == "contact":
        args.nx = args.nx or 4
        args.ny = args.ny or 2
    elif args.kind == "heat":
        args.nx = args.nx or 64


def main(argv=None):
    args = build_parser().parse_args(argv)
    _fill_study_defaults(args)
    try:
        return args.func(args)
    except MaxIterExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MAXITER
    except (VIError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
