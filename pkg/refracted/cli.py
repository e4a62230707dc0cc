#!/usr/bin/env python3
"""Command line front end: refracted <command> --config run.json."""

from typing import Callable
import argparse
import io
import json
import logging
import math
import sys

import numpy as np
import pandas as pd
import pydantic

from refracted import applications
from refracted import config as config_lib
from refracted import errors
from refracted import identities
from refracted import levy
from refracted import scale
from refracted import simulate
from refracted import util


EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# Queries used by the validate command.
VALIDATE_X = 1.5
VALIDATE_A = 3.0
VALIDATE_Q = 0.1
VALIDATE_A_SET = (-1.0, 0.0)
VALIDATE_B_SET = (0.0, 2.0)
VALIDATE_RESOLVENT_Q = 0.5
VALIDATE_CREEP_Q = 0.5
KEY_IDENTITY_SAMPLES = 100
REDUCTION_DELTA = 1e-7
REDUCTION_GRID = np.array([-1.0, 0.25, 0.9, 1.5, 2.5, 4.0])
Z_LIMIT = 3.0
# Allowance for the discretisation bias of the strong scheme.
STRONG_SLACK = 0.01

OUTPUT_NOTES = """\
output:
  JSON floats are written in the shortest form that reads back to the same double
  (at most 17 significant digits); CSV floats use %.17g.
  The scale table has columns x, W, Wprime, Z (Wsecond on request) and WW, the
  refracted scale function of X - delta t on the same mesh.
"""


def _LoadConfig(path: str | None) -> config_lib.RunConfig:
    """Read a run config; 'code' (or the first of 'models') picks a canonical model."""
    raw = {"models": list(config_lib.CODES)}
    if path:
        with open(path) as f:
            raw = json.load(f)
    code = raw.get("code") or (raw.get("models") or [None])[0]
    merged = {}
    if code is not None:
        base = config_lib.Get(code)
        if base is None:
            raise errors.InvalidQuery(
                f"unknown model code {code!r}", choices=list(config_lib.CODES)
            )
        merged = base.model_dump(exclude_none=True)
        if "gamma" in raw or "c" in raw:
            merged.pop("c", None)
            merged.pop("gamma", None)
    merged.update(raw)
    return config_lib.RunConfig.model_validate(merged)


def _Override(cfg: config_lib.RunConfig, args) -> config_lib.RunConfig:
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.paths is not None:
        update["n_paths"] = args.paths
    if not update:
        return cfg
    sim = config_lib.SimConfig.model_validate(cfg.sim.model_dump() | update)
    return cfg.model_copy(update=dict(sim=sim))


def _Query(cfg: config_lib.RunConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True, exclude={"sim", "models"})


def _Dump(result: identities.IdentityResult) -> dict:
    """value, stderr_analytic (the accumulated quadrature error) and method."""
    return result.model_dump(by_alias=True)


def _Scale(cfg: config_lib.RunConfig, args):
    cfg.Require("x_max")
    q = cfg.q or 0.0
    model = cfg.Model()
    mesh = cfg.mesh or config_lib.NUMERICS.mesh
    w = scale.Build(model, 0.0, q)
    table = w.Table(cfg.x_max, mesh, cfg.second_derivative)
    x = table["x"].to_numpy()
    table["WW"] = scale.RefractedScale(model, cfg.Refraction(), q, x)
    record = dict(
        query=_Query(cfg), method=w.method, table=table.to_dict(orient="list")
    )
    return record, table


def _Exit(cfg: config_lib.RunConfig, args):
    cfg.Require("x", "a")
    q = cfg.q or 0.0
    model, refraction = cfg.Model(), cfg.Refraction()
    query = identities.ExitQuery(x=cfg.x, a=cfg.a, q=q, refraction=refraction)
    up = identities.TwoSidedUp(model, query)
    record = dict(query=_Query(cfg), **_Dump(up))
    record["two_sided_down"] = _Dump(identities.TwoSidedDown(model, query))
    record["one_sided_up"] = _Dump(
        identities.OneSidedUp(model, refraction, cfg.x, cfg.a, q)
    )
    if q > 0:
        record["one_sided_down"] = _Dump(
            identities.OneSidedDown(model, refraction, cfg.x, q)
        )
    return record, None


def _Ruin(cfg: config_lib.RunConfig, args):
    cfg.Require("x")
    result = identities.RuinProbability(cfg.Model(), cfg.Refraction(), cfg.x)
    return dict(query=_Query(cfg), **_Dump(result)), None


def _Resolvent(cfg: config_lib.RunConfig, args):
    cfg.Require("x", "kind")
    if cfg.grid is None and cfg.B is None:
        cfg.Require("grid")
    q = cfg.q or 0.0
    density = identities.Resolvent(
        cfg.Model(), cfg.Refraction(), cfg.kind, cfg.x, q, a=cfg.a
    )
    record = dict(query=_Query(cfg))
    table = None
    if cfg.B is not None:
        record["mass"] = _Dump(density.Mass(*cfg.B))
    if cfg.grid is not None:
        table = density.Table(cfg.grid)
        record["table"] = table.to_dict(orient="list")
    return record, table


def _Creep(cfg: config_lib.RunConfig, args):
    cfg.Require("x")
    result = identities.Creeping(cfg.Model(), cfg.Refraction(), cfg.x, cfg.q or 0.0)
    return dict(query=_Query(cfg), **_Dump(result)), None


def _Dividends(cfg: config_lib.RunConfig, args):
    cfg.Require("x", "q")
    model = cfg.Model()
    query = applications.DividendQuery(x=cfg.x, q=cfg.q, refraction=cfg.Refraction())
    value = applications.DividendValue(model, query)
    record = dict(query=_Query(cfg), **_Dump(value))
    if not isinstance(model.jumps, levy.StableJumps):
        closed = applications.DividendValueHyperExp(model, query)
        record["hyperexp"] = _Dump(closed)
    return record, None


def _Overshoot(cfg: config_lib.RunConfig, args):
    cfg.Require("x", "A", "B")
    result = applications.OvershootUndershoot(
        cfg.Model(), cfg.Refraction(), cfg.x, cfg.A, cfg.B
    )
    return dict(query=_Query(cfg), **_Dump(result)), None


def _Pasting(cfg: config_lib.RunConfig, args):
    cfg.Require("q")
    model = cfg.Model()
    gap = applications.SmoothPastingGap(model, cfg.Refraction(), cfg.q)
    record = dict(query=_Query(cfg), **gap.model_dump())
    try:
        level = applications.SmoothPastingLevel(model, cfg.delta, cfg.q)
        record["pasting_level"] = level
    except errors.InvalidQuery as e:
        logging.info(f"No pasting level: {e}")
        record["pasting_level"] = None
    return record, None


def _Simulate(cfg: config_lib.RunConfig, args):
    cfg.Require("x")
    model, refraction, sim = cfg.Model(), cfg.Refraction(), cfg.sim
    record = dict(query=_Query(cfg))
    table = None
    if cfg.functional is not None:
        query = simulate.FunctionalQuery(
            x=cfg.x,
            a=cfg.a,
            q=cfg.q or 0.0,
            A=cfg.A,
            B=cfg.B,
            kind=cfg.kind or "free",
        )
        estimate = simulate.EstimateFunctional(
            model, refraction, cfg.functional, query, sim
        )
        record.update(estimate.model_dump())
    if args.trace or cfg.functional is None:
        horizon = sim.horizon or 10.0
        if sim.scheme == "exact":
            path = simulate.SimulateExactBV(
                model, refraction, cfg.x, horizon, seed=sim.seed, a=cfg.a
            )
        else:
            path = simulate.SimulateStrongApprox(
                model,
                refraction,
                cfg.x,
                horizon,
                seed=sim.seed,
                eps=sim.epsilon,
                h=sim.h,
                gaussian_small_jumps=sim.gaussian_small_jumps,
                a=cfg.a,
            )
        if args.trace:
            path.events.to_csv(
                args.trace, index=False, float_format=util.CSV_FLOAT_FORMAT
            )
            logging.info(f"Wrote {len(path.events)} trace events to {args.trace}")
        if cfg.functional is None:
            record["path"] = path.model_dump(exclude={"events"})
            record["path"]["refracted_time"] = path.RefractedTime()
            table = path.events
    return record, table


def _StableRuin(cfg: config_lib.RunConfig, args):
    cfg.Require("x")
    alpha = cfg.alpha
    if alpha is None and isinstance(cfg.jumps, levy.StableJumps):
        alpha = cfg.jumps.alpha
    if alpha is None:
        cfg.Require("alpha")
    c = cfg.c if cfg.c is not None else cfg.Model().c
    result = applications.RuinProbabilityStable(cfg.x, cfg.b, c, cfg.delta, alpha)
    return dict(query=_Query(cfg), **_Dump(result)), None


def _McCheck(
    name: str, analytic: float, estimate: simulate.Estimate, slack: float = 0.0
) -> dict:
    """Passes when |analytic - mean| is within Z_LIMIT standard errors plus slack."""
    diff = analytic - estimate.mean
    if estimate.stderr > 0:
        z = diff / estimate.stderr
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    slack += estimate.bias_bound
    return {
        "check": name,
        "analytic": analytic,
        "mc_mean": estimate.mean,
        "mc_stderr": estimate.stderr,
        "z_score": z,
        "slack": slack,
        "pass": abs(diff) <= Z_LIMIT * estimate.stderr + slack,
    }


def _ResidualCheck(name: str, residual: float, tol: float) -> dict:
    return {"check": name, "residual": residual, "tol": tol, "pass": residual < tol}


def _Named(name: str, fn: Callable) -> Callable:
    fn.__name__ = name
    return fn


def _DeterministicChecks(code: str, model_cfg: config_lib.ModelConfig):
    """Thunks returning one report row each, for one canonical model."""
    model, refraction = model_cfg.Model(), model_cfg.Refraction()
    x, a, q = VALIDATE_X, VALIDATE_A, VALIDATE_Q
    tiny = refraction.model_copy(update=dict(delta=REDUCTION_DELTA))
    checks = []

    def TwoSidedReduction():
        query = identities.ExitQuery(x=x, a=a, q=q, refraction=tiny)
        refracted = identities.TwoSidedUp(model, query).value
        classical = identities.ClassicalTwoSided(model, x, a, q)
        residual = abs(refracted - classical)
        return _ResidualCheck(f"{code}/delta_to_zero/two_sided_up", residual, 1e-5)

    checks.append(_Named("delta_to_zero/two_sided_up", TwoSidedReduction))

    if isinstance(model.jumps, levy.StableJumps):

        def StableRuin():
            closed = applications.RuinProbabilityStable(
                x, refraction.b, model.c, refraction.delta, model.jumps.alpha
            ).value
            generic = identities.RuinProbability(model, refraction, x).value
            return _ResidualCheck(f"{code}/stable_ruin", abs(closed - generic), 1e-6)

        checks.append(_Named("stable_ruin", StableRuin))
        return checks

    def OneSidedReduction():
        refracted = identities.OneSidedDown(model, tiny, x, q).value
        classical = identities.ClassicalOneSidedDown(model, x, q)
        residual = abs(refracted - classical)
        return _ResidualCheck(f"{code}/delta_to_zero/one_sided_down", residual, 1e-5)

    def ResolventReduction():
        query = identities.ExitQuery(x=x, a=a, q=q, refraction=tiny)
        pairs = [
            (
                identities.ResolventTwoSided(model, query),
                identities.ClassicalResolvent(model, x, a, q),
            ),
            (
                identities.ResolventKilledBelow(model, tiny, x, q),
                identities.ClassicalResolventKilledBelow(model, x, q),
            ),
            (
                identities.ResolventFree(model, tiny, x, q),
                identities.ClassicalResolventFree(model, x, q),
            ),
        ]
        worst = max(
            float(np.max(np.abs(r.Density(REDUCTION_GRID) - c.Density(REDUCTION_GRID))))
            for r, c in pairs
        )
        return _ResidualCheck(f"{code}/delta_to_zero/resolvents", worst, 1e-5)

    checks += [
        _Named("delta_to_zero/one_sided_down", OneSidedReduction),
        _Named("delta_to_zero/resolvents", ResolventReduction),
    ]

    # q mass + P(leaving the domain) = 1 for each killing rule.
    rq = VALIDATE_RESOLVENT_Q
    exit_query = identities.ExitQuery(x=x, a=a, q=rq, refraction=refraction)

    def TwoSidedEscape():
        up = identities.TwoSidedUp(model, exit_query).value
        return up + identities.TwoSidedDown(model, exit_query).value

    escapes = {
        "two_sided": TwoSidedEscape,
        "killed_below": lambda: identities.OneSidedDown(model, refraction, x, rq).value,
        "killed_above": lambda: identities.OneSidedUp(
            model, refraction, x, a, rq
        ).value,
        "free": lambda: 0.0,
    }
    for kind, escape in escapes.items():

        def Complementarity(kind=kind, escape=escape):
            density = identities.Resolvent(model, refraction, kind, x, rq, a=a)
            residual = abs(rq * density.Mass().value + escape() - 1.0)
            return _ResidualCheck(f"{code}/complementarity/{kind}", residual, 1e-6)

        checks.append(_Named(f"complementarity/{kind}", Complementarity))

    def Convolution():
        residual = identities.ConvolutionResidual(model, refraction.delta, q, a)
        return _ResidualCheck(f"{code}/convolution_identity", residual, 1e-6)

    def Dividends():
        query = applications.DividendQuery(x=x, q=q, refraction=refraction)
        generic = applications.DividendValue(model, query).value
        closed = applications.DividendValueHyperExp(model, query)
        residual = abs(generic - closed.value)
        row = _ResidualCheck(f"{code}/dividend_closed_form", residual, 1e-8)
        row["zero_term"] = closed.zero_term
        return row

    checks += [
        _Named("convolution_identity", Convolution),
        _Named("dividend_closed_form", Dividends),
    ]

    if model.BoundedVariation() and not isinstance(model.jumps, levy.NoJumps):

        def KeyIdentity():
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))
            worst = 0.0
            for _ in range(KEY_IDENTITY_SAMPLES):
                m = rng.uniform(0.0, 1.0)
                u = m + rng.uniform(0.1, 2.0)
                v = u + rng.uniform(0.0, 2.0)
                tq = rng.uniform(0.05, 1.0)
                worst = max(
                    worst, identities.VerifyKeyIdentity(model, refraction, tq, u, v, m)
                )
            return _ResidualCheck(f"{code}/key_identity", worst, 1e-6)

        checks.append(_Named("key_identity", KeyIdentity))
    return checks


def _McSim(model: levy.LevyModel, sim: config_lib.SimConfig) -> config_lib.SimConfig:
    """Exact scheme for bounded variation models, the strong approximation otherwise."""
    scheme = "exact" if model.BoundedVariation() else "strong"
    return sim.model_copy(update=dict(scheme=scheme))


def _MonteCarloChecks(
    code: str, model_cfg: config_lib.ModelConfig, sim: config_lib.SimConfig
):
    model, refraction = model_cfg.Model(), model_cfg.Refraction()
    sim = _McSim(model, sim)
    slack = STRONG_SLACK if sim.scheme == "strong" else 0.0
    x, a, q, cq = VALIDATE_X, VALIDATE_A, VALIDATE_Q, VALIDATE_CREEP_Q
    exit_query = identities.ExitQuery(x=x, a=a, q=q, refraction=refraction)

    def Dividends():
        query = applications.DividendQuery(x=x, q=q, refraction=refraction)
        return applications.DividendValue(model, query).value

    def ResolventMass():
        density = identities.ResolventKilledBelow(model, refraction, x, q)
        return density.Mass(*VALIDATE_B_SET).value

    def StableRuin():
        return applications.RuinProbabilityStable(
            x, refraction.b, model.c, refraction.delta, model.jumps.alpha
        ).value

    cases = [
        (
            "two_sided_up",
            dict(a=a, q=q),
            lambda: identities.TwoSidedUp(model, exit_query).value,
        ),
        (
            "two_sided_down",
            dict(a=a, q=q),
            lambda: identities.TwoSidedDown(model, exit_query).value,
        ),
    ]
    creep = (
        "creep",
        dict(q=cq),
        lambda: identities.Creeping(model, refraction, x, cq).value,
    )
    if sim.scheme == "exact":
        cases += [
            (
                "one_sided_up",
                dict(a=a, q=q),
                lambda: identities.OneSidedUp(model, refraction, x, a, q).value,
            ),
            (
                "one_sided_down",
                dict(q=q),
                lambda: identities.OneSidedDown(model, refraction, x, q).value,
            ),
            (
                "ruin",
                dict(),
                lambda: identities.RuinProbability(model, refraction, x).value,
            ),
            creep,
            (
                "resolvent_mass",
                dict(q=q, B=VALIDATE_B_SET, kind="killed_below"),
                ResolventMass,
            ),
            ("dividends", dict(q=q), Dividends),
            (
                "overshoot_undershoot",
                dict(A=VALIDATE_A_SET, B=VALIDATE_B_SET),
                lambda: applications.OvershootUndershoot(
                    model, refraction, x, VALIDATE_A_SET, VALIDATE_B_SET
                ).value,
            ),
        ]
    else:
        # Strong scheme runs are costly at q = 0; only the stable model needs ruin.
        cases.append(
            (
                "one_sided_down",
                dict(q=cq),
                lambda: identities.OneSidedDown(model, refraction, x, cq).value,
            )
        )
        if model.sigma > 0:
            cases.append(creep)
        if isinstance(model.jumps, levy.StableJumps):
            cases.append(("ruin", dict(), StableRuin))

    checks = []
    for functional, extra, analytic in cases:

        def Check(functional=functional, extra=extra, analytic=analytic):
            query = simulate.FunctionalQuery(x=x, **extra)
            estimate = simulate.EstimateFunctional(
                model, refraction, functional, query, sim
            )
            return _McCheck(f"{code}/{functional}", analytic(), estimate, slack)

        checks.append(_Named(functional, Check))
    return checks


def _Validate(cfg: config_lib.RunConfig, args):
    levy.ValidateRefraction(cfg.Model(), cfg.Refraction())
    codes = cfg.models or ([cfg.code] if cfg.code else list(config_lib.CODES))
    rows = []
    for code in codes:
        model_cfg = config_lib.Get(code)
        if model_cfg is None:
            raise errors.InvalidQuery(
                f"unknown model code {code!r}", choices=list(config_lib.CODES)
            )
        checks = _DeterministicChecks(code, model_cfg)
        checks += _MonteCarloChecks(code, model_cfg, cfg.sim)
        for check in checks:
            try:
                row = check()
            except errors.RefractedError as e:
                logging.warning(f"{code}: check failed with {e}")
                name = f"{code}/{check.__name__}"
                row = {"check": name, **e.Details(), "pass": False}
            logging.info(f"{row['check']}: {'pass' if row['pass'] else 'FAIL'}")
            rows.append(row)
    record = dict(
        models=codes,
        n_paths=cfg.sim.n_paths,
        seed=cfg.sim.seed,
        checks=rows,
        passed=all(row["pass"] for row in rows),
    )
    return record, pd.json_normalize(rows)


COMMANDS: dict[str, Callable] = {
    "scale": _Scale,
    "exit": _Exit,
    "ruin": _Ruin,
    "resolvent": _Resolvent,
    "creep": _Creep,
    "dividends": _Dividends,
    "overshoot": _Overshoot,
    "pasting": _Pasting,
    "simulate": _Simulate,
    "stable-ruin": _StableRuin,
    "validate": _Validate,
}


def _Render(record: dict, table: pd.DataFrame | None, fmt: str) -> str:
    if fmt == "json":
        return util.ToJson(record) + "\n"
    if table is None:
        flat = {k: v for k, v in record.items() if not isinstance(v, (list, tuple))}
        table = pd.json_normalize(flat)
    buf = io.StringIO()
    table.to_csv(buf, index=False, float_format=util.CSV_FLOAT_FORMAT)
    return buf.getvalue()


def _Write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w") as f:
        f.write(text)
    logging.info(f"Wrote {out}")


def _Fail(details: dict, code: int) -> int:
    sys.stderr.write(util.ToJson(details) + "\n")
    return code


def _Parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refracted",
        description="Refracted Lévy process identities and simulation",
        epilog=OUTPUT_NOTES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(
            name,
            epilog=OUTPUT_NOTES,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        cmd.add_argument(
            "--config", required=name != "validate", help="run config JSON"
        )
        cmd.add_argument("--out", help="output file (default stdout)")
        cmd.add_argument("--format", choices=["json", "csv"], default="json")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--paths", type=int)
        cmd.add_argument("--quiet", action="store_true")
        if name == "simulate":
            cmd.add_argument("--trace", help="write one path's event log as CSV")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _Parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )

    try:
        cfg = _Override(_LoadConfig(args.config), args)
        logging.info(f"Running {args.command}")
        record, table = COMMANDS[args.command](cfg, args)
    except errors.InvalidInputError as e:
        return _Fail(e.Details(), EXIT_INVALID)
    except pydantic.ValidationError as e:
        details = dict(
            error="ValidationError", message=str(e), errors=json.loads(e.json())
        )
        return _Fail(details, EXIT_INVALID)
    except (ValueError, OSError) as e:
        return _Fail(dict(error=type(e).__name__, message=str(e)), EXIT_INVALID)
    except errors.NumericalError as e:
        return _Fail(e.Details(), EXIT_NUMERICAL)

    _Write(_Render(record, table, args.format), args.out)
    if args.command == "validate" and not record["passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
