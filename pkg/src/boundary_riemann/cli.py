"""Command-line scenario runner.

Subcommands: models, layer, wavefan, viscous, solve, compare. Exit status is
0 on success, 1 on usage errors and 2 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import layers, output, riemann, selfsim, wavefan
from .errors import BoundaryRiemannError
from .models import BUILTIN_NAMES, builtin, model_from_config, verify_model

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()], dtype=float)
    except ValueError as exc:
        raise UsageError(f"cannot parse vector {text!r}") from exc


def parse_ladder(text: str) -> list[float]:
    """'start:floor:xratio' (geometric) or a comma-separated list."""
    if ":" not in text:
        return [float(v) for v in parse_vector(text)]
    parts = text.split(":")
    if len(parts) != 3 or not parts[2].startswith("x"):
        raise UsageError(f"--eps expects start:floor:xratio, got {text!r}")
    try:
        start, floor, ratio = float(parts[0]), float(parts[1]), float(parts[2][1:])
    except ValueError as exc:
        raise UsageError(f"cannot parse --eps {text!r}") from exc
    if not (0 < ratio < 1 and start > 0 and 0 < floor <= start):
        raise UsageError("--eps needs start >= floor > 0 and 0 < ratio < 1")
    out = [start]
    while out[-1] * ratio >= floor * (1 - 1e-12):
        out.append(out[-1] * ratio)
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--model", help=f"built-in model name ({', '.join(BUILTIN_NAMES)})")
    p.add_argument("--params-file", help="JSON file with model config and scenario inputs")
    p.add_argument("--gamma", type=float, help="p_system adiabatic exponent")
    p.add_argument("--radius", type=float, help="domain box radius")
    p.add_argument("--center", help="domain box center, comma-separated")
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                   help="extra model parameter (repeatable)")
    p.add_argument("--tol", type=float)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=1, help="worker count (one scenario per run)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boundary-riemann", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("models", help="list or verify models")
    p.add_argument("action", choices=["list", "verify"])
    _common(p)

    p = sub.add_parser("layer", help="boundary layer from a seed or by membership")
    _common(p)
    p.add_argument("--ubar", help="equilibrium state at zeta = infinity")
    p.add_argument("--seed", help="stable-manifold seed S (comma-separated)")
    p.add_argument("--ub", help="boundary state; solves for S by membership")

    p = sub.add_parser("wavefan", help="single wave-fan curve")
    _common(p)
    p.add_argument("--u0", help="right state U+")
    p.add_argument("--family", type=int)
    p.add_argument("--strength", type=float)
    p.add_argument("--provider", choices=riemann.PROVIDERS, default="envelope")
    p.add_argument("--nodes", type=int, default=wavefan.DEFAULT_NODES)

    p = sub.add_parser("viscous", help="continuation ladder for eps Q'' = (A - xi) Q'")
    _common(p)
    p.add_argument("--u0", help="right boundary state")
    p.add_argument("--ub", help="left boundary state")
    p.add_argument("--eps")
    p.add_argument("--xi-max", type=float)

    for name, text in (("solve", "boundary Riemann solution"), ("compare", "viscous vs inviscid limits")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--u0")
        p.add_argument("--ub", help="boundary state, or 'u0'")
        p.add_argument("--provider", choices=riemann.PROVIDERS, default="envelope")
        if name == "compare":
            p.add_argument("--eps")
            p.add_argument("--z-inner", type=float, default=20.0)
            p.add_argument("--xi-max", type=float)
            p.add_argument("--threshold", type=float, default=1e-3)
    return parser


def _resolve_model(args, scenario):
    config = dict(scenario.get("model", {}))
    if args.model:
        config["name"] = args.model
    if "name" not in config:
        raise UsageError("--model is required (or a params file with a model section)")
    params = dict(config.get("params", {}))
    if args.gamma is not None:
        params["gamma"] = args.gamma
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=JSON, got {item!r}")
        key, value = item.split("=", 1)
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    domain = dict(config.get("domain", {}))
    if args.radius is not None:
        domain["radius"] = args.radius
    if args.center is not None:
        domain["center"] = parse_vector(args.center).tolist()
    config.update(params=params, domain=domain)
    return model_from_config(config), config


def _state(args, scenario, key, model, default=None):
    text = getattr(args, key, None)
    if text is None:
        value = scenario.get(key)
        if value is None:
            return default
        return np.asarray(value, dtype=float)
    vec = parse_vector(text)
    if vec.size != model.n:
        raise UsageError(f"--{key} needs {model.n} components, got {vec.size}")
    return vec


def _require(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _out(args, name) -> Path:
    return Path(args.out_dir) / name


def _cmd_models(args, scenario):
    if args.action == "list":
        for name in BUILTIN_NAMES:
            m = builtin(name)
            print(f"{name}\tn={m.n}\tk={m.k}\tgap_c={m.gap_c:.6g}\tconservative={m.conservative}")
        return EXIT_OK
    model, config = _resolve_model(args, scenario)
    rep = verify_model(model)
    payload = dict(model=config, k=rep.k, worst_gap=rep.worst_gap, gap_c=model.gap_c,
                   max_jacobian_mismatch=rep.max_jacobian_mismatch,
                   non_characteristic=rep.non_characteristic, n_points=rep.n_points)
    print(json.dumps(output._jsonable(payload), sort_keys=True))
    return EXIT_OK if rep.non_characteristic else EXIT_SOLVER


def _cmd_layer(args, scenario):
    model, config = _resolve_model(args, scenario)
    U_bar = _state(args, scenario, "ubar", model, model.domain.center)
    U_b = _state(args, scenario, "ub", model)
    seed_text = args.seed if args.seed is not None else scenario.get("seed")
    if (U_b is None) == (seed_text is None):
        raise UsageError("layer needs exactly one of --seed or --ub")
    res = None
    if U_b is not None:
        tol = args.tol if args.tol is not None else 1e-9
        res = layers.membership(model, U_bar, U_b, tol)
        S = res.S
    else:
        S = parse_vector(seed_text) if isinstance(seed_text, str) else np.asarray(seed_text, float)
    traj = layers.layer_from_seed(model, U_bar, S, s_max=model.domain.radius)
    cfg = dict(command="layer", model=config, ubar=U_bar, S=S, horizon=traj.horizon,
               ub=U_b, residual=None if res is None else res.residual)
    output.write_layer(_out(args, "layer.csv"), traj, cfg)
    print(json.dumps(output._jsonable(dict(S=S, endpoint=traj.endpoint,
                                           residual=None if res is None else res.residual))))
    return EXIT_OK


def _cmd_wavefan(args, scenario):
    model, config = _resolve_model(args, scenario)
    U_plus = _state(args, scenario, "u0", model, model.domain.center)
    family = int(_require(args.family if args.family is not None else scenario.get("family"), "--family"))
    strength = float(_require(args.strength if args.strength is not None else scenario.get("strength"),
                              "--strength"))
    if args.provider == "lax":
        curve = wavefan.lax_oracle(model, family, strength, U_plus, m=args.nodes).curve
    else:
        curve = wavefan.fan_curve(model, None, family, strength, U_plus, m=args.nodes,
                                  tol=args.tol if args.tol is not None else 1e-10)
    cfg = dict(command="wavefan", model=config, u0=U_plus, family=family,
               strength=strength, provider=args.provider, nodes=args.nodes)
    output.write_curve(_out(args, "curve.csv"), curve, cfg)
    pieces = [dict(type=p.type, tau=[p.tau_start, p.tau_end], speed=[p.speed_lo, p.speed_hi])
              for p in wavefan.classify(curve)]
    print(json.dumps(output._jsonable(dict(endpoint=curve.endpoint, pieces=pieces))))
    return EXIT_OK


def _cmd_viscous(args, scenario):
    model, config = _resolve_model(args, scenario)
    U_right = _state(args, scenario, "u0", model, model.domain.center)
    U_b = _require(_state(args, scenario, "ub", model), "--ub")
    eps = _ladder(args, scenario)
    Xi = args.xi_max if args.xi_max is not None else riemann.default_Xi(model)
    tol = args.tol if args.tol is not None else selfsim.NEWTON_TOL
    profiles = selfsim.continuation_ladder(model, U_b, U_right, eps, Xi, tol=tol)
    cfg = dict(command="viscous", model=config, u0=U_right, ub=U_b, eps=eps, xi_max=Xi, tol=tol)
    rungs = []
    for r, prof in enumerate(profiles):
        name = f"profile_{r:02d}.csv"
        output.write_profile(_out(args, name), prof, dict(cfg, rung=r, epsilon=prof.epsilon))
        rungs.append(dict(rung=r, epsilon=prof.epsilon, residual=prof.residual_norm,
                          mesh_size=int(prof.xi.size), newton_iterations=prof.newton_iterations,
                          file=name))
    output.write_json(_out(args, "manifest.json"), dict(config=cfg, rungs=rungs))
    return EXIT_OK


def _boundary_inputs(args, scenario, model):
    U_0 = _state(args, scenario, "u0", model, model.domain.center)
    ub_text = args.ub if args.ub is not None else scenario.get("ub")
    if isinstance(ub_text, str) and ub_text.strip().lstrip("=").strip().lower() == "u0":
        return U_0, U_0.copy()
    return U_0, _require(_state(args, scenario, "ub", model), "--ub")


def _ladder(args, scenario):
    text = args.eps if args.eps is not None else scenario.get("eps")
    text = _require(text, "--eps")
    if isinstance(text, str):
        return parse_ladder(text)
    return [float(e) for e in text]


def _cmd_solve(args, scenario):
    model, config = _resolve_model(args, scenario)
    U_0, U_b = _boundary_inputs(args, scenario, model)
    tol = args.tol if args.tol is not None else 1e-9
    fan = riemann.solve_boundary_riemann(model, U_0, U_b, args.provider, tol=tol)
    cfg = dict(command="solve", model=config, u0=U_0, ub=U_b, provider=args.provider, tol=tol,
               horizon=fan.horizon)
    output.write_fan(_out(args, "fan.csv"), fan, cfg)
    print(json.dumps(output._jsonable(dict(S=fan.S, strengths=fan.strengths, trace=fan.trace_U_bar,
                                           residual=fan.residual, pieces=len(fan.pieces)))))
    return EXIT_OK


def _cmd_compare(args, scenario):
    model, config = _resolve_model(args, scenario)
    U_0, U_b = _boundary_inputs(args, scenario, model)
    eps = _ladder(args, scenario)
    rep = riemann.compare_limits(model, U_0, U_b, eps, args.z_inner, provider=args.provider,
                                 Xi=args.xi_max, sup_threshold=args.threshold)
    cfg = dict(command="compare", model=config, u0=U_0, ub=U_b, eps=eps, z_inner=args.z_inner,
               provider=args.provider, xi_max=rep.Xi, threshold=args.threshold)
    output.write_convergence(_out(args, "convergence.csv"), rep, cfg)
    summary = dict(config=cfg, S=rep.fan.S, S_fit=rep.S_fit, strengths=rep.fan.strengths,
                   l1_nonincreasing=rep.l1_nonincreasing, sup_nonincreasing=rep.sup_nonincreasing,
                   sup_below_threshold=rep.sup_below_threshold, l1_slope=rep.l1_slope(),
                   passed=rep.passed)
    output.write_json(_out(args, "summary.json"), summary)
    for key in ("l1_nonincreasing", "sup_nonincreasing", "sup_below_threshold"):
        print(f"{'PASS' if summary[key] else 'FAIL'} {key}")
    return EXIT_OK


COMMANDS = dict(models=_cmd_models, layer=_cmd_layer, wavefan=_cmd_wavefan,
                viscous=_cmd_viscous, solve=_cmd_solve, compare=_cmd_compare)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        scenario = {}
        if args.params_file:
            try:
                scenario = json.loads(Path(args.params_file).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read --params-file: {exc}") from exc
        return COMMANDS[args.command](args, scenario)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except BoundaryRiemannError as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
