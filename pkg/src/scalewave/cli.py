"""Command-line entry points: run a case, report a run, check properties.

`scalewave run <config>` trains one configured case and fills an output
directory with machine-readable artifacts; `scalewave report <dir>` turns
those artifacts into tables, plot data and figures; `scalewave check` runs
the fast property suites.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from .framework import LossWeights, build_collocation
from .network import MlpSpec, batch_values, save_checkpoint
from .optimizer import LbfgsConfig
from .problems import CASES, GRID_PRESETS, run_case

# case parameters a config may override
PARAM_KEYS = {"nagumo": ("a",), "burgers": ("nu",)}

_TOP_KEYS = ("case", "params", "desk_scale", "grid", "tau_end", "networks",
             "weights", "optimizer", "seed", "output_dir", "snapshot_taus")
_OPT_KEYS = ("memory", "c1", "c2", "gradient_tolerance", "max_iterations",
             "warmup_iterations", "max_line_search_steps")
_WEIGHT_KEYS = ("pde", "alg", "bc", "ic")


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _expect_mapping(value, path: str, allowed: tuple[str, ...]) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected a mapping, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unexpected key")
    return value


def _number(value, path: str, *, minimum=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        _fail(path, "must be finite")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    return int(value) if integer else float(value)


def _widths(value, path: str) -> tuple[int, ...]:
    if not isinstance(value, list) or len(value) < 2:
        _fail(path, "expected a list of at least two layer widths")
    return tuple(_number(v, f"{path}[{i}]", minimum=1, integer=True)
                 for i, v in enumerate(value))


def _net_spec(value, path: str, default: MlpSpec) -> MlpSpec:
    if value is None:
        return default
    value = _expect_mapping(value, path, ("widths", "input_scales"))
    widths = _widths(value["widths"], f"{path}.widths") if "widths" in value else default.widths
    if "input_scales" in value:
        raw = value["input_scales"]
        if not isinstance(raw, list):
            _fail(f"{path}.input_scales", "expected a list")
        scales = tuple(_number(v, f"{path}.input_scales[{i}]") for i, v in enumerate(raw))
    else:
        scales = default.input_scales if len(default.input_scales) == widths[0] else ()
    try:
        return MlpSpec(widths, scales)
    except ValueError as e:
        _fail(path, str(e))


def materialize(raw: dict):
    """Validate a config mapping and fill defaults.

    Returns (resolved config dict, problem, grid tuple, LossWeights,
    LbfgsConfig).  Raises ConfigError naming the offending field path.
    """
    raw = _expect_mapping(raw, "", _TOP_KEYS)
    if "case" not in raw:
        _fail("case", "required")
    case = raw["case"]
    if case not in CASES:
        _fail("case", f"unknown case {case!r}; registered: {', '.join(sorted(CASES))}")

    params = _expect_mapping(raw.get("params", {}), "params", PARAM_KEYS.get(case, ()))
    params = {k: _number(v, f"params.{k}") for k, v in params.items()}
    try:
        problem = CASES[case](**params)
    except ValueError as e:
        _fail("params", str(e))
    params = dict(problem.params)  # builder defaults materialized

    desk = raw.get("desk_scale", False)
    if not isinstance(desk, bool):
        _fail("desk_scale", f"expected true/false, got {desk!r}")
    preset_space, preset_tau = GRID_PRESETS[case]["desk" if desk else "full"]

    grid = _expect_mapping(raw.get("grid", {}), "grid", ("space", "tau"))
    space = grid.get("space", list(preset_space) if isinstance(preset_space, tuple)
                     else preset_space)
    if isinstance(space, list):
        if len(space) != problem.spatial_dim:
            _fail("grid.space", f"expected {problem.spatial_dim} axis sizes")
        space = [_number(v, f"grid.space[{i}]", minimum=8, integer=True)
                 for i, v in enumerate(space)]
    else:
        space = _number(space, "grid.space", minimum=8, integer=True)
        if problem.spatial_dim == 2:
            space = [space, space]
    n_tau = _number(grid.get("tau", preset_tau), "grid.tau", minimum=8, integer=True)

    tau_end = _number(raw.get("tau_end", problem.tau_end), "tau_end", minimum=1e-12)

    nets = _expect_mapping(raw.get("networks", {}), "networks", ("profile", "rates"))
    wnet = _net_spec(nets.get("profile"), "networks.profile", problem.wnet)
    pnet = _net_spec(nets.get("rates"), "networks.rates", problem.pnet)
    try:
        problem = dataclasses.replace(problem, tau_end=tau_end, wnet=wnet, pnet=pnet)
    except ValueError as e:
        _fail("networks", str(e))

    wraw = _expect_mapping(raw.get("weights", {}), "weights", _WEIGHT_KEYS)
    try:
        weights = LossWeights(**{k: _number(v, f"weights.{k}") for k, v in wraw.items()})
    except ConfigError:
        raise
    except ValueError as e:
        _fail("weights", str(e))

    oraw = _expect_mapping(raw.get("optimizer", {}), "optimizer", _OPT_KEYS)
    odef = LbfgsConfig()
    try:
        lbfgs = LbfgsConfig(
            memory=_number(oraw.get("memory", odef.memory), "optimizer.memory",
                           minimum=1, integer=True),
            c1=_number(oraw.get("c1", odef.c1), "optimizer.c1"),
            c2=_number(oraw.get("c2", odef.c2), "optimizer.c2"),
            grad_tol=_number(oraw.get("gradient_tolerance", odef.grad_tol),
                             "optimizer.gradient_tolerance", minimum=0.0),
            max_iterations=_number(oraw.get("max_iterations", odef.max_iterations),
                                   "optimizer.max_iterations", minimum=0, integer=True),
            warmup_iterations=_number(oraw.get("warmup_iterations", odef.warmup_iterations),
                                      "optimizer.warmup_iterations", minimum=0, integer=True),
            max_line_search=_number(oraw.get("max_line_search_steps", odef.max_line_search),
                                    "optimizer.max_line_search_steps", minimum=1, integer=True),
        )
    except ConfigError:
        raise
    except ValueError as e:
        _fail("optimizer", str(e))

    seed = _number(raw.get("seed", 0), "seed", minimum=0, integer=True)
    output_dir = raw.get("output_dir", os.path.join("runs", case))
    if not isinstance(output_dir, str) or not output_dir:
        _fail("output_dir", "expected a non-empty path string")

    default_snaps = [round(t, 12) for t in np.linspace(0.0, tau_end, 5)]
    snaps = raw.get("snapshot_taus", default_snaps)
    if not isinstance(snaps, list) or not snaps:
        _fail("snapshot_taus", "expected a non-empty list of tau values")
    snaps = [_number(v, f"snapshot_taus[{i}]", minimum=0.0) for i, v in enumerate(snaps)]
    for i, t in enumerate(snaps):
        if t > tau_end + 1e-12:
            _fail(f"snapshot_taus[{i}]", f"beyond tau_end = {tau_end}")

    resolved = {
        "case": case,
        "params": params,
        "desk_scale": desk,
        "grid": {"space": space, "tau": n_tau},
        "tau_end": tau_end,
        "networks": {
            "profile": {"widths": list(wnet.widths), "input_scales": list(wnet.input_scales)},
            "rates": {"widths": list(pnet.widths), "input_scales": list(pnet.input_scales)},
        },
        "weights": {"pde": weights.pde, "alg": weights.alg,
                    "bc": weights.bc, "ic": weights.ic},
        "optimizer": {"memory": lbfgs.memory, "c1": lbfgs.c1, "c2": lbfgs.c2,
                      "gradient_tolerance": lbfgs.grad_tol,
                      "max_iterations": lbfgs.max_iterations,
                      "warmup_iterations": lbfgs.warmup_iterations,
                      "max_line_search_steps": lbfgs.max_line_search},
        "seed": seed,
        "output_dir": output_dir,
        "snapshot_taus": snaps,
    }
    return resolved, problem, (space, n_tau), weights, lbfgs


def _g17(v: float) -> str:
    return f"{v:.17g}"


def _write_snapshot(path: str, problem, nets, quad, tau: float) -> None:
    if problem.spatial_dim == 1:
        coords = quad.nodes[:, None]
        header = "y,w"
    else:
        gx, gy = np.meshgrid(quad.x.nodes, quad.y.nodes, indexing="ij")
        coords = np.column_stack([gx.reshape(-1), gy.reshape(-1)])
        header = "xi,eta,w"
    pts = np.column_stack([coords, np.full(coords.shape[0], tau)])
    w = batch_values(nets.wspec, nets.wparams, pts).reshape(-1)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, val in zip(coords, w):
            fh.write(",".join(_g17(c) for c in row) + "," + _g17(val) + "\n")


def cmd_run(config_path: str) -> int:
    try:
        with open(config_path) as fh:
            text = fh.read()
    except OSError as e:
        print(f"config error: cannot read {config_path}: {e}", file=sys.stderr)
        return 2
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        print(f"config error: {config_path} is not valid JSON: {e}", file=sys.stderr)
        return 2
    resolved, problem, (space, n_tau), weights, lbfgs = materialize(raw)

    outdir = resolved["output_dir"]
    os.makedirs(os.path.join(outdir, "snapshots"), exist_ok=True)
    with open(os.path.join(outdir, "config.resolved"), "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")

    n_space = space if isinstance(space, int) else tuple(space)
    colloc = build_collocation(problem, n_space, n_tau, tau_end=resolved["tau_end"])
    print(f"case {problem.name}: {colloc.interior.shape[0]} interior points, "
          f"seed {resolved['seed']}, budget {lbfgs.warmup_iterations}+{lbfgs.max_iterations}")

    loss_path = os.path.join(outdir, "loss_history.csv")
    with open(loss_path, "w") as stream:
        stream.write("iter,e_pde,e_alg,e_bc,e_ic,total,grad_norm,step\n")

        def on_joint(k, bd, gnorm, step):
            stream.write(",".join([str(k), _g17(bd.e_pde), _g17(bd.e_alg),
                                   _g17(bd.e_bc), _g17(bd.e_ic), _g17(bd.total),
                                   _g17(gnorm), _g17(step)]) + "\n")
            if k % 500 == 0:
                stream.flush()
                print(f"  iter {k:6d}  loss {bd.total:.6e}")

        result, case_res = run_case(problem, colloc, weights, lbfgs,
                                    resolved["seed"], on_joint=on_joint)

    wh = result.warmup_history
    with open(os.path.join(outdir, "warmup_history.csv"), "w") as fh:
        fh.write("iter,loss,grad_norm,step\n")
        for i in range(len(wh.iters)):
            fh.write(",".join([str(wh.iters[i]), _g17(wh.f[i]),
                               _g17(wh.grad_norm[i]), _g17(wh.step[i])]) + "\n")

    taus = colloc.constraint_taus
    rate_series = result.nets.rate_values(problem, taus)
    names = list(problem.rates) + sorted(problem.linked)
    with open(os.path.join(outdir, "rates.csv"), "w") as fh:
        fh.write("tau," + ",".join(names) + "\n")
        for i, t in enumerate(taus):
            fh.write(_g17(t) + "," + ",".join(_g17(rate_series[n][i]) for n in names) + "\n")

    for t in resolved["snapshot_taus"]:
        _write_snapshot(os.path.join(outdir, "snapshots", f"tau_{t:.6f}.csv"),
                        problem, result.nets, colloc.quad, t)

    save_checkpoint(os.path.join(outdir, "params_w.csv"), result.nets.wspec,
                    result.nets.wparams)
    save_checkpoint(os.path.join(outdir, "params_p.csv"), result.nets.pspec,
                    result.nets.pparams)

    summary = {
        "case": problem.name,
        "seed": resolved["seed"],
        "grid": resolved["grid"],
        "tau_end": resolved["tau_end"],
        "steady_rates": {k: {"mean": v.mean, "std": v.std}
                         for k, v in case_res.steady.items()},
        "exponents": (None if case_res.exponents is None
                      else {"alpha": case_res.exponents[0], "beta": case_res.exponents[1]}),
        "readings": case_res.readings,
        "metrics": case_res.metrics,
        "statuses": {"warmup": result.warmup_history.status,
                     "joint": result.joint_history.status},
        "iterations": {"warmup": int(result.warmup_history.iters[-1]),
                       "joint": int(result.joint_history.iters[-1])},
        "final_loss": result.joint_history.f[-1],
        "wall_clock_seconds": result.seconds,
    }
    with open(os.path.join(outdir, "summary"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"done in {result.seconds:.1f}s; joint status {result.joint_history.status}; "
          f"final loss {result.joint_history.f[-1]:.6e}")
    for k, v in sorted(case_res.metrics.items()):
        print(f"  {k} = {v:.6g}")
    print(f"artifacts in {outdir}")
    return 0


def cmd_report(run_dir: str) -> int:
    from .reporting import write_report

    table, written = write_report(run_dir)
    print(table)
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_check(list_only: bool) -> int:
    from .checks import ALL_SUITES, run_suites

    if list_only:
        for name, _ in ALL_SUITES:
            print(name)
        return 0
    results = run_suites()
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark}  {r.name:<20} {r.seconds:7.2f}s  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    if "SCALEWAVE_WORKERS" in os.environ:
        w = os.environ["SCALEWAVE_WORKERS"]
        if not w.isdigit() or int(w) < 1:
            print(f"config error: SCALEWAVE_WORKERS must be a positive integer, got {w!r}",
                  file=sys.stderr)
            return 2

    parser = argparse.ArgumentParser(
        prog="scalewave",
        description="Invariant-profile PDE solving in rescaled coordinates.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train one configured case")
    p_run.add_argument("config", help="path to a JSON run configuration")
    p_rep = sub.add_parser("report", help="render tables, plot data and figures for a run")
    p_rep.add_argument("run_dir", help="directory produced by `scalewave run`")
    p_chk = sub.add_parser("check", help="run the fast property suites")
    p_chk.add_argument("--list", action="store_true", help="list suites without running")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "report":
            return cmd_report(args.run_dir)
        return cmd_check(args.list)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures map to exit 1 with a diagnostic
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
