"""Command-line front end: ``nnreduce {augment,precision,verify,simulate}``.

Every run writes ``manifest.json`` into the output directory (``--out``,
else ``$NNREDUCE_OUT``, else ``./nnreduce_out``).  Exit codes: 0 safe/ok,
1 unknown, 2 precondition or other error, 3 refinement budget, 4 config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, acc
from .closed_loop import Halfspace, ReachConfig, SafetySpec, SampledNNCS, reach_nncs, verify
from .errors import BudgetError, ConfigError, NNReduceError, PreconditionError
from .network import Network, load_network, save_network
from .ode import ReachTube, StepConfig, linear_dynamics
from .reach import PartitionConfig
from .reduction import InflationMode, Precision, augment, precision
from .sets import IntervalBox
from .simulate import containment_audit, sample_inputs, simulate_batch

EXIT_OK, EXIT_UNKNOWN, EXIT_PRECONDITION, EXIT_BUDGET, EXIT_CONFIG = 0, 1, 2, 3, 4
OUT_ENV = "NNREDUCE_OUT"
SYNTHESIZED = "synthesized"


# -- config parsing ------------------------------------------------------------


def _numbers(value, where: str, length: Optional[int] = None) -> list[float]:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                              for v in value):
        raise ConfigError(f"{where}: expected a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(f"{where}: expected {length} numbers, got {len(value)}")
    return [float(v) for v in value]


def _box(doc, where: str, dim: Optional[int] = None) -> IntervalBox:
    if not isinstance(doc, dict) or "lower" not in doc:
        raise ConfigError(f"{where}: expected an object with 'lower' and optional 'upper'")
    lo = _numbers(doc["lower"], f"{where}.lower", dim)
    hi = _numbers(doc.get("upper", doc["lower"]), f"{where}.upper", len(lo))
    try:
        return IntervalBox(lo, hi)
    except NNReduceError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _layout(value, where: str):
    if not isinstance(value, list) or not all(
            isinstance(v, list) and len(v) == 2 and isinstance(v[0], str) and isinstance(v[1], int)
            for v in value):
        raise ConfigError(f'{where}: expected a list of [source, index] pairs such as ["y", 0]')
    return [tuple(v) for v in value]


def parse_splits(text: str):
    try:
        parts = [int(p) for p in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"--splits: expected an integer or comma-separated integers, got {text!r}") from None
    if any(p < 1 for p in parts):
        raise ConfigError("--splits: counts must be positive")
    return parts[0] if len(parts) == 1 else tuple(parts)


def _partition(doc, where: str) -> PartitionConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {"splits", "max_cell_width", "bisection_depth", "max_cells"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
    try:
        return PartitionConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ScenarioRun:
    """A scenario config resolved into library objects."""

    system: SampledNNCS
    x0: IntervalBox
    spec: SafetySpec
    horizon: float
    reach: ReachConfig
    seed: int
    resolved: dict


def _load_net(value, where: str, base: Path) -> Network:
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a file path")
    return load_network(base / value)


SCENARIO_FIELDS = {
    "plant", "controller", "reduced", "precision", "precision_box", "precision_splits", "x0",
    "reference", "sampling_period", "intervals", "controller_inputs", "plant_inputs", "exogenous",
    "unsafe", "partition", "inflation", "dt", "seed",
}


def load_scenario(doc: dict, base: Path = Path("."), overrides: Optional[dict] = None) -> ScenarioRun:
    """Build a run from a scenario document.

    With ``"plant": "acc"`` every other field defaults to the adaptive
    cruise control benchmark; otherwise the plant is
    ``{"type": "linear", "A": ..., "B": ..., "C": ...}`` and the controller,
    layouts, boxes and unsafe set must be given.  ``overrides`` carries
    command-line flags (``inflation``, ``splits``, ``dt``, ``seed``).
    """
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    extra = set(doc) - SCENARIO_FIELDS
    if extra:
        raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
    overrides = overrides or {}
    plant_doc = doc.get("plant")
    is_acc = plant_doc == "acc"
    seed = overrides.get("seed")
    seed = int(doc.get("seed", 0)) if seed is None else seed

    if is_acc:
        plant = acc.acc_dynamics()
    elif isinstance(plant_doc, dict) and plant_doc.get("type") == "linear":
        try:
            plant = linear_dynamics(plant_doc["A"], plant_doc["B"], plant_doc.get("C"))
        except KeyError as exc:
            raise ConfigError(f"plant.{exc.args[0]}: missing") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"plant: {exc}") from None
    else:
        raise ConfigError('plant: expected "acc" or {"type": "linear", "A": ..., "B": ...}')

    # controllers
    ctrl_doc = doc.get("controller", SYNTHESIZED if is_acc else None)
    red_doc = doc.get("reduced", SYNTHESIZED if is_acc and "controller" not in doc else None)
    if ctrl_doc is None:
        raise ConfigError("controller: missing")
    if SYNTHESIZED in (ctrl_doc, red_doc):
        if not is_acc:
            raise ConfigError(f'controller: "{SYNTHESIZED}" is only available for the acc plant')
        big, small = acc.synthesize_controllers(seed)
    controller = big if ctrl_doc == SYNTHESIZED else _load_net(ctrl_doc, "controller", base)
    reduced = None
    if red_doc is not None:
        reduced = small if red_doc == SYNTHESIZED else _load_net(red_doc, "reduced", base)

    dim_tau = controller.input_dim
    if "precision_box" in doc:
        p_box = _box(doc["precision_box"], "precision_box", dim_tau)
    else:
        p_box = acc.PRECISION_BOX if is_acc else None

    prec = None
    prec_doc = doc.get("precision")
    if reduced is not None:
        if prec_doc is None:
            if p_box is None:
                raise ConfigError("precision: missing (give a report, a number, or precision_box)")
            splits = doc.get("precision_splits", acc.PRECISION_SPLITS if is_acc else 1)
            prec = precision(controller, reduced, p_box, PartitionConfig(splits=splits), seed=seed)
        elif isinstance(prec_doc, (int, float)) and not isinstance(prec_doc, bool):
            if p_box is None:
                raise ConfigError("precision_box: needed when precision is a bare number")
            try:
                prec = Precision(float(prec_doc), p_box)
            except NNReduceError as exc:
                raise ConfigError(f"precision: {exc}") from None
        elif isinstance(prec_doc, str):
            try:
                prec = Precision.from_dict(json.loads((base / prec_doc).read_text()))
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"precision: cannot read report {prec_doc!r}: {exc}") from None
        else:
            raise ConfigError("precision: expected a report path, a number or null")

    x0 = _box(doc["x0"], "x0", plant.state_dim) if "x0" in doc else (acc.X0 if is_acc else None)
    if x0 is None:
        raise ConfigError("x0: missing")
    if "reference" in doc:
        ref = _box(doc["reference"], "reference")
    elif is_acc:
        ref = IntervalBox.point([acc.V_SET, acc.T_GAP])
    else:
        ref = IntervalBox(np.zeros(0), np.zeros(0))
    period = float(doc.get("sampling_period", acc.SAMPLING_PERIOD if is_acc else 0))
    intervals = doc.get("intervals", acc.INTERVALS if is_acc else None)
    if not isinstance(intervals, int) or intervals < 1:
        raise ConfigError("intervals: expected a positive integer")
    if not period > 0:
        raise ConfigError("sampling_period: expected a positive number")

    default_ci = [["r", 0], ["r", 1], ["y", 0], ["y", 1], ["y", 2]] if is_acc else None
    ci = doc.get("controller_inputs", default_ci)
    if ci is None:
        raise ConfigError("controller_inputs: missing")
    ci = _layout(ci, "controller_inputs")
    pi = doc.get("plant_inputs", [["w", 0], ["u", 0]] if is_acc else None)
    pi = _layout(pi, "plant_inputs") if pi is not None else None
    if "exogenous" in doc:
        exo = _box(doc["exogenous"], "exogenous")
    else:
        exo = IntervalBox.point([acc.LEAD_ACCEL]) if is_acc else None

    if "unsafe" in doc:
        spec = _unsafe(doc["unsafe"], plant.state_dim)
    elif is_acc:
        spec = acc.safety_spec()
    else:
        raise ConfigError("unsafe: missing")

    try:
        system = SampledNNCS(plant, controller, period, ref, ci, pi, exo, reduced, prec,
                             acc.STATE_NAMES if is_acc else None)
    except NNReduceError as exc:
        raise ConfigError(f"config: {exc}") from None

    part_doc = doc.get("partition", {"splits": list(acc.REACH_SPLITS)} if is_acc else {})
    part = _partition(part_doc, "partition")
    if overrides.get("splits") is not None:
        part = PartitionConfig(splits=overrides["splits"], max_cells=part.max_cells)
    inflation = overrides.get("inflation") or doc.get("inflation", "sound")
    try:
        mode = InflationMode.parse(inflation)
    except ValueError as exc:
        raise ConfigError(f"inflation: {exc}") from None
    dt = overrides.get("dt") if overrides.get("dt") is not None else doc.get("dt")
    try:
        step = StepConfig(dt=dt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dt: {exc}") from None

    resolved = {
        "plant": "acc" if is_acc else "linear",
        "controller": ctrl_doc,
        "controller_widths": controller.widths,
        "reduced": red_doc,
        "reduced_widths": reduced.widths if reduced is not None else None,
        "precision": prec.to_dict() if prec is not None else None,
        "x0": {"lower": x0.lower.tolist(), "upper": x0.upper.tolist()},
        "reference": {"lower": ref.lower.tolist(), "upper": ref.upper.tolist()},
        "sampling_period": period,
        "intervals": intervals,
        "partition": part.to_dict(),
        "inflation": mode.value,
        "dt": dt,
        "seed": seed,
    }
    return ScenarioRun(system, x0, spec, intervals * period,
                       ReachConfig(partition=part, step=step, inflation=mode), seed, resolved)


def _unsafe(doc, dim: int) -> SafetySpec:
    if not isinstance(doc, list) or not doc:
        raise ConfigError("unsafe: expected a non-empty list of conjunctions")
    sets, names = [], []
    for i, conj in enumerate(doc):
        if not isinstance(conj, list) or not conj:
            raise ConfigError(f"unsafe[{i}]: expected a non-empty list of inequalities")
        hs = []
        for j, ineq in enumerate(conj):
            where = f"unsafe[{i}][{j}]"
            if not isinstance(ineq, dict) or "coeffs" not in ineq or "bound" not in ineq:
                raise ConfigError(f"{where}: expected {{'coeffs': [...], 'bound': b}}")
            coeffs = _numbers(ineq["coeffs"], f"{where}.coeffs", dim)
            if not isinstance(ineq["bound"], (int, float)):
                raise ConfigError(f"{where}.bound: expected a number")
            hs.append(Halfspace(tuple(coeffs), float(ineq["bound"]), str(ineq.get("name", ""))))
        sets.append(hs)
        names.append(" and ".join(h.name or f"ineq{k}" for k, h in enumerate(hs)))
    return SafetySpec(sets, names)


def read_config(arg: str) -> tuple[dict, Path, str]:
    """``arg`` is a JSON file path or the literal ``acc`` for the built-in benchmark."""
    if arg == "acc":
        return {"plant": "acc"}, Path("."), "acc"
    path = Path(arg)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{arg}: cannot read config: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{arg}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return doc, path.parent, str(path)


# -- output helpers ------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "nnreduce_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _manifest(out: Path, args, config: Optional[str], resolved: Optional[dict] = None) -> None:
    _write_json(out / "manifest.json", {
        "tool": "nnreduce",
        "version": __version__,
        "subcommand": args.command,
        "config": config,
        "out": str(out),
        "seed": getattr(args, "seed", None),
        "flags": {
            "inflation": getattr(args, "inflation", None),
            "splits": getattr(args, "splits", None),
            "dt": getattr(args, "dt", None),
        },
        "resolved": resolved,
    })


def format_table(rows: list[dict], columns: list[tuple[str, str]]) -> str:
    cells = [[title for _, title in columns]]
    for r in rows:
        cells.append([f"{r[k]:.4f}" if isinstance(r[k], float) else str(r[k]) for k, _ in columns])
    widths = [max(len(c[i]) for c in cells) for i in range(len(columns))]
    lines = ["  ".join(c[i].ljust(widths[i]) for i in range(len(columns))) for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _widths_label(net: Network) -> str:
    hidden = net.widths[1:-1]
    if hidden and len(set(hidden)) == 1:
        return f"{len(hidden)}x{hidden[0]}"
    return "-".join(str(w) for w in net.widths)


# -- subcommands ---------------------------------------------------------------


def cmd_augment(args) -> int:
    out = _out_dir(args)
    big, small = load_network(args.big), load_network(args.small)
    aug = augment(big, small)
    target = Path(args.output) if args.output else out / "augmented.json"
    save_network(aug, target)
    rows = []
    for i, layer in enumerate(aug.layers, start=1):
        mask = layer.relu_mask
        rows.append({"layer": i, "in": layer.in_dim, "out": layer.out_dim,
                     "relu": int(mask.sum()), "linear": int((~mask).sum())})
    print(format_table(rows, [("layer", "layer"), ("in", "in"), ("out", "out"),
                              ("relu", "relu"), ("linear", "linear")]))
    print(f"wrote {target}")
    _manifest(out, args, None, {"big": args.big, "small": args.small, "output": str(target),
                                "widths": aug.widths})
    return EXIT_OK


def cmd_precision(args) -> int:
    out = _out_dir(args)
    big, small = load_network(args.big), load_network(args.small)
    lower = args.lower
    upper = args.upper if args.upper is not None else lower
    if len(lower) != len(upper):
        raise ConfigError("--lower/--upper: lengths differ")
    try:
        box = IntervalBox(lower, upper)
    except NNReduceError as exc:
        raise ConfigError(f"--lower/--upper: {exc}") from None
    kw = {"bisection_depth": args.bisect}
    if args.max_cells is not None:
        kw["max_cells"] = args.max_cells
    if args.max_cell_width is not None:
        kw["max_cell_width"] = args.max_cell_width
    else:
        kw["splits"] = args.splits
    try:
        cfg = PartitionConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"partition flags: {exc}") from None
    p = precision(big, small, box, cfg, samples=args.samples, seed=args.seed)
    report = p.to_dict()
    target = out / "precision.json"
    _write_json(target, report)
    print(json.dumps({k: report[k] for k in ("rho", "sampled_lower_bound", "cell_count", "wall_time")}))
    _manifest(out, args, None, {"big": args.big, "small": args.small, "partition": cfg.to_dict()})
    return EXIT_OK


def _overrides(args) -> dict:
    return {"inflation": args.inflation, "splits": args.splits, "dt": args.dt, "seed": args.seed}


def cmd_verify(args) -> int:
    out = _out_dir(args)
    doc, base, name = read_config(args.config)
    run = load_scenario(doc, base, _overrides(args))
    sys_ = run.system
    names = list(sys_.state_names) if sys_.state_names else None
    paths = [("original", False)]
    if sys_.reduced_controller is not None:
        paths.append(("reduced", True))
    rows, verdicts = [], {}
    for label, use_reduced in paths:
        cfg = ReachConfig(run.reach.partition, run.reach.step, run.reach.inflation, use_reduced)
        tube = reach_nncs(sys_, run.x0, run.horizon, cfg)
        res = verify(tube, run.spec)
        tube.to_csv(out / f"tube_{label}.csv", names)
        net = sys_.reduced_controller if use_reduced else sys_.controller
        verdicts[label] = res.summary()
        rows.append({
            "controller": label, "network": _widths_label(net), "cells": tube.stats["cells"],
            "nn_time": tube.stats["controller_reach_time"], "ode_time": tube.stats["ode_reach_time"],
            "total_time": tube.stats["total_time"], "verdict": res.verdict,
        })
    primary = paths[-1][0]
    verdict_doc = {"verdict": verdicts[primary]["verdict"], "decided_by": primary, "runs": verdicts}
    _write_json(out / "verdict.json", verdict_doc)
    columns = [("controller", "controller"), ("network", "network"), ("cells", "cells"),
               ("nn_time", "NN reach time (s)"), ("ode_time", "ODE reach time (s)"),
               ("total_time", "total (s)"), ("verdict", "verdict")]
    table = format_table(rows, columns)
    (out / "timing.txt").write_text("Comparison of ACC reachable set calculation times\n" + table + "\n")
    with open(out / "timing.csv", "w") as fh:
        fh.write(",".join(k for k, _ in columns) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k, _ in columns) + "\n")
    print(table)
    print(f"verdict ({primary} controller): {verdict_doc['verdict']}")
    _manifest(out, args, name, run.resolved)
    return EXIT_OK if verdict_doc["verdict"] == "safe" else EXIT_UNKNOWN


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise PreconditionError("--n: need at least one trajectory")
    out = _out_dir(args)
    doc, base, name = read_config(args.config)
    run = load_scenario(doc, base, _overrides(args))
    sys_ = run.system
    if args.tube:
        tube = ReachTube.read_csv(args.tube)
        source, mode = args.tube, None
    else:
        use_reduced = sys_.reduced_controller is not None
        cfg = ReachConfig(run.reach.partition, run.reach.step, run.reach.inflation, use_reduced)
        tube = reach_nncs(sys_, run.x0, run.horizon, cfg)
        source = "reduced" if use_reduced else "original"
        mode = run.reach.inflation.value if use_reduced else None
    x0s, rs = sample_inputs(sys_, run.x0, args.n, run.seed)
    trajs = simulate_batch(sys_, x0s, rs, run.horizon, use_reduced=args.use_reduced)
    report = containment_audit(trajs, tube)
    doc_out = report.to_dict()
    doc_out.update({"tube": source, "inflation": mode,
                    "simulated_controller": "reduced" if args.use_reduced else "original"})
    if mode == InflationMode.PAPER_HALF_RHO.value:
        doc_out["warning"] = ("tube built with rho/2 inflation, which does not cover the original "
                              "controller in general; violations are possible")
    _write_json(out / "audit.json", doc_out)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    names = list(sys_.state_names) if sys_.state_names else None
    for i, tr in enumerate(trajs[: args.save]):
        tr.to_csv(traj_dir / f"traj_{i:04d}.csv", names)
    print(f"{len(trajs)} trajectories, {report.checked_points} points, "
          f"{len(report.violations)} containment violations against the {source} tube")
    if "warning" in doc_out:
        print("note: " + doc_out["warning"])
    _manifest(out, args, name, run.resolved)
    sound = mode in (None, InflationMode.SOUND_FULL_RHO.value)
    return EXIT_UNKNOWN if (sound and not report.ok) else EXIT_OK


# -- entry point ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./nnreduce_out)")
    common.add_argument("--seed", type=int, default=None, help="seed for every random choice")

    p = argparse.ArgumentParser(prog="nnreduce", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nnreduce {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("augment", parents=[common], help="build the difference network of two networks")
    a.add_argument("big")
    a.add_argument("small")
    a.add_argument("-o", "--output", help="network file to write (default OUT/augmented.json)")

    q = sub.add_parser("precision", parents=[common], help="certified output gap over an input box")
    q.add_argument("big")
    q.add_argument("small")
    q.add_argument("--lower", type=float, nargs="+", required=True)
    q.add_argument("--upper", type=float, nargs="+")
    q.add_argument("--splits", type=parse_splits, default=1)
    q.add_argument("--max-cell-width", type=float)
    q.add_argument("--bisect", type=int, default=0, help="bisection rounds after the grid")
    q.add_argument("--max-cells", type=int)
    q.add_argument("--samples", type=int, default=10_000, help="probe points for the sampled lower bound")

    for cmd, helptext in (("verify", "closed-loop reach tube and safety verdict"),
                          ("simulate", "simulate trajectories and audit them against a tube")):
        s = sub.add_parser(cmd, parents=[common], help=helptext)
        s.add_argument("config", help="scenario JSON file, or 'acc' for the built-in benchmark")
        s.add_argument("--inflation", choices=["sound", "paper"])
        s.add_argument("--splits", type=parse_splits)
        s.add_argument("--dt", type=float)
        if cmd == "simulate":
            s.add_argument("--n", type=int, default=500, help="number of trajectories")
            s.add_argument("--tube", help="audit against this tube CSV instead of computing one")
            s.add_argument("--use-reduced", action="store_true", help="simulate with the reduced controller")
            s.add_argument("--save", type=int, default=10, help="trajectory CSVs to write")
    return p


COMMANDS = {"augment": cmd_augment, "precision": cmd_precision, "verify": cmd_verify,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "seed", None) is None and args.command == "precision":
        args.seed = 0
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"refinement budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NNReduceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    print(f"done in {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
