"""Command line: ``holodesign {design,thin-element,evaluate,gradient-check,export}``.

Each subcommand reads a TOML scenario config, writes its artifacts into
``--out`` and prints a delimited summary. Exit codes: 0 success, 2 config
error, 3 solver failure, 4 validation failure. Failures also print a
one-line JSON error record to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import plotting
from .config import ConfigError, ScenarioConfig, build_scenario, config_hash, dump_config, load_config, loss_config
from .grid import PlaneField
from .helmholtz import NonConvergence
from .io import (FormatError, atomic_write_text, read_checkpoints, read_field_file, read_voxels,
                 write_checkpoints, write_field, write_pgm, write_voxels, export_voxels)
from .material import LensPatch, binarize, material_indices, mixture
from .objective import ObjectiveError, cnr, correlation, find_target_depth, loss
from .optim import Checkpoint, SolverFailure, binarization_trajectory, loss_and_gradient
from .oracles import FD_STEPS, swept_fd_gradient
from .propagation import angular_spectrum
from .scenario import Scenario, simulate
from .workflows import (depth_sweep, evaluate_patch, run_design, thin_element_iasa,
                        thin_element_phase_conjugate)

log = logging.getLogger("holodesign")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4


class ValidationFailure(RuntimeError):
    pass


# -- helpers ----------------------------------------------------------------------

def _write_table(path: Path, header, rows) -> None:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _write_report(out: Path, name: str, summary: dict) -> None:
    """``name.json`` plus a ``key<TAB>value`` text version; the text is also
    printed."""
    atomic_write_text(out / f"{name}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    lines = [f"{k}\t{v}" for k, v in summary.items() if not isinstance(v, (list, dict))]
    text = "\n".join(lines) + "\n"
    atomic_write_text(out / f"{name}.txt", text)
    sys.stdout.write(text)


def _prepare(args) -> tuple[ScenarioConfig, Scenario, str, Path]:
    cfg = load_config(args.config)
    scenario = build_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.toml", dump_config(cfg))
    return cfg, scenario, config_hash(cfg), out


def _check_hash(found: Optional[str], expected: str, what: str, force: bool) -> None:
    if found is None:
        log.warning("%s carries no config hash; cannot verify provenance", what)
    elif found != expected and not force:
        raise ValidationFailure(f"{what} was produced by a different config (hash {found[:12]}, "
                                f"expected {expected[:12]}); use --force to override")


def _patch_from_voxels(path, scenario: Scenario, h: str, force: bool) -> LensPatch:
    vox = read_voxels(path)
    _check_hash(vox.config_hash, h, str(path), force)
    if vox.indices.shape != scenario.lens_shape:
        raise ValidationFailure(f"voxel file shape {vox.indices.shape} does not match lens {scenario.lens_shape}")
    props = [np.where(vox.indices == 1, vox.pair.material1[i], vox.pair.material0[i]) for i in range(3)]
    return LensPatch(scenario.lens_offset, *props)


def _patch_from_gamma(path, scenario: Scenario, h: str, force: bool, binary: bool) -> LensPatch:
    ff = read_field_file(path)
    _check_hash(ff.config_hash, h, str(path), force)
    if ff.values.shape != scenario.lens_shape:
        raise ValidationFailure(f"gamma file shape {ff.values.shape} does not match lens {scenario.lens_shape}")
    design = scenario.design(ff.values.real)
    return binarize(design) if binary else mixture(design)


def _lens_patch(args, scenario, h) -> Optional[LensPatch]:
    if getattr(args, "voxels", None):
        return _patch_from_voxels(args.voxels, scenario, h, args.force)
    if getattr(args, "gamma", None):
        return _patch_from_gamma(args.gamma, scenario, h, args.force, args.binary)
    return None


# -- subcommands ------------------------------------------------------------------

def cmd_design(args) -> int:
    cfg, scenario, h, out = _prepare(args)
    n_iter = cfg.adam.n_iterations if args.iterations is None else args.iterations

    def progress(it, value, gamma):
        if it % 10 == 0:
            log.info("iteration %d loss %.6f", it, value)

    result = run_design(cfg, scenario, callback=progress, n_iterations=n_iter)
    initial = scenario.initial_design(cfg.seed, cfg["optimizer"]["init_spread"])
    lcfg = loss_config(cfg, scenario)
    if result.loss_history:
        loss0 = result.loss_history[0]
    else:
        loss0 = loss(simulate(scenario, scenario.medium_with(mixture(initial))).amplitude, scenario.target, lcfg)
    checkpoints = [Checkpoint(0, initial.gamma, loss0)] + list(result.checkpoints)
    if args.trajectory:
        rows = binarization_trajectory(checkpoints, scenario)
        checkpoints = [cp._replace(binarization_error=row[1]) for cp, row in zip(checkpoints, rows)]
        _write_table(out / "binarization.csv", ["iteration", "binarization_error", "saturated_fraction"], rows)
        plotting.plot_binarization(rows, out / "binarization.png")
    write_checkpoints(out / "checkpoints", checkpoints, scenario.grid.dx, h)
    _write_table(out / "loss_history.csv", ["iteration", "loss"], list(enumerate(result.loss_history)))
    final = result.design
    write_field(out / "final_gamma.ahfb", PlaneField.from_array(final.gamma.astype(complex), scenario.grid.dx), h)
    bin_patch = binarize(final)
    export_voxels(out / "lens_voxels.ahvx", bin_patch, scenario.pair, scenario.grid.dx, h)
    cont = evaluate_patch(scenario, mixture(final))
    binary = evaluate_patch(scenario, bin_patch)
    if result.loss_history:
        plotting.plot_loss_history(result.loss_history, out / "loss.png")
    plotting.plot_target_comparison(binary.amplitude, scenario.target.q0.values, scenario.grid.dx,
                                    out / "target.png", "binarised design")
    plotting.plot_sound_speed(mixture(final).c, scenario.grid.dx, out / "design.png")
    idx = material_indices(bin_patch, scenario.pair)
    summary = {
        "command": "design", "config_hash": h, "iterations": n_iter,
        "final_loss": result.loss_history[-1] if result.loss_history else loss0,
        "correlation_continuous": cont.correlation, "correlation_binary": binary.correlation,
        "cnr_continuous": cont.cnr, "cnr_binary": binary.cnr,
        "binarization_error": abs(cont.correlation - binary.correlation),
        "material1_voxels": int(idx.sum()), "total_voxels": int(idx.size),
        "checkpoints": [cp.iteration for cp in checkpoints],
    }
    _write_report(out, "design_report", summary)
    return EXIT_OK


def cmd_thin_element(args) -> int:
    cfg, scenario, h, out = _prepare(args)
    method = args.method or ("conjugate" if cfg["aberrator"]["file"] else "iasa")
    history: list = []
    if method == "iasa":
        res = thin_element_iasa(cfg, scenario, history)
        _write_table(out / "iasa_history.csv", ["iteration", "correlation"], list(enumerate(history)))
    else:
        res = thin_element_phase_conjugate(cfg, scenario)
    dx = scenario.grid.dx
    write_field(out / "phase.ahfb", PlaneField.from_array(res.phase.phase.astype(complex), dx), h)
    write_field(out / "thickness.ahfb", PlaneField.from_array(res.thickness.thickness.astype(complex), dx), h)
    write_pgm(out / "thickness.pgm", res.thickness.thickness)
    export_voxels(out / "lens_voxels.ahvx", res.patch, _te_pair(cfg, scenario), dx, h)
    ev = evaluate_patch(scenario, res.patch)
    plotting.plot_plane_map(res.phase.phase, dx, out / "phase.png", "phase (rad)")
    plotting.plot_plane_map(res.thickness.thickness * 1e3, dx, out / "thickness.png", "thickness (mm)", "gray")
    plotting.plot_target_comparison(ev.amplitude, scenario.target.q0.values, dx, out / "target.png",
                                    f"thin element ({method})")
    summary = {"command": "thin-element", "method": method, "config_hash": h,
               "correlation": ev.correlation, "cnr": ev.cnr,
               "iasa_final_correlation": history[-1] if history else None}
    _write_report(out, "thin_element_report", summary)
    return EXIT_OK


def _te_pair(cfg, scenario):
    """Material pair for the thin-element voxel file: background (index 0)
    and the lens material (index 1)."""
    from .material import MaterialPair

    lens = scenario.pair.material1 if cfg["thin_element"]["lens_material"] == 1 else scenario.pair.material0
    return MaterialPair(cfg.background, lens)


def cmd_evaluate(args) -> int:
    cfg, scenario, h, out = _prepare(args)
    q0, mask = scenario.target.q0.values, scenario.target.mask
    dx = scenario.grid.dx
    if args.field:
        ff = read_field_file(args.field)
        _check_hash(ff.config_hash, h, args.field, args.force)
        if ff.values.shape != q0.shape:
            raise ValidationFailure(f"field shape {ff.values.shape} does not match target {q0.shape}")
        plane = PlaneField.from_array(ff.values, dx)
        offsets = np.linspace(-args.span, args.span, args.planes)
        planes = [np.abs(angular_spectrum(scenario.plan, plane, d).values) for d in offsets]
        depths = scenario.target.depth + offsets
        q = np.abs(ff.values)
        source = "field"
    else:
        patch = _lens_patch(args, scenario, h)
        medium = scenario.medium_with(patch)
        depths, planes, _, _ = depth_sweep(scenario, medium, args.span, args.planes)
        q = planes[int(np.argmin(np.abs(depths - scenario.target.depth)))]
        source = "voxels" if args.voxels else "gamma" if args.gamma else "no lens"
    corrs = [correlation(p, q0) for p in planes]
    best, best_corr = find_target_depth(planes, list(depths), q0)
    _write_table(out / "depth_sweep.csv", ["depth_m", "correlation", "cnr"],
                 [(float(d), c, cnr(p, mask)) for d, c, p in zip(depths, corrs, planes)])
    plotting.plot_depth_sweep(depths, corrs, out / "depth_sweep.png", best)
    plotting.plot_target_comparison(q, q0, dx, out / "target.png", f"evaluation ({source})")
    summary = {"command": "evaluate", "source": source, "config_hash": h,
               "correlation": correlation(q, q0), "cnr": cnr(q, mask),
               "best_depth_m": float(best), "best_depth_correlation": best_corr}
    _write_report(out, "evaluation_report", summary)
    return EXIT_OK


GRADIENT_STEPS = FD_STEPS
GRADIENT_TOLERANCE = 1e-3


def cmd_gradient_check(args) -> int:
    cfg, scenario, h, out = _prepare(args)
    design = scenario.initial_design(args.seed, cfg["optimizer"]["init_spread"])
    lcfg = loss_config(cfg, scenario)
    _, grad = loss_and_gradient(design, scenario, lcfg)
    rng = np.random.default_rng(args.seed)
    flat = rng.choice(grad.size, size=args.probes, replace=False)
    probes = [tuple(int(i) for i in np.unravel_index(f, grad.shape)) for f in flat]
    fds, steps = swept_fd_gradient(design, scenario, lcfg, probes, GRADIENT_STEPS)
    rows, worst = [], 0.0
    for p, fd, step in zip(probes, fds, steps):
        adj = grad[p]
        rel = abs(fd - adj) / max(abs(adj), abs(fd), 1e-300)
        worst = max(worst, rel)
        rows.append((" ".join(map(str, p)), adj, fd, step, rel))
    _write_table(out / "gradient_check.csv", ["probe", "adjoint", "finite_difference", "step", "relative_error"], rows)
    passed = worst < GRADIENT_TOLERANCE
    summary = {"command": "gradient-check", "config_hash": h, "status": "PASS" if passed else "FAIL",
               "max_relative_error": worst, "probes": len(probes), "tolerance": GRADIENT_TOLERANCE}
    _write_report(out, "gradient_report", summary)
    if not passed:
        raise ValidationFailure(f"gradient check failed: max relative error {worst:.3e}")
    return EXIT_OK


def cmd_export(args) -> int:
    cfg, scenario, h, out = _prepare(args)
    patch = _lens_patch(args, scenario, h)
    fwd = simulate(scenario, scenario.medium_with(patch))
    dx = scenario.grid.dx
    write_field(out / "pressure.ahfb", fwd.pressure, h)
    write_field(out / "extraction_plane.ahfb", fwd.plane, h)
    write_field(out / "target_plane.ahfb", fwd.target_field, h)
    write_pgm(out / "target_amplitude.pgm", np.abs(fwd.target_field.values))
    write_pgm(out / "extraction_amplitude.pgm", np.abs(fwd.plane.values))
    axial = np.abs(fwd.pressure.values)
    if axial.ndim == 3:
        axial = axial[:, :, axial.shape[2] // 2]
    write_pgm(out / "axial_amplitude.pgm", axial)
    plotting.plot_target_comparison(fwd.amplitude, scenario.target.q0.values, dx, out / "target.png")
    plotting.plot_plane_map(axial, dx, out / "axial_amplitude.png", "|P| (Pa)", "inferno")
    summary = {"command": "export", "config_hash": h,
               "correlation": correlation(fwd.amplitude, scenario.target.q0.values),
               "cnr": cnr(fwd.amplitude, scenario.target.mask)}
    _write_report(out, "export_report", summary)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holodesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario TOML file")
        p.add_argument("--out", required=True, help="output directory")

    def lens_inputs(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--voxels", help="lens voxel file (.ahvx)")
        g.add_argument("--gamma", help="design variable field file (.ahfb)")
        p.add_argument("--binary", action="store_true", help="binarise the gamma design before use")
        p.add_argument("--force", action="store_true", help="accept files produced by another config")

    p = sub.add_parser("design", help="optimise a volumetric lens")
    common(p)
    p.add_argument("--iterations", type=int, help="override optimizer.n_iterations")
    p.add_argument("--trajectory", action="store_true",
                   help="also compute binarization error per checkpoint (two extra solves each)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("thin-element", help="thin-element baseline lens")
    common(p)
    p.add_argument("--method", choices=("iasa", "conjugate"),
                   help="default: conjugate when an aberrator is configured, iasa otherwise")
    p.set_defaults(func=cmd_thin_element)

    p = sub.add_parser("evaluate", help="correlation, CNR and target-depth sweep")
    common(p)
    lens_inputs(p)
    p.add_argument("--field", help="target-plane field file (.ahfb) to score directly")
    p.add_argument("--span", type=float, default=2e-3, help="depth sweep half-range in metres")
    p.add_argument("--planes", type=int, default=21, help="planes in the depth sweep")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradient-check", help="adjoint gradient against finite differences")
    common(p)
    p.add_argument("--probes", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="seed for the design and probe choice")
    p.set_defaults(func=cmd_gradient_check)

    p = sub.add_parser("export", help="field planes as PGM and raw binary")
    common(p)
    lens_inputs(p)
    p.set_defaults(func=cmd_export)
    return parser


def _fail(code: int, err: Exception) -> int:
    record = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, ObjectiveError) as err:
        return _fail(EXIT_CONFIG, err)
    except (SolverFailure, NonConvergence) as err:
        return _fail(EXIT_SOLVER, err)
    except (ValidationFailure, FormatError) as err:
        return _fail(EXIT_VALIDATION, err)
    except FileNotFoundError as err:
        return _fail(EXIT_CONFIG, err)


if __name__ == "__main__":
    sys.exit(main())
