"""Command-line front end.

Exit codes: 0 success, 1 invalid input or I/O failure, 2 optimizer did
not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .farfield import SphericalGrid, total_pattern
from .io import (
    GeometryError,
    build_report,
    dump_geometry,
    read_geometry,
    update_geometry,
    write_pattern_csv,
    write_sweep_csv,
    write_touchstone,
)
from .microstrip import (
    characteristic_impedance,
    design_patch,
    effective_permittivity,
    fringe_extension,
    validity_warnings,
)
from .network import analyze_sweep, element_excitations, extract_bandwidth
from .optimize import (
    PARAMETERS,
    Objective,
    OptResult,
    apply_design,
    design_vector,
    nelder_mead,
    objective_eval,
    resonance_objective,
)

log = logging.getLogger("patcharray")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _emit(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2, allow_nan=False))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def _line_summary(width, substrate):
    p = characteristic_impedance(width, substrate)
    return {"width_mm": width * 1e3, "z0_ohm": p.z0, "eps_eff": p.eps_eff}


def cmd_design(args) -> int:
    geom = read_geometry(args.geom)
    sub = geom.layout.substrate
    f0 = args.f0 * 1e9
    patch = design_patch(f0, sub)
    lay = geom.layout
    _emit({
        "f0_ghz": args.f0,
        "patch_width_mm": patch.width * 1e3,
        "patch_length_mm": patch.length * 1e3,
        "patch_eps_eff": effective_permittivity(patch.width, sub),
        "patch_delta_l_mm": fringe_extension(patch.width, sub) * 1e3,
        "lines": {
            "feed": _line_summary(lay.feed.width, sub),
            "interconnect": _line_summary(
                lay.interconnects[0].width if lay.interconnects else lay.feed.width, sub),
            "patch_body": _line_summary(patch.width, sub),
        },
        "warnings": validity_warnings(sub, f0),
    })
    return EXIT_OK


def cmd_analyze(args) -> int:
    geom = read_geometry(args.geom)
    result = analyze_sweep(geom.layout, *geom.sweep)
    if args.out:
        write_touchstone(result, args.out)
    if args.csv:
        write_sweep_csv(result, args.csv)
    f_res, s11_min = result.resonance()
    band = extract_bandwidth(result, -10.0, f_res)
    _emit({
        "points": len(result),
        "resonance_ghz": f_res / 1e9,
        "s11_min_db": s11_min,
        "vswr_min": float(result.vswr.min()),
        "band_ghz": None if band.empty else [band.f_low / 1e9, band.f_high / 1e9],
    })
    return EXIT_OK


def cmd_pattern(args) -> int:
    geom = read_geometry(args.geom)
    freq = args.freq * 1e9
    grid = SphericalGrid(args.grid, args.grid)
    ex = element_excitations(geom.layout, freq)
    pattern = total_pattern(geom.layout, ex, freq, grid)
    rows = write_pattern_csv(pattern, args.out, args.cut)
    _emit({"rows": rows, "out": str(args.out), "cut_phi_deg": args.cut})
    return EXIT_OK


def cmd_metrics(args) -> int:
    geom = read_geometry(args.geom)
    grid = SphericalGrid(args.grid, args.grid)
    _emit(build_report(geom.layout, geom.sweep, args.freq * 1e9, grid))
    return EXIT_OK


def _parse_free(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if names == ["none"]:
        return []
    for n in names:
        if n not in PARAMETERS:
            raise GeometryError(f"--free: unknown parameter {n!r}; expected any of {PARAMETERS}")
    return names


def cmd_optimize(args) -> int:
    geom = read_geometry(args.geom)
    layout = geom.layout
    f0 = args.target_f0 * 1e9
    free = _parse_free(args.free)
    x0 = design_vector(layout, free=free)
    if args.objective == "resonance":
        f = resonance_objective(layout, f0, geom.sweep)
    else:
        obj = Objective(f0, tuple(args.weights), args.sll_ceiling)
        f = lambda x: objective_eval(x, layout, obj)  # noqa: E731

    if free:
        result = nelder_mead(f, x0, max_evals=args.max_evals)
    else:
        v = f(x0)
        result = OptResult(x0, v, 1, True, [v], v)
    tuned = apply_design(layout, result.best)
    text = dump_geometry(update_geometry(geom.doc, tuned, free))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    _emit({
        "objective": args.objective,
        "free": free,
        "best": {p.name: p.value * 1e3 for p in result.best.params},
        "best_units": "mm",
        "initial_value": result.initial_value,
        "best_value": result.best_value,
        "evaluations": result.evaluations,
        "converged": result.converged,
        "trace": result.trace,
        "geometry": text,
    })
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patcharray", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="synthesize patch dimensions")
    d.add_argument("--f0", type=float, required=True, help="design frequency, GHz")
    d.add_argument("--geom", required=True)
    d.set_defaults(func=cmd_design)

    a = sub.add_parser("analyze", help="S11 sweep")
    a.add_argument("--geom", required=True)
    a.add_argument("--out", help="Touchstone .s1p output")
    a.add_argument("--csv", help="CSV of freq_ghz, s11_db, vswr")
    a.set_defaults(func=cmd_analyze)

    pt = sub.add_parser("pattern", help="far-field grid or cut export")
    pt.add_argument("--geom", required=True)
    pt.add_argument("--freq", type=float, required=True, help="GHz")
    pt.add_argument("--cut", type=float, choices=(0.0, 90.0), help="cut plane phi, degrees")
    pt.add_argument("--grid", type=float, default=0.5, help="angular step, degrees")
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_pattern)

    m = sub.add_parser("metrics", help="full metric report")
    m.add_argument("--geom", required=True)
    m.add_argument("--freq", type=float, required=True, help="GHz")
    m.add_argument("--grid", type=float, default=0.5, help="angular step, degrees")
    m.set_defaults(func=cmd_metrics)

    o = sub.add_parser("optimize", help="tune geometry")
    o.add_argument("--geom", required=True)
    o.add_argument("--target-f0", type=float, required=True, help="GHz")
    o.add_argument("--free", default="L",
                   help=f"comma-separated subset of {', '.join(PARAMETERS)}, or 'none'")
    o.add_argument("--max-evals", type=int, default=500)
    o.add_argument("--objective", choices=("resonance", "composite"), default="resonance")
    o.add_argument("--weights", type=float, nargs=3, default=(1.0, 0.0, 0.0),
                   metavar=("MATCH", "DIR", "SLL"))
    o.add_argument("--sll-ceiling", type=float, default=-10.0, help="dB")
    o.add_argument("--out", help="write the tuned geometry here")
    o.set_defaults(func=cmd_optimize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are invalid input here
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
