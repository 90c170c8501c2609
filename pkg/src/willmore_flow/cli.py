"""Scenario runner: flat ``section.key = value`` configs in, CSV/JSON/WGF1 out.

    willmore-flow run demo.cfg --out results/
    willmore-flow sweep 'configs/*.cfg' --jobs 4
    willmore-flow check demo.cfg

Exit codes: 0 ok, 2 config error, 3 blow-up, 4 non-convergence, 5 I/O.
"""
from __future__ import annotations

import argparse
import difflib
import glob
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .analysis import (WeightedNormSpec, apriori_bound, blowup_rate_fit, multi_indices,
                       weighted_norm_estimate)
from .errors import (BlowUpError, CompatibilityError, ConfigurationError,
                     NonConvergenceError, NumericalError, UndersampledError)
from .flow import FlowConfig, dissipation_probe, l2_distance, run
from .geometry import diameter_bound
from .grid import BoundaryData, apply_clamped_ghosts, dump_field, make_grid
from .presets import PRESETS, make_preset
from .stationary import NewtonConfig, history_csv, solve_stationary

log = logging.getLogger("willmore_flow")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_NONCONV, EXIT_IO = 0, 2, 3, 4, 5
BC_KINDS = ("zero", "from-initial-trace", "preset")
REQUIRED = object()

_PRESET_KEYS = {"preset": (str, REQUIRED), "amplitude": (float, 0.01), "center_x": (float, None),
                "center_y": (float, None), "width": (float, 0.3), "a": (float, 0.0),
                "b": (float, 0.0), "c": (float, 0.0), "radius": (float, None)}

SCHEMA = {
    "scenario.name": (str, None),
    "grid.x0": (float, 0.0), "grid.x1": (float, 1.0),
    "grid.y0": (float, 0.0), "grid.y1": (float, None),
    "grid.nx": (int, REQUIRED), "grid.ny": (int, None),
    **{f"ic.{k}": v for k, v in _PRESET_KEYS.items()},
    "bc.type": (str, "zero"),
    **{f"bc.{k}": (t, None if d is REQUIRED else d) for k, (t, d) in _PRESET_KEYS.items()},
    "flow.t_end": (float, REQUIRED), "flow.scheme": (str, "frozen"),
    "flow.dt": (float, None), "flow.cfl": (float, 0.5),
    "flow.diag_every": (int, 1), "flow.tol_stationary": (float, 1e-8),
    "flow.compat_tol": (float, 1e-6), "flow.max_steps": (int, None),
    "flow.samples_per_octave": (int, 0), "flow.first_sample": (float, None),
    "newton.tol": (float, 1e-9), "newton.max_iters": (int, 30),
    "newton.damping": (float, 1.0), "newton.fd_eps": (float, 1e-6),
    "analysis.apriori": (bool, True), "analysis.diameter": (bool, False),
    "analysis.dissipation": (bool, False), "analysis.stationary": (bool, False),
    "analysis.weighted": (bool, False), "analysis.blowup": (bool, False),
    "analysis.s": (float, 1.0), "analysis.alpha": (float, 0.5),
    "analysis.fit_t_min": (float, None), "analysis.fit_t_max": (float, None),
    "output.dir": (str, None), "output.dump_every": (int, 0),
}


class ConfigError(ConfigurationError):
    """Config problem tied to a line of the document (``line`` is None for whole-file problems)."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _convert(raw, typ, key, line):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(raw)
            return v
    except ValueError:
        raise ConfigError(f"{key} expects {typ.__name__}, got {raw!r}", line) from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def _read_pairs(text):
    values, lines = {}, {}
    for no, rawline in enumerate(text.splitlines(), 1):
        s = rawline.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'section.key = value', got {s!r}", no)
        key, raw = (p.strip() for p in s.split("=", 1))
        if key not in SCHEMA:
            near = difflib.get_close_matches(key, SCHEMA, n=1, cutoff=0.5)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"unknown key {key!r}{hint}", no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", no)
        if not raw:
            raise ConfigError(f"empty value for {key!r}", no)
        values[key] = _convert(raw, SCHEMA[key][0], key, no)
        lines[key] = no
    return values, lines


@dataclass(frozen=True)
class PresetSpec:
    name: str
    params: dict = field(default_factory=dict)

    def build(self, domain):
        return make_preset(self.name, domain, **self.params)


@dataclass(frozen=True)
class Scenario:
    name: str
    bounds: tuple
    nx: int
    ny: int
    ic: PresetSpec
    bc_kind: str
    bc_preset: PresetSpec | None
    flow: FlowConfig
    newton: NewtonConfig
    analysis: dict
    out_dir: str
    dump_every: int = 0

    def domain(self):
        return make_grid(self.bounds, self.nx, self.ny)

    def initial_data(self, domain=None):
        """``(u0, bc)`` with ghosts filled from the boundary data.

        The ghost fill overwrites the boundary ring, so compatibility is
        checked first, between the exact trace and slope of the initial
        preset and the boundary data.
        """
        d = domain or self.domain()
        pre = self.ic.build(d)
        u0 = pre.field(d, 0.0)
        own = pre.boundary(d)
        if self.bc_kind == "zero":
            bc = BoundaryData.zero(d)
        elif self.bc_kind == "from-initial-trace":
            bc = own
        else:
            bc = self.bc_preset.build(d).boundary(d)
        trace, normal = (own.g0 - bc.g0).max_abs(), (own.g1 - bc.g1).max_abs()
        tol = self.flow.compat_tol
        if not (trace <= tol and normal <= tol):
            raise CompatibilityError(f"initial datum violates clamped data: trace {trace:.3e}, "
                                     f"normal {normal:.3e} (tol {tol:g})")
        return apply_clamped_ghosts(u0, bc), bc


def _preset_spec(values, prefix):
    params = {k: values[f"{prefix}.{k}"] for k in _PRESET_KEYS if k != "preset"
              and values.get(f"{prefix}.{k}") is not None}
    return PresetSpec(values[f"{prefix}.preset"], params)


def _geometric_samples(t_end, per_octave, first):
    if per_octave <= 0:
        return None
    first = t_end * 2.0 ** -10 if first is None else first
    out, j = [], 0
    while True:
        t = t_end * 2.0 ** (-j / per_octave)
        if t < first * (1 - 1e-12):
            break
        out.append(t)
        j += 1
    return tuple(sorted(out))


def parse_config(text, default_name="scenario"):
    """Validate a flat key-value document into a :class:`Scenario`."""
    values, lines = _read_pairs(text)
    for key, (typ, default) in SCHEMA.items():
        if key not in values:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            values[key] = default

    def where(key):
        return lines.get(key)

    x0, x1, y0 = values["grid.x0"], values["grid.x1"], values["grid.y0"]
    nx = values["grid.nx"]
    ny = values["grid.ny"] if values["grid.ny"] is not None else nx
    h = (x1 - x0) / (nx + 1)
    y1 = values["grid.y1"] if values["grid.y1"] is not None else y0 + h * (ny + 1)
    bounds = (x0, x1, y0, y1)
    try:
        domain = make_grid(bounds, nx, ny)
    except ConfigurationError as exc:
        raise ConfigError(str(exc), where("grid.nx")) from None

    for prefix in ("ic", "bc"):
        name = values[f"{prefix}.preset"]
        if name is not None and name not in PRESETS:
            near = difflib.get_close_matches(name, PRESETS, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"unknown preset {name!r}{hint}", where(f"{prefix}.preset"))
    ic = _preset_spec(values, "ic")
    kind = values["bc.type"]
    if kind not in BC_KINDS:
        raise ConfigError(f"bc.type must be one of {BC_KINDS}, got {kind!r}", where("bc.type"))
    bc_preset = None
    if kind == "preset":
        if values["bc.preset"] is None:
            raise ConfigError("bc.type = preset needs bc.preset", where("bc.type"))
        bc_preset = _preset_spec(values, "bc")
    elif values["bc.preset"] is not None:
        raise ConfigError("bc.preset is only used with bc.type = preset", where("bc.preset"))
    for prefix, spec in (("ic", ic), ("bc", bc_preset)):
        if spec is not None:
            try:
                spec.build(domain)
            except ConfigurationError as exc:
                raise ConfigError(str(exc), where(f"{prefix}.preset")) from None

    t_end = values["flow.t_end"]
    try:
        flow = FlowConfig(
            t_end=t_end, scheme=values["flow.scheme"], dt=values["flow.dt"],
            cfl=values["flow.cfl"], diag_every=values["flow.diag_every"],
            tol_stationary=values["flow.tol_stationary"], compat_tol=values["flow.compat_tol"],
            max_steps=values["flow.max_steps"],
            sample_times=_geometric_samples(t_end, values["flow.samples_per_octave"],
                                            values["flow.first_sample"]))
    except ConfigurationError as exc:
        bad = next((k for k in ("flow.scheme", "flow.t_end", "flow.dt", "flow.cfl")
                    if k in lines and k.split(".")[1] in str(exc)), None)
        raise ConfigError(str(exc), where(bad) if bad else None) from None
    try:
        newton = NewtonConfig(values["newton.max_iters"], values["newton.tol"],
                              values["newton.damping"], values["newton.fd_eps"])
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None
    analysis = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("analysis.")}
    if analysis["weighted"] or analysis["blowup"]:
        try:
            WeightedNormSpec.standard(analysis["s"], analysis["alpha"])
        except ConfigurationError as exc:
            raise ConfigError(str(exc), where("analysis.s")) from None
    if values["output.dump_every"] < 0:
        raise ConfigError("output.dump_every must be >= 0", where("output.dump_every"))
    name = values["scenario.name"] or default_name
    out_dir = values["output.dir"] or os.path.join("out", name)
    return Scenario(name, bounds, nx, ny, ic, kind, bc_preset, flow, newton, analysis,
                    out_dir, values["output.dump_every"])


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 ({exc.reason})") from None
    return parse_config(text, default_name=os.path.splitext(os.path.basename(path))[0])


# ----------------------------------------------------------------------------
# Running
# ----------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return x.item()
    return x


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_snapshots(traj, out, every):
    fields = os.path.join(out, "fields")
    os.makedirs(fields, exist_ok=True)
    n = len(traj)
    keep = {0, n - 1} | (set(range(0, n, every)) if every else set())
    for i in sorted(keep):
        dump_field(traj.fields[i], os.path.join(fields, f"u_{i:05d}.wgf"))


def _apriori_rows(traj):
    worst, violations = 0.0, 0
    for u in traj.fields:
        rep = apriori_bound(u, traj.bc)
        worst = max(worst, rep.lhs / rep.rhs)
        violations += not rep.passed
    return {"max_ratio": worst, "violations": violations, "samples": len(traj)}


def _diameter_rows(traj):
    worst, violations = 0.0, 0
    for u in traj.fields:
        bound, diam = diameter_bound(u, traj.bc)
        worst = max(worst, diam / bound)
        violations += not diam <= bound
    return {"max_ratio": worst, "violations": violations}


def _analyses(s, traj, out):
    a, rep = s.analysis, {}
    if a["apriori"]:
        rep["apriori"] = _apriori_rows(traj)
    if a["diameter"]:
        rep["diameter"] = _diameter_rows(traj)
    if a["dissipation"]:
        rep["dissipation"] = dissipation_probe(traj).as_dict()
    if a["weighted"] or a["blowup"]:
        spec = WeightedNormSpec.standard(a["s"], a["alpha"])
        if a["weighted"]:
            try:
                value, parts = weighted_norm_estimate(traj, spec, detail=True)
                rep["weighted_norm"] = {"value": value, **parts}
            except UndersampledError as exc:
                rep["weighted_norm"] = {"error": str(exc)}
        if a["blowup"]:
            window = None
            if a["fit_t_min"] is not None or a["fit_t_max"] is not None:
                window = (a["fit_t_min"] or 0.0, a["fit_t_max"] or math.inf)
            rep["blowup"] = {}
            for beta in multi_indices(2) + multi_indices(3):
                key = "D%d%d" % beta
                try:
                    fit = blowup_rate_fit(traj, beta, a["s"], t_window=window)
                except ValueError as exc:
                    rep["blowup"][key] = {"error": str(exc)}
                    continue
                rep["blowup"][key] = {"slope": fit.slope, "expected": fit.expected,
                                      "samples": len(fit.times), "reason": fit.reason}
    if a["stationary"]:
        u_inf, hist = solve_stationary(traj.bc, traj.final, s.newton, return_history=True)
        _write_text(os.path.join(out, "newton_history.csv"), history_csv(hist))
        dump_field(u_inf, os.path.join(out, "u_stationary.wgf"))
        rep["stationary"] = {"iterations": hist[-1][0], "residual": hist[-1][1],
                             "l2_distance_final": l2_distance(traj.final, u_inf)}
    return rep


def run_scenario(s, out_dir=None, quiet=False):
    """Run one scenario, write its artifacts and return the exit status."""
    out = out_dir or s.out_dir
    report = {"name": s.name, "grid": {"bounds": list(s.bounds), "nx": s.nx, "ny": s.ny},
              "scheme": s.flow.scheme, "status": "ok"}
    status = EXIT_OK
    try:
        os.makedirs(out, exist_ok=True)
        domain = s.domain()
        u0, bc = s.initial_data(domain)
        try:
            traj, diags = run(u0, bc, s.flow)
        except BlowUpError as exc:
            traj, diags = exc.trajectory, exc.diagnostics
            status = EXIT_BLOWUP
            report["status"] = "blow-up"
            report["error"] = str(exc)
            _error(s.name, f"blow-up: {exc}")
        if diags is not None:
            diags.write_csv(os.path.join(out, "diagnostics.csv"))
        if traj is not None and len(traj):
            _dump_snapshots(traj, out, s.dump_every)
            report["samples"] = len(traj)
            report["t_final"] = traj.times[-1]
            report["steps"] = traj.steps[-1]
            report["stationary"] = traj.stationary
            if status == EXIT_OK:
                try:
                    report["analysis"] = _analyses(s, traj, out)
                except (NonConvergenceError, NumericalError) as exc:
                    status = EXIT_NONCONV
                    report["status"] = "non-convergence"
                    report["error"] = str(exc)
                    hist = getattr(exc, "history", None)
                    if hist:
                        _write_text(os.path.join(out, "newton_history.csv"), history_csv(hist))
                    _error(s.name, f"non-convergence: {exc}")
    except (CompatibilityError, ConfigurationError) as exc:
        _error(s.name, f"config error: {exc}")
        return EXIT_CONFIG
    except NumericalError as exc:
        _error(s.name, f"non-convergence: {exc}")
        status, report["status"], report["error"] = EXIT_NONCONV, "non-convergence", str(exc)
    except OSError as exc:
        _error(s.name, f"I/O error: {exc}")
        return EXIT_IO
    try:
        _write_text(os.path.join(out, "report.json"),
                    json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        _error(s.name, f"I/O error: {exc}")
        return EXIT_IO
    if not quiet and status == EXIT_OK:
        log.info("%s: %d samples, t = %.6g, written to %s",
                 s.name, report.get("samples", 0), report.get("t_final", 0.0), out)
    return status


def _error(name, message):
    print(f"willmore-flow: {name}: {message}", file=sys.stderr)


def _run_path(path, out, quiet):
    try:
        s = load_config(path)
    except ConfigurationError as exc:
        _error(path, f"config error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _error(path, f"I/O error: {exc}")
        return EXIT_IO
    return run_scenario(s, out, quiet)


def build_parser():
    # --out and --quiet are accepted before or after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (overrides output.dir)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="only report errors")
    p = argparse.ArgumentParser(prog="willmore-flow", description=__doc__.split("\n")[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario", parents=[common])
    r.add_argument("config")
    w = sub.add_parser("sweep", help="run every config matching a glob", parents=[common])
    w.add_argument("pattern")
    w.add_argument("--jobs", type=int, default=1, help="scenarios run concurrently")
    c = sub.add_parser("check", help="validate a config without running it", parents=[common])
    c.add_argument("config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.out = getattr(args, "out", None)
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    if args.command == "check":
        try:
            s = load_config(args.config)
            s.initial_data()
        except ConfigurationError as exc:
            _error(args.config, f"config error: {exc}")
            return EXIT_CONFIG
        except OSError as exc:
            _error(args.config, f"I/O error: {exc}")
            return EXIT_IO
        if not args.quiet:
            print(f"{args.config}: ok ({s.name}, {s.nx}x{s.ny}, {s.flow.scheme})")
        return EXIT_OK
    if args.command == "run":
        return _run_path(args.config, args.out, args.quiet)

    paths = sorted(glob.glob(args.pattern))
    if not paths:
        _error(args.pattern, "no config matches")
        return EXIT_IO
    # Each scenario gets a private directory under --out, named after its file.
    outs = [os.path.join(args.out, os.path.splitext(os.path.basename(p))[0]) if args.out else None
            for p in paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            codes = list(pool.map(_run_path, paths, outs, [args.quiet] * len(paths)))
    else:
        codes = [_run_path(p, o, args.quiet) for p, o in zip(paths, outs)]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
