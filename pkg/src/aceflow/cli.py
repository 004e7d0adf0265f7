"""Command line entry point: ``aceflow {cavity,timing,convergence,predictability}``.

Parameters come from the built-in defaults, then the ``--scale`` preset, then
the matching section of an INI file given with ``--config``, then the
command line flags. Every CSV starts with ``# key = value`` lines echoing the
fully resolved parameters and a run id derived from them.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import diag, experiments, mesh
from .experiments import DEFAULTS, DESK, REFERENCE_CAVITY, REFERENCE_CONVERGENCE, REFERENCE_HORIZONS

log = logging.getLogger("aceflow")
COMMANDS = tuple(DEFAULTS)


class ConfigError(ValueError):
    pass


def _parse_value(key: str, text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, list):
            kind = type(default[0]) if default else float
            return [kind(float(v)) if kind is int else kind(v) for v in text.replace(" ", "").split(",") if v]
        if isinstance(default, int):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc


def read_config(path, command: str) -> dict:
    """Overrides for ``command`` from an INI file. Unknown sections and keys
    are errors; sections for other commands are validated and skipped."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str.lower
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    out = {}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]; expected one of {', '.join(COMMANDS)}")
        defaults = DEFAULTS[section]
        for key, text in parser.items(section):
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            value = _parse_value(key, text, defaults[key])
            if section == command:
                out[key] = value
    return out


def resolve(command: str, scale: str = "full", config: str | None = None, seed: int = 0, jobs: int | None = None) -> dict:
    params = dict(DEFAULTS[command])
    if scale == "desk":
        params.update(DESK[command])
    if config:
        params.update(read_config(config, command))
    if jobs is not None:
        params["jobs"] = int(jobs)
    params["seed"] = int(seed)
    return params


def header(command: str, params: dict) -> dict:
    body = "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items()))
    run_id = hashlib.sha1(f"{command}\n{body}".encode()).hexdigest()[:12]
    return {"run_id": run_id, "command": command, **{k: _fmt(v) for k, v in sorted(params.items())}}


def _fmt(v) -> str:
    if isinstance(v, list):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- commands
def cmd_cavity(params: dict, out: Path) -> int:
    head = header("cavity", params)
    summary_cols = ["Ra", "converged", "steps", "halvings", "final_dt", "max_u1", "max_u2", "nu_hot", "nu_cold", "ref_max_u1", "ref_max_u2", "ref_nu"]
    summary = []

    def emit(res, fe, ops):
        tag = f"{res.Ra:g}"
        ref = REFERENCE_CAVITY.get(res.Ra, (None, None, None))
        summary.append([res.Ra, res.converged, res.steps, res.halvings, res.state.dt, res.max_u1, res.max_u2, res.nu_hot, res.nu_cold, *ref])
        diag.write_csv(out / "cavity_summary.csv", summary_cols, summary, head)
        y_hot, nu_hot = res.profiles["hot"]
        y_cold, nu_cold = res.profiles["cold"]
        diag.write_csv(out / f"nusselt_Ra{tag}.csv", ["y", "nu_hot", "nu_cold"], zip(y_hot, nu_hot, nu_cold), head)
        diag.write_csv(
            out / f"steps_Ra{tag}.csv",
            ["time", "dt", "cfl", "iterations_u", "iterations_T", "iterations_p", "halvings"],
            ([r.t, r.dt, r.cfl, r.iterations_u, r.iterations_T, r.iterations_p, r.halvings] for r in res.records),
            head,
        )
        if params["vtk"]:
            nv = fe.n_p1
            ux, uy = fe.split_velocity(res.state.u.mean(0))
            bv = res.bred.fields
            mesh.write_vtk(
                out / f"cavity_Ra{tag}.vtk",
                fe.mesh,
                {
                    "velocity": np.column_stack([ux[:nv], uy[:nv]]),
                    "temperature": res.state.T.mean(0)[:nv],
                    "pressure": res.state.p.mean(0),
                    "bv_temperature": bv["T"][:nv],
                },
                f"cavity Ra={tag} run {head['run_id']}",
            )

    results = experiments.run_cavity(params, params["seed"], on_result=emit)
    failed = [r.Ra for r in results if not r.converged]
    if failed:
        log.error("steady state not reached within max_steps for Ra = %s", ", ".join(f"{r:g}" for r in failed))
        return 2
    return 0


def cmd_timing(params: dict, out: Path) -> int:
    head = header("timing", params)
    rows = experiments.run_timing(params, params["seed"])
    diag.write_csv(
        out / "timing.csv",
        ["Ra", "dt", "steps", "ace_seconds", "bdf1_seconds", "ace_seconds_per_step", "bdf1_seconds_per_step", "speedup"],
        ([r["Ra"], r["dt"], r["steps"], r["ace_seconds"], r["bdf1_seconds"], r["ace_seconds"] / r["steps"], r["bdf1_seconds"] / r["steps"], r["speedup"]] for r in rows),
        head,
    )
    # wall-clock numbers are measurements; the work counts below are reproducible
    diag.write_csv(
        out / "timing_work.csv",
        ["Ra", "dt", "steps", "ace_iterations", "bdf1_iterations", "ace_factorizations", "bdf1_factorizations", "ace_nu_hot", "bdf1_nu_hot"],
        ([r["Ra"], r["dt"], r["steps"], r["ace_iterations"], r["bdf1_iterations"], r["ace_factorizations"], r["bdf1_factorizations"], r["ace_nu_hot"], r["bdf1_nu_hot"]] for r in rows),
        head,
    )
    return 0


def cmd_convergence(params: dict, out: Path) -> int:
    head = header("convergence", params)
    rows = experiments.run_convergence(params, params["seed"])
    cols = ["m", "dt", "err_u", "rate_u", "err_T", "rate_T", "err_p", "rate_p", "ref_err_u", "ref_err_T", "ref_err_p"]
    diag.write_csv(
        out / "convergence.csv",
        cols,
        ([r["m"], r["dt"], r["err_u"], r["rate_u"], r["err_T"], r["rate_T"], r["err_p"], r["rate_p"], *REFERENCE_CONVERGENCE.get(r["m"], (None,) * 3)] for r in rows),
        head,
    )
    return 0


def cmd_predictability(params: dict, out: Path) -> int:
    head = header("predictability", params)
    res = experiments.run_predictability(params, params["seed"])
    series = res["series"]
    cols = list(series[0].keys())
    diag.write_csv(out / "predictability_series.csv", cols, ([row[c] for c in cols] for row in series), head)
    hcols = ["Ra", "gamma0_u", "gamma0_T", "gamma0_p", "horizon_u", "horizon_T", "horizon_p", "ref_horizon_u", "ref_horizon_T", "ref_horizon_p"]
    diag.write_csv(
        out / "predictability_horizons.csv",
        hcols,
        ([h[c] for c in hcols[:7]] + list(REFERENCE_HORIZONS.get(h["Ra"], (None,) * 3)) for h in res["horizons"]),
        head,
    )
    return 0


HANDLERS = {
    "cavity": cmd_cavity,
    "timing": cmd_timing,
    "convergence": cmd_convergence,
    "predictability": cmd_predictability,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aceflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI file with a section per command")
    ap.add_argument("--out-dir", default=".", help="directory for CSV and VTK output")
    ap.add_argument("--seed", type=int, default=0, help="seed for the perturbation pair")
    ap.add_argument("--scale", choices=("desk", "full"), default="full", help="desk: 32x32 cavity up to Ra=1e5, m <= 24")
    ap.add_argument("--jobs", type=int, default=None, help="worker threads for the per-member solves")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        params = resolve(args.command, args.scale, args.config, args.seed, args.jobs)
    except (ConfigError, OSError, configparser.Error) as exc:
        print(f"aceflow: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[args.command](params, out)


if __name__ == "__main__":
    sys.exit(main())
