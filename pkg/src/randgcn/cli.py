"""Command-line front end.

Settings resolve in three layers: per-study defaults, then an optional INI
file, then explicit flags. The INI file may use ``[model]``, ``[study]`` and
``[output]`` sections or bare top-level keys; unknown keys are rejected.
Perturbation ratios map to edge counts by rounding half away from zero.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import math
import os
import re
import sys
import tempfile
import time
from typing import Optional

import numpy as np

from randgcn import __version__, experiments as ex, rmt
from randgcn._backend import BACKEND
from randgcn.synthgen import ModelParams

OUTPUT_ENV = "RANDGCN_OUTPUT_DIR"

MODEL_KEYS = {"n": int, "p": int, "d": int, "q": float, "eta": float, "mu_norm": float,
              "class_balance": float, "directed": "bool", "contrast": str}
RUN_KEYS = {"study": str, "trials": int, "seed": int}
STUDY_KEYS = {
    "bins": int, "sub_points": int, "density_points": int,
    "eta_grid": "grid", "strategies": "list", "activation": str,
    "d_grid": "intgrid", "operator": str,
    "scheme": str, "grid": "grid", "weights": "grid", "sparsified": "bool",
    "gamma": float, "lam": float, "per_class": int,
    "z": "complex", "c": float, "x_min": float, "x_max": float, "points": int,
    "epsilon": float,
}
OUTPUT_KEYS = {"dir": str}
SECTIONS = {"model": MODEL_KEYS, "study": {**RUN_KEYS, **STUDY_KEYS}, "output": OUTPUT_KEYS}
ALL_KEYS = {**MODEL_KEYS, **RUN_KEYS, **STUDY_KEYS, "output": str, "dir": str}

STUDIES = ("spectrum", "alignment-sweep", "gram-convergence", "noise-sweep",
           "fixed-point", "density")

# model and trial-count defaults per study
STUDY_DEFAULTS = {
    "spectrum": (dict(n=200, p=1000, q=0.5, eta=4.0, mu_norm=2.0), 10),
    "alignment-sweep": (dict(n=250, p=500, q=0.4, eta=0.0, mu_norm=1.7, d=1024), 100),
    "gram-convergence": (dict(n=800, p=1000, q=0.5, eta=4.0, mu_norm=2.0), 20),
    "noise-sweep": (dict(n=1000, p=500, q=0.3, eta=4.0, mu_norm=1.7, d=1024), 10),
    "fixed-point": (dict(n=200, p=1000, q=0.5, eta=4.0, mu_norm=2.0), 1),
    "density": (dict(n=200, p=1000, q=0.5, eta=4.0, mu_norm=2.0), 1),
}


class ConfigError(ValueError):
    pass


# value parsing -------------------------------------------------------------------------

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_REAL = re.compile(rf"^[+-]?{_NUM}$")
_COMPLEX = re.compile(rf"^(?P<re>[+-]?{_NUM})(?P<sign>[+-])(?P<im>{_NUM})?i$")
_IMAG = re.compile(rf"^(?P<sign>[+-]?)(?P<im>{_NUM})?i$")


def parse_complex(text: str) -> complex:
    """Strict "a+bi" parser; also accepts "a", "bi" and "a-i"."""
    s = text.strip()
    if _REAL.match(s):
        return complex(float(s), 0.0)
    m = _COMPLEX.match(s)
    if m:
        im = float(m["im"]) if m["im"] else 1.0
        return complex(float(m["re"]), -im if m["sign"] == "-" else im)
    m = _IMAG.match(s)
    if m:
        im = float(m["im"]) if m["im"] else 1.0
        return complex(0.0, -im if m["sign"] == "-" else im)
    raise ValueError(f"not a complex number of the form a+bi: {text!r}")


def format_complex(z: complex) -> str:
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"{z.real:.17g}{sign}{abs(z.imag):.17g}i"


def parse_grid(text: str) -> tuple:
    """"start:stop:step" (inclusive) or a comma-separated list."""
    s = text.strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = map(float, parts)
        if step <= 0 or stop < start:
            raise ValueError(f"invalid grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(count))
    return tuple(float(v) for v in s.split(",") if v.strip())


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, raw, kind):
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "bool":
            return _parse_bool(raw)
        if kind == "grid":
            return parse_grid(raw)
        if kind == "intgrid":
            return tuple(int(round(v)) for v in parse_grid(raw))
        if kind == "list":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if kind == "complex":
            return parse_complex(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def read_config_file(path: str) -> dict:
    """Flat key -> typed value mapping from an INI file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        if section == "__top__":
            allowed = ALL_KEYS
        elif section in SECTIONS:
            allowed = SECTIONS[section]
        else:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]" if section != "__top__"
                                  else f"unknown key {key!r}")
            name = "dir" if key == "output" else key
            out[name] = _convert(key, raw, ALL_KEYS[key])
    return out


# config assembly -----------------------------------------------------------------------

def build_config(study: str, values: dict):
    """Turn a flat mapping into an ExperimentConfig (or a probe dict)."""
    if study not in STUDIES:
        raise ConfigError(f"study: unknown study {study!r}")
    model_defaults, trials_default = STUDY_DEFAULTS[study]
    model_kw = dict(model_defaults)
    model_kw.update({k: values[k] for k in MODEL_KEYS if k in values})
    seed = int(values.get("seed", 0))
    try:
        model = ModelParams(**model_kw, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    trials = int(values.get("trials", trials_default))
    output = values.get("dir") or os.environ.get(OUTPUT_ENV) or os.path.join("runs", study)

    def pick(cls, **renames):
        kw = {}
        for f in dataclasses.fields(cls):
            key = renames.get(f.name, f.name)
            if key in values:
                kw[f.name] = values[key]
        return cls(**kw)

    if study in ("fixed-point", "density"):
        return {"study": study, "model": model, "values": values, "output": output}
    study_obj = {
        "spectrum": lambda: pick(ex.SpectrumStudy),
        "alignment-sweep": lambda: pick(ex.AlignmentSweep),
        "gram-convergence": lambda: pick(ex.GramConvergence),
        "noise-sweep": lambda: pick(ex.NoiseSweep),
    }[study]()
    try:
        return ex.ExperimentConfig(model, study_obj, trials, seed, output)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


_VALUE_FLAGS = ("--z", "--x-min", "--x-max", "--eta", "--eta-grid", "--grid", "--weights")


def _glue_negative_values(argv):
    """Rewrite ``--z -1+2i`` as ``--z=-1+2i`` so argparse does not read the value
    as an option."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out, k = [], 0
    while k < len(argv):
        tok = argv[k]
        if tok in _VALUE_FLAGS and k + 1 < len(argv) and argv[k + 1].startswith("-"):
            out.append(f"{tok}={argv[k + 1]}")
            k += 2
        else:
            out.append(tok)
            k += 1
    return out


def parse_config(argv=None):
    """Parse command-line arguments (and any config file they name)."""
    args = build_parser().parse_args(_glue_negative_values(argv))
    values = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("command", "config", "threads")}
    for k, v in flags.items():
        values[k] = _convert(k, v, ALL_KEYS.get(k, str)) if isinstance(v, str) else v
    study = args.command
    if study == "run":
        study = values.get("study")
        if study is None:
            raise ConfigError("study: no study given (use a subcommand or study= in the config)")
    elif "study" in values and values["study"] != study:
        raise ConfigError(f"study: config says {values['study']!r} but subcommand is {study!r}")
    return build_config(study, values), args.threads


# output --------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return format_complex(obj)
    return obj


def _atomic_write(path: str, data: bytes):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(columns, rows) -> bytes:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_outputs(directory: str, files: dict, config_snapshot: dict, seed: int,
                  duration: float) -> dict:
    """Write each ``name -> bytes`` file, then the manifest (last, atomically)."""
    checksums = {}
    for name, data in files.items():
        path = os.path.join(directory, name)
        _atomic_write(path, data)
        checksums[name] = sha256_file(path)
    manifest = {"config": config_snapshot, "master_seed": seed, "version": __version__,
                "backend": BACKEND, "duration_seconds": duration, "checksums": checksums}
    _atomic_write(os.path.join(directory, "manifest.json"), json_bytes(manifest))
    return manifest


def verify_manifest(directory: str) -> list:
    """Names of files whose checksum no longer matches the manifest."""
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    return [name for name, digest in sorted(manifest["checksums"].items())
            if not os.path.isfile(os.path.join(directory, name))
            or sha256_file(os.path.join(directory, name)) != digest]


# dispatch ------------------------------------------------------------------------------

def _rmt_params(model: ModelParams, values: dict) -> rmt.RmtParams:
    c = values.get("c", model.c)
    return rmt.RmtParams(model.gamma_f, model.gamma_g, model.nu, float(c))


def _run_probe(cfg: dict, out) -> int:
    model, values = cfg["model"], cfg["values"]
    params = _rmt_params(model, values)
    if cfg["study"] == "fixed-point":
        if "z" not in values:
            raise ConfigError("z: fixed-point needs --z")
        sol = rmt.solve_fixed_point(values["z"], params)
        report = {"z": sol.z, "delta1": sol.delta1, "delta2": sol.delta2, "zeta": sol.zeta,
                  "residual": sol.residual, "iterations": sol.iterations}
        out.write(json_bytes(report).decode())
        return 0
    x_min, x_max = float(values.get("x_min", 0.0)), float(values.get("x_max", 4.0))
    points = int(values.get("points", 801))
    if not x_max > x_min or points < 2:
        raise ConfigError("x_min/x_max/points: need x_max > x_min and points >= 2")
    x = np.linspace(x_min, x_max, points)
    t0 = time.perf_counter()
    f = rmt.theoretical_density(x, values.get("epsilon"), params)
    files = {"density.csv": csv_bytes(("x", "f_theory"), zip(x, f))}
    snapshot = {"study": "density", "model": dataclasses.asdict(model),
                "rmt": dataclasses.asdict(params), "x_min": x_min, "x_max": x_max,
                "points": points, "epsilon": values.get("epsilon")}
    write_outputs(cfg["output"], files, snapshot, model.seed, time.perf_counter() - t0)
    return 0


def _files_for(config: ex.ExperimentConfig, outcome) -> dict:
    name = config.study_name
    if name == "spectrum":
        h = outcome.histogram
        rep = outcome.report
        report = {"metadata": outcome.result.metadata,
                  "summary": [dict(zip(outcome.result.columns, r)) for r in outcome.result.rows],
                  "total_variation": outcome.tv, "alignment": outcome.alignments,
                  "first_trial": {"top_eigenvalue": rep.eigenvalues[-1],
                                  "alignment": rep.alignment,
                                  "top_eigenvector": rep.top_eigenvector}}
        return {
            "density.csv": csv_bytes(("x", "f_theory"), zip(outcome.density_x, outcome.density_f)),
            "histogram.csv": csv_bytes(("bin_left", "bin_right", "mass"),
                                       zip(h.edges[:-1], h.edges[1:], h.masses)),
            "report.json": json_bytes(report),
        }
    csv_name = {"alignment-sweep": "alignment.csv", "gram-convergence": "gram_convergence.csv",
                "noise-sweep": "noise_sweep.csv"}[name]
    report = {"metadata": outcome.metadata, "config": config.as_dict()}
    return {csv_name: csv_bytes(outcome.columns, outcome.rows), "report.json": json_bytes(report)}


def run(config, threads: Optional[int] = None, out=None) -> int:
    out = out or sys.stdout
    if isinstance(config, dict):
        return _run_probe(config, out)
    t0 = time.perf_counter()
    outcome = ex.run(config, threads)
    files = _files_for(config, outcome)
    manifest = write_outputs(config.output, files, config.as_dict(), config.master_seed,
                             time.perf_counter() - t0)
    out.write(f"wrote {', '.join(sorted(manifest['checksums']))} to {config.output}\n")
    return 0


# argparse ------------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with [model]/[study]/[output] keys")
    g = p.add_argument_group("model")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--q", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--mu-norm", dest="mu_norm", type=float)
    g.add_argument("--class-balance", dest="class_balance", type=float)
    g.add_argument("--contrast", choices=("signed", "literal"))
    g.add_argument("--directed", action="store_const", const=True)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--output", dest="dir",
                   help=f"output directory (default ${OUTPUT_ENV} or runs/<study>)")
    p.add_argument("--threads", type=int, help="worker cap (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randgcn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the study named by study= in --config")
    _add_common(p)

    p = sub.add_parser("spectrum", help="eigenvalue histogram versus limiting density")
    _add_common(p)
    p.add_argument("--bins", type=int)

    p = sub.add_parser("alignment-sweep", help="label alignment across eta and strategies")
    _add_common(p)
    p.add_argument("--eta-grid", dest="eta_grid", help='e.g. "0:8:0.5" or "0,4,8"')
    p.add_argument("--strategies", help="comma list of " + ", ".join(ex.STRATEGIES))

    p = sub.add_parser("gram-convergence", help="Gram matrix versus its linearised equivalent")
    _add_common(p)
    p.add_argument("--d-grid", dest="d_grid")
    p.add_argument("--operator", choices=("A", "A+I", "A+PKP"))

    p = sub.add_parser("noise-sweep", help="readout accuracy under graph or feature noise")
    _add_common(p)
    p.add_argument("--scheme", choices=ex.SCHEMES)
    p.add_argument("--grid", help="perturbation ratios; counts round half away from zero")
    p.add_argument("--weights", help="alpha (theoretical) or beta values")
    p.add_argument("--dense-kernel", dest="sparsified", action="store_const", const=False)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lam", type=float)

    p = sub.add_parser("fixed-point", help="solve the fixed-point system at one z")
    _add_common(p)
    p.add_argument("--z", help='complex argument, e.g. "-1.0+0.001i"')
    p.add_argument("--c", type=float, help="p/n override")

    p = sub.add_parser("density", help="limiting spectral density on a grid")
    _add_common(p)
    p.add_argument("--c", type=float, help="p/n override")
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--x-max", dest="x_max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--epsilon", type=float)
    return parser


def main(argv=None) -> int:
    try:
        config, threads = parse_config(argv)
        if threads is not None and threads < 1:
            raise ConfigError("threads: must be >= 1")
        return run(config, threads)
    except ConfigError as exc:
        print(f"randgcn: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        where = type(exc).__module__.replace("randgcn.", "")
        print(f"randgcn: error [{where}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
