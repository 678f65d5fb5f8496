"""Command-line entry point: ``logspiral <subcommand> [options]``.

Settings come from built-in defaults, then an optional flat ``key = value``
config file (``--config``), then command-line flags.  Every run writes into
``--out-dir`` atomically and finishes with ``manifest.json``.

Exit codes: 0 ok, 2 configuration error, 3 numerical event (blow-up guard,
Dirac event, solver failure), 4 internal error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import re
import sys
import time
import traceback
from dataclasses import dataclass, field as _dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import artifacts
from .kernel import SpiralParams

logger = logging.getLogger("logspiral")

EXIT_OK, EXIT_CONFIG, EXIT_EVENT, EXIT_INTERNAL = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- value parsers ----------------------------------------------------------


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def parse_atoms(s: str) -> tuple[list, list]:
    """``"I:theta,I:theta,..."`` into intensity and angle lists."""
    I, th = [], []
    for item in str(s).replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise ValueError(f"atom {item!r} is not of the form I:theta")
        I.append(float(parts[0]))
        th.append(float(parts[1]))
    if not I:
        raise ValueError("no atoms given")
    return I, th


def parse_float_list(s: str) -> list:
    vals = [float(x) for x in str(s).replace(";", ",").split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def parse_beta_range(s: str) -> np.ndarray:
    """``"lo:hi:count"``, log-spaced."""
    parts = str(s).split(":")
    if len(parts) != 3:
        raise ValueError("beta_range must look like lo:hi:count")
    lo, hi, cnt = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < lo < hi) or cnt < 2:
        raise ValueError("beta_range needs 0 < lo < hi and count >= 2")
    return np.geomspace(lo, hi, cnt)


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_initial(s: str) -> tuple[str, list]:
    m = _CALL.match(str(s))
    if not m:
        raise ValueError(f"cannot parse initial condition {s!r}")
    name, args = m.group(1), m.group(2)
    known = ("constant", "cosine", "indicator", "mollified_dirac", "from_csv", "random")
    if name not in known:
        raise ValueError(f"unknown initial condition {name!r}; choose from {known}")
    if name == "from_csv":
        if not args:
            raise ValueError("from_csv needs a path: from_csv(path)")
        return name, [args.strip().strip("'\"")]
    if name == "mollified_dirac":
        # inline form mollified_dirac(I:theta;I:theta, epsilon); keys otherwise
        if not args or not args.strip():
            return name, []
        head, _, tail = args.rpartition(",")
        if not head or ":" in tail:
            raise ValueError("mollified_dirac takes (I:theta;I:theta..., epsilon)")
        parse_atoms(head)
        return name, [head.strip(), float(tail)]
    vals = [float(a) for a in args.split(",")] if args and args.strip() else []
    arity = {"constant": (1, 1), "cosine": (0, 2), "indicator": (2, 2), "random": (0, 1)}
    lo, hi = arity[name]
    if not lo <= len(vals) <= hi:
        raise ValueError(f"{name} takes between {lo} and {hi} arguments")
    return name, vals


# -- schemas ----------------------------------------------------------------


@dataclass
class Opt:
    parse: Callable
    default: object = None
    help: str = ""
    flag_only: bool = False  # store_true style switch


COMMON = {
    "seed": Opt(int, 0, "seed for randomised ensembles"),
    "out_dir": Opt(str, "out", "output directory"),
    "threads": Opt(int, 1, "worker threads for independent runs"),
}

FIELD_OPTS = {
    "beta": Opt(float, None, "spiral pitch (nonzero)"),
    "m": Opt(int, 1, "fold symmetry"),
}

INITIAL_OPTS = {
    "n": Opt(int, 512, "grid size (power of two)"),
    "initial": Opt(str, "cosine", "constant(c) | cosine[(k[,amp])] | indicator(a,b) | "
                   "mollified_dirac | from_csv(path) | random[(kmax)]"),
    "atoms": Opt(str, None, "atoms I:theta,... (mollified_dirac)"),
    "epsilon": Opt(float, None, "mollifier half-width (mollified_dirac)"),
    "shape": Opt(str, "patch", "patch | smooth_bump"),
}

SCHEMAS = {
    "kernel": {
        **FIELD_OPTS,
        "samples": Opt(int, 1000, "number of sample angles"),
        "out": Opt(str, "kernel.csv", "CSV file name inside out_dir"),
    },
    "evolve": {
        **FIELD_OPTS,
        **INITIAL_OPTS,
        "method": Opt(str, "semi_lagrangian", "semi_lagrangian | spectral_rk4"),
        "limiter": Opt(str, "global", "global | local | none"),
        "t_end": Opt(float, 1.0, "final time"),
        "cfl": Opt(float, 0.5, "Courant number"),
        "dt": Opt(float, None, "cap on the adaptive step"),
        "record_every": Opt(float, 0.0, "output cadence (0 = every step)"),
        "guard_factor": Opt(float, 50.0, "L1 time-integral guard factor"),
        "snapshots": Opt(_bool, False, "write every recorded state", flag_only=True),
    },
    "dirac": {
        **FIELD_OPTS,
        "atoms": Opt(str, None, "atoms I:theta,..."),
        "t_end": Opt(float, 1.0, "final time"),
        "rtol": Opt(float, 1e-10, "relative tolerance"),
        "samples": Opt(int, 201, "output rows"),
        "ensemble": Opt(int, 0, "random ensemble size (uses the seed)"),
        "n_atoms": Opt(int, 3, "atoms per ensemble member"),
    },
    "selfsimilar": {
        "beta": Opt(float, None, "spiral pitch"),
        "beta_range": Opt(str, None, "lo:hi:count, log-spaced"),
        "M": Opt(int, 2, "number of branches"),
        "scan": Opt(_bool, False, "bifurcation scan over beta_range", flag_only=True),
        "n_seeds": Opt(int, 2000, "bracketing grid size"),
    },
    "sheetlimit": {
        **FIELD_OPTS,
        "atoms": Opt(str, None, "atoms I:theta,..."),
        "eps_list": Opt(str, "0.1,0.05,0.025", "decreasing epsilons"),
        "t_end": Opt(float, 0.5, "final time"),
        "shape": Opt(str, "smooth_bump", "patch | smooth_bump"),
        "method": Opt(str, "spectral_rk4", "semi_lagrangian | spectral_rk4"),
        "samples": Opt(int, 11, "sample times"),
        "n": Opt(int, None, "grid size (default: smallest power of two >= 64/eps)"),
    },
    "reconstruct": {
        **FIELD_OPTS,
        **INITIAL_OPTS,
        "r_min": Opt(float, 0.1, "inner radius (> 0)"),
        "r_max": Opt(float, 10.0, "outer radius"),
        "n_r": Opt(int, 64, "radial samples (log-uniform)"),
        "n_theta": Opt(int, 128, "angular samples"),
        "fields": Opt(str, "omega,u_r,u_theta,psi", "comma-separated subset"),
        "format": Opt(str, "csv", "csv | binary"),
    },
}


@dataclass
class ExperimentConfig:
    subcommand: str
    settings: dict
    seed: int = 0
    out_dir: Path = Path("out")
    threads: int = 1
    extras: dict = _dc_field(default_factory=dict)  # parsed derived values

    def echo(self) -> dict:
        return {k: v for k, v in sorted(self.settings.items())}


# -- parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logspiral", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="flat key = value file; flags override it")
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        for key, opt in {**COMMON, **schema}.items():
            flag = "--" + key.replace("_", "-")
            if opt.flag_only:
                sp.add_argument(flag, dest=key, action="store_const", const="true", default=None, help=opt.help)
            else:
                sp.add_argument(flag, dest=key, default=None, help=opt.help)
    return parser


def _read_config_file(path: str, subcommand: str) -> dict:
    text = Path(path).read_text()
    if not re.search(r"^\s*\[", text, flags=re.M):
        text = "[config]\n" + text
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    out = dict(cp.defaults())
    for section in cp.sections():
        if section in ("config", subcommand):
            out.update({k: v for k, v in cp.items(section)})
    return out


def _validate(sub: str, s: dict, extras: dict, errors: list):
    def check(key, fn):
        try:
            fn()
        except (ValueError, TypeError) as exc:
            errors.append(f"{key}: {exc}")

    if "beta" in SCHEMAS[sub] and sub != "selfsimilar":
        if s.get("beta") is None:
            errors.append("beta: required")
        else:
            check("beta", lambda: extras.__setitem__("params", SpiralParams(s["beta"], s.get("m", 1))))

    if sub == "kernel":
        if s["samples"] < 1:
            errors.append("samples: must be >= 1")

    if sub in ("evolve", "reconstruct"):
        n = s["n"]
        if n < 16 or n & (n - 1):
            errors.append(f"n: grid size must be a power of two >= 16, got {n}")
        check("initial", lambda: extras.__setitem__("initial", parse_initial(s["initial"])))
        if s["shape"] not in ("patch", "smooth_bump"):
            errors.append("shape: must be patch or smooth_bump")
        init = extras.get("initial")
        if init and init[0] == "mollified_dirac":
            if init[1]:
                s["atoms"], s["epsilon"] = init[1]
            if s.get("atoms") is None:
                errors.append("atoms: required for mollified_dirac")
            else:
                check("atoms", lambda: extras.__setitem__("atoms", parse_atoms(s["atoms"])))
            eps = s.get("epsilon")
            if eps is None or not eps > 0:
                errors.append("epsilon: a positive epsilon is required for mollified_dirac")
            elif n < 64.0 / eps:
                errors.append(f"n: resolution guard violated, n={n} < 64/epsilon={64.0 / eps:.6g}")

    if sub == "evolve":
        from .transport import EvolutionConfig

        check("t_end", lambda: EvolutionConfig(
            t_end=s["t_end"], dt=s["dt"], cfl=s["cfl"], record_every=s["record_every"],
            method=s["method"], limiter=s["limiter"], guard_factor=s["guard_factor"]))

    if sub in ("dirac", "sheetlimit"):
        if s.get("atoms") is None:
            if not (sub == "dirac" and s.get("ensemble", 0) > 0):
                errors.append("atoms: required")
        else:
            check("atoms", lambda: extras.__setitem__("atoms", parse_atoms(s["atoms"])))
        if not s["t_end"] > 0:
            errors.append("t_end: must be positive")

    if sub == "dirac":
        if not 0 < s["rtol"] < 1:
            errors.append("rtol: must lie in (0, 1)")
        if s["samples"] < 2:
            errors.append("samples: must be >= 2")
        if s["ensemble"] < 0 or s["n_atoms"] < 1:
            errors.append("ensemble/n_atoms: must be non-negative / positive")

    if sub == "selfsimilar":
        if s["M"] < 1:
            errors.append("M: must be >= 1")
        if s["scan"]:
            check("beta_range", lambda: extras.__setitem__(
                "betas", parse_beta_range(s["beta_range"] or "1e-3:1e3:61")))
        elif s.get("beta") is None:
            errors.append("beta: required unless --scan is given")
        else:
            check("beta", lambda: SpiralParams(s["beta"], 1))

    if sub == "sheetlimit":
        check("eps_list", lambda: extras.__setitem__("eps", parse_float_list(s["eps_list"])))
        eps = extras.get("eps")
        if eps:
            if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
                errors.append("eps_list: must be positive and strictly decreasing")
            if s["n"] is not None:
                bad = [e for e in eps if s["n"] < 64.0 / e]
                if bad:
                    errors.append(f"n: resolution guard violated, n={s['n']} < 64/epsilon for epsilon={bad}")
        if s["shape"] not in ("patch", "smooth_bump"):
            errors.append("shape: must be patch or smooth_bump")
        if s["method"] not in ("semi_lagrangian", "spectral_rk4"):
            errors.append("method: must be semi_lagrangian or spectral_rk4")
        if s["samples"] < 2:
            errors.append("samples: must be >= 2")

    if sub == "reconstruct":
        if not (0 < s["r_min"] < s["r_max"]):
            errors.append("r_min: need 0 < r_min < r_max")
        names = [f.strip() for f in s["fields"].split(",") if f.strip()]
        bad = set(names) - {"omega", "u_r", "u_theta", "psi"}
        if bad or not names:
            errors.append(f"fields: unknown or empty field list {sorted(bad)}")
        extras["fields"] = names
        if s["format"] not in ("csv", "binary"):
            errors.append("format: must be csv or binary")
        if s["n_r"] < 2 or s["n_theta"] < 1:
            errors.append("n_r/n_theta: need n_r >= 2, n_theta >= 1")

    if s.get("threads", 1) < 1:
        errors.append("threads: must be >= 1")
    if s.get("seed", 0) < 0:
        errors.append("seed: must be an unsigned integer")


_NEG_VALUE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv: list) -> list:
    """Turn ``--key -1:0`` into ``--key=-1:0`` so argparse accepts it."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "=" not in a and i + 1 < len(argv) and _NEG_VALUE.match(argv[i + 1]):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def parse_and_validate(argv=None) -> ExperimentConfig:
    """Parse flags and the optional config file into a validated config.

    Raises
    ------
    ConfigError
        With one human-readable message per offending key.
    """
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    ns = vars(parser.parse_args(_attach_negative_values(argv)))
    sub = ns.pop("subcommand")
    schema = {**COMMON, **SCHEMAS[sub]}
    errors = []
    raw = {}
    if ns.get("config"):
        try:
            file_vals = _read_config_file(ns["config"], sub)
        except (OSError, configparser.Error) as exc:
            raise ConfigError([f"config: cannot read {ns['config']!r}: {exc}"])
        for k, v in file_vals.items():
            key = k.replace("-", "_")
            if key not in schema:
                errors.append(f"{k}: unknown key for {sub}")
            else:
                raw[key] = v
    for key in schema:
        if ns.get(key) is not None:
            raw[key] = ns[key]

    settings = {}
    for key, opt in schema.items():
        if key in raw:
            try:
                settings[key] = opt.parse(raw[key])
            except (ValueError, TypeError):
                errors.append(f"{key}: expected {getattr(opt.parse, '__name__', 'value')}, got {raw[key]!r}")
        else:
            settings[key] = opt.default
    extras = {}
    if not errors:
        _validate(sub, settings, extras, errors)
    if errors:
        raise ConfigError(errors)
    seed = settings.pop("seed")
    out_dir = Path(settings.pop("out_dir"))
    threads = settings.pop("threads")
    return ExperimentConfig(sub, settings, seed, out_dir, threads, extras)


# -- runners ----------------------------------------------------------------


@dataclass
class RunResult:
    outputs: list
    outcome: str = "ok"
    exit_code: int = EXIT_OK


def build_initial(cfg: ExperimentConfig, params: SpiralParams):
    from .dirac import DiracConfig
    from .field import AngularField
    from .sheet_limit import MollifierSpec, mollify

    s = cfg.settings
    n = s["n"]
    name, args = cfg.extras["initial"]
    if name == "constant":
        return AngularField.constant(params, n, args[0])
    if name == "cosine":
        k = int(args[0]) if args else 1
        amp = args[1] if len(args) > 1 else 1.0
        return AngularField.from_function(params, n, lambda t: amp * np.cos(params.m * k * t))
    if name == "indicator":
        a, b = args
        P = params.period
        dx = P / n
        left = np.arange(n) * dx - 0.5 * dx
        # cell average of the indicator of [a, b] (periodic, lengths below P)
        length = (b - a) % P if b != a else 0.0
        cover = np.zeros(n)
        for shift in (-P, 0.0, P):
            lo = np.clip(a + shift, left, left + dx)
            hi = np.clip(a + length + shift, left, left + dx)
            cover += np.maximum(hi - lo, 0.0)
        return AngularField(params, cover / dx)
    if name == "mollified_dirac":
        I, th = cfg.extras["atoms"]
        return mollify(DiracConfig(params, I, th), MollifierSpec(s["shape"], s["epsilon"]), n)
    if name == "from_csv":
        data = np.loadtxt(args[0], delimiter=",", comments="#", skiprows=1, ndmin=2)
        vals = data[:, 1] if data.shape[1] > 1 else data[:, 0]
        return AngularField(params, vals)
    if name == "random":
        kmax = int(args[0]) if args else 4
        rng = np.random.default_rng(cfg.seed)
        a = rng.normal(size=kmax + 1)
        b = rng.normal(size=kmax + 1)
        theta = np.arange(n) * params.period / n
        vals = a[0] + sum(
            (a[k] * np.cos(params.m * k * theta) + b[k] * np.sin(params.m * k * theta)) / k
            for k in range(1, kmax + 1)
        )
        return AngularField(params, vals)
    raise ValueError(name)  # pragma: no cover - rejected during validation


def run_kernel(cfg: ExperimentConfig, rid: str) -> RunResult:
    from .kernel import kernel_deriv, kernel_deriv_limits, kernel_eval, kernel_identities, kernel_boundary

    p = cfg.extras["params"]
    s = cfg.settings
    N = s["samples"]
    theta = (np.arange(N) + 0.5) * (p.period / N)
    table = np.column_stack([theta, kernel_eval(p, theta), kernel_deriv(p, theta)])
    out_csv = cfg.out_dir / s["out"]
    artifacts.write_csv(out_csv, ["theta", "K", "Kprime"], table, rid)
    bd = kernel_boundary(p)
    lo, hi = kernel_deriv_limits(p)
    ident = kernel_identities(p)
    side = out_csv.with_suffix(".json")
    artifacts.write_json(side, {
        "beta": p.beta, "m": p.m,
        "k0": bd.k0, "kp0": bd.kp0, "jump": bd.jump,
        "kp0_minus": lo, "kp0_plus": hi,
        "identity_residuals": {
            "energy": ident["energy"],
            "energy_printed_form": ident["energy_printed"],
            "kp0": ident["kp0"],
            "kpa": ident["kpa"],
        },
    }, rid)
    return RunResult([out_csv, side])


def run_evolve(cfg: ExperimentConfig, rid: str) -> RunResult:
    from .field import field_table
    from .transport import EvolutionConfig, NonFiniteStateError, classify_longtime, run

    s = cfg.settings
    p = cfg.extras["params"]
    h0 = build_initial(cfg, p)
    ecfg = EvolutionConfig(
        t_end=s["t_end"], dt=s["dt"], cfl=s["cfl"], record_every=s["record_every"],
        method=s["method"], limiter=s["limiter"], guard_factor=s["guard_factor"],
        keep_states=bool(s["snapshots"]),
    )
    error = None
    try:
        traj = run(h0, ecfg)
    except NonFiniteStateError as exc:
        traj, error = exc.trajectory, str(exc)
    outputs = []
    header = ["time", "intensity", "dissipation", "L1", "L2", "Linf", "l1_time_integral", "hprime_sup"]
    rows = [
        [t, d.intensity, d.dissipation, d.lp(1), d.lp(2), d.lp(np.inf), d.l1_time_integral, hs]
        for t, d, hs in zip(traj.times, traj.diag, traj.hp_sup)
    ]
    outputs.append(artifacts.write_csv(cfg.out_dir / "trajectory.csv", header, rows, rid))
    outputs.append(artifacts.write_csv(
        cfg.out_dir / "final_state.csv", ["theta", "h", "H", "Hprime"], field_table(traj.states[-1]), rid))
    if s["snapshots"]:
        for i, (t, st) in enumerate(zip(traj.times, traj.states)):
            outputs.append(artifacts.write_csv(
                cfg.out_dir / "snapshots" / f"state_{i:05d}.csv", ["theta", "h", "H", "Hprime"],
                field_table(st), rid))
    cls = classify_longtime(traj) if error is None else None
    summary = {
        "outcome": traj.outcome, "reason": error or traj.reason, "steps": traj.steps,
        "t_final": traj.times[-1], "intensity_final": traj.diag[-1].intensity,
        "classification": None if cls is None else {"kind": cls.kind, "I_plus": cls.I_plus, "residual": cls.residual},
    }
    outputs.append(artifacts.write_json(cfg.out_dir / "evolve.json", summary, rid))
    code = EXIT_EVENT if traj.outcome == "blowup_suspected" else EXIT_OK
    return RunResult(outputs, traj.outcome, code)


def run_dirac(cfg: ExperimentConfig, rid: str) -> RunResult:
    from .dirac import DiracConfig, integrate, random_config, total_intensity_rate

    s = cfg.settings
    p = cfg.extras["params"]
    outputs = []
    if s["ensemble"] > 0:
        rng = np.random.default_rng(cfg.seed)
        cfgs = [random_config(rng, p, s["n_atoms"]) for _ in range(s["ensemble"])]

        def job(c):
            return integrate(c, s["t_end"], rtol=s["rtol"])

        if cfg.threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(cfg.threads) as ex:
                trajs = list(ex.map(job, cfgs))
        else:
            trajs = [job(c) for c in cfgs]
        rows = []
        for i, (c, tr) in enumerate(zip(cfgs, trajs)):
            ev = tr.event
            rows.append([i, c.total_intensity, bool(np.all(p.beta * c.intensities > 0)),
                         ev.kind if ev else "none", ev.time if ev else tr.t[-1],
                         (ev.blowup_time if ev and ev.blowup_time is not None else float("nan")),
                         tr.total_intensity[-1]])
        outputs.append(artifacts.write_csv(
            cfg.out_dir / "ensemble.csv",
            ["member", "sumI0", "all_same_sign", "event", "t_stop", "blowup_time", "sumI_final"], rows, rid))
        nonpos = [r for r in rows if p.beta * r[1] <= 0]
        summary = {
            "members": len(rows),
            "nonpositive_members": len(nonpos),
            "nonpositive_blowups": sum(r[3] in ("blowup", "overflow") for r in nonpos),
            "events": {k: sum(r[3] == k for r in rows) for k in ("none", "blowup", "overflow", "collision", "stiff")},
        }
        outputs.append(artifacts.write_json(cfg.out_dir / "ensemble.json", summary, rid))
        return RunResult(outputs)

    I, th = cfg.extras["atoms"]
    c0 = DiracConfig(p, I, th)
    tr = integrate(c0, s["t_end"], rtol=s["rtol"])
    ts = np.linspace(0.0, tr.t[-1], s["samples"])
    Is, ths = tr.at(ts)
    n = c0.size
    header = ["t"] + [f"I_{j}" for j in range(n)] + [f"theta_{j}" for j in range(n)] + ["sumI", "rate_ode", "rate_identity"]
    rows = []
    for k, t in enumerate(ts):
        ck = DiracConfig(p, Is[:, k], ths[:, k]) if n == 1 or _distinct(p, ths[:, k]) else None
        rate = total_intensity_rate(ck, quadrature=False) if ck is not None else None
        rows.append([t, *Is[:, k], *ths[:, k], p.m * float(np.sum(Is[:, k])),
                     rate.ode if rate else float("nan"), rate.identity if rate else float("nan")])
    outputs.append(artifacts.write_csv(cfg.out_dir / "dirac.csv", header, rows, rid))
    ev = tr.event
    outputs.append(artifacts.write_json(cfg.out_dir / "event.json", {
        "event": None if ev is None else {"kind": ev.kind, "time": ev.time, "blowup_time": ev.blowup_time,
                                          "detail": ev.detail},
        "t_final": tr.t[-1],
    }, rid))
    if ev is None:
        return RunResult(outputs)
    return RunResult(outputs, ev.kind, EXIT_EVENT)


def _distinct(p, th) -> bool:
    from .dirac import min_gap

    return min_gap(p, th) > 0


def run_selfsimilar(cfg: ExperimentConfig, rid: str) -> RunResult:
    from . import selfsimilar as ss

    s = cfg.settings
    outputs = []
    if s["scan"]:
        rep = ss.bifurcation_scan(cfg.extras["betas"], n_seeds=s["n_seeds"], workers=cfg.threads)
        rows = [[r.beta, r.n_roots, r.d_root, r.A1, r.A2, r.residual] for r in rep.rows]
        outputs.append(artifacts.write_csv(
            cfg.out_dir / "branch.csv", ["beta", "n_roots", "d_root", "A1", "A2", "residual"], rows, rid))
        outputs.append(artifacts.write_json(cfg.out_dir / "selfsimilar.json",
                                            {"beta0_est": rep.beta0_est, "beta1_est": rep.beta1_est}, rid))
        return RunResult(outputs)
    p = SpiralParams(s["beta"], 1)
    M = s["M"]
    g, mu = ss.prandtl_parameters(p)
    summary = {"beta": p.beta, "M": M, "prandtl": {"g": g, "mu": mu}}
    code = EXIT_OK
    if M == 2:
        roots = ss.find_roots(p, n_seeds=s["n_seeds"], include_pi=True)
        rows = [[r.d, r.A1, r.A2, abs(r.F)] for r in roots]
        outputs.append(artifacts.write_csv(cfg.out_dir / "roots.csv", ["d_root", "A1", "A2", "residual"], rows, rid))
        summary["interior_roots"] = sum(r.d < np.pi for r in roots)
    if M >= 2:
        # asymmetric seed first, then the equally spaced configuration
        for seed in (np.arange(M) * np.pi / M, np.arange(M) * 2 * np.pi / M):
            sol = ss.solve_general_m(p, seed)
            if sol.converged:
                break
        rows = [[j, a, t] for j, (a, t) in enumerate(zip(sol.amplitudes, sol.positions))]
        outputs.append(artifacts.write_csv(cfg.out_dir / "solution.csv", ["j", "A", "theta"], rows, rid))
        summary["newton"] = {
            "converged": sol.converged, "singular": sol.singular, "iterations": sol.iterations,
            "residual_norm": sol.residual_norm, "mu": sol.mu,
            "max_growth_exponent": float(np.max(ss.similarity_exponents(sol).real)),
        }
        if not sol.converged:
            code = EXIT_EVENT
    outputs.append(artifacts.write_json(cfg.out_dir / "selfsimilar.json", summary, rid))
    return RunResult(outputs, "ok" if code == EXIT_OK else "newton_failed", code)


def run_sheetlimit(cfg: ExperimentConfig, rid: str) -> RunResult:
    from .dirac import DiracConfig
    from .sheet_limit import convergence_study

    s = cfg.settings
    p = cfg.extras["params"]
    I, th = cfg.extras["atoms"]
    rep = convergence_study(
        DiracConfig(p, I, th), cfg.extras["eps"], s["t_end"], shape=s["shape"],
        n_samples=s["samples"], method=s["method"], n=s["n"], workers=cfg.threads,
    )
    rows = []
    for r in rep.results:
        for t, ea, ei in r.table():
            rows.append([r.epsilon, r.n, t, ea, ei])
    outputs = [artifacts.write_csv(
        cfg.out_dir / "errors.csv", ["epsilon", "n", "t", "angle_error", "intensity_error"], rows, rid)]
    outputs.append(artifacts.write_json(cfg.out_dir / "rates.json", {
        "angle": {"order": rep.angle_rate.order, "constant": rep.angle_rate.constant, "r2": rep.angle_rate.r2},
        "intensity": {"order": rep.intensity_rate.order, "constant": rep.intensity_rate.constant,
                      "r2": rep.intensity_rate.r2},
        "monotone": rep.monotone,
        "per_epsilon": [{"epsilon": r.epsilon, "n": r.n, "angle_error": r.angle_error,
                         "intensity_error": r.intensity_error, "max_edge_fraction": r.max_edge_fraction,
                         "mass_mismatch": r.mass_mismatch} for r in rep.results],
    }, rid))
    return RunResult(outputs)


def run_reconstruct(cfg: ExperimentConfig, rid: str) -> RunResult:
    from .dirac import DiracConfig
    from .reconstruct import plane_checks, pressure_profile, sample_plane, spiral_support_curves

    s = cfg.settings
    p = cfg.extras["params"]
    h = build_initial(cfg, p)
    names = cfg.extras["fields"]
    grid = sample_plane(h, s["r_min"], s["r_max"], s["n_r"], s["n_theta"], names, workers=cfg.threads)
    outputs = []
    if s["format"] == "csv":
        header, table = grid.table(names)
        outputs.append(artifacts.write_csv(cfg.out_dir / "plane.csv", header, table, rid))
    else:
        data = np.stack([grid.values[n] for n in names]).astype("<f8")
        outputs.append(artifacts.atomic_write_bytes(cfg.out_dir / "plane.bin", data.tobytes(order="C")))
        outputs.append(artifacts.write_json(cfg.out_dir / "plane.json", {
            "dimensions": {"fields": len(names), "n_r": grid.n_r, "n_theta": grid.n_theta},
            "layout": "C order [field][r][theta]",
            "fields": names, "dtype": "little-endian float64",
            "r": {"min": grid.r_min, "max": grid.r_max, "spacing": "log-uniform"},
            "theta": {"min": 0.0, "max_exclusive": 2 * np.pi, "spacing": "uniform"},
        }, rid))
    P = pressure_profile(h)
    outputs.append(artifacts.write_csv(cfg.out_dir / "pressure.csv", ["theta", "P"],
                                       np.column_stack([h.theta, P.values]), rid))
    rr = np.geomspace(s["r_min"], s["r_max"], 16)
    tt = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    R, T = np.meshgrid(rr, tt, indexing="ij")
    chk = plane_checks(h, R.ravel(), T.ravel())
    outputs.append(artifacts.write_json(cfg.out_dir / "reconstruct.json", {
        "divergence_residual": chk.divergence, "vorticity_residual": chk.vorticity,
    }, rid))
    if cfg.extras.get("atoms"):
        I, th = cfg.extras["atoms"]
        rows = []
        for c in spiral_support_curves(DiracConfig(p, I, th), (s["r_min"], s["r_max"])):
            for (x, y), r, t in zip(c.xy, c.r, c.theta):
                rows.append([c.atom, c.copy, r, t, x, y])
        outputs.append(artifacts.write_csv(cfg.out_dir / "spirals.csv",
                                           ["atom", "copy", "r", "theta", "x", "y"], rows, rid))
    return RunResult(outputs)


RUNNERS = {
    "kernel": run_kernel,
    "evolve": run_evolve,
    "dirac": run_dirac,
    "selfsimilar": run_selfsimilar,
    "sheetlimit": run_sheetlimit,
    "reconstruct": run_reconstruct,
}


def dispatch(cfg: ExperimentConfig) -> int:
    """Run the experiment, write its artifacts and the manifest; return the exit code."""
    rid = artifacts.run_id(cfg.subcommand, cfg.echo(), cfg.seed)
    t0 = time.perf_counter()
    try:
        res = RUNNERS[cfg.subcommand](cfg, rid)
    except (ValueError, RuntimeError, FloatingPointError, ArithmeticError) as exc:
        logger.error("%s failed: %s", cfg.subcommand, exc)
        res = RunResult([], f"error: {exc}", EXIT_EVENT)
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        logger.error("internal error: %s\n%s", exc, traceback.format_exc())
        res = RunResult([], f"internal error: {exc}", EXIT_INTERNAL)
    artifacts.write_manifest(cfg.out_dir, rid, cfg.subcommand, cfg.echo(), cfg.seed, res.outputs,
                             res.outcome, res.exit_code, time.perf_counter() - t0)
    return res.exit_code


def main(argv: Optional[list] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_and_validate(argv)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    return dispatch(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
