"""Command-line front end.

Every command accepts ``--config FILE`` with ``key = value`` lines (``#``
starts a comment); flags given on the command line override the file.
Exit status: 0 success, 1 internal failure (or a failed acceptance
criterion), 2 invalid configuration or input, 3 accuracy target not met.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings

import numpy as np

from . import __version__
from .errors import AccuracyError, DomainError, InvalidInputError, StabilityError, UnsupportedManifoldError

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_ACCURACY = 0, 1, 2, 3

# default spectral resolution when neither --cutoff nor --kmax is given
DEFAULT_MODES = {1: 1_000_000, 2: 200_000}
DEFAULT_SPHERE_KMAX = 8000


class ConfigError(InvalidInputError):
    pass


# --------------------------------------------------------------------------
# knobs


KNOBS = {
    "manifold": (str, "manifold, e.g. sphere:2:1, circle:2pi, torus:2pi,2pi, conformal:2pi,2pi:32:0.1"),
    "cutoff": (float, "spectral cutoff (largest eigenvalue listed)"),
    "kmax": (int, "highest sphere harmonic degree"),
    "count": (int, "number of eigenvalues for discretized spectra"),
    "mass": (float, "constant m^2 added to the Laplacian"),
    "order": (int, "heat-expansion order K"),
    "closed_form": (bool, "use closed-form heat coefficients from curvature"),
    "tol": (float, "accuracy target for the zeta continuation"),
    "s": (float, "zeta argument (convergent region or continuation)"),
    "scale": (float, "scale for the log-determinant"),
    "mu": (float, "renormalization scale for the effective action"),
    "times": (str, "flow times: comma list or start:stop:count"),
    "dt": (float, "time step of the conformal flow"),
    "steps": (int, "number of conformal-flow steps"),
    "eigs": (int, "eigenvalues per row in flow output"),
    "lam": (float, "upper scale Lambda"),
    "lam_prime": (float, "lower scale Lambda'"),
    "tau": (float, "step 2 ln(Lambda/Lambda'); alternative to lam_prime"),
    "grid": (int, "grid points per side"),
    "trials": (int, "number of random trials"),
    "components": (int, "number of target-space components"),
    "seed": (int, "random seed"),
    "beta": (str, "inverse temperatures: comma list or start:stop:count (log-spaced)"),
    "rho": (str, "radial grid: comma list or start:stop:count (linear)"),
    "lambda0": (float, "initial bulk eigenvalue"),
    "entropy_constant": (float, "proportionality constant between entropy and -F"),
    "a_charge": (float, "coefficient of the Euler density"),
    "c_charge": (float, "coefficient of the Weyl term"),
    "only": (str, "comma list of criterion numbers"),
    "out": (str, "output file (stdout when omitted)"),
    "format": (str, "csv or json"),
}

COMMANDS = {
    "spectrum": ("list eigenvalues and multiplicities", ["manifold", "cutoff", "kmax", "count", "mass"], "csv"),
    "heat": ("heat-kernel coefficients", ["manifold", "cutoff", "kmax", "count", "mass", "order", "closed_form"], "json"),
    "zeta": ("zeta(0), zeta'(0), determinant", ["manifold", "cutoff", "kmax", "mass", "order", "closed_form",
                                                "tol", "s", "scale", "mu"], "json"),
    "ricci": ("Ricci flow trajectory", ["manifold", "times", "dt", "steps", "eigs"], "csv"),
    "rg-step": ("RG eigenvalue step", ["manifold", "cutoff", "kmax", "mass", "order", "closed_form",
                                       "lam", "lam_prime", "tau"], "json"),
    "polyakov-check": ("discrete integration-by-parts identity", ["grid", "trials", "components", "seed"], "json"),
    "thermo": ("canonical thermodynamics", ["manifold", "cutoff", "kmax", "count", "mass", "beta"], "csv"),
    "holo": ("holographic eigenvalue trajectory", ["manifold", "cutoff", "kmax", "mass", "order", "closed_form",
                                                   "lambda0", "rho", "entropy_constant"], "csv"),
    "anomaly": ("curvature invariants and trace anomaly", ["manifold", "a_charge", "c_charge"], "json"),
    "acceptance": ("run the acceptance criteria", ["only"], "json"),
}

COMMON = ["out", "format"]


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, raw):
    typ = KNOBS[key][0]
    if typ is bool:
        return _parse_bool(raw)
    if typ is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    return typ(raw)


def read_config(path: str, allowed) -> dict:
    """Parse ``key = value`` lines; unknown keys and malformed lines are errors."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    for no, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{no}: expected key = value")
        if key not in allowed:
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        try:
            out[key] = _convert(key, value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{no}: bad value for {key}: {exc}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectralflow", description="Spectral geometry and RG flow toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (helptext, keys, _) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="key = value file; flags override it")
        for key in keys + COMMON:
            flag = "--" + key.replace("_", "-")
            if KNOBS[key][0] is bool:
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                                help=KNOBS[key][1])
            else:
                sp.add_argument(flag, dest=key, default=None, help=KNOBS[key][1])
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    keys = COMMANDS[args.command][1] + COMMON
    cfg = read_config(args.config, set(keys)) if args.config else {}
    for key in keys:
        raw = getattr(args, key)
        if raw is None:
            continue
        try:
            cfg[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
    fmt = cfg.get("format")
    if fmt is None:
        out = cfg.get("out") or ""
        fmt = "json" if out.endswith(".json") else "csv" if out.endswith(".csv") else COMMANDS[args.command][2]
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    cfg["format"] = fmt
    return cfg


def _grid(text: str, kind: str) -> np.ndarray:
    try:
        if ":" in text:
            a, b, n = text.split(":")
            a, b, n = float(a), float(b), int(n)
            if n < 1:
                raise ValueError("count must be positive")
            return np.geomspace(a, b, n) if kind == "log" else np.linspace(a, b, n)
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


# --------------------------------------------------------------------------
# commands


def _manifold(cfg):
    from .manifolds import parse_manifold

    if "manifold" not in cfg:
        raise ConfigError("missing required key 'manifold'")
    return parse_manifold(cfg["manifold"])


def _weyl_cutoff(spec, modes: int) -> float:
    from .manifolds import volume

    n = spec.dim
    # invert N(lam) ~ vol lam^(n/2) / ((4 pi)^(n/2) Gamma(n/2 + 1))
    c = volume(spec) / ((4 * math.pi) ** (n / 2) * math.gamma(n / 2 + 1))
    return (modes / c) ** (2 / n)


def _spectrum(cfg):
    from .manifolds import ConformalTorus, RoundSphere, spectrum_of

    spec = _manifold(cfg)
    cutoff, kmax, count = cfg.get("cutoff"), cfg.get("kmax"), cfg.get("count")
    if isinstance(spec, RoundSphere) and cutoff is None and kmax is None:
        kmax = DEFAULT_SPHERE_KMAX if spec.n <= 2 else DEFAULT_SPHERE_KMAX // 2
    elif isinstance(spec, ConformalTorus):
        count = 200 if count is None else count
    elif cutoff is None and kmax is None:
        cutoff = _weyl_cutoff(spec, DEFAULT_MODES.get(spec.dim, 200_000))
    sp = spectrum_of(spec, cutoff=cutoff, k_max=kmax, count=count)
    if cfg.get("mass"):
        sp = sp.shifted(cfg["mass"])
    return spec, sp


def _coefficients(cfg, spec, sp, default_order=None):
    from .heat import fit_heat_coefficients, seeley_dewitt
    from .manifolds import curvature_invariants

    if cfg.get("closed_form"):
        curv = curvature_invariants(spec)
        return seeley_dewitt(curv, E_const=-cfg.get("mass", 0.0))
    order = cfg.get("order", default_order if default_order is not None else sp.dim + 4)
    return fit_heat_coefficients(sp, order)


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def cmd_spectrum(cfg):
    _, sp = _spectrum(cfg)
    if cfg["format"] == "json":
        return _json({"dim": sp.dim, "zero_modes": sp.zero_modes, "source": sp.source, "cutoff": sp.cutoff,
                      "eigenvalues": sp.eigenvalues.tolist(), "multiplicities": sp.multiplicities.tolist()})
    return _csv((float(v), int(m)) for v, m in zip(sp.eigenvalues, sp.multiplicities))


def cmd_heat(cfg):
    spec, sp = _spectrum(cfg)
    c = _coefficients(cfg, spec, sp)
    if cfg["format"] == "json":
        return _json(c.to_dict())
    return _csv((k, float(v)) for k, v in sorted(c.coeffs.items()))


def cmd_zeta(cfg):
    from .zeta import effective_action, log_det, zeta_analytic, zeta_continued, zeta_value_bounded

    spec, sp = _spectrum(cfg)
    c = _coefficients(cfg, spec, sp, default_order=sp.dim + 4)
    order = min(cfg.get("order", c.order), c.order)
    zd = zeta_analytic(sp, c, order, tol=cfg.get("tol", 1e-6))
    scale, mu = cfg.get("scale", 1.0), cfg.get("mu", 1.0)
    extra = {"log_det": log_det(zd, scale), "scale": scale, "effective_action": effective_action(zd, mu), "mu": mu}
    if "s" in cfg:
        s = cfg["s"]
        if s > sp.dim / 2:
            val, err = zeta_value_bounded(sp, s)
        else:
            val, err = zeta_continued(sp, c, s, order)
        extra.update(s=s, zeta_s=val, zeta_s_error=err)
    if cfg["format"] == "csv":
        return zd.csv_row()
    d = zd.to_dict()
    d.update(extra)
    return _json(d)


def cmd_ricci(cfg):
    from .flow import conformal_flow_history, max_stable_dt, sphere_flow_trajectory
    from .manifolds import ConformalTorus, RoundSphere

    spec = _manifold(cfg)
    if isinstance(spec, RoundSphere):
        t_ext = spec.radius ** 2 / (2 * (spec.n - 1)) if spec.n > 1 else 1.0
        times = _grid(cfg.get("times", f"0:{0.9 * t_ext!r}:10"), "lin")
        rows = sphere_flow_trajectory(spec.n, spec.radius, times, cfg.get("eigs", 3))
        if cfg["format"] == "json":
            return _json({"family": "sphere", "n": spec.n, "rows": rows.tolist()})
        return _csv([float(x) for x in r] for r in rows)
    if isinstance(spec, ConformalTorus):
        dt = cfg.get("dt", 0.9 * max_stable_dt(spec.u, spec.lengths))
        hist = conformal_flow_history(spec.u, dt, cfg.get("steps", 1000), spec.lengths)
        cols = (hist["time"], hist["area"], hist["oscillation"])
        if cfg["format"] == "json":
            return _json({"family": "conformal_torus", "dt": dt, "time": cols[0].tolist(),
                          "area": cols[1].tolist(), "oscillation": cols[2].tolist()})
        return _csv(tuple(float(x) for x in r) for r in zip(*cols))
    raise UnsupportedManifoldError("ricci supports sphere and conformal manifolds")


def cmd_rg_step(cfg):
    from .flow import rg_eigenvalue_step

    spec, sp = _spectrum(cfg)
    c = _coefficients(cfg, spec, sp)
    if "lam" not in cfg:
        raise ConfigError("missing required key 'lam'")
    lam = cfg["lam"]
    if "lam_prime" in cfg:
        lam_p = cfg["lam_prime"]
    elif "tau" in cfg:
        lam_p = lam * math.exp(-cfg["tau"] / 2)
    else:
        raise ConfigError("give lam_prime or tau")
    r = rg_eigenvalue_step(sp, c, lam, lam_p)
    if cfg["format"] == "csv":
        d = r.to_dict()
        return _csv([list(d)]) + _csv([[float(v) for v in d.values()]])
    return _json(r.to_dict())


def cmd_polyakov_check(cfg):
    from .flow import polyakov_identity_check

    rng = np.random.default_rng(cfg.get("seed", 0))
    N, ncomp = cfg.get("grid", 32), cfg.get("components", 1)
    if ncomp < 1:
        raise ConfigError("components must be positive")
    worst = 0.0
    for _ in range(cfg.get("trials", 100)):
        phi = rng.normal(size=(ncomp, N, N))
        A = rng.normal(size=(ncomp, ncomp, N, N))
        g = 0.5 * (A + A.swapaxes(0, 1)) + 2 * ncomp * np.eye(ncomp)[:, :, None, None]
        worst = max(worst, polyakov_identity_check(phi, g).relative)
    res = {"trials": cfg.get("trials", 100), "grid": N, "components": ncomp, "max_relative_residual": worst,
           "passed": worst <= 1e-12}
    if cfg["format"] == "csv":
        return _csv([[res["trials"], N, ncomp, worst, int(res["passed"])]])
    return _json(res)


def cmd_thermo(cfg):
    from .thermo import thermo_profile

    _, sp = _spectrum(cfg)
    p = thermo_profile(sp, _grid(cfg.get("beta", "0.01:10:200"), "log"))
    return p.to_csv() if cfg["format"] == "csv" else p.to_json() + "\n"


def cmd_holo(cfg):
    from .thermo import holographic_flow
    from .zeta import zeta_analytic

    spec, sp = _spectrum(cfg)
    c = _coefficients(cfg, spec, sp)
    zd = zeta_analytic(sp, c, c.order)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        traj = holographic_flow(zd, cfg.get("lambda0", 0.0), _grid(cfg.get("rho", "0:1:11"), "lin"),
                                cfg.get("entropy_constant", 1.0))
    return traj.to_csv() if cfg["format"] == "csv" else traj.to_json() + "\n"


def cmd_anomaly(cfg):
    from .heat import anomaly_2d, anomaly_4d
    from .manifolds import curvature_invariants

    curv = curvature_invariants(_manifold(cfg))
    d = {k: v for k, v in curv.__dict__.items()}
    if curv.dim == 2:
        d["anomaly"] = anomaly_2d(curv)
    elif curv.dim == 4:
        d["anomaly"] = anomaly_4d(curv, cfg.get("a_charge", 1.0), cfg.get("c_charge", 0.0))
    if cfg["format"] == "csv":
        return _csv([list(d), [float(v) if isinstance(v, float) else v for v in d.values()]])
    return _json(d)


def cmd_acceptance(cfg):
    from .acceptance import run_acceptance, summary_json

    only = [int(x) for x in cfg["only"].split(",")] if cfg.get("only") else None
    if only and any(not 1 <= i <= 11 for i in only):
        raise ConfigError("criterion numbers run from 1 to 11")
    results = run_acceptance(only)
    for r in results:
        print(r.line(), file=sys.stderr)
    text = summary_json(results) + "\n"
    ok = all(r.passed for r in results)
    if cfg["format"] == "csv":
        text = _csv([r.number, int(r.passed), r.title] for r in results)
    return text, ok


HANDLERS = {
    "spectrum": cmd_spectrum, "heat": cmd_heat, "zeta": cmd_zeta, "ricci": cmd_ricci,
    "rg-step": cmd_rg_step, "polyakov-check": cmd_polyakov_check, "thermo": cmd_thermo,
    "holo": cmd_holo, "anomaly": cmd_anomaly, "acceptance": cmd_acceptance,
}


def _write(path: str | None, text: str) -> None:
    if not path:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".spectralflow-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _thread_limit():
    env = os.environ.get("SPECTRALFLOW_THREADS")
    if not env:
        return None
    try:
        n = int(env)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"SPECTRALFLOW_THREADS must be a positive integer, got {env!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        limiter = _thread_limit()
        try:
            result = HANDLERS[args.command](cfg)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
        ok = True
        if isinstance(result, tuple):
            result, ok = result
        _write(cfg.get("out"), result)
        return EXIT_OK if ok else EXIT_INTERNAL
    except AccuracyError as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except (InvalidInputError, DomainError, UnsupportedManifoldError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
