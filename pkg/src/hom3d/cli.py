"""Command-line interface: ``hom3d {sample,estimate,fisher,qfi,sweep,fit,verify}``.

Exit codes: 0 success, 2 invalid input, 3 estimator did not converge,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import BatchFormatError, DomainError, QuadratureError
from .experiments import PARAMS, SweepRow, SweepSpec, SweepTable, fit_crb_correction, run_sweep
from .fisher import (
    fisher_cartesian,
    fisher_cartesian_inverse_diag,
    fisher_known_nuisance,
    fisher_single_param,
    fisher_spherical,
    qfi,
    qfi_moment_check,
)
from .geometry import (
    SphericalMomentum,
    covariance_from_config,
    delta_k_vector,
    kappa_from_momentum,
    spherical_from_kappa,
)
from .mle import DEFAULT_KAPPA_MAX, estimate_1d, estimate_3d
from .model import SensingConfig, effective_distinguishability
from .sampler import EventBatch, sample_batch

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_VERIFY = 4

DEFAULT_N_VALUES = (200, 500, 1000, 2000, 5000)


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    sensing: SensingConfig
    seed: int = 0
    sweep: SweepSpec | None = None
    resolution: float | None = None
    out: str | None = None

    @classmethod
    def from_mapping(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise InputError("config must be a mapping")
        s = d.get("sensing", {})
        kappa = _kappa_from_sensing(s)
        sensing = SensingConfig(nu=float(s.get("nu", 1.0)), gamma=float(s.get("gamma", 1.0)), kappa=kappa)
        seed = int(d.get("seed", 0))
        sweep = None
        if "sweep" in d and d["sweep"] is not None:
            sw = d["sweep"]
            sweep = SweepSpec(
                config=sensing,
                n_values=tuple(sw.get("n_values", DEFAULT_N_VALUES)),
                replicates=int(sw.get("replicates", 10_000)),
                master_seed=int(sw.get("master_seed", seed)),
                resolution=sw.get("resolution", d.get("resolution")),
                multistart=bool(sw.get("multistart", False)),
                kappa_max=float(sw.get("kappa_max", DEFAULT_KAPPA_MAX)),
            )
        out = d.get("output", {}).get("path") if isinstance(d.get("output"), dict) else d.get("output")
        return cls(sensing, seed, sweep, d.get("resolution"), out)

    @classmethod
    def load(cls, path: str) -> ExperimentConfig:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise InputError(f"config {path} is not valid YAML: {exc}") from None
        return cls.from_mapping(data or {})


def _kappa_from_sensing(s: dict) -> np.ndarray:
    given = [k for k in ("kappa", "spherical", "delta_k") if k in s]
    if len(given) != 1:
        raise InputError("sensing needs exactly one of kappa, spherical or (sigma, delta_k)")
    if "kappa" in s:
        return np.asarray(s["kappa"], dtype=float).reshape(3)
    if "spherical" in s:
        return SphericalMomentum(*map(float, s["spherical"])).kappa()
    if "sigma" not in s:
        raise InputError("delta_k needs a sigma entry (9 row-major values or sigma_x/sigma_y/sigma_t)")
    sigma = covariance_from_config(s["sigma"])
    dk = delta_k_vector(*map(float, s["delta_k"]))
    return kappa_from_momentum(sigma, dk)


def _triple(text: str, name: str) -> np.ndarray:
    try:
        vals = [float(eval_angle(v)) for v in text.split(",")]
    except ValueError:
        raise InputError(f"--{name} expects three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise InputError(f"--{name} expects three comma-separated numbers, got {text!r}")
    return np.array(vals)


def eval_angle(token: str) -> float:
    """Parse a number, allowing 'pi' multiples such as 'pi/4' or '2*pi/3'."""
    t = token.strip().lower().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    factor = num.replace("pi", "").rstrip("*") or "1"
    if factor == "-":
        factor = "-1"
    value = float(factor) * math.pi
    return value / float(den) if den else value


def _resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else None
    nu = getattr(args, "nu", None)
    gamma = getattr(args, "gamma", None)
    kappa_arg = getattr(args, "kappa", None)
    sph_arg = getattr(args, "spherical", None)
    if kappa_arg and sph_arg:
        raise InputError("give either --kappa or --spherical, not both")
    if cfg is None:
        if not (kappa_arg or sph_arg):
            raise InputError("need --config, --kappa or --spherical")
        cfg = ExperimentConfig(SensingConfig(1.0, 1.0, np.zeros(3)))
    kappa = cfg.sensing.kappa
    if kappa_arg:
        kappa = _triple(kappa_arg, "kappa")
    elif sph_arg:
        kappa = SphericalMomentum(*_triple(sph_arg, "spherical")).kappa()
    cfg.sensing = SensingConfig(
        nu=cfg.sensing.nu if nu is None else nu,
        gamma=cfg.sensing.gamma if gamma is None else gamma,
        kappa=kappa,
    )
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "resolution", None) is not None:
        cfg.resolution = args.resolution
    return cfg


# --------------------------------------------------------------------------
# output helpers


def _emit(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc.strerror}") from None
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _matrix_csv(header: dict, names, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {json.dumps(header)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", *names])
    for name, r in zip(names, rows):
        w.writerow([name, *(repr(float(x)) for x in r)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def cmd_sample(args) -> int:
    cfg = _resolve_config(args)
    if args.n is None or args.n < 1:
        raise InputError("--n must be a positive integer")
    batch = sample_batch(args.n, cfg.sensing, cfg.seed, cfg.resolution)
    fmt = args.format or ("json" if args.out and args.out.endswith(".json") else "csv")
    _emit(batch.to_json() if fmt == "json" else batch.to_csv(), args.out)
    summary = {"seed": cfg.seed, "n": args.n, "counts": batch.counts(), "config": cfg.sensing.to_dict()}
    print(json.dumps(summary), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_estimate(args) -> int:
    batch = EventBatch.load(args.batch)
    header_cfg = batch.config
    nu = args.nu if args.nu is not None else (header_cfg.nu if header_cfg else None)
    if nu is None:
        raise InputError("--nu is required when the batch header carries no config")
    alpha, rho = batch.two_photon()
    if alpha.size == 0:
        raise InputError("the batch contains no two-photon events; nothing to estimate")
    seed = batch.seed
    if args.axis:
        nu_eff = args.nu_eff
        if nu_eff is None:
            if header_cfg is None:
                raise InputError("--nu-eff is required for --axis without a batch config")
            nu_eff = effective_distinguishability(nu, header_cfg.kappa, args.axis)
        res = estimate_1d((alpha, rho[:, args.axis - 1]), nu_eff, init=args.init_1d, param_max=args.kappa_max)
        out = {"seed": seed, "mode": "single", "axis": args.axis, "nu_eff": nu_eff, **res.to_json()}
        _emit(_json(out), args.out)
        return EXIT_OK if res.converged else EXIT_NONCONVERGED
    init = _triple(args.init, "init") if args.init else None
    res = estimate_3d((alpha, rho), nu, init=init, kappa_max=args.kappa_max)
    out = {"seed": seed, "mode": "joint", "nu": nu, **res.to_json()}
    _emit(_json(out), args.out)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_fisher(args) -> int:
    cfg = _resolve_config(args)
    c = cfg.sensing
    s = spherical_from_kappa(c.kappa)
    f_sph = fisher_spherical(c.nu, c.gamma, s)
    f_cart = fisher_cartesian(c.nu, c.gamma, c.kappa)
    q = qfi(s)
    per_axis = []
    for axis in (1, 2, 3):
        nu_eff = effective_distinguishability(c.nu, c.kappa, axis)
        per_axis.append(
            {
                "axis": axis,
                "known_nuisance": fisher_known_nuisance(c.nu, c.gamma, c.kappa, axis),
                "inverse_diag": fisher_cartesian_inverse_diag(c.nu, c.gamma, c.kappa, axis),
                "nu_eff": nu_eff,
                "single_param": fisher_single_param(nu_eff, c.gamma, float(c.kappa[axis - 1])),
            }
        )
    header = {"seed": cfg.seed, "config": c.to_dict(), "spherical": list(s.as_tuple())}
    if args.format == "csv":
        mat = f_cart if args.basis == "cartesian" else f_sph
        names = ("k1", "k2", "k3") if args.basis == "cartesian" else PARAMS
        _emit(_matrix_csv({**header, "basis": args.basis}, names, mat.entries), args.out)
        return EXIT_OK
    out = {
        **header,
        "fisher_spherical": f_sph.to_json(),
        "fisher_cartesian": f_cart.to_json(),
        "qfi": q.to_json(),
        "gamma2_qfi_minus_fisher_min_eig": float(np.linalg.eigvalsh(c.gamma**2 * q.entries - f_sph.entries)[0]),
        "per_axis": per_axis,
    }
    _emit(_json(out), args.out)
    return EXIT_OK


def cmd_qfi(args) -> int:
    cfg = _resolve_config(args)
    s = spherical_from_kappa(cfg.sensing.kappa)
    q = qfi(s)
    out = {"seed": cfg.seed, "spherical": list(s.as_tuple()), "qfi": q.to_json()}
    if args.check:
        mc = qfi_moment_check(s)
        out["moment_check"] = {
            "qfi_matrix": mc.qfi_matrix().tolist(),
            "commutators": mc.commutators().tolist(),
            "error": mc.error,
        }
    if args.format == "csv":
        _emit(_matrix_csv({"seed": cfg.seed, "spherical": list(s.as_tuple())}, PARAMS, q.entries), args.out)
    else:
        _emit(_json(out), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    if cfg.sweep is not None:
        spec = SweepSpec(
            config=cfg.sensing,
            n_values=tuple(args.n_values) if args.n_values else cfg.sweep.n_values,
            replicates=args.replicates or cfg.sweep.replicates,
            master_seed=cfg.seed if args.seed is not None else cfg.sweep.master_seed,
            resolution=cfg.resolution if args.resolution is not None else cfg.sweep.resolution,
            multistart=args.multistart or cfg.sweep.multistart,
            kappa_max=cfg.sweep.kappa_max,
        )
    else:
        spec = SweepSpec(
            config=cfg.sensing,
            n_values=tuple(args.n_values or DEFAULT_N_VALUES),
            replicates=args.replicates or 10_000,
            master_seed=cfg.seed,
            resolution=cfg.resolution,
            multistart=args.multistart,
        )

    def progress(n, done, total):
        if args.verbose:
            print(f"N={n}: {done}/{total}", file=sys.stderr)

    table = run_sweep(spec, progress)
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "json")
    _emit(table.to_csv() if fmt == "csv" else table.to_json(), args.out)
    return EXIT_OK


def _rows_from_file(path: str) -> tuple[list[SweepRow], int | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            table = SweepTable.from_json(text)
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"{path} is not a sweep table: {exc}") from None
        return table.rows, table.spec.master_seed
    seed = None
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            try:
                seed = json.loads(line[1:]).get("seed")
            except json.JSONDecodeError:
                pass
        elif line.strip():
            lines.append(line)
    by_n: dict[int, dict[str, dict]] = {}
    try:
        for rec in csv.DictReader(lines):
            by_n.setdefault(int(rec["n"]), {})[rec["param"]] = rec
        rows = []
        for n, recs in sorted(by_n.items()):
            get = lambda key: np.array([float(recs[p][key]) for p in PARAMS])  # noqa: E731
            rows.append(
                SweepRow(n, get("mean"), get("variance"), get("normalized_variance"), get("nv_stat_error"),
                         get("bias_fraction"), get("bias_stat_error"), get("rmse"),
                         int(recs[PARAMS[0]]["n_ok"]), int(recs[PARAMS[0]]["n_failed"]),
                         bool(int(recs[PARAMS[0]]["flagged"])))
            )
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path} is not a sweep CSV: {exc}") from None
    return rows, seed


def cmd_fit(args) -> int:
    rows, seed = _rows_from_file(args.table)
    fit = fit_crb_correction(rows, weighted=not args.unweighted)
    out = {"seed": seed, "params": list(PARAMS), "n": [r.n for r in rows], **fit.to_dict()}
    _emit(_json(out), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.tol)
    ok = all(r["passed"] for r in results)
    out = {"seed": None, "tol": args.tol, "passed": ok, "checks": results}
    _emit(_json(out), args.out)
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------
# parser


def _add_sensing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--nu", type=float, help="distinguishability in [0, 1]")
    p.add_argument("--gamma", type=float, help="detector efficiency in [0, 1]")
    p.add_argument("--kappa", help="Cartesian kappa as x,y,z")
    p.add_argument("--spherical", help="kappa as |kappa|,theta,phi (angles accept pi/4 style)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hom3d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw detection events")
    _add_sensing(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--resolution", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="maximum-likelihood estimate from a batch file")
    p.add_argument("batch")
    p.add_argument("--nu", type=float)
    p.add_argument("--axis", type=int, choices=(1, 2, 3), help="estimate one component from its coordinate")
    p.add_argument("--nu-eff", type=float, dest="nu_eff")
    p.add_argument("--init", help="starting kappa x,y,z (skips the global search)")
    p.add_argument("--init-1d", type=float, dest="init_1d")
    p.add_argument("--kappa-max", type=float, default=DEFAULT_KAPPA_MAX, dest="kappa_max")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fisher", help="classical Fisher information tables")
    _add_sensing(p)
    p.add_argument("--basis", choices=("spherical", "cartesian"), default="spherical")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser("qfi", help="quantum Fisher information")
    _add_sensing(p)
    p.add_argument("--check", action="store_true", help="also certify by 3D Gaussian moments")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_qfi)

    p = sub.add_parser("sweep", help="bias/variance Monte Carlo campaign")
    _add_sensing(p)
    p.add_argument("--n-values", type=int, nargs="+", dest="n_values")
    p.add_argument("--replicates", type=int)
    p.add_argument("--resolution", type=float)
    p.add_argument("--multistart", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit Var*N*F = 1 + A/N to a sweep table")
    p.add_argument("table")
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="run the brute-force equivalence checks")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InputError, DomainError, BatchFormatError) as exc:
        print(f"hom3d {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QuadratureError as exc:
        print(f"hom3d {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_VERIFY if args.command == "verify" else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
