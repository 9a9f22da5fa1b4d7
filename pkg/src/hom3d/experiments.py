"""Bias and variance campaigns for the 3D estimator.

For each sample size N the sweep draws ``replicates`` independent batches,
estimates (|kappa|, theta, phi) and reports per-parameter moments. Variances
are normalized by the Cramer-Rao bound 1 / (N F_jj), with F from
:func:`hom3d.fisher.fisher_spherical`; a finite-N excess is summarized by the
model  Var * N * F = 1 + A / N.

Every replicate owns a random stream derived from ``SeedSequence(master_seed,
spawn_key=(n_index, replicate))``, so tables are bit-identical for a given
master seed however the work is chunked.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .fisher import fisher_spherical
from .geometry import spherical_from_kappa, spherical_many
from .mle import DEFAULT_KAPPA_MAX, estimate_3d, estimate_3d_many
from .model import SensingConfig
from .sampler import CODE_B, CODE_ONE, draw_arrays

__all__ = [
    "CRBFit",
    "PARAMS",
    "SweepRow",
    "SweepSpec",
    "SweepTable",
    "fit_crb_correction",
    "replicate_rng",
    "run_sweep",
]

PARAMS = ("magnitude", "theta", "phi")
SWEEP_SCHEMA = "hom3d-sweep/1"
MIN_REPLICATES = 100
FAILURE_LIMIT = 0.01
CHUNK_EVENTS = 250_000


@dataclass(frozen=True)
class SweepSpec:
    config: SensingConfig
    n_values: tuple[int, ...]
    replicates: int = 10_000
    master_seed: int = 0
    resolution: float | None = None
    multistart: bool = False  # global search per replicate instead of a warm start at the truth
    kappa_max: float = DEFAULT_KAPPA_MAX

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        if not ns or any(n < 3 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError(f"n_values must be strictly increasing and >= 3, got {ns}")
        if self.replicates < MIN_REPLICATES:
            raise DomainError(f"replicates must be at least {MIN_REPLICATES}, got {self.replicates}")
        object.__setattr__(self, "n_values", ns)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_values": list(self.n_values),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "resolution": self.resolution,
            "multistart": self.multistart,
            "kappa_max": self.kappa_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SweepSpec:
        return cls(
            config=SensingConfig.from_dict(d["config"]),
            n_values=tuple(d["n_values"]),
            replicates=int(d.get("replicates", 10_000)),
            master_seed=int(d.get("master_seed", 0)),
            resolution=d.get("resolution"),
            multistart=bool(d.get("multistart", False)),
            kappa_max=float(d.get("kappa_max", DEFAULT_KAPPA_MAX)),
        )


@dataclass
class SweepRow:
    """Per-parameter statistics at one sample size (arrays ordered as :data:`PARAMS`)."""

    n: int
    mean: np.ndarray
    variance: np.ndarray
    normalized_variance: np.ndarray
    nv_stat_error: np.ndarray
    bias_fraction: np.ndarray
    bias_stat_error: np.ndarray
    rmse: np.ndarray
    n_ok: int
    n_failed: int
    flagged: bool = False

    def to_dict(self) -> dict:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SweepRow:
        arrays = {k: np.asarray(v, dtype=float) for k, v in d.items() if isinstance(v, list)}
        scalars = {k: v for k, v in d.items() if not isinstance(v, list)}
        return cls(**arrays, **scalars)


@dataclass
class SweepTable:
    spec: SweepSpec
    truth: np.ndarray  # spherical truth
    fisher_diag: np.ndarray
    rows: list[SweepRow] = field(default_factory=list)
    estimates: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": SWEEP_SCHEMA,
                "seed": self.spec.master_seed,
                "spec": self.spec.to_dict(),
                "truth": self.truth.tolist(),
                "fisher_diag": self.fisher_diag.tolist(),
                "rows": [r.to_dict() for r in self.rows],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> SweepTable:
        d = json.loads(text)
        return cls(
            spec=SweepSpec.from_dict(d["spec"]),
            truth=np.asarray(d["truth"], dtype=float),
            fisher_diag=np.asarray(d["fisher_diag"], dtype=float),
            rows=[SweepRow.from_dict(r) for r in d["rows"]],
        )

    def to_csv(self) -> str:
        """One line per (N, parameter); schema in the leading comment."""
        buf = io.StringIO()
        buf.write(f"# {json.dumps({'schema': SWEEP_SCHEMA, 'seed': self.spec.master_seed, **self.spec.to_dict()})}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["n", "param", "truth", "fisher", "mean", "variance", "normalized_variance",
             "nv_stat_error", "bias_fraction", "bias_stat_error", "rmse", "n_ok", "n_failed", "flagged"]
        )
        for r in self.rows:
            for j, p in enumerate(PARAMS):
                w.writerow(
                    [r.n, p, repr(float(self.truth[j])), repr(float(self.fisher_diag[j])),
                     repr(float(r.mean[j])), repr(float(r.variance[j])),
                     repr(float(r.normalized_variance[j])), repr(float(r.nv_stat_error[j])),
                     repr(float(r.bias_fraction[j])), repr(float(r.bias_stat_error[j])),
                     repr(float(r.rmse[j])), r.n_ok, r.n_failed, int(r.flagged)]
                )
        return buf.getvalue()


def replicate_rng(master_seed: int, n_index: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(n_index, replicate)))


def _draw_replicates(spec: SweepSpec, n_index: int, n: int, reps: range):
    cfg = spec.config
    codes = np.empty((len(reps), n), dtype=np.int8)
    rho = np.empty((len(reps), n, 3))
    for i, r in enumerate(reps):
        codes[i], rho[i] = draw_arrays(
            replicate_rng(spec.master_seed, n_index, r), n, cfg.nu, cfg.gamma, cfg.kappa, spec.resolution
        )
    return codes, rho


def _estimate_chunk(spec: SweepSpec, codes: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nu = spec.config.nu
    a = np.where(codes == CODE_B, nu, -nu)
    a[codes >= CODE_ONE] = 0.0
    rho = np.where(np.isnan(rho), 0.0, rho)
    if not spec.multistart:
        init = np.tile(spec.config.kappa, (len(codes), 1))
        out = estimate_3d_many(rho, a, init)
        return out.kappa, out.converged
    kappa = np.empty((len(codes), 3))
    ok = np.empty(len(codes), dtype=bool)
    for i in range(len(codes)):
        m = codes[i] <= CODE_B
        alpha = np.where(codes[i][m] == CODE_B, 1.0, -1.0)
        try:
            res = estimate_3d((alpha, rho[i][m]), nu, kappa_max=spec.kappa_max)
        except DomainError:
            kappa[i], ok[i] = np.nan, False
            continue
        kappa[i], ok[i] = res.kappa_hat, res.converged
    return kappa, ok


def _row(n: int, est: np.ndarray, ok: np.ndarray, truth: np.ndarray, fisher_diag: np.ndarray) -> SweepRow:
    good = est[ok]
    n_ok = int(good.shape[0])
    n_failed = int(ok.size - n_ok)
    mean = good.mean(axis=0)
    dev = good - mean
    var = np.mean(dev**2, axis=0) * n_ok / (n_ok - 1)
    m4 = np.mean(dev**4, axis=0)
    m2 = np.mean(dev**2, axis=0)
    # standard error of the sample variance from the empirical fourth moment
    var_se = np.sqrt(np.maximum(m4 - m2 * m2, 0.0) / n_ok)
    scale = n * fisher_diag
    with np.errstate(divide="ignore", invalid="ignore"):
        bias = mean / truth - 1.0
        bias_se = np.sqrt(var / n_ok) / np.abs(truth)
    return SweepRow(
        n=n,
        mean=mean,
        variance=var,
        normalized_variance=var * scale,
        nv_stat_error=var_se * scale,
        bias_fraction=bias,
        bias_stat_error=bias_se,
        rmse=np.sqrt(np.mean((good - truth) ** 2, axis=0)),
        n_ok=n_ok,
        n_failed=n_failed,
        flagged=n_failed > FAILURE_LIMIT * ok.size,
    )


def run_sweep(
    spec: SweepSpec,
    progress: Callable[[int, int, int], None] | None = None,
    keep_estimates: bool = False,
) -> SweepTable:
    """Run the campaign described by ``spec``.

    ``progress(n, done, total)`` is called after each chunk of replicates.
    """
    cfg = spec.config
    s_true = spherical_from_kappa(cfg.kappa)
    truth = np.array(s_true.as_tuple())
    fisher_diag = fisher_spherical(cfg.nu, cfg.gamma, s_true).diagonal
    table = SweepTable(spec, truth, fisher_diag)
    for n_index, n in enumerate(spec.n_values):
        per_chunk = max(1, CHUNK_EVENTS // n)
        est = np.empty((spec.replicates, 3))
        ok = np.empty(spec.replicates, dtype=bool)
        for start in range(0, spec.replicates, per_chunk):
            reps = range(start, min(start + per_chunk, spec.replicates))
            codes, rho = _draw_replicates(spec, n_index, n, reps)
            kappa, conv = _estimate_chunk(spec, codes, rho)
            est[reps.start : reps.stop] = spherical_many(kappa)
            ok[reps.start : reps.stop] = conv & np.all(np.isfinite(kappa), axis=1)
            if progress:
                progress(n, reps.stop, spec.replicates)
        table.rows.append(_row(n, est, ok, truth, fisher_diag))
        if keep_estimates:
            table.estimates[n] = est[ok]
    return table


# --------------------------------------------------------------------------
# finite-N correction fit


@dataclass
class CRBFit:
    A: np.ndarray  # per parameter
    A_se: np.ndarray
    residuals: np.ndarray  # (rows, params): observed - (1 + A/N)
    chi2: np.ndarray
    dof: int

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "A_se": self.A_se.tolist(),
            "residuals": self.residuals.tolist(),
            "chi2": self.chi2.tolist(),
            "dof": self.dof,
        }


def fit_crb_correction(rows: Sequence[SweepRow], weighted: bool = True) -> CRBFit:
    """Least squares of (normalized_variance - 1) against 1/N through the origin.

    Weights are 1 / nv_stat_error^2 when available and positive, else uniform.
    """
    if len(rows) < 3:
        raise DomainError(f"fit needs at least 3 rows, got {len(rows)}")
    n = np.array([r.n for r in rows], dtype=float)
    if np.unique(n).size < 2:
        raise DomainError("degenerate design: all rows share one sample size")
    x = 1.0 / n
    y = np.array([r.normalized_variance for r in rows], dtype=float).reshape(len(rows), -1) - 1.0
    err = np.array([r.nv_stat_error for r in rows], dtype=float).reshape(y.shape)
    if weighted and np.all(err > 0) and np.all(np.isfinite(err)):
        w = 1.0 / err**2
    else:
        w = np.ones_like(y)
    sxx = np.sum(w * x[:, None] ** 2, axis=0)
    A = np.sum(w * x[:, None] * y, axis=0) / sxx
    resid = y - A * x[:, None]
    chi2 = np.sum(w * resid**2, axis=0)
    dof = len(rows) - 1
    if weighted and np.all(err > 0):
        A_se = 1.0 / np.sqrt(sxx)
    else:
        A_se = np.sqrt(chi2 / max(dof, 1) / sxx)
    return CRBFit(A, A_se, resid, chi2, dof)


def synthetic_rows(n_values: Sequence[int], A: float | Sequence[float], nv_error: float = 0.0) -> list[SweepRow]:
    """Rows whose normalized variance is exactly 1 + A/N (for fit checks)."""
    A = np.broadcast_to(np.asarray(A, dtype=float), (3,))
    rows = []
    for n in n_values:
        nv = 1.0 + A / n
        z = np.zeros(3)
        rows.append(SweepRow(int(n), z, z, nv, np.full(3, nv_error), z, z, z, 0, 0))
    return rows


def consistency_slope(table: SweepTable) -> np.ndarray:
    """Log-log slope of RMSE against N for each parameter."""
    ln_n = np.log([r.n for r in table.rows])
    ln_rmse = np.log(np.array([r.rmse for r in table.rows]))
    return np.array([np.polyfit(ln_n, ln_rmse[:, j], 1)[0] for j in range(ln_rmse.shape[1])])

