"""Maximum-likelihood estimation of kappa from detection events.

Per two-photon event with sign a = alpha(X) nu and phase u = rho . kappa, the
log-likelihood contribution is log(1 + a cos u), constants dropped. Its
gradient is -a sin u / (1 + a cos u) rho and its Hessian is

    -(a cos u + a^2) / (1 + a cos u)^2 rho rho^T.

``score`` returns the sum of a sin u / (1 + a cos u) rho, i.e. the negative
gradient, and estimators look for its roots.

The Newton solver works on a leading batch axis so that many independent
replicates are refined at once. Padding events use a = 0, which contributes
nothing to any sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteScoreError
from .geometry import SphericalMomentum, canonicalize, canonicalize_many, spherical_from_kappa
from .model import check_unit_interval
from .sampler import EventBatch

__all__ = [
    "Estimate1DResult",
    "EstimationResult",
    "estimate_1d",
    "estimate_3d",
    "log_likelihood",
    "newton_batch",
    "score",
]

SCORE_RTOL = 1e-8  # convergence: |score| < SCORE_RTOL * n_used
MAX_ITER = 100
MAX_HALVINGS = 30
GRID_STEP = 0.5
DEFAULT_KAPPA_MAX = 8.0
N_REFINED_STARTS = 8


def _events(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, EventBatch):
        alpha, rho = batch.two_photon()
    else:
        alpha, rho = batch
        alpha = np.asarray(alpha, dtype=float).ravel()
        rho = np.asarray(rho, dtype=float).reshape(alpha.size, 3)
    if alpha.size == 0:
        raise DomainError("batch contains no two-photon events")
    return alpha, rho


def log_likelihood(batch, kappa, nu: float) -> float:
    """Sum of log(1 + alpha nu cos(rho . kappa)) over two-photon events.

    ``batch`` is an :class:`EventBatch` or an ``(alpha, rho)`` pair.
    Returns ``-inf`` if an event is impossible under ``kappa``.
    """
    check_unit_interval("nu", nu)
    alpha, rho = _events(batch)
    z = 1.0 + alpha * nu * np.cos(rho @ np.asarray(kappa, dtype=float))
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(z)))


def score(batch, kappa, nu: float) -> np.ndarray:
    check_unit_interval("nu", nu)
    alpha, rho = _events(batch)
    a = alpha * nu
    u = rho @ np.asarray(kappa, dtype=float)
    den = 1.0 + a * np.cos(u)
    bad = np.flatnonzero(den <= 0.0)
    if bad.size:
        raise NonFiniteScoreError(int(bad[0]))
    return (a * np.sin(u) / den) @ rho


# --------------------------------------------------------------------------
# batched Newton


def _loglik_b(rho, a, k):
    z = 1.0 + a * np.cos(np.einsum("bni,bi->bn", rho, k))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sum(np.log(z), axis=-1)


def _derivs_b(rho, a, k):
    u = np.einsum("bni,bi->bn", rho, k)
    c, s = np.cos(u), np.sin(u)
    den = 1.0 + a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        g_u = -a * s / den  # d loglik / du per event
        h_u = -(a * c + a * a) / (den * den)
        ll = np.sum(np.log(den), axis=-1)
    grad = np.einsum("bn,bni->bi", g_u, rho)
    hess = np.einsum("bn,bni,bnj->bij", h_u, rho, rho)
    return ll, grad, hess, g_u


def _ascent_direction(rho, grad, hess, g_u):
    """Newton direction where -H is positive definite, BHHH direction elsewhere."""
    neg = -hess
    pd = np.linalg.eigvalsh(neg)[:, 0] > 0.0
    mat = np.where(pd[:, None, None], neg, 0.0)
    if not np.all(pd):
        opg = np.einsum("bn,bni,bnj->bij", g_u * g_u, rho, rho)
        mat = np.where(pd[:, None, None], mat, opg)
    # guard exactly singular systems (e.g. nu = 0) with a tiny ridge
    ridge = 1e-12 * np.maximum(np.trace(mat, axis1=1, axis2=2), 1e-300)
    mat = mat + ridge[:, None, None] * np.eye(3)
    return np.linalg.solve(mat, grad[..., None])[..., 0]


@dataclass
class NewtonOutput:
    kappa: np.ndarray  # (B, 3)
    loglik: np.ndarray  # (B,)
    score_norm: np.ndarray  # (B,)
    converged: np.ndarray  # (B,) bool
    iterations: np.ndarray  # (B,) int


def newton_batch(
    rho: np.ndarray,
    a: np.ndarray,
    k0: np.ndarray,
    n_used: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
    rtol: float = SCORE_RTOL,
) -> NewtonOutput:
    """Damped Newton ascent on B independent log-likelihoods.

    rho: (B, N, 3) or (1, N, 3) shared across the batch; a: (B, N) signed
    visibilities alpha * nu (0 for padding); k0: (B, 3) starting points.
    Steps are halved (up to 30 times) until the log-likelihood does not
    decrease. Convergence: |score| < rtol * n_used.
    """
    a = np.asarray(a, dtype=float)
    B = a.shape[0]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (B,) + rho.shape[1:])
    k = np.array(k0, dtype=float).reshape(B, 3)
    n_used = np.count_nonzero(a != 0.0, axis=1) if n_used is None else np.asarray(n_used)
    thresh = rtol * np.maximum(n_used, 1)

    converged = np.zeros(B, dtype=bool)
    iterations = np.zeros(B, dtype=int)
    ll = np.empty(B)
    snorm = np.empty(B)
    active = np.arange(B)
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        ra, aa, ka = rho[active], a[active], k[active]
        l_a, g_a, h_a, gu_a = _derivs_b(ra, aa, ka)
        ll[active] = l_a
        snorm[active] = np.linalg.norm(g_a, axis=1)
        done = snorm[active] < thresh[active]
        converged[active[done]] = True
        if it == max_iter:
            break
        keep = ~done & np.isfinite(l_a)
        active, ra, aa, ka = active[keep], ra[keep], aa[keep], ka[keep]
        if active.size == 0:
            break
        step = _ascent_direction(ra, g_a[keep], h_a[keep], gu_a[keep])
        l_old = l_a[keep]
        t = np.ones(active.size)
        pending = np.arange(active.size)
        k_new = ka + step
        for _ in range(MAX_HALVINGS):
            l_new = _loglik_b(ra[pending], aa[pending], k_new[pending])
            ok = l_new >= l_old[pending]
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
            k_new[pending] = ka[pending] + t[pending, None] * step[pending]
        stalled = np.zeros(active.size, dtype=bool)
        stalled[pending] = True  # no acceptable step found: stop where we are
        k_new[stalled] = ka[stalled]
        k[active] = k_new
        iterations[active] += 1
        active = active[~stalled]
    return NewtonOutput(k, ll, snorm, converged, iterations)


# --------------------------------------------------------------------------
# 3D estimator


@dataclass
class EstimationResult:
    kappa_hat: np.ndarray
    spherical_hat: SphericalMomentum
    n_used: int
    converged: bool
    iterations: int
    score_norm: float
    loglik: float
    warnings: list[str] = field(default_factory=list)
    starts_tried: int = 1

    def to_json(self) -> dict:
        return {
            "kappa_hat": [float(x) for x in self.kappa_hat],
            "spherical_hat": list(self.spherical_hat.as_tuple()),
            "n_used": self.n_used,
            "converged": self.converged,
            "iterations": self.iterations,
            "score_norm": self.score_norm,
            "loglik": self.loglik,
            "warnings": list(self.warnings),
            "starts_tried": self.starts_tried,
        }

    @classmethod
    def from_json(cls, d: dict) -> EstimationResult:
        return cls(
            kappa_hat=np.array(d["kappa_hat"], dtype=float),
            spherical_hat=SphericalMomentum(*d["spherical_hat"]),
            n_used=int(d["n_used"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            score_norm=float(d["score_norm"]),
            loglik=float(d["loglik"]),
            warnings=list(d.get("warnings", [])),
            starts_tried=int(d.get("starts_tried", 1)),
        )


def start_grid(kappa_max: float, step: float = GRID_STEP) -> np.ndarray:
    """Grid points of the half-space q1 >= 0 inside the ball |q| <= kappa_max."""
    m = int(math.ceil(kappa_max / step))
    ax = step * np.arange(-m, m + 1)
    q1, q2, q3 = np.meshgrid(step * np.arange(0, m + 1), ax, ax, indexing="ij")
    q = np.stack([q1.ravel(), q2.ravel(), q3.ravel()], axis=-1)
    return q[np.linalg.norm(q, axis=1) <= kappa_max + 1e-12]


def _grid_loglik(alpha, rho, nu, grid, chunk: int = 256) -> np.ndarray:
    out = np.empty(len(grid))
    a = alpha * nu
    for s in range(0, len(grid), chunk):
        u = rho @ grid[s : s + chunk].T  # (n, c)
        with np.errstate(divide="ignore"):
            out[s : s + chunk] = np.sum(np.log(1.0 + a[:, None] * np.cos(u)), axis=0)
    return out


def _select_starts(grid, ll, step, count) -> np.ndarray:
    """Best grid points that are not beaten by a neighbour, in decreasing loglik order."""
    order = np.argsort(-ll, kind="stable")
    chosen: list[int] = []
    for i in order:
        if len(chosen) >= count:
            break
        if all(np.max(np.abs(grid[i] - grid[j])) > 1.5 * step for j in chosen):
            chosen.append(int(i))
    return grid[chosen]


def estimate_3d(
    batch,
    nu: float,
    init=None,
    kappa_max: float = DEFAULT_KAPPA_MAX,
    grid_step: float = GRID_STEP,
    n_starts: int = N_REFINED_STARTS,
) -> EstimationResult:
    """Maximum-likelihood kappa for a batch of events with known ``nu``.

    With ``init`` a single damped Newton run starts there. Without it, the
    log-likelihood is screened on a grid of the half-space q1 >= 0 inside
    |q| <= ``kappa_max``, the ``n_starts`` best separated grid points are
    refined by Newton and the highest converged log-likelihood wins (ties go
    to the earlier start). The estimate is canonicalized.
    """
    check_unit_interval("nu", nu)
    alpha, rho = _events(batch)
    n_used = alpha.size
    if n_used < 3:
        raise DomainError(f"need at least 3 two-photon events, got {n_used}")
    notes: list[str] = []
    if nu == 0.0:
        notes.append("nu = 0: the likelihood is flat and kappa is not identifiable")
    if nu == 1.0 and np.all(alpha == alpha[0]):
        notes.append("nu = 1 with a single outcome type: the likelihood has no isolated maximum")

    if init is not None:
        starts = np.asarray(init, dtype=float).reshape(1, 3)
    else:
        grid = start_grid(kappa_max, grid_step)
        ll_grid = _grid_loglik(alpha, rho, nu, grid)
        starts = _select_starts(grid, ll_grid, grid_step, n_starts)
    B = len(starts)
    out = newton_batch(rho[None], np.broadcast_to(alpha * nu, (B, n_used)), starts, np.full(B, n_used))

    rank = np.where(out.converged, out.loglik, -np.inf)
    if not np.any(out.converged):
        rank = out.loglik
        notes.append("no start converged")
    best = int(np.argmax(rank))  # first maximum wins ties
    k_hat = canonicalize(out.kappa[best])
    return EstimationResult(
        kappa_hat=k_hat,
        spherical_hat=spherical_from_kappa(k_hat),
        n_used=int(n_used),
        converged=bool(out.converged[best]),
        iterations=int(out.iterations[best]),
        score_norm=float(out.score_norm[best]),
        loglik=float(out.loglik[best]),
        warnings=notes,
        starts_tried=B,
    )


def estimate_3d_many(rho: np.ndarray, a: np.ndarray, init: np.ndarray) -> NewtonOutput:
    """Refine many independent batches from given starts and canonicalize the estimates.

    rho: (R, N, 3); a: (R, N) signed visibilities (0 for loss events).
    """
    out = newton_batch(rho, a, init)
    out.kappa = canonicalize_many(out.kappa)
    return out


# --------------------------------------------------------------------------
# single-coordinate estimator


@dataclass
class Estimate1DResult:
    value: float
    converged: bool
    identifiable: bool
    iterations: int
    score: float
    loglik: float
    n_used: int
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "converged": self.converged,
            "identifiable": self.identifiable,
            "iterations": self.iterations,
            "score": self.score,
            "loglik": self.loglik,
            "n_used": self.n_used,
            "warnings": list(self.warnings),
        }


def _projected(batch_projected, axis: int | None):
    if isinstance(batch_projected, EventBatch):
        if axis is None:
            raise DomainError("axis is required when projecting an EventBatch")
        alpha, rho = batch_projected.two_photon()
        return alpha, rho[:, axis - 1]
    alpha, c = batch_projected
    return np.asarray(alpha, dtype=float).ravel(), np.asarray(c, dtype=float).ravel()


def estimate_1d(
    batch_projected,
    nu_eff: float,
    init: float | None = None,
    axis: int | None = None,
    param_max: float = DEFAULT_KAPPA_MAX,
    grid_step: float = 0.02,
    max_iter: int = MAX_ITER,
) -> Estimate1DResult:
    """Estimate one kappa component from (alpha, c) pairs of a single resolved coordinate.

    Solves sum alpha nu_eff sin(q c) / (1 + alpha nu_eff cos(q c)) c = 0 by
    damped Newton from the best point of a grid on [0, param_max] (or from
    ``init``). The model is even in q, so |q| is reported.
    """
    check_unit_interval("nu_eff", nu_eff)
    alpha, c = _projected(batch_projected, axis)
    n = alpha.size
    if n < 3:
        raise DomainError(f"need at least 3 two-photon events, got {n}")
    a = alpha * nu_eff
    if nu_eff == 0.0:
        return Estimate1DResult(math.nan, False, False, 0, 0.0, 0.0, n, ["nu_eff = 0: not identifiable"])

    def ll(q):
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(1.0 + a * np.cos(q * c))))

    if init is None:
        grid = np.arange(0.0, param_max + grid_step / 2, grid_step)
        u = np.outer(c, grid)
        with np.errstate(divide="ignore"):
            vals = np.sum(np.log(1.0 + a[:, None] * np.cos(u)), axis=0)
        q = float(grid[int(np.argmax(vals))])
    else:
        q = float(init)

    converged = False
    l_cur = ll(q)
    g = 0.0
    it = 0
    for it in range(max_iter + 1):
        u = q * c
        cu, su = np.cos(u), np.sin(u)
        den = 1.0 + a * cu
        g = float(np.sum(-a * su / den * c))
        if abs(g) < SCORE_RTOL * n:
            converged = True
            break
        if it == max_iter:
            break
        h = float(np.sum(-(a * cu + a * a) / (den * den) * c * c))
        if h < 0.0:
            step = -g / h
        else:
            step = g / max(float(np.sum((a * su / den * c) ** 2)), 1e-300)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            l_new = ll(q + t * step)
            if l_new >= l_cur:
                break
            t *= 0.5
        else:
            break
        q += t * step
        l_cur = l_new
    notes = []
    if nu_eff * nu_eff * n < 10.0:
        notes.append(f"nu_eff = {nu_eff:.3g} leaves almost no beat signal in {n} events")
    return Estimate1DResult(abs(q), converged, True, it, abs(g), l_cur, n, notes)
