"""Closed-form output distributions of the resolved two-photon interferometer.

For a two-photon event with outcome X (coincidence A or bunching B) and
dimensionless relative coordinate rho, the density is::

    P(X; rho | kappa) = gamma^2 (2 pi)^{-3/2} exp(-|rho|^2 / 2) zeta_X(rho . kappa)
    zeta_X(x)         = (1 + alpha(X) nu cos x) / 2,   alpha(A) = -1, alpha(B) = +1

Single-photon and no-detection events occur with probabilities 2 gamma (1 - gamma)
and (1 - gamma)^2 and carry no information about kappa.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

ZETA_FLOOR = 1e-300
_LOG_2PI = math.log(2.0 * math.pi)


class Outcome(str, enum.Enum):
    COINCIDENCE = "A"
    BUNCH = "B"
    ONE_PHOTON = "one"
    NO_DETECTION = "none"

    @property
    def alpha(self) -> int:
        if self is Outcome.COINCIDENCE:
            return -1
        if self is Outcome.BUNCH:
            return 1
        raise DomainError(f"{self.name} events carry no interference sign")

    @property
    def is_two_photon(self) -> bool:
        return self in (Outcome.COINCIDENCE, Outcome.BUNCH)


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True, eq=False)
class SensingConfig:
    """Generative model parameters: distinguishability, detector efficiency, true kappa."""

    nu: float
    gamma: float
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        check_unit_interval("nu", self.nu)
        check_unit_interval("gamma", self.gamma)
        k = np.array(self.kappa, dtype=float).reshape(3)
        if not np.all(np.isfinite(k)):
            raise DomainError("kappa must be finite")
        k.setflags(write=False)
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "kappa", k)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "gamma": self.gamma, "kappa": [float(c) for c in self.kappa]}

    @classmethod
    def from_dict(cls, d: dict) -> SensingConfig:
        return cls(nu=d["nu"], gamma=d["gamma"], kappa=d["kappa"])


def zeta(outcome: Outcome, nu: float, arg):
    """Beat factor (1 + alpha nu cos(arg)) / 2."""
    check_unit_interval("nu", nu)
    return 0.5 * (1.0 + Outcome(outcome).alpha * nu * np.cos(arg))


def prob_density(outcome: Outcome, rho, cfg: SensingConfig):
    """Joint density of a two-photon outcome and rho (rho may be an (n, 3) stack)."""
    rho = np.asarray(rho, dtype=float)
    r2 = np.sum(rho * rho, axis=-1)
    envelope = cfg.gamma**2 * (2.0 * math.pi) ** -1.5 * np.exp(-0.5 * r2)
    return envelope * zeta(outcome, cfg.nu, rho @ cfg.kappa)


def log_prob_density(outcome: Outcome, rho, cfg: SensingConfig):
    """Log of :func:`prob_density` with zeta floored so impossible events stay finite."""
    rho = np.asarray(rho, dtype=float)
    r2 = np.sum(rho * rho, axis=-1)
    z = np.maximum(zeta(outcome, cfg.nu, rho @ cfg.kappa), ZETA_FLOOR)
    with np.errstate(divide="ignore"):
        log_g2 = 2.0 * math.log(cfg.gamma) if cfg.gamma > 0 else -math.inf
    return log_g2 - 1.5 * _LOG_2PI - 0.5 * r2 + np.log(z)


def beta(nu: float, x):
    """Beat sensitivity kernel nu^2 sin^2 x / (1 - nu^2 cos^2 x).

    Written with the denominator sin^2 x + (1 - nu^2) cos^2 x; the removable
    point nu = 1, x = k pi takes its limit value 1.
    """
    check_unit_interval("nu", nu)
    x = np.asarray(x, dtype=float)
    s2 = np.sin(x) ** 2
    den = s2 + (1.0 - nu * nu) * np.cos(x) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0.0, nu * nu * s2 / np.where(den > 0.0, den, 1.0), 1.0)
    return out if out.ndim else float(out)


def effective_distinguishability(nu: float, kappa, axis: int) -> float:
    """Beat visibility left when only coordinate ``axis`` (1, 2 or 3) is resolved."""
    check_unit_interval("nu", nu)
    if axis not in (1, 2, 3):
        raise DomainError(f"axis must be 1, 2 or 3, got {axis}")
    k = np.asarray(kappa, dtype=float).reshape(3)
    others = np.delete(k, axis - 1)
    return float(nu * math.exp(-0.5 * float(others @ others)))


# Alternative gamma^2/sqrt(pi) convention for the single-coordinate density; it does not
# normalize the distribution, see prob_marginal_1d.
LEGACY_MARGINAL_PREFACTOR = 1.0 / math.sqrt(math.pi)


def prob_marginal_1d(
    outcome: Outcome,
    c,
    param: float,
    nu_eff: float,
    gamma: float,
    legacy_prefactor: bool = False,
):
    """Density of (X, c) when a single coordinate c of rho is resolved.

    By default this is the exact marginal of :func:`prob_density`::

        gamma^2 (2 pi)^{-1/2} exp(-c^2/2) (1 + alpha nu_eff cos(param c)) / 2

    which sums over X and integrates over c to gamma^2. ``legacy_prefactor``
    swaps the constant for gamma^2 / sqrt(pi); constants cancel in scores and
    Fisher information either way.
    """
    check_unit_interval("nu_eff", nu_eff)
    check_unit_interval("gamma", gamma)
    c = np.asarray(c, dtype=float)
    if legacy_prefactor:
        pref = gamma**2 * LEGACY_MARGINAL_PREFACTOR
    else:
        pref = gamma**2 / (2.0 * math.sqrt(2.0 * math.pi))
    return pref * np.exp(-0.5 * c * c) * (1.0 + Outcome(outcome).alpha * nu_eff * np.cos(param * c))


def detection_outcome_probs(gamma: float) -> tuple[float, float, float]:
    """Probabilities of detecting zero, one and two photons."""
    g = check_unit_interval("gamma", gamma)
    return ((1.0 - g) ** 2, 2.0 * g * (1.0 - g), g * g)
