"""Monte Carlo generation of detection events.

Events are drawn in two stages. Because zeta_A + zeta_B = 1 the marginal of
rho is exactly a 3D standard normal, so rho is drawn first and the outcome is
then a Bernoulli trial with success (bunching) probability zeta_B(rho . kappa).
Loss events (one or zero photons detected) are kept in the stream so that
efficiencies can be reported; estimators skip them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BatchFormatError, DomainError
from .model import Outcome, SensingConfig

__all__ = [
    "CSV_SCHEMA",
    "DetectionEvent",
    "EventBatch",
    "draw_arrays",
    "make_rng",
    "sample_batch",
    "sample_event",
]

CSV_SCHEMA = "hom3d-events/1"

# integer codes used in the array representation
CODES = (Outcome.COINCIDENCE, Outcome.BUNCH, Outcome.ONE_PHOTON, Outcome.NO_DETECTION)
CODE_A, CODE_B, CODE_ONE, CODE_NONE = range(4)
_CODE_OF = {o: i for i, o in enumerate(CODES)}


def make_rng(seed) -> np.random.Generator:
    """Generator for a seed given as an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class DetectionEvent:
    outcome: Outcome
    rho: np.ndarray | None = None

    def __post_init__(self):
        outcome = Outcome(self.outcome)
        object.__setattr__(self, "outcome", outcome)
        if outcome.is_two_photon:
            if self.rho is None:
                raise DomainError(f"{outcome.name} event needs a rho vector")
            r = np.array(self.rho, dtype=float).reshape(3)
            if not np.all(np.isfinite(r)):
                raise DomainError("rho must be finite")
            r.setflags(write=False)
            object.__setattr__(self, "rho", r)
        elif self.rho is not None:
            raise DomainError(f"{outcome.name} event cannot carry a rho vector")

    def __eq__(self, other):
        if not isinstance(other, DetectionEvent):
            return NotImplemented
        if self.outcome is not other.outcome:
            return False
        if self.rho is None or other.rho is None:
            return self.rho is None and other.rho is None
        return bool(np.array_equal(self.rho, other.rho))


def draw_arrays(
    rng: np.random.Generator,
    shape: int | tuple[int, ...],
    nu: float,
    gamma: float,
    kappa: np.ndarray,
    resolution: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized event draw.

    Returns integer outcome codes of the given shape and rho of shape
    ``shape + (3,)``; rho is NaN for loss events. The order of random draws
    is fixed (detection uniforms, rho normals, outcome uniforms), which keeps
    batches reproducible for a given generator state.
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    kappa = np.asarray(kappa, dtype=float)
    u_det = rng.random(shape)
    rho = rng.standard_normal(shape + (3,))
    u_out = rng.random(shape)

    if resolution is not None:
        rho = np.round(rho / resolution) * resolution
    p_none, p_one, _ = (1.0 - gamma) ** 2, 2.0 * gamma * (1.0 - gamma), gamma * gamma
    zeta_b = 0.5 * (1.0 + nu * np.cos(rho @ kappa))
    codes = np.where(u_out < zeta_b, CODE_B, CODE_A).astype(np.int8)
    codes[u_det < p_none + p_one] = CODE_ONE
    codes[u_det < p_none] = CODE_NONE
    rho[codes >= CODE_ONE] = np.nan
    return codes, rho


def sample_event(rng: np.random.Generator, cfg: SensingConfig) -> DetectionEvent:
    codes, rho = draw_arrays(rng, 1, cfg.nu, cfg.gamma, cfg.kappa)
    outcome = CODES[int(codes[0])]
    return DetectionEvent(outcome, rho[0] if outcome.is_two_photon else None)


@dataclass(frozen=True, eq=False)
class EventBatch:
    """An ordered batch of detection events in array form.

    ``codes[i]`` indexes :data:`CODES`; ``rho[i]`` is NaN for loss events.
    """

    codes: np.ndarray
    rho: np.ndarray
    seed: int | None = None
    config: SensingConfig | None = None
    resolution: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int8).ravel()
        rho = np.asarray(self.rho, dtype=float).reshape(codes.size, 3)
        if codes.size and (codes.min() < 0 or codes.max() > CODE_NONE):
            raise BatchFormatError("unknown outcome code in batch")
        two = codes <= CODE_B
        if not np.all(np.isfinite(rho[two])):
            raise BatchFormatError("a two-photon event has a missing or non-finite rho")
        if np.any(np.isfinite(rho[~two])):
            raise BatchFormatError("a loss event carries a rho value")
        codes.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_events(cls, events, **kwargs) -> EventBatch:
        events = list(events)
        codes = np.array([_CODE_OF[e.outcome] for e in events], dtype=np.int8)
        rho = np.full((len(events), 3), np.nan)
        for i, e in enumerate(events):
            if e.rho is not None:
                rho[i] = e.rho
        return cls(codes, rho, **kwargs)

    def __len__(self) -> int:
        return int(self.codes.size)

    def __eq__(self, other):
        if not isinstance(other, EventBatch):
            return NotImplemented
        return bool(
            np.array_equal(self.codes, other.codes)
            and np.array_equal(self.rho, other.rho, equal_nan=True)
            and self.seed == other.seed
        )

    @property
    def events(self) -> list[DetectionEvent]:
        out = []
        for c, r in zip(self.codes, self.rho):
            o = CODES[int(c)]
            out.append(DetectionEvent(o, r if o.is_two_photon else None))
        return out

    @property
    def two_photon_mask(self) -> np.ndarray:
        return self.codes <= CODE_B

    def two_photon(self) -> tuple[np.ndarray, np.ndarray]:
        """(alpha, rho) for the informative events: alpha is -1 for A and +1 for B."""
        m = self.two_photon_mask
        alpha = np.where(self.codes[m] == CODE_B, 1.0, -1.0)
        return alpha, np.array(self.rho[m])

    def counts(self) -> dict[str, int]:
        tally = np.bincount(self.codes.astype(np.intp), minlength=len(CODES))
        return {o.value: int(t) for o, t in zip(CODES, tally)}

    # ---- serialization -------------------------------------------------

    def _header(self) -> dict:
        return {
            "schema": CSV_SCHEMA,
            "seed": self.seed,
            "config": self.config.to_dict() if self.config else None,
            "resolution": self.resolution,
            **self.meta,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {json.dumps(self._header())}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "rho1", "rho2", "rho3"])
        for c, r in zip(self.codes, self.rho):
            o = CODES[int(c)]
            if o.is_two_photon:
                w.writerow([o.value, *(repr(float(x)) for x in r)])
            else:
                w.writerow([o.value, "", "", ""])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [
            [CODES[int(c)].value, *([float(x) for x in r] if c <= CODE_B else [None] * 3)]
            for c, r in zip(self.codes, self.rho)
        ]
        return json.dumps({**self._header(), "columns": ["outcome", "rho1", "rho2", "rho3"], "events": rows})

    @classmethod
    def _from_rows(cls, header: dict, rows) -> EventBatch:
        if header.get("schema", CSV_SCHEMA) != CSV_SCHEMA:
            raise BatchFormatError(f"unsupported batch schema {header.get('schema')!r}")
        codes, rho = [], []
        for lineno, row in enumerate(rows, 1):
            if len(row) != 4:
                raise BatchFormatError(f"row {lineno}: expected 4 fields, got {len(row)}")
            try:
                o = Outcome(row[0])
            except ValueError:
                raise BatchFormatError(f"row {lineno}: unknown outcome {row[0]!r}") from None
            codes.append(_CODE_OF[o])
            if o.is_two_photon:
                try:
                    rho.append([float(x) for x in row[1:]])
                except (TypeError, ValueError):
                    raise BatchFormatError(f"row {lineno}: rho fields are not numbers") from None
            else:
                if any(x not in ("", None) for x in row[1:]):
                    raise BatchFormatError(f"row {lineno}: loss event carries rho values")
                rho.append([math.nan] * 3)
        cfg = header.get("config")
        try:
            config = SensingConfig.from_dict(cfg) if cfg else None
        except (KeyError, ValueError) as exc:
            raise BatchFormatError(f"invalid config in header: {exc}") from None
        meta = {k: v for k, v in header.items() if k not in ("schema", "seed", "config", "resolution", "columns", "events")}
        return cls(
            np.array(codes, dtype=np.int8),
            np.array(rho, dtype=float).reshape(-1, 3),
            seed=header.get("seed"),
            config=config,
            resolution=header.get("resolution"),
            meta=meta,
        )

    @classmethod
    def from_csv(cls, text: str) -> EventBatch:
        lines = text.splitlines()
        header: dict = {}
        body = []
        for line in lines:
            if line.startswith("#"):
                try:
                    header.update(json.loads(line[1:]))
                except json.JSONDecodeError as exc:
                    raise BatchFormatError(f"malformed header comment: {exc}") from None
            elif line.strip():
                body.append(line)
        if not body or [h.strip() for h in body[0].split(",")] != ["outcome", "rho1", "rho2", "rho3"]:
            raise BatchFormatError("missing 'outcome,rho1,rho2,rho3' column header")
        return cls._from_rows(header, csv.reader(body[1:]))

    @classmethod
    def from_json(cls, text: str) -> EventBatch:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BatchFormatError(f"malformed JSON batch: {exc}") from None
        if not isinstance(d, dict) or "events" not in d:
            raise BatchFormatError("JSON batch needs an 'events' array")
        return cls._from_rows(d, d["events"])

    def save(self, path, fmt: str | None = None) -> None:
        path = Path(path)
        fmt = fmt or ("json" if path.suffix == ".json" else "csv")
        path.write_text(self.to_json() if fmt == "json" else self.to_csv())

    @classmethod
    def load(cls, path) -> EventBatch:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise BatchFormatError(f"cannot read {path}: {exc.strerror}") from None
        if text.lstrip().startswith("{"):
            return cls.from_json(text)
        return cls.from_csv(text)


def sample_batch(
    n: int, cfg: SensingConfig, seed: int, resolution: float | None = None
) -> EventBatch:
    """Draw ``n`` independent events; identical (n, cfg, seed, resolution) give identical batches."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if resolution is not None and not (resolution > 0.0 and math.isfinite(resolution)):
        raise DomainError(f"resolution must be positive, got {resolution}")
    codes, rho = draw_arrays(make_rng(seed), int(n), cfg.nu, cfg.gamma, cfg.kappa, resolution)
    return EventBatch(codes, rho, seed=seed, config=cfg, resolution=resolution)
