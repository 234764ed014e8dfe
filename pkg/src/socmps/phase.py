"""Single points, parameter scans, transition detection and gap studies.

A scan walks a 1-D or 2-D grid over (phi, lambda, omega_prime).  Each grid
point yields one :class:`PointRecord`; records are written as CSV and as a
JSON document that embeds the scan specification and its hash.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .mpo import ModelParams, build_xxz_dm_mpo
from .mps import MpsState, load_mps, save_mps
from .observables import (
    AXES,
    GapRecord,
    correlation_profile,
    energy_gaps,
    order_parameters,
    structure_factor_peak,
)
from .sweep import SweepConfig, excited_state_search, ground_state_search, subspace_energies

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PARAM_NAMES = ("phi", "lambda", "omega_prime")
OBSERVABLE_SETS = frozenset({"order", "structure"})
WORKERS_ENV = "SOCMPS_THREADS"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_NONCONVERGED = 2

CSV_COLUMNS = (
    "phi", "lambda", "omega_prime", "L", "chi", "E0", "E1", "E2", "variance",
    "converged", "delta1", "delta2", "Mx", "My", "Mz", "Nx", "Ny", "Nz",
    "Cx", "Cy", "Cz", "Qx_peak_k", "Qx_peak_val", "Qy_peak_k", "Qy_peak_val",
    "Qz_peak_k", "Qz_peak_val", "max_discarded_weight",
)

_NAN = math.nan


@dataclass(frozen=True)
class PointRecord:
    """Everything measured at one parameter point; NaN marks "not computed"."""

    phi: float
    lam: float
    omega_prime: float
    L: int
    chi: int
    E0: float
    E1: float = _NAN
    E2: float = _NAN
    variance: float = _NAN
    converged: bool = False
    delta1: float = _NAN
    delta2: float = _NAN
    Mx: float = _NAN
    My: float = _NAN
    Mz: float = _NAN
    Nx: float = _NAN
    Ny: float = _NAN
    Nz: float = _NAN
    Cx: float = _NAN
    Cy: float = _NAN
    Cz: float = _NAN
    Qx_peak_k: float = _NAN
    Qx_peak_val: float = _NAN
    Qy_peak_k: float = _NAN
    Qy_peak_val: float = _NAN
    Qz_peak_k: float = _NAN
    Qz_peak_val: float = _NAN
    max_discarded_weight: float = 0.0
    error: str | None = None

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.phi, self.lam, self.omega_prime, self.L)

    def row(self) -> list:
        vals = dataclasses.astuple(self)[: len(CSV_COLUMNS)]
        return [_fmt(v) for v in vals]

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if isinstance(v, float) and math.isnan(v) else v
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PointRecord":
        kw = {}
        for f in dataclasses.fields(cls):
            v = data.get(f.name)
            kw[f.name] = _NAN if v is None and f.name != "error" else v
        return cls(**kw)

    def column(self, name: str):
        return getattr(self, "lam" if name == "lambda" else name)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


# -- single point ---------------------------------------------------------

def _check_observables(observables: Iterable[str]) -> frozenset:
    obs = frozenset(observables)
    unknown = obs - OBSERVABLE_SETS
    if unknown:
        raise ValueError(f"unknown observables {sorted(unknown)}; choose from {sorted(OBSERVABLE_SETS)}")
    return obs


def run_point(p: ModelParams, cfg: SweepConfig, n_excited: int = 0,
              initial: MpsState | None = None,
              observables: Iterable[str] = OBSERVABLE_SETS,
              return_states: bool = False):
    """Solve one parameter point and measure its observables.

    The ground state comes from ``cfg.restarts`` random starts plus
    ``initial`` when given.  With ``n_excited`` > 0 the energies reported
    are the eigenvalues of H in the span of all states found, which splits
    quasi-degenerate pairs that the sweeps return as symmetry-broken
    combinations.  Observables are measured in the ground state as found.

    Returns the record, or ``(record, states)`` with ``return_states``.
    """
    if not 0 <= n_excited <= 2:
        raise ValueError("n_excited must be 0, 1 or 2")
    obs = _check_observables(observables)
    h = build_xxz_dm_mpo(p)
    gs = ground_state_search(h, cfg, initial=initial)
    reports = [gs]
    states = [gs.final_state]
    for _ in range(n_excited):
        rep = excited_state_search(h, states, cfg)
        reports.append(rep)
        states.append(rep.final_state)

    energies = [r.energy for r in reports]
    if n_excited:
        energies = [float(e) for e in subspace_energies(h, states)[0]]
    energies += [_NAN] * (3 - len(energies))
    gaps = [_NAN, _NAN]
    if n_excited:
        gaps[:n_excited] = energy_gaps(energies[: n_excited + 1])

    fields = dict(
        phi=p.phi, lam=p.lam, omega_prime=p.omega_prime, L=p.length, chi=cfg.chi_max,
        E0=energies[0], E1=energies[1], E2=energies[2],
        variance=gs.variance,
        converged=all(r.converged for r in reports),
        delta1=gaps[0], delta2=gaps[1],
        max_discarded_weight=max(r.max_discarded_weight for r in reports),
    )
    psi = gs.final_state
    if "order" in obs:
        fields.update(order_parameters(psi).as_dict())
    if "structure" in obs:
        for ax in AXES:
            k, q = structure_factor_peak(correlation_profile(psi, ax))
            fields[f"Q{ax}_peak_k"] = k
            fields[f"Q{ax}_peak_val"] = q
    record = PointRecord(**fields)
    return (record, states) if return_states else record


# -- scans ----------------------------------------------------------------

@dataclass(frozen=True)
class ScanAxis:
    name: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise ValueError(f"axis name must be one of {PARAM_NAMES}, got {self.name!r}")
        if not self.step > 0:
            raise ValueError("scan step must be positive")
        if self.stop < self.start:
            raise ValueError("scan stop lies below start")

    def values(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]


@dataclass(frozen=True)
class ScanSpec:
    """Grid over up to two parameters with the remaining ones fixed."""

    axes: tuple[ScanAxis, ...]
    fixed: dict
    length: int
    config: SweepConfig = field(default_factory=SweepConfig)
    n_excited: int = 0
    observables: frozenset = OBSERVABLE_SETS
    warm_start: bool = True

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "observables", _check_observables(self.observables))
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a scan needs one or two axes")
        names = [a.name for a in self.axes] + list(self.fixed)
        if sorted(names) != sorted(PARAM_NAMES):
            raise ValueError(f"scanned plus fixed parameters must be exactly {PARAM_NAMES}, got {names}")
        if not 0 <= self.n_excited <= 2:
            raise ValueError("n_excited must be 0, 1 or 2")

    def grid(self) -> list[ModelParams]:
        """Grid points in row-major order (first axis outermost)."""
        values = [a.values() for a in self.axes]
        points = []
        for combo in (np.array(np.meshgrid(*values, indexing="ij")).reshape(len(values), -1).T):
            named = dict(self.fixed)
            named.update({a.name: float(v) for a, v in zip(self.axes, combo)})
            points.append(ModelParams(named["phi"], named["lambda"], named["omega_prime"], self.length))
        return points

    def to_json(self) -> dict:
        return {
            "axes": [dataclasses.asdict(a) for a in self.axes],
            "fixed": dict(sorted(self.fixed.items())),
            "length": self.length,
            "config": dataclasses.asdict(self.config),
            "n_excited": self.n_excited,
            "observables": sorted(self.observables),
            "warm_start": self.warm_start,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ScanSpec":
        return cls(
            axes=tuple(ScanAxis(**a) for a in data["axes"]),
            fixed=dict(data["fixed"]),
            length=data["length"],
            config=SweepConfig(**data["config"]),
            n_excited=data["n_excited"],
            observables=frozenset(data["observables"]),
            warm_start=data["warm_start"],
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ScanResult:
    spec: ScanSpec
    records: list[PointRecord]

    @property
    def spec_hash(self) -> str:
        return self.spec.digest()

    @property
    def exit_code(self) -> int:
        if any(r.error for r in self.records):
            return EXIT_FAILED
        if not all(r.converged for r in self.records):
            return EXIT_NONCONVERGED
        return EXIT_OK

    def column(self, name: str) -> np.ndarray:
        return np.array([r.column(name) for r in self.records], dtype=float)


def _failed_record(p: ModelParams, cfg: SweepConfig, exc: Exception) -> PointRecord:
    log.error("point %s failed: %s", p, exc)
    return PointRecord(p.phi, p.lam, p.omega_prime, p.length, cfg.chi_max, _NAN,
                       error=f"{type(exc).__name__}: {exc}")


def _solve_one(args) -> PointRecord:
    p, spec = args
    try:
        return run_point(p, spec.config, spec.n_excited, observables=spec.observables)
    except Exception as exc:  # noqa: BLE001 - a failed point must not sink the scan
        return _failed_record(p, spec.config, exc)


class _Store:
    """Append-only record log plus the latest ground state for warm starts."""

    def __init__(self, root: Path, spec: ScanSpec, resume: bool):
        self.root = root
        self.log_path = root / "records.jsonl"
        spec_path = root / "spec.json"
        if resume and spec_path.exists():
            saved = json.loads(spec_path.read_text())
            if saved.get("hash") != spec.digest():
                raise ValueError(f"checkpoint in {root} belongs to a different scan specification")
        else:
            root.mkdir(parents=True, exist_ok=True)
            for stale in root.glob("gs_*.mps"):
                stale.unlink()
            self.log_path.write_text("")
            spec_path.write_text(json.dumps({"hash": spec.digest(), "spec": spec.to_json()}, indent=2))

    def load(self) -> list[PointRecord]:
        if not self.log_path.exists():
            return []
        records = []
        for line in self.log_path.read_text().splitlines():
            if line.strip():
                records.append(PointRecord.from_json(json.loads(line)))
        return records

    def state(self, index: int) -> MpsState | None:
        path = self.root / f"gs_{index:05d}.mps"
        return load_mps(path) if path.exists() else None

    def append(self, index: int, record: PointRecord, gs: MpsState | None):
        if gs is not None:
            save_mps(gs, self.root / f"gs_{index:05d}.mps")
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
        old = self.root / f"gs_{index - 1:05d}.mps"
        if old.exists():
            old.unlink()


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def run_scan(spec: ScanSpec, checkpoint_dir: str | os.PathLike | None = None,
             resume: bool = False, stop_after: int | None = None) -> ScanResult:
    """Solve every grid point, in grid order.

    With warm starts each point begins from the previous point's ground
    state (in addition to the random restarts), so points run one after
    another.  Without warm starts up to ``$SOCMPS_THREADS`` worker
    processes share the grid.  ``checkpoint_dir`` persists each finished
    point; ``resume`` continues from it.  ``stop_after`` ends the run after
    that many points in total (for interrupt testing).
    """
    grid = spec.grid()
    store = _Store(Path(checkpoint_dir), spec, resume) if checkpoint_dir is not None else None
    records = store.load() if (store is not None and resume) else []
    if len(records) > len(grid):
        raise ValueError("checkpoint holds more records than the grid has points")
    end = len(grid) if stop_after is None else min(len(grid), stop_after)
    pending = list(range(len(records), end))

    workers = _worker_count()
    if spec.warm_start or workers == 1:
        prev = store.state(len(records) - 1) if (store is not None and records and spec.warm_start) else None
        for i in pending:
            p = grid[i]
            log.info("point %d/%d: %s", i + 1, len(grid), p)
            try:
                rec, states = run_point(p, spec.config, spec.n_excited,
                                        initial=prev if spec.warm_start else None,
                                        observables=spec.observables, return_states=True)
                gs = states[0]
            except Exception as exc:  # noqa: BLE001
                rec, gs = _failed_record(p, spec.config, exc), None
            if spec.warm_start and gs is not None:
                prev = gs
            records.append(rec)
            if store is not None:
                store.append(i, rec, gs if spec.warm_start else None)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, rec in zip(pending, pool.map(_solve_one, [(grid[i], spec) for i in pending])):
                records.append(rec)
                if store is not None:
                    store.append(i, rec, None)
    return ScanResult(spec, records)


# -- output ---------------------------------------------------------------

def write_csv(records: Sequence[PointRecord], path, spec_hash: str | None = None,
              timestamp: str | None = None) -> None:
    """CSV with a two-line comment header (timestamp, spec hash)."""
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(f"# generated {stamp}\n")
    if spec_hash is not None:
        buf.write(f"# spec_sha256 {spec_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[PointRecord]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    out = []
    ints = {"L", "chi"}
    for row in reader:
        kw = {}
        for col in CSV_COLUMNS:
            raw = row[col]
            key = "lam" if col == "lambda" else col
            if col in ints:
                kw[key] = int(raw)
            elif col == "converged":
                kw[key] = raw == "true"
            else:
                kw[key] = float(raw)
        out.append(PointRecord(**kw))
    return out


def result_document(result: ScanResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "spec": result.spec.to_json(),
        "spec_sha256": result.spec_hash,
        "records": [r.to_json() for r in result.records],
    }


def write_json(result: ScanResult, path) -> None:
    Path(path).write_text(json.dumps(result_document(result), indent=2, sort_keys=True) + "\n")


# -- transitions ----------------------------------------------------------

@dataclass(frozen=True)
class DetectionRules:
    """Thresholds for locating transitions along a 1-D scan.

    Each column is divided by its largest absolute value first, so the
    rules do not depend on the overall scale of an order parameter.
    """

    order_parameters: tuple[str, ...] = ("Mz", "Ny", "Cz")
    jump_fraction: float = 0.5
    floor: float = 0.02
    min_peak: float = 1e-3

    def __post_init__(self):
        if not 0 < self.jump_fraction <= 1:
            raise ValueError("jump_fraction must lie in (0, 1]")
        if not 0 < self.floor < 1:
            raise ValueError("floor must lie in (0, 1)")


@dataclass(frozen=True)
class Transition:
    value: float
    kind: str
    order_parameter: str


def _scan_axis(records: Sequence[PointRecord]) -> tuple[str, np.ndarray]:
    varying = []
    for name in PARAM_NAMES:
        vals = np.array([r.column(name) for r in records], dtype=float)
        if np.ptp(vals) > 0:
            varying.append((name, vals))
    if len(varying) != 1:
        raise ValueError(f"transition detection needs a 1-D scan, found {len(varying)} varying parameters")
    return varying[0]


def detect_transitions(scan: ScanResult | Sequence[PointRecord],
                       rules: DetectionRules = DetectionRules()) -> list[Transition]:
    """Locate transitions from jumps and onsets of the order parameters.

    For every designated column: the largest single-step change, if it
    exceeds ``jump_fraction`` of the column maximum, is a first-order
    transition at the midpoint of that step.  Crossings of ``floor`` times
    the maximum elsewhere are continuous transitions, located by linear
    interpolation, except on the low side of that column's first-order
    jump.  Columns whose maximum stays below ``min_peak`` carry no order and
    are skipped.
    """
    records = scan.records if isinstance(scan, ScanResult) else list(scan)
    if len(records) < 2:
        return []
    name, x = _scan_axis(records)
    order = np.argsort(x, kind="stable")
    x = x[order]
    found: list[Transition] = []
    for col in rules.order_parameters:
        y = np.array([records[i].column(col) for i in order], dtype=float)
        ok = np.isfinite(y)
        xs, y = x[ok], np.abs(y[ok])
        if y.size < 2:
            continue
        peak = float(y.max())
        if peak < rules.min_peak:
            continue
        y = y / peak
        steps = np.abs(np.diff(y))
        big = int(np.argmax(steps))
        first_order = steps[big] > rules.jump_fraction
        if first_order:
            found.append(Transition(float((xs[big] + xs[big + 1]) / 2), "first-order", col))
        above = y > rules.floor
        # beyond a first-order jump the low side is the disordered phase; a
        # residual tail crossing the floor there is not a transition
        low_side = 0
        if first_order:
            low_side = 1 if y[big + 1] < y[big] else -1
        for i in np.flatnonzero(above[1:] != above[:-1]):
            if first_order and (i == big or (low_side == 1 and i > big) or (low_side == -1 and i < big)):
                continue
            t = (rules.floor - y[i]) / (y[i + 1] - y[i])
            found.append(Transition(float(xs[i] + t * (xs[i + 1] - xs[i])), "continuous", col))
    found.sort(key=lambda tr: tr.value)
    log.debug("transitions along %s: %s", name, found)
    return found


# -- finite-size gaps -----------------------------------------------------

@dataclass(frozen=True)
class GapStudy:
    gaps: GapRecord
    converged: tuple[bool, ...]
    energies: tuple[tuple[float, float, float], ...]
    fit1: tuple[float, float] | None = None
    fit2: tuple[float, float] | None = None

    @property
    def inverse_lengths(self) -> tuple[float, ...]:
        return tuple(1.0 / n for n in self.gaps.lengths)

    def pairs(self, which: int = 1) -> list[tuple[float, float]]:
        deltas = self.gaps.delta1 if which == 1 else self.gaps.delta2
        return list(zip(self.inverse_lengths, deltas))

    @property
    def intercept1(self) -> float | None:
        return None if self.fit1 is None else self.fit1[1]

    @property
    def intercept2(self) -> float | None:
        return None if self.fit2 is None else self.fit2[1]


def finite_size_gap_study(p: ModelParams, lengths: Sequence[int], cfg: SweepConfig) -> GapStudy:
    """Gaps to the first two excited states for each length.

    A straight line in 1/L is fitted through the converged lengths; the
    fit ``(slope, intercept)`` is left out when fewer than three converged.
    """
    lengths = [int(n) for n in lengths]
    if lengths != sorted(lengths) or len(set(lengths)) != len(lengths):
        raise ValueError("lengths must be strictly ascending")
    d1, d2, conv, energies = [], [], [], []
    for n in lengths:
        rec = run_point(p.with_length(n), cfg, n_excited=2, observables=())
        log.info("L=%d: delta1=%.3e delta2=%.3e converged=%s", n, rec.delta1, rec.delta2, rec.converged)
        d1.append(rec.delta1)
        d2.append(rec.delta2)
        conv.append(rec.converged)
        energies.append((rec.E0, rec.E1, rec.E2))
    gaps = GapRecord(tuple(lengths), tuple(d1), tuple(d2))
    fit1 = fit2 = None
    mask = np.array(conv)
    if mask.sum() >= 3:
        inv = 1.0 / np.array(lengths, dtype=float)[mask]
        s1, i1 = np.polyfit(inv, np.array(d1)[mask], 1)
        s2, i2 = np.polyfit(inv, np.array(d2)[mask], 1)
        fit1, fit2 = (float(s1), float(i1)), (float(s2), float(i2))
    else:
        log.warning("only %d converged lengths; extrapolation skipped", int(mask.sum()))
    return GapStudy(gaps, tuple(conv), tuple(energies), fit1, fit2)
