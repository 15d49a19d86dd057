"""Grid scans of the reachable target space for both control modes.

Every grid cell is an independent design-and-verify job. Cells are grouped
into chunks that run through one batched design and one batched master
equation integration; chunks may run in worker processes. Results are merged
by cell index, so the map does not depend on scheduling.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _csv, coherence, population
from .lindblad import DEFAULT_DT
from .population import DEFAULT_OMEGA_CAP, TRACKING_TOL

log = logging.getLogger(__name__)

DEFAULT_GRID_STEP = 0.02
CHUNK_SIZE = 256
THREADS_ENV = "PULSEFORGE_THREADS"


@dataclass(frozen=True)
class Cell:
    x: float
    y: float
    feasible: bool
    reason: str | None
    closed_loop_error: float
    max_omega: float


@dataclass
class FeasibilityMap:
    mode: str  # "population" or "coherence"
    t_f: float
    grid_step: float
    cells: list

    @property
    def columns(self):
        return ("p1", "p2") if self.mode == "population" else ("h2", "h3")

    def _key(self, x, y):
        return (int(round(x / self.grid_step)), int(round(y / self.grid_step)))

    def __getitem__(self, xy):
        lookup = getattr(self, "_lookup", None)
        if lookup is None:
            lookup = {self._key(c.x, c.y): c for c in self.cells}
            self._lookup = lookup
        return lookup[self._key(*xy)]

    def feasible_keys(self):
        return {self._key(c.x, c.y) for c in self.cells if c.feasible}

    def feasible_count(self):
        return sum(c.feasible for c in self.cells)

    def is_subset_of(self, other):
        """Cell-wise inclusion of the feasible sets (maps must share the grid)."""
        if other.grid_step != self.grid_step or other.mode != self.mode:
            raise ValueError("maps are on different grids")
        return self.feasible_keys() <= other.feasible_keys()

    def csv_rows(self):
        for c in self.cells:
            yield [
                float(c.x), float(c.y), "1" if c.feasible else "0", c.reason or "",
                float(c.closed_loop_error), float(c.max_omega),
            ]

    def to_csv(self, path=None):
        header = [*self.columns, "feasible", "reason", "closed_loop_error", "max_omega"]
        if path is None:
            return _csv.render(header, self.csv_rows())
        return _csv.write(path, header, self.csv_rows())

    def render_ascii(self):
        """Quick terminal picture: ``#`` feasible, ``.`` infeasible, blank outside the domain."""
        xs = sorted({self._key(c.x, c.y)[0] for c in self.cells})
        ys = sorted({self._key(c.x, c.y)[1] for c in self.cells}, reverse=True)
        by_key = {self._key(c.x, c.y): c for c in self.cells}
        lines = []
        for j in ys:
            row = []
            for i in xs:
                c = by_key.get((i, j))
                row.append(" " if c is None or c.reason == "constraint" else "#" if c.feasible else ".")
            lines.append("".join(row).rstrip())
        return "\n".join(lines)


def worker_count():
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def _grid(lo, hi, step):
    n_lo = int(round(lo / step))
    n_hi = int(round(hi / step))
    return [k * step for k in range(n_lo, n_hi + 1)]


def _population_chunk(args):
    p1, p2, t_f, r, dt, omega_cap, tol = args
    res = population.design_population_batch(p1, p2, t_f, r, dt=dt, omega_cap=omega_cap,
                                             keep_aux=False)
    err, _ = population.tracking_errors(res, p1, p2, t_f, r)
    return _collect(res, err, tol)


def _coherence_chunk(args):
    h2, h3, t_f, r, dt, omega_cap, tol = args
    res = coherence.design_coherence_batch(h2, h3, t_f, r, dt=dt, omega_cap=omega_cap,
                                           keep_aux=False)
    err, _, _ = coherence.tracking_errors(res, h2, h3, t_f, r)
    return _collect(res, err, tol)


def _collect(res, err, tol):
    out = []
    for i, reason in enumerate(res.reasons()):
        if reason is None and not err[i] <= tol:
            reason = "tracking"
        max_omega = float(max(np.max(np.abs(res.omega01[i])), np.max(np.abs(res.omega12[i]))))
        out.append((reason, float(err[i]), max_omega))
    return out


def _scan(mode, points, allowed, t_f, r, grid_step, omega_cap, dt, workers, chunk_size):
    todo = [k for k, xy in enumerate(points) if allowed(*xy)]
    results = {}
    jobs = []
    for s in range(0, len(todo), chunk_size):
        idx = todo[s:s + chunk_size]
        xs = np.array([points[k][0] for k in idx])
        ys = np.array([points[k][1] for k in idx])
        jobs.append((idx, (xs, ys, t_f, r, dt, omega_cap, TRACKING_TOL)))

    fn = _population_chunk if mode == "population" else _coherence_chunk
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            chunk_results = list(pool.map(fn, [j[1] for j in jobs]))
    else:
        chunk_results = [fn(j[1]) for j in jobs]
    for (idx, _), res in zip(jobs, chunk_results):
        results.update(zip(idx, res))

    cells = []
    for k, (x, y) in enumerate(points):
        if k in results:
            reason, err, max_omega = results[k]
            cells.append(Cell(x, y, reason is None, reason, err, max_omega))
        else:
            cells.append(Cell(x, y, False, "constraint", float("nan"), float("nan")))
    fmap = FeasibilityMap(mode, t_f, grid_step, cells)
    log.info("%s scan t_f=%g: %d/%d cells feasible", mode, t_f, fmap.feasible_count(), len(cells))
    return fmap


def population_feasible_region(t_f, r, grid_step=DEFAULT_GRID_STEP, omega_cap=DEFAULT_OMEGA_CAP,
                               dt=DEFAULT_DT, workers=None, chunk_size=CHUNK_SIZE):
    """Scan ``(P1(t_f), P2(t_f))`` over the unit square.

    Cells with ``P1 + P2 > 1`` are marked infeasible with reason
    ``"constraint"`` without running a design.
    """
    if not 0 < grid_step <= 0.5:
        raise ValueError(f"grid_step must lie in (0, 0.5], got {grid_step}")
    axis = _grid(0.0, 1.0, grid_step)
    points = [(x, y) for x in axis for y in axis]

    def allowed(p1, p2):
        return p1 + p2 <= 1.0 + 1e-9

    return _scan("population", points, allowed, t_f, r, grid_step, omega_cap, dt,
                 workers, chunk_size)


def coherence_feasible_region(t_f, r, grid_step=DEFAULT_GRID_STEP, omega_cap=DEFAULT_OMEGA_CAP,
                              dt=DEFAULT_DT, workers=None, chunk_size=CHUNK_SIZE,
                              h_range=(0.0, 0.5)):
    """Scan ``(h2(t_f), h3(t_f))`` over ``h_range`` squared.

    The default covers one quadrant. Flipping the phase of ``|2>`` (or ``|1>``)
    maps a target onto its mirror image with sign-flipped drives, so the map
    is symmetric under ``h2 -> -h2`` and ``h3 -> -h3``. Pass ``(-0.5, 0.5)``
    for the full square.
    """
    if not 0 < grid_step <= 0.5:
        raise ValueError(f"grid_step must lie in (0, 0.5], got {grid_step}")
    axis = _grid(h_range[0], h_range[1], grid_step)
    points = [(x, y) for x in axis for y in axis]
    return _scan("coherence", points, coherence.coherence_target_allowed, t_f, r, grid_step,
                 omega_cap, dt, workers, chunk_size)
