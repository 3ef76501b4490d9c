"""Dominated coupling from the past for multiscale area-interaction models.

The dominating process is a spatial immigration-death process: points arrive
uniformly at total rate ``dominating_rate * |W|`` and each lives for an
Exp(1) time. It is reversible, so its past is generated by running the same
dynamics backwards from a stationary (Poisson) draw at time 0.

Each point of the dominating process carries one uniform mark for its whole
life. The upper and lower processes accept a birth when the mark falls below
their acceptance bound; the shared mark is the coupling. Extending the
horizon only prepends a new segment of events, so marks already drawn are
reused and the runs funnel.

Randomness: segment ``k`` of replicate ``r`` draws from
``SeedSequence(seed, spawn_key=(r, k))``. Segment 0 holds the time-0 draw
and the events on [-T0, 0].
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointPattern, _disc_rect_area, _uncovered_fraction
from .models import MultiscaleModel, dominating_rate, lower_thinning_probability

__all__ = [
    "BIRTH",
    "DEATH",
    "HorizonCapExceeded",
    "SandwichBreach",
    "DominatingTrajectory",
    "SandwichState",
    "CftpResult",
    "sample_dominating",
    "extend_backward",
    "evolve_sandwich",
    "perfect_sample",
    "write_trajectory_csv",
    "DEFAULT_T0",
    "DEFAULT_MAX_HORIZON",
]

BIRTH = 1
DEATH = -1
DEFAULT_T0 = 1.0
DEFAULT_MAX_HORIZON = float(2**20)


class HorizonCapExceeded(RuntimeError):
    def __init__(self, cap, replicate=None):
        self.cap = cap
        self.replicate = replicate
        where = "" if replicate is None else f" (replicate {replicate})"
        super().__init__(f"no coalescence before the horizon cap T = {cap:g}{where}")


class SandwichBreach(AssertionError):
    pass


def _stream(seed, *key) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.default_rng(ss)


def sample_dominating(model: MultiscaleModel, rng: np.random.Generator) -> PointPattern:
    """Poisson draw at the dominating rate on the model's window."""
    n = int(rng.poisson(dominating_rate(model) * model.window.area))
    return PointPattern(model.window.uniform(rng, n), model.window)


@dataclass
class _Segment:
    start: float  # older end, negative
    end: float
    times: np.ndarray
    kinds: np.ndarray
    ids: np.ndarray


class DominatingTrajectory:
    """Birth/death history of the dominating process on [-horizon, 0].

    ``x``, ``y`` and ``mark`` are indexed by point id. ``events()`` returns the
    forward-time event arrays; ``initial_ids`` are the points alive at
    ``-horizon``.
    """

    def __init__(self, model: MultiscaleModel, seed=0, replicate: int = 0, t0: float = DEFAULT_T0):
        if not t0 > 0:
            raise ValueError("initial horizon must be positive")
        self.model = model
        self.seed = seed
        self.replicate = replicate
        self.birth_rate = dominating_rate(model) * model.window.area
        self._x: list[float] = []
        self._y: list[float] = []
        self._mark: list[float] = []
        self.segments: list[_Segment] = []
        rng = _stream(seed, replicate, 0)
        d0 = sample_dominating(model, rng)
        marks = rng.random(d0.n)
        ids = [self._new_point(x, y, m) for (x, y), m in zip(d0.coords, marks)]
        self.final_ids = np.array(ids, dtype=np.int64)
        self.horizon = 0.0
        self._oldest = list(ids)
        self._grow(t0, rng)

    def _new_point(self, x, y, mark) -> int:
        self._x.append(float(x))
        self._y.append(float(y))
        self._mark.append(float(mark))
        return len(self._x) - 1

    def _grow(self, new_T: float, rng: np.random.Generator):
        """Run the dynamics in reversed time from -horizon back to -new_T."""
        window = self.model.window
        beta = self.birth_rate
        alive = list(self._oldest)
        age = self.horizon
        times, kinds, ids = [], [], []
        while True:
            n = len(alive)
            age += rng.exponential(1.0 / (beta + n))
            if age > new_T:
                break
            if rng.random() * (beta + n) < beta:
                # appears going backwards: a death in forward time
                loc = window.uniform(rng, 1)[0]
                pid = self._new_point(loc[0], loc[1], rng.random())
                alive.append(pid)
                kinds.append(DEATH)
            else:
                # disappears going backwards: its birth in forward time
                i = int(rng.integers(n))
                pid = alive[i]
                alive[i] = alive[-1]
                alive.pop()
                kinds.append(BIRTH)
            times.append(-age)
            ids.append(pid)
        self.segments.append(
            _Segment(
                start=-new_T,
                end=-self.horizon,
                times=np.array(times[::-1], dtype=float),
                kinds=np.array(kinds[::-1], dtype=np.int8),
                ids=np.array(ids[::-1], dtype=np.int64),
            )
        )
        self.horizon = float(new_T)
        self._oldest = alive

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self._x)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self._y)

    @property
    def mark(self) -> np.ndarray:
        return np.asarray(self._mark)

    @property
    def initial_ids(self) -> np.ndarray:
        return np.array(sorted(self._oldest), dtype=np.int64)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def events(self):
        """Forward-ordered (times, kinds, ids) over [-horizon, 0]."""
        segs = self.segments[::-1]
        return (
            np.concatenate([s.times for s in segs]),
            np.concatenate([s.kinds for s in segs]),
            np.concatenate([s.ids for s in segs]),
        )

    def state_at(self, t: float) -> PointPattern:
        """Dominating configuration just after time ``t`` (``-horizon <= t <= 0``)."""
        if t < -self.horizon or t > 0:
            raise ValueError(f"time {t} outside [-{self.horizon}, 0]")
        alive = set(self._oldest)
        times, kinds, ids = self.events()
        for tt, k, pid in zip(times, kinds, ids):
            if tt > t:
                break
            if k == BIRTH:
                alive.add(int(pid))
            else:
                alive.discard(int(pid))
        return self._pattern(sorted(alive))

    def _pattern(self, ids) -> PointPattern:
        ids = np.asarray(ids, dtype=np.int64)
        xy = np.column_stack([self.x[ids], self.y[ids]]) if len(ids) else np.empty((0, 2))
        return PointPattern(xy, self.model.window, ids)


def extend_backward(traj: DominatingTrajectory, new_T: float) -> DominatingTrajectory:
    """Prepend events on [-new_T, -traj.horizon); existing events are untouched."""
    if not new_T > traj.horizon:
        raise ValueError(f"new horizon {new_T} must exceed the current one {traj.horizon}")
    rng = _stream(traj.seed, traj.replicate, traj.n_segments)
    traj._grow(float(new_T), rng)
    return traj


class _Config:
    """Point set with O(1) insert/delete by id and contiguous coordinate views."""

    def __init__(self, cap=64):
        self.x = np.empty(cap)
        self.y = np.empty(cap)
        self.ids = np.empty(cap, dtype=np.int64)
        self.slot: dict[int, int] = {}
        self.n = 0

    def add(self, pid, x, y):
        if self.n == len(self.x):
            cap = 2 * len(self.x)
            self.x = np.resize(self.x, cap)
            self.y = np.resize(self.y, cap)
            self.ids = np.resize(self.ids, cap)
        self.x[self.n] = x
        self.y[self.n] = y
        self.ids[self.n] = pid
        self.slot[pid] = self.n
        self.n += 1

    def remove(self, pid):
        i = self.slot.pop(pid, None)
        if i is None:
            return
        last = self.n - 1
        if i != last:
            moved = int(self.ids[last])
            self.x[i] = self.x[last]
            self.y[i] = self.y[last]
            self.ids[i] = moved
            self.slot[moved] = i
        self.n = last

    def __contains__(self, pid):
        return pid in self.slot

    def id_set(self):
        return set(self.slot)


@dataclass
class SandwichState:
    U: PointPattern
    L: PointPattern
    time: float = 0.0
    births: int = 0
    deaths: int = 0
    area_evaluations: int = 0
    max_gap: int = 0
    snapshots: list | None = None

    @property
    def coalesced(self) -> bool:
        return self.U.n == self.L.n


class _AcceptanceBounds:
    """Log acceptance bounds for the upper and lower processes."""

    def __init__(self, model: MultiscaleModel):
        w = model.window
        self.model = model
        self.torus = w.torus
        self.bounds = w.bounds
        self.terms = [
            (t.log_gamma, t.grain.radius, t.grain.n_columns, t.grain.area) for t in model.terms
        ]
        self.offset = model.log_dominating_rate() - model.log_lambda
        self.evaluations = 0

    def _added(self, cx, cy, r, ncols, exact, cfg: _Config):
        self.evaluations += 1
        if cfg.n == 0 or exact == 0.0:
            return exact
        x0, x1, y0, y1 = self.bounds
        free, cand = _uncovered_fraction(
            cx, cy, r, cfg.x[: cfg.n], cfg.y[: cfg.n], ncols, x0, x1, y0, y1, self.torus
        )
        return exact if cand <= 0.0 else exact * free / cand

    def __call__(self, cx, cy, U: _Config, L: _Config):
        hi = -self.offset
        lo = -self.offset
        for log_gamma, r, ncols, full in self.terms:
            exact = full if self.torus else _disc_rect_area(cx, cy, r, *self.bounds)
            lu = -log_gamma * self._added(cx, cy, r, ncols, exact, U)
            ll = -log_gamma * self._added(cx, cy, r, ncols, exact, L)
            if lu >= ll:
                hi += lu
                lo += ll
            else:
                hi += ll
                lo += lu
        return hi, lo


def evolve_sandwich(traj: DominatingTrajectory, model: MultiscaleModel,
                    check: bool = False, record: bool = False) -> SandwichState:
    """Run the upper and lower processes forward from -horizon to 0.

    With ``check`` the sandwich ``L <= U <= D`` is verified after every event.
    With ``record`` the (time, U ids, L ids) triple is stored before the first
    event and after each event.
    """
    xs, ys, marks = traj.x, traj.y, traj.mark
    log_thin = model.log_lower_thinning()
    thin = math.exp(log_thin)
    U, L = _Config(), _Config()
    for pid in traj.initial_ids.tolist():
        U.add(pid, xs[pid], ys[pid])
        if marks[pid] <= thin:
            L.add(pid, xs[pid], ys[pid])
    D = set(traj.initial_ids.tolist()) if check else None
    bounds = _AcceptanceBounds(model)
    snapshots = [(-traj.horizon, U.id_set(), L.id_set())] if record else None
    births = deaths = 0
    max_gap = U.n - L.n
    times, kinds, ids = traj.events()
    for t, kind, pid in zip(times.tolist(), kinds.tolist(), ids.tolist()):
        if kind == BIRTH:
            births += 1
            cx, cy = xs[pid], ys[pid]
            log_hi, log_lo = bounds(cx, cy, U, L)
            logm = math.log(marks[pid]) if marks[pid] > 0 else -math.inf
            if logm < log_hi:
                U.add(pid, cx, cy)
            if logm < log_lo:
                L.add(pid, cx, cy)
            if D is not None:
                D.add(pid)
        else:
            deaths += 1
            U.remove(pid)
            L.remove(pid)
            if D is not None:
                D.discard(pid)
        gap = U.n - L.n
        if gap > max_gap:
            max_gap = gap
        if check:
            u_ids, l_ids = U.id_set(), L.id_set()
            if not (l_ids <= u_ids <= D):
                raise SandwichBreach(
                    f"sandwich violated at t={t}: |L\\U|={len(l_ids - u_ids)}, |U\\D|={len(u_ids - D)}"
                )
        if record:
            snapshots.append((t, U.id_set(), L.id_set()))
    if L.n > U.n or not L.id_set() <= U.id_set():
        raise SandwichBreach("lower process escaped the upper process")
    return SandwichState(
        U=traj._pattern(sorted(U.ids[: U.n].tolist())),
        L=traj._pattern(sorted(L.ids[: L.n].tolist())),
        time=0.0,
        births=births,
        deaths=deaths,
        area_evaluations=bounds.evaluations,
        max_gap=max_gap,
        snapshots=snapshots,
    )


@dataclass
class CftpResult:
    sample: PointPattern
    horizon_used: float
    restarts: int
    events_processed: int
    area_evaluations: int = 0
    trajectory: DominatingTrajectory | None = field(default=None, repr=False)


def perfect_sample(model: MultiscaleModel, seed=0, replicate: int = 0, t0: float = DEFAULT_T0,
                   max_horizon: float = DEFAULT_MAX_HORIZON, keep_trajectory: bool = False,
                   check: bool = False) -> CftpResult:
    """Exact draw from ``model`` by dominated CFTP with horizons t0 * 2**k.

    Raises HorizonCapExceeded if U and L have not met at time 0 once the
    horizon would exceed ``max_horizon``.
    """
    if t0 > max_horizon:
        raise ValueError("t0 exceeds max_horizon")
    traj = DominatingTrajectory(model, seed, replicate, t0)
    restarts = 0
    processed = 0
    evaluations = 0
    while True:
        state = evolve_sandwich(traj, model, check=check)
        processed += state.births + state.deaths
        evaluations += state.area_evaluations
        if state.coalesced:
            return CftpResult(
                sample=state.U,
                horizon_used=traj.horizon,
                restarts=restarts,
                events_processed=processed,
                area_evaluations=evaluations,
                trajectory=traj if keep_trajectory else None,
            )
        if 2 * traj.horizon > max_horizon:
            raise HorizonCapExceeded(max_horizon, replicate)
        extend_backward(traj, 2 * traj.horizon)
        restarts += 1


def write_trajectory_csv(traj: DominatingTrajectory, path):
    """Dump the trajectory as time,kind,point_id,x,y,mark rows.

    Points alive at -horizon come first with kind ``initial``; deaths leave
    x, y and mark empty.
    """
    xs, ys, marks = traj.x, traj.y, traj.mark
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "kind", "point_id", "x", "y", "mark"])
        for pid in traj.initial_ids.tolist():
            w.writerow([f"{-traj.horizon:.17g}", "initial", pid,
                        f"{xs[pid]:.17g}", f"{ys[pid]:.17g}", f"{marks[pid]:.17g}"])
        times, kinds, ids = traj.events()
        for t, k, pid in zip(times.tolist(), kinds.tolist(), ids.tolist()):
            if k == BIRTH:
                w.writerow([f"{t:.17g}", "birth", pid,
                            f"{xs[pid]:.17g}", f"{ys[pid]:.17g}", f"{marks[pid]:.17g}"])
            else:
                w.writerow([f"{t:.17g}", "death", pid, "", "", ""])
