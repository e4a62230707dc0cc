"""Monte Carlo simulation of refracted Lévy paths and functional estimators."""

from concurrent import futures
from typing import Literal
import logging
import math

import numpy as np
import pandas as pd
import pydantic

from refracted import config as config_lib
from refracted import errors
from refracted import levy
from refracted import scale


FUNCTIONALS = (
    "two_sided_up",
    "two_sided_down",
    "one_sided_up",
    "one_sided_down",
    "ruin",
    "creep",
    "resolvent_mass",
    "dividends",
    "overshoot_undershoot",
)

# Creeping is estimated from ruin levels in (-eps, 0], extrapolated to eps = 0.
CREEP_BANDS = (0.02, 0.01, 0.005)


def _RichardsonWeights(bands=CREEP_BANDS) -> np.ndarray:
    """Weights giving the intercept of a least squares line through (eps_i, y_i)."""
    e = np.asarray(bands)
    centred = e - e.mean()
    return 1.0 / len(e) - e.mean() * centred / np.sum(centred**2)


class FunctionalQuery(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    x: float
    a: float | None = None
    q: float = pydantic.Field(0.0, ge=0)
    A: tuple[float, float] | None = None
    B: tuple[float, float] | None = None
    kind: Literal["two_sided", "killed_below", "killed_above", "free"] = "free"


class Estimate(pydantic.BaseModel):
    functional: str
    mean: float
    stderr: float
    n: int
    scheme: str
    seed: int
    horizon: float
    bias_bound: float


class PathSample(pydantic.BaseModel):
    """One simulated path as an event log (time, U_pre, U, X, occupation, slope, kind)."""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    scheme: str
    x0: float
    horizon: float
    events: pd.DataFrame
    kappa_up: float = math.inf
    kappa_down: float = math.inf
    U_ruin: float | None = None
    U_before_ruin: float | None = None

    def Sup(self) -> np.ndarray:
        return np.maximum.accumulate(
            np.maximum(self.events.U_pre.values, self.events.U.values)
        )

    def Inf(self) -> np.ndarray:
        return np.minimum.accumulate(self.events.U.values)

    def RefractedTime(self) -> float:
        return float(self.events.occupation.iloc[-1])


def _Discounted(t1: np.ndarray, t2: np.ndarray, q: float) -> np.ndarray:
    """int_{t1}^{t2} e^{-q t} dt, zero when t2 <= t1."""
    t2 = np.maximum(t2, t1)
    if q == 0:
        return t2 - t1
    return (np.exp(-q * t1) - np.exp(-q * t2)) / q


class _Setup(object):
    """What a block of paths has to record, and when it stops."""

    def __init__(
        self,
        model: levy.LevyModel,
        refraction: levy.RefractionConfig,
        x: float,
        horizon: float,
        a: float | None = None,
        q: float = 0.0,
        B: tuple[float, float] | None = None,
        stop_up: bool = False,
        stop_down: bool = True,
    ):
        self.model = model
        self.c = model.c
        self.delta = refraction.delta
        self.b = refraction.b
        self.x = x
        self.horizon = horizon
        self.a = a
        self.q = q
        self.B = B
        self.stop_up = stop_up and a is not None
        self.stop_down = stop_down

    def _Records(self, n: int) -> tuple[dict[str, np.ndarray], np.ndarray]:
        rec = dict(
            up=np.full(n, np.inf),
            down=np.full(n, np.inf),
            u_ruin=np.full(n, np.nan),
            u_pre=np.full(n, np.nan),
            occupation=np.zeros(n),
            dividends=np.zeros(n),
            censored=np.zeros(n, dtype=bool),
            u_T=np.full(n, np.nan),
        )
        active = np.ones(n, dtype=bool)
        if self.a is not None and self.x >= self.a:
            rec["up"][:] = 0.0
            if self.stop_up:
                active[:] = False
        if self.x < 0:
            rec["down"][:] = 0.0
            rec["u_ruin"][:] = self.x
            rec["u_pre"][:] = self.x
            if self.stop_down:
                active[:] = False
        return rec, active

    # Bounded variation: between jumps U rises with slope c below b, c - delta above.

    def _TimeTo(self, u: np.ndarray, level: float) -> np.ndarray:
        c, b, up = self.c, self.b, self.c - self.delta
        to_b = np.where(u < b, (b - u) / c, 0.0)
        with np.errstate(invalid="ignore"):
            below = (level - u) / c
            above = to_b + (level - np.maximum(u, b)) / up
        t = np.where(level <= b, below, above)
        return np.where(u >= level, 0.0, t)

    def _Level(self, u: np.ndarray, tau: np.ndarray) -> np.ndarray:
        c, b, up = self.c, self.b, self.c - self.delta
        to_b = np.where(u < b, (b - u) / c, 0.0)
        return np.where(tau <= to_b, u + c * tau, np.maximum(u, b) + up * (tau - to_b))

    def _Occupy(self, rec, idx, u, t, dur):
        if self.B is not None:
            lo, hi = self.B
            t1 = np.minimum(self._TimeTo(u, lo), dur)
            t2 = np.minimum(self._TimeTo(u, hi), dur)
            rec["occupation"][idx] += _Discounted(t + t1, t + t2, self.q)
        above = np.minimum(self._TimeTo(u, self.b), dur)
        rec["dividends"][idx] += self.delta * _Discounted(t + above, t + dur, self.q)

    def _Trace(self, trace, t, u, dur, to_b, level, u_new, x_start, occ_start, kind):
        c, up = self.c, self.c - self.delta
        if u < self.b and to_b < dur:
            trace.append(
                (t + to_b, self.b, self.b, x_start + c * to_b, occ_start, up, "cross")
            )
        x_end = x_start + c * dur - (level - u_new)
        occ_end = occ_start + dur - to_b
        slope = up if u_new > self.b else c
        trace.append((t + dur, level, u_new, x_end, occ_end, slope, kind))

    def ExactBlock(self, n: int, rng: np.random.Generator, trace: list | None = None):
        """Event-driven exact simulation of n bounded variation paths."""
        rec, active = self._Records(n)
        jumps = self.model.jumps
        rate = jumps.BigJumpRate(0.0)
        u = np.full(n, float(self.x))
        t = np.zeros(n)
        X = np.zeros(n)
        refracted = np.zeros(n)
        T = self.horizon

        while np.any(active):
            idx = np.nonzero(active)[0]
            ui, ti = u[idx], t[idx]
            if rate > 0:
                gap = rng.exponential(1.0 / rate, idx.size)
            else:
                gap = np.full(idx.size, np.inf)
            dur = np.minimum(gap, T - ti)

            hit_up = np.zeros(idx.size, dtype=bool)
            if self.a is not None:
                tau_a = self._TimeTo(ui, self.a)
                hit_up = (tau_a <= dur) & np.isinf(rec["up"][idx])
                rec["up"][idx[hit_up]] = ti[hit_up] + tau_a[hit_up]
                if self.stop_up:
                    dur = np.where(hit_up, tau_a, dur)
                else:
                    hit_up[:] = False

            self._Occupy(rec, idx, ui, ti, dur)
            to_b = np.minimum(self._TimeTo(ui, self.b), dur)
            level = self._Level(ui, dur)
            x_start, occ_start = X[idx], refracted[idx]
            X[idx] += self.c * dur
            refracted[idx] += dur - to_b

            at_horizon = ~hit_up & (gap >= T - ti)
            jumped = ~hit_up & ~at_horizon
            u_new = level.copy()
            sizes = jumps.SampleBigJumps(rng, 0.0, int(jumped.sum()))
            u_new[jumped] -= sizes
            X[idx[jumped]] -= sizes

            ruined = jumped & (u_new < 0) & np.isinf(rec["down"][idx])
            rec["down"][idx[ruined]] = ti[ruined] + dur[ruined]
            rec["u_ruin"][idx[ruined]] = u_new[ruined]
            rec["u_pre"][idx[ruined]] = level[ruined]

            rec["censored"][idx[at_horizon]] = True
            rec["u_T"][idx[at_horizon]] = level[at_horizon]

            if trace is not None:
                kind = "jump"
                if hit_up[0]:
                    kind = "exit_up"
                elif at_horizon[0]:
                    kind = "horizon"
                elif ruined[0]:
                    kind = "ruin"
                self._Trace(
                    trace,
                    ti[0],
                    ui[0],
                    dur[0],
                    to_b[0],
                    level[0],
                    u_new[0],
                    x_start[0],
                    occ_start[0],
                    kind,
                )

            u[idx] = u_new
            t[idx] = ti + dur
            done = hit_up | at_horizon | (ruined & self.stop_down)
            active[idx[done]] = False
        return rec

    def StrongBlock(
        self,
        n: int,
        rng: np.random.Generator,
        eps: float,
        h: float,
        gaussian_small_jumps: bool = True,
        trace: list | None = None,
    ):
        """Euler scheme for the eps-truncated process, Brownian bridge barrier checks."""
        rec, active = self._Records(n)
        model, jumps = self.model, self.model.jumps
        rate = jumps.BigJumpRate(eps)
        drift = model.Mean() + jumps.BigJumpMean(eps)
        var = model.sigma**2
        if gaussian_small_jumps:
            var += jumps.SmallJumpVariance(eps)
        sd = math.sqrt(var)
        u = np.full(n, float(self.x))
        X = np.zeros(n)
        refracted = np.zeros(n)
        steps = int(math.ceil(self.horizon / h))
        lo, hi = self.B if self.B is not None else (np.inf, -np.inf)

        for step in range(steps):
            idx = np.nonzero(active)[0]
            if not idx.size:
                break
            t0 = step * h
            ui = u[idx]
            above_b = ui > self.b
            disc = math.exp(-self.q * t0)
            rec["occupation"][idx] += disc * h * ((ui >= lo) & (ui <= hi))
            rec["dividends"][idx] += self.delta * disc * h * above_b
            refracted[idx] += h * above_b

            move = drift * h
            if sd > 0:
                move = move + sd * math.sqrt(h) * rng.standard_normal(idx.size)
            u1 = ui + move - self.delta * h * above_b
            X[idx] += move

            # Brownian bridge probabilities of touching a barrier inside the step.
            # Without a Gaussian part 0 is passed by a small jump, seen at the end
            # of the step with overshoot u1.
            if model.sigma > 0:
                with np.errstate(over="ignore", invalid="ignore"):
                    p_down = np.where(
                        (ui > 0) & (u1 > 0), np.exp(-2 * ui * u1 / (var * h)), 1.0
                    )
                down = (u1 <= 0) | (rng.random(idx.size) < p_down)
            else:
                down = u1 < 0
            if self.a is not None:
                if sd > 0:
                    da, da1 = self.a - ui, self.a - u1
                    with np.errstate(over="ignore", invalid="ignore"):
                        p_up = np.where(
                            (da > 0) & (da1 > 0), np.exp(-2 * da * da1 / (var * h)), 1.0
                        )
                    cross_up = (u1 >= self.a) | (rng.random(idx.size) < p_up)
                else:
                    cross_up = u1 >= self.a
                # Both barriers in one step: keep the nearer endpoint.
                both = down & cross_up
                down = down & ~(both & (u1 > self.a / 2))
                cross_up = cross_up & ~down
            else:
                cross_up = np.zeros(idx.size, dtype=bool)
            creep = down if model.sigma > 0 else np.zeros(idx.size, dtype=bool)
            small = down & ~creep

            if rate > 0:
                counts = rng.poisson(rate * h, idx.size)
            else:
                counts = np.zeros(idx.size, dtype=int)
            counts[down | cross_up] = 0
            total = np.zeros(idx.size)
            if counts.any():
                owners = np.repeat(np.arange(idx.size), counts)
                np.add.at(total, owners, jumps.SampleBigJumps(rng, eps, owners.size))
            u2 = np.where(creep, 0.0, u1 - total)
            X[idx] -= total

            new_up = cross_up & np.isinf(rec["up"][idx])
            rec["up"][idx[new_up]] = t0 + h
            passed = ~creep & (u2 < 0)
            ruined = (creep | passed) & np.isinf(rec["down"][idx])
            rec["down"][idx[ruined]] = t0 + h
            rec["u_ruin"][idx[ruined]] = u2[ruined]
            before = np.where(creep, 0.0, np.where(small, ui, u1))
            rec["u_pre"][idx[ruined]] = before[ruined]

            if trace is not None:
                kind = "ruin" if ruined[0] else ("exit_up" if new_up[0] else "step")
                trace.append(
                    (
                        t0 + h,
                        u1[0],
                        u2[0],
                        X[0],
                        refracted[0],
                        drift - self.delta * above_b[0],
                        kind,
                    )
                )

            u[idx] = u2
            done = np.zeros(idx.size, dtype=bool)
            if self.stop_up:
                done |= new_up
            if self.stop_down:
                done |= ruined
            active[idx[done]] = False

        left = np.nonzero(active)[0]
        rec["censored"][left] = True
        rec["u_T"][left] = u[left]
        return rec


_TRACE_COLUMNS = ["time", "U_pre", "U", "X", "occupation", "slope", "kind"]


def _Sample(scheme, setup, rec, trace) -> PathSample:
    slope = setup.c - setup.delta if setup.x > setup.b else setup.c
    start = (0.0, setup.x, setup.x, 0.0, 0.0, slope, "start")
    events = pd.DataFrame([start] + trace, columns=_TRACE_COLUMNS)
    ruined = bool(np.isfinite(rec["down"][0]))
    return PathSample(
        scheme=scheme,
        x0=setup.x,
        horizon=setup.horizon,
        events=events,
        kappa_up=float(rec["up"][0]),
        kappa_down=float(rec["down"][0]),
        U_ruin=float(rec["u_ruin"][0]) if ruined else None,
        U_before_ruin=float(rec["u_pre"][0]) if ruined else None,
    )


def _Generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _RequireExact(model: levy.LevyModel, refraction: levy.RefractionConfig):
    if not model.BoundedVariation():
        raise errors.SchemeMismatch(
            "exact simulation needs a bounded variation model; use the strong scheme"
        )
    levy.ValidateRefraction(model, refraction)


def SimulateExactBV(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    x0: float,
    T: float,
    seed: int = 0,
    a: float | None = None,
) -> PathSample:
    """Exact path up to ruin or T; kappa_a^+ is recorded without stopping."""
    _RequireExact(model, refraction)
    setup = _Setup(model, refraction, x0, T, a=a)
    trace = []
    rec = setup.ExactBlock(1, _Generator(np.random.SeedSequence(seed)), trace)
    return _Sample("exact", setup, rec, trace)


def SimulateStrongApprox(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    x0: float,
    T: float,
    seed: int = 0,
    eps: float = 1e-3,
    h: float = 1e-3,
    gaussian_small_jumps: bool = True,
    a: float | None = None,
) -> PathSample:
    """Euler path of the eps-truncated approximation up to ruin or T."""
    if not (eps > 0 and h > 0):
        raise errors.InvalidQuery(f"need eps, h > 0, got eps={eps}, h={h}")
    levy.ValidateRefraction(model, refraction)
    setup = _Setup(model, refraction, x0, T, a=a)
    trace = []
    rng = _Generator(np.random.SeedSequence(seed))
    rec = setup.StrongBlock(1, rng, eps, h, gaussian_small_jumps, trace)
    return _Sample("strong", setup, rec, trace)


_STOPS = {
    "two_sided_up": (True, True),
    "two_sided_down": (True, True),
    "one_sided_up": (True, False),
    "one_sided_down": (False, True),
    "ruin": (False, True),
    "creep": (False, True),
    "dividends": (False, True),
    "overshoot_undershoot": (False, True),
}

_RESOLVENT_STOPS = {
    "two_sided": (True, True),
    "killed_below": (False, True),
    "killed_above": (True, False),
    "free": (False, False),
}


def _Discount(times: np.ndarray, q: float) -> np.ndarray:
    """e^{-q t}, zero where the time is infinite (also for q = 0)."""
    finite = np.isfinite(times)
    return np.where(finite, np.exp(-q * np.where(finite, times, 0.0)), 0.0)


def _Values(functional: str, query: FunctionalQuery, rec) -> np.ndarray:
    q = query.q
    up = _Discount(rec["up"], q)
    down = _Discount(rec["down"], q)
    if functional == "two_sided_up":
        return np.where(rec["up"] < rec["down"], up, 0.0)
    if functional == "one_sided_up":
        return up
    if functional == "two_sided_down":
        return np.where(rec["down"] < rec["up"], down, 0.0)
    if functional in ("one_sided_down", "ruin"):
        return down
    if functional == "creep":
        weights = _RichardsonWeights()
        level = np.nan_to_num(rec["u_ruin"], nan=-np.inf)
        bands = np.stack([(level > -e) & (level <= 0) for e in CREEP_BANDS], axis=-1)
        return down * (bands @ weights)
    if functional == "resolvent_mass":
        return rec["occupation"]
    if functional == "dividends":
        return rec["dividends"]
    (alo, ahi), (blo, bhi) = query.A, query.B
    under, over = rec["u_pre"], rec["u_ruin"]
    hit = (over > alo) & (over <= ahi) & (under >= blo) & (under <= bhi)
    return np.where(hit, down, 0.0)


def _RuinTailBound(model, refraction, levels: np.ndarray) -> np.ndarray:
    """Upper bound on P(ruin after the horizon) from the ruin probability of X - delta t.

    The bound decreases in the level, so it is evaluated on a grid and read off at
    the grid point below each level.
    """
    mean, delta = model.Mean(), refraction.delta
    out = np.ones_like(levels)
    pos = levels > 0
    if mean <= delta or not np.any(pos):
        return out
    ww = scale.Build(model, delta, 0.0)
    grid = np.linspace(0.0, levels[pos].max(), 65)
    bound = np.clip(1.0 - (mean - delta) * ww.W(grid), 0.0, 1.0)
    cell = np.searchsorted(grid, levels[pos], side="right") - 1
    out[pos] = bound[np.clip(cell, 0, len(grid) - 1)]
    return out


def _BiasBound(functional, query, model, refraction, rec, horizon: float) -> float:
    """Bound on what paths still alive at the horizon could add to the mean."""
    censored = rec["censored"]
    if not censored.any():
        return 0.0
    frac = float(censored.mean())
    q = query.q
    if q > 0:
        # Remaining value is at most delta/q, 1/q or 1, discounted from the horizon.
        remaining = dict(dividends=refraction.delta / q, resolvent_mass=1.0 / q)
        return frac * math.exp(-q * horizon) * remaining.get(functional, 1.0)
    if functional in ("ruin", "creep", "overshoot_undershoot"):
        tail = _RuinTailBound(model, refraction, rec["u_T"][censored])
        return float(tail.sum() / censored.size)
    if functional == "resolvent_mass":
        # XXX: heuristic, assumes at most one more unit-speed pass through B.
        lo, hi = query.B
        return frac * max(1.0, hi - lo)
    return frac


def _DefaultHorizon(q: float) -> float:
    return math.log(1e4) / q if q > 0 else 50.0


def _CheckQuery(functional: str, query: FunctionalQuery):
    if functional not in FUNCTIONALS:
        raise errors.InvalidQuery(
            f"unknown functional {functional!r}", choices=list(FUNCTIONALS)
        )
    needs_a = functional in ("two_sided_up", "two_sided_down", "one_sided_up") or (
        functional == "resolvent_mass" and query.kind in ("two_sided", "killed_above")
    )
    if needs_a and query.a is None:
        raise errors.InvalidQuery(f"{functional} needs the upper level a")
    if functional == "resolvent_mass" and query.B is None:
        raise errors.InvalidQuery("resolvent_mass needs the interval B")
    if functional == "overshoot_undershoot" and (query.A is None or query.B is None):
        raise errors.InvalidQuery("overshoot_undershoot needs intervals A and B")
    if functional in ("dividends", "one_sided_down") and not query.q > 0:
        raise errors.NonpositiveQ(query.q)


def _RunBlocks(setup: _Setup, sim: config_lib.SimConfig, n_paths: int, seed: int):
    sizes = [sim.block_size] * (n_paths // sim.block_size)
    if n_paths % sim.block_size:
        sizes.append(n_paths % sim.block_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def Block(args):
        size, child = args
        rng = _Generator(child)
        if sim.scheme == "exact":
            return setup.ExactBlock(size, rng)
        return setup.StrongBlock(
            size, rng, sim.epsilon, sim.h, sim.gaussian_small_jumps
        )

    with futures.ThreadPoolExecutor(max_workers=sim.workers) as executor:
        blocks = list(executor.map(Block, zip(sizes, seeds)))
    return {k: np.concatenate([blk[k] for blk in blocks]) for k in blocks[0]}


def EstimateFunctional(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    functional: str,
    query: FunctionalQuery,
    sim: config_lib.SimConfig = config_lib.SimConfig(),
) -> Estimate:
    """Sample mean and standard error of a discounted path functional.

    The horizon is doubled until the truncation bias bound is below stderr / 3.
    """
    _CheckQuery(functional, query)
    if sim.scheme == "exact":
        _RequireExact(model, refraction)
    else:
        levy.ValidateRefraction(model, refraction)
    if functional == "ruin" and query.q != 0:
        query = query.model_copy(update=dict(q=0.0))

    if functional == "resolvent_mass":
        stop_up, stop_down = _RESOLVENT_STOPS[query.kind]
    else:
        stop_up, stop_down = _STOPS[functional]

    horizon = sim.horizon or _DefaultHorizon(query.q)
    for attempt in range(sim.max_horizon_doublings + 1):
        setup = _Setup(
            model,
            refraction,
            query.x,
            horizon,
            a=query.a,
            q=query.q,
            B=query.B,
            stop_up=stop_up,
            stop_down=stop_down,
        )
        rec = _RunBlocks(setup, sim, sim.n_paths, sim.seed)
        values = _Values(functional, query, rec)
        n = values.size
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        bias = _BiasBound(functional, query, model, refraction, rec, horizon)
        if bias <= stderr / 3 or bias < 1e-15:
            return Estimate(
                functional=functional,
                mean=mean,
                stderr=stderr,
                n=n,
                scheme=sim.scheme,
                seed=sim.seed,
                horizon=horizon,
                bias_bound=bias,
            )
        logging.warning(
            f"{functional}: bias bound {bias:.3g} above stderr/3 ({stderr / 3:.3g}) "
            f"at horizon {horizon}; doubling"
        )
        horizon *= 2
    raise errors.BiasBudgetExceeded(
        f"{functional}: horizon truncation bias {bias:.3g} exceeds stderr/3 after "
        f"{sim.max_horizon_doublings} doublings",
        bias=bias,
        stderr=stderr,
        horizon=horizon / 2,
    )
