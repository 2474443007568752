"""Synchronous sheaf diffusion and its partially asynchronous counterpart.

The asynchronous algorithm runs on a deterministic logical clock. At each tick,
first every agent scheduled to broadcast pushes its current stalk value into
its neighbors' caches, then every agent scheduled to update takes a gradient
step on its own block using its current value and its (possibly stale) caches.
With B = 0 every agent broadcasts and updates at every tick and the run is
bitwise identical to synchronous diffusion.
"""

import copy
import math
from collections import deque, namedtuple

import numpy as np

from execo_engine import logger

from sheaf_diffusion.objects import Cochain0, ConfigurationException, \
    ParameterException, StepSizeException
from sheaf_diffusion.potentials import energy_minimum, energy_of_values
from sheaf_diffusion.sheaf import _local_block, as_cochain0, \
    assemble_gradient
from sheaf_diffusion.spectral import lipschitz_constant, spectrum
from sheaf_diffusion.util import write_csv


DEFAULT_MAX_TICKS = 100000
DEFAULT_RESIDUAL_TOL = 1e-8
DEFAULT_RECORD_EVERY = 1

DEFAULT_SAFETY = 0.9
DEFAULT_MAX_HALVINGS = 20
DEFAULT_DIVERGENCE_WINDOW = 10
DEFAULT_DIVERGENCE_RTOL = 1e-6
DIVERGENCE_ENERGY = 1e300

DEFAULT_MIXTURE_STD_RATIO = 0.1
UPDATE_CENTERS = (0.05, 0.5)
BROADCAST_CENTERS = (0.1, 0.8)

FLOOR_FACTOR = 1e3

TICK_SEMANTICS = "broadcast-then-compute"

FIXED = "fixed"
AUTO = "auto"
LIPSCHITZ = "lipschitz"
STEP_MODES = (FIXED, AUTO, LIPSCHITZ)

TRACE_HEADER = ("tick", "energy", "alpha", "beta", "rel_error", "iterate_norm")


class StoppingRule(object):
    """When to stop a diffusion run.

    Attributes:
      max_ticks (int):
        Hard limit on the number of ticks.
      residual_tol (float):
        The run has converged when the gradient norm is at most this value.
      record_every (int):
        A trace record is kept every record_every ticks.
    """

    def __init__(self, max_ticks=DEFAULT_MAX_TICKS,
                 residual_tol=DEFAULT_RESIDUAL_TOL,
                 record_every=DEFAULT_RECORD_EVERY):
        if int(max_ticks) != max_ticks or max_ticks < 0:
            msg = "max_ticks must be a non-negative integer"
            logger.error(msg)
            raise ParameterException(msg)
        if not residual_tol >= 0:
            msg = "residual_tol must be non-negative"
            logger.error(msg)
            raise ParameterException(msg)
        if int(record_every) != record_every or record_every < 1:
            msg = "record_every must be a positive integer"
            logger.error(msg)
            raise ParameterException(msg)

        self.max_ticks = int(max_ticks)
        self.residual_tol = float(residual_tol)
        self.record_every = int(record_every)

    def __repr__(self):
        return "StoppingRule(max_ticks=%d, residual_tol=%g, record_every=%d)" % \
               (self.max_ticks, self.residual_tol, self.record_every)


class StepSizePolicy(object):
    """How the step size gamma is chosen.

    Modes:
      fixed: the given gamma.
      auto: safety / (K (B + 1)).
      lipschitz: safety / K, independent of the delay bound.
    """

    def __init__(self, mode=LIPSCHITZ, gamma=None, safety=DEFAULT_SAFETY):
        if mode not in STEP_MODES:
            msg = "Unknown step mode '%s', expected one of %s" % \
                  (str(mode), ", ".join(STEP_MODES))
            logger.error(msg)
            raise ConfigurationException(msg)
        if mode == FIXED and (gamma is None or not gamma > 0):
            msg = "A fixed step size must be positive, got %s" % str(gamma)
            logger.error(msg)
            raise ParameterException(msg)
        if not safety > 0:
            msg = "Step size safety factor must be positive"
            logger.error(msg)
            raise ParameterException(msg)

        self.mode = mode
        self.gamma = None if gamma is None else float(gamma)
        self.safety = float(safety)

    @classmethod
    def fixed(cls, gamma):
        return cls(FIXED, gamma)

    def step_size(self, K, B=0):
        """Return gamma for Lipschitz constant K and delay bound B."""

        if self.mode == FIXED:
            return self.gamma
        if K <= 0:
            # The gradient vanishes identically; any step is a no-op.
            return self.safety
        if self.mode == AUTO:
            return self.safety / (K * (B + 1))
        return self.safety / K

    def __repr__(self):
        if self.mode == FIXED:
            return "StepSizePolicy(fixed, gamma=%g)" % self.gamma
        return "StepSizePolicy(%s, safety=%g)" % (self.mode, self.safety)


# Schedule ####################################################################

def _sample_bound(rng, B, centers, std_ratio):
    center = centers[int(rng.integers(len(centers)))] * B
    value = rng.normal(center, std_ratio * (center + 1))
    return int(min(max(1, int(round(value))), max(1, B)))


class AsyncSchedule(object):
    """Per-agent update and broadcast timing under delay bound B.

    Agent i updates at tick t when t mod b_i = p_i and broadcasts when
    t mod b'_i = p'_i. The phases are resampled from the schedule's own random
    generator after every update and broadcast.

    Attributes:
      B (int):
        The delay bound.
      update_bounds, broadcast_bounds (list of int):
        b_i and b'_i, each in [1, max(1, B)].
      update_phases, broadcast_phases (list of int):
        The current phases p_i in [0, b_i) and p'_i in [0, b'_i).
      rng_seed (int):
        Seed the schedule was sampled from.
      std_ratio (float):
        Standard deviation of a mixture component relative to its center + 1.
    """

    def __init__(self, B, update_bounds, broadcast_bounds, update_phases,
                 broadcast_phases, rng, rng_seed=None,
                 std_ratio=DEFAULT_MIXTURE_STD_RATIO):
        self.B = B
        self.update_bounds = list(update_bounds)
        self.broadcast_bounds = list(broadcast_bounds)
        self.update_phases = list(update_phases)
        self.broadcast_phases = list(broadcast_phases)
        self.rng_seed = rng_seed
        self.std_ratio = std_ratio
        self._rng = rng

    @property
    def vertex_count(self):
        return len(self.update_bounds)

    def updates_at(self, i, t):
        return t % self.update_bounds[i] == self.update_phases[i]

    def broadcasts_at(self, i, t):
        return t % self.broadcast_bounds[i] == self.broadcast_phases[i]

    def next_update(self, i, t):
        """First tick >= t at which agent i updates."""
        return t + (self.update_phases[i] - t) % self.update_bounds[i]

    def next_broadcast(self, i, t):
        return t + (self.broadcast_phases[i] - t) % self.broadcast_bounds[i]

    def next_event(self, t):
        """First tick >= t at which any agent updates or broadcasts."""

        return min(min(self.next_update(i, t), self.next_broadcast(i, t))
                   for i in range(self.vertex_count))

    def resample_update(self, i):
        self.update_phases[i] = int(self._rng.integers(self.update_bounds[i]))

    def resample_broadcast(self, i):
        self.broadcast_phases[i] = \
            int(self._rng.integers(self.broadcast_bounds[i]))

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        return {"B": self.B,
                "rng_seed": self.rng_seed,
                "mixture_std_ratio": self.std_ratio,
                "update_bounds": list(self.update_bounds),
                "broadcast_bounds": list(self.broadcast_bounds)}

    def __eq__(self, other):
        return (isinstance(other, AsyncSchedule) and
                self.B == other.B and
                self.update_bounds == other.update_bounds and
                self.broadcast_bounds == other.broadcast_bounds and
                self.update_phases == other.update_phases and
                self.broadcast_phases == other.broadcast_phases)

    def __ne__(self, other):
        return not self == other


def sample_schedule(B, vertex_count, rng_seed,
                    std_ratio=DEFAULT_MIXTURE_STD_RATIO):
    """Sample an asynchronous schedule.

    Update bounds come from an even mixture of normals centered at 0.05 B and
    0.5 B, broadcast bounds from one centered at 0.1 B and 0.8 B. Samples are
    rounded and clamped to [1, max(1, B)], and phases drawn uniformly.

    Args:
      B (int):
        The delay bound, >= 0.
      vertex_count (int):
        The number of agents.
      rng_seed (int):
        Seed of the schedule stream; it also drives phase resampling.
      std_ratio (float, optional):
        Component standard deviation as a fraction of (center + 1).

    Returns (AsyncSchedule):
      The schedule. B = 0 gives all bounds 1 and all phases 0.
    """

    if int(B) != B or B < 0:
        msg = "Delay bound must be a non-negative integer, got %s" % str(B)
        logger.error(msg)
        raise ParameterException(msg)
    if not std_ratio >= 0:
        msg = "Mixture standard deviation ratio must be non-negative"
        logger.error(msg)
        raise ParameterException(msg)
    B = int(B)

    rng = np.random.default_rng(rng_seed)
    update_bounds = [_sample_bound(rng, B, UPDATE_CENTERS, std_ratio)
                     for _ in range(vertex_count)]
    broadcast_bounds = [_sample_bound(rng, B, BROADCAST_CENTERS, std_ratio)
                        for _ in range(vertex_count)]
    update_phases = [int(rng.integers(b)) for b in update_bounds]
    broadcast_phases = [int(rng.integers(b)) for b in broadcast_bounds]

    return AsyncSchedule(B, update_bounds, broadcast_bounds, update_phases,
                         broadcast_phases, rng, rng_seed, std_ratio)


# Agents ######################################################################

class AgentState(object):
    """Local state of agent i: its own value and the last values received
    from its neighbors, with the tick they were sent at."""

    def __init__(self, vertex, own, cache, stamps):
        self.vertex = vertex
        self.own = own
        self.cache = cache
        self.stamps = stamps
        self.last_update_tick = -1
        self.last_broadcast_tick = 0

    def value_of(self, j):
        return self.own if j == self.vertex else self.cache[j]


def initialize_agents(sheaf, x0):
    """Create one AgentState per vertex, caches filled with x0 at tick 0."""

    x0 = as_cochain0(sheaf, x0)
    blocks = [np.array(b) for b in x0.blocks()]
    return [AgentState(i, blocks[i],
                       dict((j, blocks[j]) for j in sheaf.graph.neighbors(i)),
                       dict((j, 0) for j in sheaf.graph.neighbors(i)))
            for i in range(sheaf.vertex_count)]


def assemble(agents):
    """Concatenate the agents' own values into a flat 0-cochain."""

    if not agents:
        return np.zeros(0)
    return np.concatenate([a.own for a in agents])


class ScheduleAudit(object):
    """Counters checking the bounded-delay assumptions over a run.

    Attributes:
      max_staleness (int):
        Largest age of a cached neighbor value used in an update.
      max_update_gap (int):
        Largest number of ticks between consecutive updates of an agent,
        counting from tick -1.
      staleness_violations, gap_violations (int):
        Uses with age > B, gaps > B + 1.
    """

    def __init__(self, B):
        self.B = B
        self.max_staleness = 0
        self.max_update_gap = 0
        self.staleness_violations = 0
        self.gap_violations = 0
        self.updates = 0
        self.broadcasts = 0

    def record_update(self, agent, t):
        gap = t - agent.last_update_tick
        self.max_update_gap = max(self.max_update_gap, gap)
        if gap > self.B + 1:
            self.gap_violations += 1
        for stamp in agent.stamps.values():
            age = t - stamp
            self.max_staleness = max(self.max_staleness, age)
            if age > self.B:
                self.staleness_violations += 1
        self.updates += 1

    @property
    def ok(self):
        return self.staleness_violations == 0 and self.gap_violations == 0

    def to_dict(self):
        return {"max_staleness": self.max_staleness,
                "max_update_gap": self.max_update_gap,
                "staleness_violations": self.staleness_violations,
                "gap_violations": self.gap_violations,
                "updates": self.updates,
                "broadcasts": self.broadcasts}


def async_tick(agents, schedule, sheaf, potentials, gamma, t, audit=None):
    """Run one logical tick of the asynchronous algorithm in place.

    Phase 1: every agent with t mod b'_i = p'_i sends its current value to its
    neighbors and resamples p'_i. Phase 2: every agent with t mod b_i = p_i
    replaces its value by x_i - gamma [L x^i]_i, computed from its own value
    and its post-phase-1 caches, and resamples p_i.

    Args:
      agents (list of AgentState):
        The agents, indexed by vertex.
      schedule (AsyncSchedule):
        The schedule; its phases are resampled.
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      gamma (float):
        The step size.
      t (int):
        The tick.
      audit (ScheduleAudit, optional):
        Counters to update.

    Returns:
      (broadcasters, updaters), the vertices that acted, in ascending order.
    """

    broadcasters = [i for i in range(len(agents)) if schedule.broadcasts_at(i, t)]
    updaters = [i for i in range(len(agents)) if schedule.updates_at(i, t)]

    for i in broadcasters:
        value = agents[i].own
        for j in sheaf.graph.neighbors(i):
            agents[j].cache[i] = value
            agents[j].stamps[i] = t
        agents[i].last_broadcast_tick = t
        schedule.resample_broadcast(i)
    if audit is not None:
        audit.broadcasts += len(broadcasters)

    blocks = [(i, _local_block(sheaf, potentials, i, agents[i].value_of))
              for i in updaters]
    for i, block in blocks:
        if audit is not None:
            audit.record_update(agents[i], t)
        agents[i].own = agents[i].own - gamma * block
        agents[i].last_update_tick = t
        schedule.resample_update(i)

    return broadcasters, updaters


def _cache_staleness(agents, t):
    return max([t - s for a in agents for s in a.stamps.values()] or [0])


# Traces ######################################################################

TraceRecord = namedtuple("TraceRecord", TRACE_HEADER)

ProgressMetrics = namedtuple("ProgressMetrics", ["alpha", "beta", "underfull"])


class DiffusionTrace(object):
    """The outcome of a diffusion run.

    Attributes:
      records (list of TraceRecord):
        Records every record_every ticks, plus the final tick.
      period_alpha (list of (int, float)):
        alpha(r (B + 1)) for r = 0, 1, ...
      converged_at (int or None):
        First tick whose iterate met the stopping residual.
      final (Cochain0):
        The final iterate.
      B (int):
        The delay bound, 0 for synchronous runs.
      gamma (float):
        The step size actually used.
      halvings (int):
        How many times gamma was halved after divergence.
      audit (ScheduleAudit or None):
        Schedule counters of an asynchronous run.
      metadata (dict):
        Everything else needed to reproduce or interpret the run.
    """

    def __init__(self, records, period_alpha, converged_at, final, ticks,
                 B, gamma, halvings, f_star, final_residual, audit=None,
                 metadata=None):
        self.records = records
        self.period_alpha = period_alpha
        self.converged_at = converged_at
        self.final = final
        self.ticks = ticks
        self.B = B
        self.gamma = gamma
        self.halvings = halvings
        self.f_star = f_star
        self.final_residual = final_residual
        self.audit = audit
        self.metadata = metadata or {}

    @property
    def converged(self):
        return self.converged_at is not None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def rows(self):
        return [tuple(r) for r in self.records]

    def to_csv(self, path):
        """Write the records as CSV with header
        tick,energy,alpha,beta,rel_error,iterate_norm."""

        write_csv(path, TRACE_HEADER, self.rows())

    def __eq__(self, other):
        return (isinstance(other, DiffusionTrace) and
                self.records == other.records and
                self.period_alpha == other.period_alpha and
                self.converged_at == other.converged_at and
                self.ticks == other.ticks and
                np.array_equal(self.final.values, other.final.values))

    def __ne__(self, other):
        return not self == other

    def __str__(self):
        return "DiffusionTrace(B = %d, %d ticks, %s)" % \
               (self.B, self.ticks,
                "converged at %d" % self.converged_at if self.converged
                else "not converged")


def progress_metrics(sheaf, potentials, history, f_star, B):
    """Evaluate alpha(t) and beta(t) from a window of global states.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      history (list of arrays):
        The assembled states x(t - k), ..., x(t), oldest first, ideally the
        last B + 2 of them.
      f_star (float):
        The minimum energy.
      B (int):
        The delay bound.

    Returns (ProgressMetrics):
      alpha = f(x(t)) - f*, beta = sum of |x(tau + 1) - x(tau)|^2 over
      tau in [t - B - 1, t - 1], and underfull, set when the window held fewer
      than B + 2 states and beta covers only the available prefix.
    """

    if not history:
        msg = "Empty state history"
        logger.error(msg)
        raise ParameterException(msg)

    states = [np.asarray(h, dtype=float) for h in history[-(B + 2):]]
    alpha = energy_of_values(sheaf, potentials, states[-1]) - f_star
    steps = [states[k + 1] - states[k] for k in range(len(states) - 1)]
    beta = math.fsum(float(d.dot(d)) for d in steps)
    return ProgressMetrics(alpha, beta, len(history) < B + 2)


class _Diverged(Exception):
    pass


class _ProgressRecorder(object):
    """Accumulates records, period samples and the beta window of a run."""

    def __init__(self, sheaf, potentials, minimum, B, stop,
                 divergence_window=DEFAULT_DIVERGENCE_WINDOW,
                 divergence_rtol=DEFAULT_DIVERGENCE_RTOL):
        self.sheaf = sheaf
        self.potentials = potentials
        self.minimum = minimum
        self.f_star = minimum.f_star if minimum is not None else float("nan")
        self.period = B + 1
        self.record_every = stop.record_every
        self.divergence_window = divergence_window
        self.divergence_rtol = divergence_rtol

        self.records = []
        self.period_alpha = []
        self._steps = deque()
        self._state = None
        self._increases = 0
        self._floor = 0.0
        self._x0_distance = None

    def start(self, x):
        self._x0_distance = self.minimum.distance_values(x) \
            if self.minimum is not None else float("nan")
        self._sample(0, x)
        self._floor = FLOOR_FACTOR * np.finfo(float).eps * \
            abs(self.period_alpha[0][1])

    def observe(self, tick, x, step_sq):
        """State x reached at tick, after a step of squared length step_sq."""

        if not math.isfinite(step_sq) or step_sq > DIVERGENCE_ENERGY:
            raise _Diverged("non-finite step at tick %d" % tick)
        if step_sq > 0:
            self._steps.append((tick - 1, step_sq))
            self._state = None
        if tick % self.record_every == 0 or tick % self.period == 0:
            self._sample(tick, x)

    def observe_idle(self, first, last, x):
        """Ticks first..last passed without any update."""

        ticks = set()
        for every in (self.record_every, self.period):
            start = ((first + every - 1) // every) * every
            ticks.update(range(start, last + 1, every))
        for tick in sorted(ticks):
            self._sample(tick, x)

    def finish(self, tick, x):
        if not self.records or self.records[-1].tick != tick:
            self.records.append(self._record(tick, x))

    def _evaluate(self, x):
        if self._state is None:
            energy = energy_of_values(self.sheaf, self.potentials, x)
            if not math.isfinite(energy) or abs(energy) > DIVERGENCE_ENERGY:
                raise _Diverged("energy %r" % energy)
            if self.minimum is not None:
                distance = self.minimum.distance_values(x)
                rel_error = distance / self._x0_distance \
                    if self._x0_distance > 0 else 0.0
            else:
                rel_error = float("nan")
            self._state = (energy, rel_error, float(np.linalg.norm(x)))
        return self._state

    def _beta(self, tick):
        while self._steps and self._steps[0][0] < tick - self.period:
            self._steps.popleft()
        return math.fsum(s for _, s in self._steps)

    def _record(self, tick, x):
        energy, rel_error, norm = self._evaluate(x)
        return TraceRecord(tick, energy, energy - self.f_star,
                           self._beta(tick), rel_error, norm)

    def _sample(self, tick, x):
        record = self._record(tick, x)
        if tick % self.record_every == 0:
            self.records.append(record)
        if tick % self.period == 0:
            self._check_divergence(record.alpha)
            self.period_alpha.append((tick, record.alpha))

    def _check_divergence(self, alpha):
        if self.period_alpha:
            prev = self.period_alpha[-1][1]
            if alpha - prev > self.divergence_rtol * abs(prev) and \
                    alpha > self._floor:
                self._increases += 1
            else:
                self._increases = 0
            if self._increases >= self.divergence_window:
                raise _Diverged("energy increased over %d consecutive periods"
                                % self.divergence_window)


# Runs ########################################################################

class _Context(object):
    """Precomputed quantities shared by the attempts of one run."""

    def __init__(self, sheaf, potentials, x0, minimum, report):
        self.x0 = as_cochain0(sheaf, x0)
        potentials.check_covers(sheaf)

        if minimum is None and potentials.quadratic_family:
            minimum = energy_minimum(sheaf, potentials)
        self.minimum = minimum

        if report is None:
            report = spectrum(sheaf)
        self.K = lipschitz_constant(report, potentials)

        if potentials.quadratic_family:
            a, c = potentials.affine_gradient(sheaf)
            self.residual = lambda x: float(np.linalg.norm(a.dot(x) - c))
        else:
            self.residual = lambda x: float(np.linalg.norm(
                assemble_gradient(sheaf, potentials, x)))


def _with_halvings(label, gamma0, max_halvings, attempt):
    gamma = gamma0
    for halvings in range(max_halvings + 1):
        try:
            return attempt(gamma, halvings)
        except _Diverged as e:
            logger.warning("%s diverged with gamma = %g (%s), halving the "
                           "step size" % (label, gamma, str(e)))
            gamma = gamma / 2
    msg = "%s still diverges after %d step size halvings" % \
          (label, max_halvings)
    logger.error(msg)
    raise StepSizeException(msg)


def _metadata(policy, minimum, stop):
    return {"step_mode": policy.mode,
            "safety": policy.safety,
            "max_ticks": stop.max_ticks,
            "residual_tol": stop.residual_tol,
            "record_every": stop.record_every,
            "minimizer_set": minimum.characterization
            if minimum is not None else "unknown"}


def sync_step(sheaf, potentials, x, gamma):
    """One step of synchronous diffusion, x - gamma L^{grad U} x.

    Raises:
      ParameterException:
        If gamma is not positive.
    """

    if not gamma > 0:
        msg = "Step size must be positive, got %s" % str(gamma)
        logger.error(msg)
        raise ParameterException(msg)
    x = as_cochain0(sheaf, x)
    potentials.check_covers(sheaf)
    return Cochain0(sheaf, x.values -
                    gamma * assemble_gradient(sheaf, potentials, x.values))


def run_sync(sheaf, potentials, x0, policy=None, stop=None, minimum=None,
             report=None, max_halvings=DEFAULT_MAX_HALVINGS):
    """Run synchronous sheaf diffusion from x0.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      x0 (Cochain0 or array):
        The initial condition.
      policy (StepSizePolicy, optional):
        The step size policy, lipschitz by default.
      stop (StoppingRule, optional):
        The stopping rule.
      minimum (EnergyMinimum, optional):
        Precomputed minimum; computed when omitted.
      report (SpectralReport, optional):
        Precomputed spectrum; computed when omitted.
      max_halvings (int, optional):
        How many times gamma may be halved after divergence.

    Returns (DiffusionTrace):
      The trace, with B = 0.

    Raises:
      StepSizeException:
        If the run diverges even with the smallest step size.
    """

    policy = policy or StepSizePolicy()
    stop = stop or StoppingRule()
    ctx = _Context(sheaf, potentials, x0, minimum, report)

    def attempt(gamma, halvings):
        recorder = _ProgressRecorder(sheaf, potentials, ctx.minimum, 0, stop)
        x = ctx.x0.values
        t = 0
        recorder.start(x)
        residual = ctx.residual(x)
        converged_at = 0 if residual <= stop.residual_tol else None

        while converged_at is None and t < stop.max_ticks:
            new = x - gamma * assemble_gradient(sheaf, potentials, x)
            d = new - x
            x = new
            t += 1
            recorder.observe(t, x, float(d.dot(d)))
            residual = ctx.residual(x)
            if residual <= stop.residual_tol:
                converged_at = t

        recorder.finish(t, x)
        return DiffusionTrace(recorder.records, recorder.period_alpha,
                              converged_at, Cochain0(sheaf, x), t, 0, gamma,
                              halvings, recorder.f_star, residual,
                              metadata=_metadata(policy, ctx.minimum, stop))

    trace = _with_halvings("Synchronous diffusion",
                           policy.step_size(ctx.K, 0), max_halvings, attempt)
    _log_outcome(trace)
    return trace


def run_async(sheaf, potentials, x0, B, policy=None, stop=None, rng_seed=0,
              schedule=None, std_ratio=DEFAULT_MIXTURE_STD_RATIO,
              minimum=None, report=None, max_halvings=DEFAULT_MAX_HALVINGS):
    """Run partially asynchronous sheaf diffusion with delay bound B.

    Ticks at which no agent updates or broadcasts are skipped in bulk; the
    records, period samples and beta values are the same as when ticking one
    by one.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        The edge potentials.
      x0 (Cochain0 or array):
        The initial condition.
      B (int):
        The delay bound.
      policy (StepSizePolicy, optional):
        The step size policy, lipschitz by default.
      stop (StoppingRule, optional):
        The stopping rule.
      rng_seed (int, optional):
        Seed of the schedule stream, ignored when schedule is given.
      schedule (AsyncSchedule, optional):
        A schedule to use (copied, not modified).
      std_ratio (float, optional):
        Mixture standard deviation ratio for a sampled schedule.
      minimum, report, max_halvings:
        As for run_sync.

    Returns (DiffusionTrace):
      The trace; converged when the gradient norm of the assembled iterate is
      below the residual tolerance and no cache is more than B ticks old.

    Raises:
      StepSizeException:
        If the run diverges even with the smallest step size.
    """

    policy = policy or StepSizePolicy()
    stop = stop or StoppingRule()
    if schedule is None:
        schedule = sample_schedule(B, sheaf.vertex_count, rng_seed, std_ratio)
    elif schedule.B != B or schedule.vertex_count != sheaf.vertex_count:
        msg = "Schedule does not match B = %d and %d agents" % \
              (B, sheaf.vertex_count)
        logger.error(msg)
        raise ParameterException(msg)
    ctx = _Context(sheaf, potentials, x0, minimum, report)

    def attempt(gamma, halvings):
        sched = schedule.copy()
        agents = initialize_agents(sheaf, ctx.x0)
        audit = ScheduleAudit(B)
        recorder = _ProgressRecorder(sheaf, potentials, ctx.minimum, B, stop)
        x = assemble(agents)
        t = 0
        recorder.start(x)
        residual = ctx.residual(x)
        converged_at = 0 if residual <= stop.residual_tol else None

        while converged_at is None and t < stop.max_ticks:
            nxt = min(sched.next_event(t), stop.max_ticks)
            if nxt > t:
                recorder.observe_idle(t + 1, nxt, x)
                t = nxt
                continue

            _, updaters = async_tick(agents, sched, sheaf, potentials, gamma,
                                     t, audit)
            t += 1
            if updaters:
                new = assemble(agents)
                d = new - x
                x = new
                step_sq = float(d.dot(d))
                residual = ctx.residual(x)
            else:
                step_sq = 0.0
            recorder.observe(t, x, step_sq)
            if residual <= stop.residual_tol and \
                    _cache_staleness(agents, t - 1) <= B:
                converged_at = t

        recorder.finish(t, x)
        metadata = _metadata(policy, ctx.minimum, stop)
        metadata.update({"tick_semantics": TICK_SEMANTICS,
                         "schedule": sched.to_dict(),
                         "audit": audit.to_dict()})
        return DiffusionTrace(recorder.records, recorder.period_alpha,
                              converged_at, Cochain0(sheaf, x), t, B, gamma,
                              halvings, recorder.f_star, residual, audit,
                              metadata)

    trace = _with_halvings("Asynchronous diffusion (B = %d)" % B,
                           policy.step_size(ctx.K, B), max_halvings, attempt)
    if not trace.audit.ok:
        logger.warning("Schedule audit failed: " + str(trace.audit.to_dict()))
    _log_outcome(trace)
    return trace


def _log_outcome(trace):
    if trace.converged:
        logger.debug(str(trace))
    else:
        logger.warning("Not converged after %d ticks (residual %g)" %
                       (trace.ticks, trace.final_residual))
