"""Stabilization strategies and the grain-by-grain process.

All stabilization routes reach the same fixed point with the same
per-column firing counts (strong convergence); the leftmost strategy,
which always fires the smallest fireable column, is the lexicographically
minimal one and is what the avalanche structure results describe.
"""

from __future__ import annotations

import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .core import Configuration, NotFireableError, Parameters, _trim

Strategy = tuple[int, ...]

# CLI-facing cap on grain counts; keeps serialized values portable.
MASS_CAP = 2**40


def _stabilize_leftmost_list(sigma: list[int], d: int, candidates) -> list[int]:
    # Worklist of columns that may be fireable.  Firing i only changes
    # sigma at {i-1, i, i+d-1}, so pushing those after each firing keeps
    # every fireable column in the heap; stale entries are popped and
    # skipped.  The popped minimum over that invariant is the leftmost
    # fireable column.
    heap = [i for i in candidates if i < len(sigma) and sigma[i] >= d]
    heapq.heapify(heap)
    spread = d - 1
    fired: list[int] = []
    push = heapq.heappush
    pop = heapq.heappop
    while heap:
        i = pop(heap)
        if sigma[i] < d:
            continue
        sigma[i] -= d
        top = i + spread
        if top >= len(sigma):
            sigma.extend([0] * (top - len(sigma) + 1))
        sigma[top] += 1
        fired.append(i)
        if i:
            left = i - 1
            sigma[left] += spread
            if sigma[left] >= d:
                push(heap, left)
        if sigma[i] >= d:
            push(heap, i)
        if sigma[top] >= d:
            push(heap, top)
    return fired


def stabilize_leftmost(cfg: Configuration) -> tuple[Configuration, Strategy]:
    """Fire the smallest fireable column until stable.

    Returns the fixed point and the firing sequence, which is the
    lexicographically minimal strategy reaching it.
    """
    sigma = list(cfg.sigma)
    fired = _stabilize_leftmost_list(sigma, cfg.params.d, range(len(sigma)))
    return Configuration(tuple(sigma), cfg.params), tuple(fired)


def stabilize_random(cfg: Configuration, seed: int) -> tuple[Configuration, Strategy]:
    """Fire uniformly random fireable columns until stable.

    Randomness comes from random.Random(seed) (Mersenne Twister), so a
    given seed always reproduces the same strategy.  The fixed point and
    the per-column firing counts match stabilize_leftmost's.
    """
    d = cfg.params.d
    rng = random.Random(seed)
    sigma = list(cfg.sigma)
    fireable = [i for i in range(len(sigma)) if sigma[i] >= d]
    pos = {c: idx for idx, c in enumerate(fireable)}  # column -> slot in list

    def _sync(col):
        live = col < len(sigma) and sigma[col] >= d
        if live and col not in pos:
            pos[col] = len(fireable)
            fireable.append(col)
        elif not live and col in pos:
            idx = pos.pop(col)
            last = fireable.pop()
            if last != col:
                fireable[idx] = last
                pos[last] = idx

    fired: list[int] = []
    spread = d - 1
    while fireable:
        i = fireable[rng.randrange(len(fireable))]
        sigma[i] -= d
        top = i + spread
        if top >= len(sigma):
            sigma.extend([0] * (top - len(sigma) + 1))
        sigma[top] += 1
        if i:
            sigma[i - 1] += spread
        fired.append(i)
        for col in (i - 1, i, top):
            if col >= 0:
                _sync(col)
    return Configuration(tuple(sigma), cfg.params), tuple(fired)


def replay(cfg: Configuration, firings) -> Configuration:
    """Apply a firing sequence step by step, checking fireability.

    Raises NotFireableError on the first illegal firing, making this the
    strict validity check for stored strategies.
    """
    d = cfg.params.d
    sigma = list(cfg.sigma)
    spread = d - 1
    for i in firings:
        if i >= len(sigma) or sigma[i] < d:
            raise NotFireableError(f"column {i} not fireable during replay")
        sigma[i] -= d
        top = i + spread
        if top >= len(sigma):
            sigma.extend([0] * (top - len(sigma) + 1))
        sigma[top] += 1
        if i:
            sigma[i - 1] += spread
    return Configuration(tuple(sigma), cfg.params)


def strategy_counts(strategy) -> dict[int, int]:
    """Per-column firing counts of a strategy."""
    return dict(Counter(strategy))


def check_diamond(cfg: Configuration, i: int, j: int) -> bool:
    """Local confluence of two distinct fireable columns.

    Firing i then j must equal firing j then i.  Raises ValueError unless
    i != j and both are fireable in cfg.
    """
    from .core import fire, is_fireable

    if i == j:
        raise ValueError("diamond check needs two distinct columns")
    if not (is_fireable(cfg, i) and is_fireable(cfg, j)):
        raise ValueError("both columns must be fireable")
    return fire(fire(cfg, i), j) == fire(fire(cfg, j), i)


def peaks_of(firings) -> tuple[int, ...]:
    """Strictly increasing running maxima of a firing sequence.

    Chronological and spatial order agree on peaks, so the result is
    sorted as a side effect of the definition.
    """
    peaks = []
    best = -1
    for c in firings:
        if c > best:
            peaks.append(c)
            best = c
    return tuple(peaks)


def find_interval_l(fired_set, d: int) -> Optional[int]:
    """Smallest l such that columns l .. l+D-2 all fired, if any."""
    if not fired_set:
        return None
    need = d - 1
    run_start = None
    prev = None
    for c in sorted(fired_set):
        if prev is None or c != prev + 1:
            run_start = c
        prev = c
        if c - run_start + 1 >= need:
            return run_start
    return None


@dataclass(frozen=True)
class Avalanche:
    """Leftmost strategy taking pi(k-1) plus one grain to pi(k)."""

    k: int
    firings: Strategy
    peaks: tuple[int, ...]
    interval_l: Optional[int]

    @property
    def fired_set(self) -> frozenset[int]:
        return frozenset(self.firings)

    @property
    def max_fired(self) -> Optional[int]:
        return max(self.firings) if self.firings else None


@dataclass(frozen=True)
class ShotVector:
    """Cumulative per-column firing counts over the first n_grains avalanches."""

    counts: tuple[int, ...]
    n_grains: int

    def __getitem__(self, i: int) -> int:
        if i < 0:
            raise IndexError("column indices start at 0")
        return self.counts[i] if i < len(self.counts) else 0


@dataclass(frozen=True)
class TraceStep:
    k: int
    avalanche: Avalanche
    fixed_point: Configuration


@dataclass
class RunTrace:
    """Full record of the iterative process for N grains."""

    params: Parameters
    steps: list[TraceStep] = field(default_factory=list)
    shot: ShotVector = None  # type: ignore[assignment]

    @property
    def n_grains(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> Configuration:
        if not self.steps:
            return Configuration.empty(self.params)
        return self.steps[-1].fixed_point

    def fixed_point(self, k: int) -> Configuration:
        """pi(k) for 0 <= k <= n_grains."""
        if k == 0:
            return Configuration.empty(self.params)
        return self.steps[k - 1].fixed_point


class _ProcessState:
    """Mutable engine state for the grain-by-grain process.

    sigma and shot_counts are live lists; snapshots copy them.  Restart
    from a snapshot reproduces the exact continuation because the
    leftmost process is deterministic.
    """

    __slots__ = ("params", "k", "sigma", "shot_counts")

    def __init__(self, params: Parameters, k: int = 0,
                 sigma: Optional[list[int]] = None,
                 shot_counts: Optional[list[int]] = None):
        self.params = params
        self.k = k
        self.sigma = sigma if sigma is not None else []
        self.shot_counts = shot_counts if shot_counts is not None else []

    def step(self) -> list[int]:
        """Add one grain at column 0 and stabilize; returns the firings."""
        self.k += 1
        if not self.sigma:
            self.sigma.append(0)
        self.sigma[0] += 1
        fired = _stabilize_leftmost_list(self.sigma, self.params.d, (0,))
        if fired:
            top = max(fired)
            if top >= len(self.shot_counts):
                self.shot_counts.extend([0] * (top - len(self.shot_counts) + 1))
            for c in fired:
                self.shot_counts[c] += 1
        return fired


def iter_process(params: Parameters, n_grains: int,
                 state: Optional[_ProcessState] = None) -> Iterator[tuple[int, list[int], list[int]]]:
    """Yield (k, firings, sigma) for each grain k = state.k+1 .. n_grains.

    sigma is the engine's live list; consumers must copy anything they
    keep across iterations.
    """
    if n_grains < 0:
        raise ValueError("n_grains must be >= 0")
    if n_grains > MASS_CAP:
        raise ValueError(f"n_grains exceeds the supported cap {MASS_CAP}")
    if state is None:
        state = _ProcessState(params)
    while state.k < n_grains:
        fired = state.step()
        yield state.k, fired, state.sigma


def run_process(n_grains: int, params: Parameters) -> RunTrace:
    """Run the iterative process pi(k) = pi(pi(k-1) + one grain at 0).

    Stores every avalanche and fixed point; memory grows like
    n_grains**1.5, so use iter_process for very long runs.
    """
    trace = RunTrace(params)
    d = params.d
    state = _ProcessState(params)
    for k, fired, sigma in iter_process(params, n_grains, state):
        av = Avalanche(
            k=k,
            firings=tuple(fired),
            peaks=peaks_of(fired),
            interval_l=find_interval_l(fired, d),
        )
        trace.steps.append(TraceStep(k, av, Configuration(_trim(tuple(sigma)), params)))
    trace.shot = ShotVector(tuple(state.shot_counts), n_grains)
    return trace
