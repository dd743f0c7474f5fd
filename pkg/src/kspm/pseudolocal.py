"""Pseudo-local avalanche prediction.

Once an avalanche has fired D-1 consecutive columns l .. l+D-2, its
behaviour from the first peak at or above l+D-1 onward is a pure read of
the previous fixed point: peaks are exactly the columns holding D-1
chained within distance D-1 of each other, and between peaks the
avalanche fills straight down.  Everything below that first peak is the
unpredictable prefix and is out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Configuration, Parameters
from . import strategies
from .strategies import Avalanche


def find_interval_l(av: Avalanche, params: Parameters) -> Optional[int]:
    """Smallest l with columns l .. l+D-2 all in the avalanche's fired set."""
    return strategies.find_interval_l(av.fired_set, params.d)


@dataclass(frozen=True)
class PeakSequence:
    """Predicted peaks at or above base_l + D - 1, in increasing order."""

    base_l: int
    peaks: tuple[int, ...]


def predict_peaks(prev_fix: Configuration, l: int, params: Parameters) -> PeakSequence:
    """Read the peaks >= l+D-1 off the previous fixed point.

    The first peak is the lowest column >= l+D-1 holding D-1; each next
    peak is the lowest higher column holding D-1 within distance D-1 of
    the previous one (a peak's only booster is its unique predecessor
    p-D+1, so larger gaps end the avalanche).
    """
    d = params.d
    want = d - 1
    limit = len(prev_fix.sigma)  # beyond the stored tail every value is 0 < D-1
    peaks: list[int] = []
    first = None
    # the crossing firing's booster must sit inside the fired interval
    # [l, l+D-2], so the first peak cannot exceed l+2D-3
    for i in range(l + want, min(l + 2 * d - 3, limit - 1) + 1):
        if prev_fix.sigma[i] == want:
            first = i
            break
    p = first
    while p is not None:
        peaks.append(p)
        nxt = None
        for j in range(p + 1, min(p + want, limit - 1) + 1):
            if prev_fix.sigma[j] == want:
                nxt = j
                break
        p = nxt
    return PeakSequence(base_l=l, peaks=tuple(peaks))


def predict_suffix(prev_fix: Configuration, l: int, params: Parameters,
                   prefix_max: Optional[int] = None) -> tuple[int, ...]:
    """Firing order from the first peak >= l+D-1 to the end of the avalanche.

    Each peak fires and then fills straight down to one above the
    previous peak.  For the first predicted peak the previous peak is the
    largest column the avalanche fired before crossing l+D-1; it lives in
    the replay-only prefix, so callers that have replayed the prefix pass
    it as prefix_max.  When omitted it is taken to be first_peak - D + 1,
    which is exact for D = 3 (the prefix never climbs past l, and the
    first peak is l + 2).
    """
    d = params.d
    seq: list[int] = []
    prev: Optional[int] = None
    for p in predict_peaks(prev_fix, l, params).peaks:
        seq.append(p)
        if prev is not None:
            floor = prev + 1
        elif prefix_max is not None:
            floor = prefix_max + 1
        else:
            floor = p - d + 2
        seq.extend(range(p - 1, floor - 1, -1))
        prev = p
    return tuple(seq)


@dataclass(frozen=True)
class StructureReport:
    """Outcome of the per-avalanche structure checks."""

    k: int
    single_fire_ok: bool
    local_density_ok: bool
    peaks_match: bool
    suffix_match: bool
    equality_range_ok: bool
    detail: str = ""

    @property
    def ok(self) -> bool:
        return (self.single_fire_ok and self.local_density_ok and self.peaks_match
                and self.suffix_match and self.equality_range_ok)


def _check_local_density(firings, d: int) -> Optional[str]:
    # Forward moves jump at most D-1 above the running maximum; backward
    # moves hit the largest unfired column below it, within D-2.
    fired = set()
    r = None
    for t, c in enumerate(firings):
        if r is not None:
            if c > r:
                if c - r > d - 1:
                    return f"step {t}: forward jump {r}->{c} exceeds D-1"
            else:
                if r - c >= d - 1:
                    return f"step {t}: backward move {r}->{c} reaches D-1 or more"
                expect = r - 1
                while expect in fired:
                    expect -= 1
                if c != expect:
                    return f"step {t}: backward move hit {c}, largest unfired is {expect}"
        fired.add(c)
        r = c if r is None or c > r else r
    return None


def verify_avalanche_structure(av: Avalanche, prev_fix: Configuration,
                               next_fix: Configuration,
                               params: Parameters) -> StructureReport:
    """Check one avalanche against every pseudo-local structure claim.

    Peak and suffix predictions are only defined when the avalanche
    contains D-1 consecutive fired columns; without that interval those
    checks pass vacuously.
    """
    d = params.d
    firings = av.firings
    detail = []

    counts = strategies.strategy_counts(firings)
    single_fire_ok = all(n == 1 for n in counts.values())
    if not single_fire_ok:
        dup = [c for c, n in counts.items() if n > 1]
        detail.append(f"columns fired twice: {sorted(dup)[:5]}")

    density_err = _check_local_density(firings, d)
    local_density_ok = density_err is None
    if density_err:
        detail.append(density_err)

    l = find_interval_l(av, params)
    peaks_match = True
    suffix_match = True
    equality_range_ok = True
    if l is not None:
        bar = l + d - 1
        true_peaks = tuple(p for p in av.peaks if p >= bar)
        predicted = predict_peaks(prev_fix, l, params)
        peaks_match = predicted.peaks == true_peaks
        if not peaks_match:
            detail.append(f"peaks predicted {predicted.peaks} observed {true_peaks}")

        t0 = next((t for t, c in enumerate(firings) if c >= bar), None)
        true_suffix = firings[t0:] if t0 is not None else ()
        prefix_max = max(firings[:t0]) if t0 else None
        pred_suffix = predict_suffix(prev_fix, l, params, prefix_max=prefix_max)
        suffix_match = pred_suffix == true_suffix
        if not suffix_match:
            detail.append(f"suffix predicted {pred_suffix} observed {true_suffix}")

        top = av.max_fired
        for j in range(bar, top):
            if next_fix[j] != prev_fix[j]:
                equality_range_ok = False
                detail.append(f"fixed points differ at column {j} in [{bar}, {top})")
                break

    return StructureReport(
        k=av.k,
        single_fire_ok=single_fire_ok,
        local_density_ok=local_density_ok,
        peaks_match=peaks_match,
        suffix_match=suffix_match,
        equality_range_ok=equality_range_ok,
        detail="; ".join(detail),
    )
