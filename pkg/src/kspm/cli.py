"""Command line front end.

Subcommands: simulate (grain-by-grain run with line-delimited JSON trace
records, optional checksummed snapshots and resume), verify (invariant
suites), bench (full replay vs interval detection plus suffix
prediction) and analyze (growth laws).

Exit codes: 0 success, 1 check failure, 2 usage error, 3 I/O error or
corrupt input.  Identical arguments always produce byte-identical trace
streams; the only randomness anywhere is seeded through --seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
import time
from dataclasses import dataclass
from typing import Optional

from . import analysis, pseudolocal, strategies
from .core import Configuration, Parameters, weighted_mass
from .strategies import MASS_CAP, _ProcessState

SNAPSHOT_VERSION = 1


class UsageError(Exception):
    pass


class CorruptSnapshotError(Exception):
    pass


# ---------------------------------------------------------------- records


def trace_record(k: int, fired: list[int], sigma, d: int, dense: bool) -> dict:
    peaks = strategies.peaks_of(fired)
    if dense:
        fix = list(sigma)
        while fix and fix[-1] == 0:
            fix.pop()
    else:
        fix = [[i, v] for i, v in enumerate(sigma) if v]
    return {
        "k": k,
        "avalanche": list(fired),
        "peaks": list(peaks),
        "interval_l": strategies.find_interval_l(fired, d),
        "max_col": max(fired) if fired else None,
        "fix": fix,
    }


def record_to_line(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def record_from_line(line: str) -> dict:
    rec = json.loads(line)
    for key in ("k", "avalanche", "peaks", "interval_l", "max_col", "fix"):
        if key not in rec:
            raise CorruptSnapshotError(f"trace record missing key {key!r}")
    return rec


# --------------------------------------------------------------- snapshots


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_snapshot(path: str, state: _ProcessState) -> None:
    payload = {
        "format_version": SNAPSHOT_VERSION,
        "d": state.params.d,
        "k": state.k,
        "sigma": list(state.sigma),
        "shot": list(state.shot_counts),
        "seed": None,
    }
    payload["checksum"] = _checksum({k: v for k, v in payload.items()})
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")
    import os

    os.replace(tmp, path)


def load_snapshot(path: str) -> _ProcessState:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or payload.get("format_version") != SNAPSHOT_VERSION:
        raise CorruptSnapshotError(f"{path}: unsupported snapshot format")
    expected = payload.pop("checksum", None)
    if expected != _checksum(payload):
        raise CorruptSnapshotError(f"{path}: checksum mismatch")
    sigma = payload["sigma"]
    shot = payload["shot"]
    if (not isinstance(sigma, list) or not isinstance(shot, list)
            or any((not isinstance(v, int)) or v < 0 for v in sigma + shot)):
        raise CorruptSnapshotError(f"{path}: malformed state arrays")
    return _ProcessState(Parameters(payload["d"]), k=payload["k"],
                         sigma=list(sigma), shot_counts=list(shot))


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    if args.resume_from:
        try:
            state = load_snapshot(args.resume_from)
        except OSError as exc:
            print(f"error: cannot read snapshot: {exc}", file=sys.stderr)
            return 3
        except (CorruptSnapshotError, json.JSONDecodeError, KeyError, TypeError) as exc:
            print(f"error: corrupt snapshot: {exc}", file=sys.stderr)
            return 3
        if args.d is not None and args.d != state.params.d:
            raise UsageError(f"--d {args.d} conflicts with snapshot d={state.params.d}")
        if args.grains < state.k:
            raise UsageError(f"--grains {args.grains} is before snapshot k={state.k}")
    else:
        state = _ProcessState(Parameters(args.d if args.d is not None else 3))

    d = state.params.d
    close_out = False
    if args.out == "-":
        out = sys.stdout
    else:
        try:
            out = open(args.out, "w")
        except OSError as exc:
            print(f"error: cannot open output: {exc}", file=sys.stderr)
            return 3
        close_out = True
    try:
        for k, fired, sigma in strategies.iter_process(state.params, args.grains, state):
            rec = trace_record(k, fired, sigma, d, args.dense_fix)
            out.write(record_to_line(rec))
            out.write("\n")
            if args.snapshot and args.snapshot_every and k % args.snapshot_every == 0:
                save_snapshot(args.snapshot, state)
        if args.snapshot:
            save_snapshot(args.snapshot, state)
        if args.fix_out:
            with open(args.fix_out, "w") as fh:
                fh.write("# column\tvalue\n")
                sig = state.sigma
                top = len(sig)
                while top and sig[top - 1] == 0:
                    top -= 1
                for i in range(top):
                    fh.write(f"{i}\t{sig[i]}\n")
        if args.shot_out:
            with open(args.shot_out, "w") as fh:
                fh.write("# column\tfirings\n")
                for i, v in enumerate(state.shot_counts):
                    fh.write(f"{i}\t{v}\n")
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 3
    finally:
        if close_out:
            out.close()
        else:
            out.flush()
    return 0


# ------------------------------------------------------------------ verify


def _random_config(rng: random.Random, d: int) -> Configuration:
    length = rng.randint(1, 50)
    sigma = tuple(rng.randint(0, 3 * d) for _ in range(length))
    return Configuration(sigma, Parameters(d))


def suite_single_fire(grains: int, d: int, seeds: int, seed: int):
    trace = strategies.run_process(grains, Parameters(d))
    for st in trace.steps:
        counts = strategies.strategy_counts(st.avalanche.firings)
        if any(n > 1 for n in counts.values()):
            return False, f"k={st.k} fired a column more than once"
    return True, f"{grains} avalanches, every column fired at most once"


def suite_diamond(grains: int, d: int, seeds: int, seed: int):
    rng = random.Random(seed)
    n_cfg = 100
    pairs = 0
    for _ in range(n_cfg):
        cfg = _random_config(rng, d)
        fireable = [i for i in range(len(cfg.sigma)) if cfg.sigma[i] >= d]
        for a in range(len(fireable)):
            for b in range(a + 1, len(fireable)):
                pairs += 1
                if not strategies.check_diamond(cfg, fireable[a], fireable[b]):
                    return False, f"diamond broken at columns {fireable[a]},{fireable[b]}"
    return True, f"{pairs} fireable pairs commute on {n_cfg} random configurations"


def suite_convergence(grains: int, d: int, seeds: int, seed: int):
    rng = random.Random(seed)
    n_cfg = 50
    for idx in range(n_cfg):
        cfg = _random_config(rng, d)
        fix, strat = strategies.stabilize_leftmost(cfg)
        counts = strategies.strategy_counts(strat)
        for s in range(seeds):
            rfix, rstrat = strategies.stabilize_random(cfg, seed=rng.randrange(2**32))
            if rfix != fix or len(rstrat) != len(strat) \
                    or strategies.strategy_counts(rstrat) != counts:
                return False, f"random stabilization diverged on configuration {idx}"
    return True, f"{n_cfg} configurations x {seeds} random strategies all converge"


def suite_peaks(grains: int, d: int, seeds: int, seed: int):
    params = Parameters(d)
    trace = strategies.run_process(grains, params)
    prev = Configuration.empty(params)
    checked = 0
    for st in trace.steps:
        rep = pseudolocal.verify_avalanche_structure(st.avalanche, prev,
                                                     st.fixed_point, params)
        if not rep.ok:
            return False, f"k={st.k}: {rep.detail}"
        if st.avalanche.interval_l is not None:
            checked += 1
        prev = st.fixed_point
    return True, f"{grains} avalanches verified, {checked} with an interval"


def suite_shot_vector(grains: int, d: int, seeds: int, seed: int):
    params = Parameters(d)
    counts: list[int] = []
    for k, fired, sigma in strategies.iter_process(params, grains):
        if fired:
            top = max(fired)
            if top >= len(counts):
                counts.extend([0] * (top - len(counts) + 1))
            for c in fired:
                counts[c] += 1
        fix = Configuration(tuple(sigma), params)
        shot = strategies.ShotVector(tuple(counts), k)
        residual = analysis.shot_identity_residual(fix, shot, k, params)
        if any(residual):
            return False, f"k={k}: nonzero slope identity residual"
        if weighted_mass(fix) != k:
            return False, f"k={k}: weighted mass {weighted_mass(fix)} != {k}"
        if d == 3 and 2 * shot[0] > k:
            return False, f"k={k}: a_0 = {shot[0]} exceeds N/2"
    return True, f"slope identity and mass exact after each of {grains} grains"


def suite_recurrence(grains: int, d: int, seeds: int, seed: int):
    if d != 3:
        return False, "recurrence suite requires d=3"
    trace = strategies.run_process(grains, Parameters(3))
    us = analysis.build_u_vectors(trace.shot, len(trace.shot.counts) + 2)
    ok = analysis.verify_recurrence(us, trace.final)
    return ok, f"window recurrence over {len(us)} indices" if ok else "recurrence failed"


def suite_projection(grains: int, d: int, seeds: int, seed: int):
    if d != 3:
        return False, "projection suite requires d=3"
    jd = analysis.jordan_data()
    if not jd.verify():
        return False, "Jordan structure checks failed"
    details = []
    for j in (1, 2, 3):
        n = analysis.min_grains_for_prefix(j, cap=max(grains, 1000))
        if n is None:
            return False, f"no fixed point with (2,0)^{j} prefix within cap"
        law = analysis.verify_projection_law(strategies.run_process(n, Parameters(3)), j)
        if not law.ok:
            return False, f"projection law failed for j={j}: {law.detail}"
        details.append(f"j={j}: N={n}, x_j={law.x_j}")
    return True, "; ".join(details)


def suite_growth(grains: int, d: int, seeds: int, seed: int):
    if d != 3:
        return False, "growth suite requires d=3"
    rep = analysis.growth_sweep(grains, Parameters(3))
    if not rep.ok:
        return False, "; ".join(rep.violations)
    nm = ", ".join(f"{j}:{n}" for j, n in sorted(rep.n_min.items()))
    return True, f"n_min {{{nm}}}, fitted L bound {rep.fit_c1:.2f}*log4(N)+{rep.fit_c2:.2f}"


SUITES = {
    "single-fire": (suite_single_fire, 2000),
    "diamond": (suite_diamond, 2000),
    "convergence": (suite_convergence, 2000),
    "peaks": (suite_peaks, 2000),
    "shot-vector": (suite_shot_vector, 2000),
    "recurrence": (suite_recurrence, 2000),
    "projection": (suite_projection, 2000),
    "growth": (suite_growth, 20000),
}


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failures = 0
    for name in names:
        fn, default_grains = SUITES[name]
        grains = args.grains if args.grains is not None else default_grains
        ok, detail = fn(grains, args.d if args.d is not None else 3,
                        args.seeds, args.seed)
        tag = "PASS" if ok else "FAIL"
        print(f"{tag} {name}: {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


# ------------------------------------------------------------------- bench


class _CountingPredictor:
    """Bench-side predictor mirroring the library rules, counting reads.

    Performs no firing simulation at all; the equivalence pass checks it
    against both the library predictor and a full replay.
    """

    def __init__(self, prev: list[int], d: int):
        self.prev = prev
        self.d = d
        self.reads = 0

    def _at(self, i: int) -> int:
        self.reads += 1
        return self.prev[i] if i < len(self.prev) else 0

    def suffix(self, l: int, prefix_max: int) -> list[int]:
        d = self.d
        want = d - 1
        first = None
        for i in range(l + want, l + 2 * d - 2):
            if self._at(i) == want:
                first = i
                break
        seq: list[int] = []
        prev_peak = None
        p = first
        while p is not None:
            seq.append(p)
            floor = prefix_max + 1 if prev_peak is None else prev_peak + 1
            seq.extend(range(p - 1, floor - 1, -1))
            prev_peak = p
            nxt = None
            for j in range(p + 1, p + want + 1):
                if self._at(j) == want:
                    nxt = j
                    break
            p = nxt
        return seq


class _RunTracker:
    """Incremental maximal runs of fired columns; min qualifying base."""

    def __init__(self, d: int):
        self.need = d - 1
        self.starts: dict[int, int] = {}  # run start -> run end
        self.ends: dict[int, int] = {}    # run end -> run start
        self.min_base: Optional[int] = None

    def add(self, c: int) -> None:
        s = self.ends.pop(c - 1, c)
        if s != c:
            del self.starts[s]
        e = self.starts.pop(c + 1, c)
        if e != c:
            del self.ends[e]
        self.starts[s] = e
        self.ends[e] = s
        if e - s + 1 >= self.need and (self.min_base is None or s < self.min_base):
            self.min_base = s


@dataclass
class BenchCounters:
    sim_firings: int = 0
    predicted_firings: int = 0
    fallbacks: int = 0
    sim_above_after_detect: int = 0
    predict_reads: int = 0
    suffix_total: int = 0


def _pseudolocal_avalanche(sigma: list[int], d: int, prev: list[int],
                           counters: BenchCounters, check: bool) -> None:
    """One grain: simulate below the interval, predict and apply the rest."""
    import heapq

    if check:
        baseline = list(sigma) or [0]
        baseline[0] += 1

    if not sigma:
        sigma.append(0)
    sigma[0] += 1
    heap = [0] if sigma[0] >= d else []
    tracker = _RunTracker(d)
    fired: list[int] = []
    spread = d - 1
    stopped = False
    while heap:
        i = heapq.heappop(heap)
        if sigma[i] < d:
            continue
        if tracker.min_base is not None and i >= tracker.min_base + d - 1:
            # prediction takes over from here; firing i in the simulator
            # would increment sim_above_after_detect
            stopped = True
            break
        sigma[i] -= d
        top = i + spread
        if top >= len(sigma):
            sigma.extend([0] * (top - len(sigma) + 1))
        sigma[top] += 1
        if i:
            sigma[i - 1] += spread
            if sigma[i - 1] >= d:
                heapq.heappush(heap, i - 1)
        fired.append(i)
        tracker.add(i)
        counters.sim_firings += 1
        if tracker.min_base is not None and i >= tracker.min_base + d - 1:
            counters.sim_above_after_detect += 1
        if sigma[i] >= d:
            heapq.heappush(heap, i)
        if sigma[top] >= d:
            heapq.heappush(heap, top)

    remaining: list[int] = []
    if tracker.min_base is None:
        counters.fallbacks += 1 if fired else 0
        full = fired
    else:
        l = tracker.min_base
        bar = l + d - 1
        t0 = next((t for t, c in enumerate(fired) if c >= bar), len(fired))
        already = fired[t0:]
        prefix_max = max(fired[:t0])
        predictor = _CountingPredictor(prev, d)
        predicted = predictor.suffix(l, prefix_max)
        counters.predict_reads += predictor.reads
        counters.suffix_total += len(predicted)
        if check:
            params = Parameters(d)
            prev_cfg = Configuration(tuple(prev), params)
            lib = pseudolocal.predict_suffix(prev_cfg, l, params,
                                             prefix_max=prefix_max)
            assert tuple(predicted) == lib, f"bench predictor diverges at l={l}"
            assert predicted[:len(already)] == already, \
                f"simulated suffix head {already} not a prefix of prediction"
        remaining = predicted[len(already):]
        counters.predicted_firings += len(remaining)
        for c in remaining:
            # bookkeeping only: apply the firing deltas without any
            # fireability scan
            top = c + spread
            if top >= len(sigma):
                sigma.extend([0] * (top - len(sigma) + 1))
            sigma[c] -= d
            sigma[top] += 1
            sigma[c - 1] += spread
        full = fired + remaining

    if check:
        truth = list(baseline)
        true_fired = strategies._stabilize_leftmost_list(truth, d, (0,))
        assert full == true_fired, \
            f"pseudolocal avalanche {full[:8]}... differs from replay"
        want = truth + [0] * (len(sigma) - len(truth))
        got = sigma + [0] * (len(truth) - len(sigma))
        assert got == want, "pseudolocal fixed point differs from replay"
        assert not stopped or remaining or already, "stop without prediction"


def _run_pseudolocal(grains: int, d: int, check: bool) -> BenchCounters:
    counters = BenchCounters()
    sigma: list[int] = []
    for _ in range(grains):
        prev = list(sigma)
        _pseudolocal_avalanche(sigma, d, prev, counters, check)
    assert counters.sim_above_after_detect == 0, \
        "simulator fired above a detected interval"
    return counters


def cmd_bench(args) -> int:
    d = args.d if args.d is not None else 3
    grains = args.grains
    rows = []

    if args.mode in ("pseudolocal", "both"):
        # correctness first, untimed
        _run_pseudolocal(grains, d, check=True)

    if args.mode in ("naive", "both"):
        state = _ProcessState(Parameters(d))
        t0 = time.perf_counter()
        total = 0
        for _k, fired, _sigma in strategies.iter_process(Parameters(d), grains, state):
            total += len(fired)
        dt = time.perf_counter() - t0
        rows.append({"mode": "naive", "grains": grains, "d": d,
                     "seconds": round(dt, 6), "firings_simulated": total,
                     "firings_predicted": 0, "fallbacks": 0,
                     "sim_above_interval_after_detect": 0,
                     "predict_reads": 0, "reads_per_suffix": None})

    if args.mode in ("pseudolocal", "both"):
        t0 = time.perf_counter()
        counters = _run_pseudolocal(grains, d, check=False)
        dt = time.perf_counter() - t0
        ratio = (counters.predict_reads / counters.suffix_total
                 if counters.suffix_total else None)
        rows.append({"mode": "pseudolocal", "grains": grains, "d": d,
                     "seconds": round(dt, 6),
                     "firings_simulated": counters.sim_firings,
                     "firings_predicted": counters.predicted_firings,
                     "fallbacks": counters.fallbacks,
                     "sim_above_interval_after_detect": counters.sim_above_after_detect,
                     "predict_reads": counters.predict_reads,
                     "reads_per_suffix": round(ratio, 3) if ratio else None})

    for row in rows:
        print(json.dumps(row, separators=(",", ":")))
    return 0


# ----------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    rep = analysis.growth_sweep(args.grains, Parameters(3), j_max=args.j_max)
    print(f"# growth report over N = {rep.n_grains} grains, d = 3")
    print("j\tn_min\tratio_to_next")
    for j in sorted(rep.n_min):
        r = rep.ratios.get(j)
        print(f"{j}\t{rep.n_min[j]}\t{float(r):.4f}" if r is not None
              else f"{j}\t{rep.n_min[j]}\t-")
    print("N\tL_max\te")
    e_at = dict(rep.e_samples)
    for n, lm in rep.l_max_samples:
        print(f"{n}\t{lm}\t{e_at.get(n, '-')}")
    print(f"# fitted bound: L_max(N) <= {rep.fit_c1:.4f}*log4(N) + {rep.fit_c2:.4f}"
          f" (fit range N <= {rep.fit_cap})")
    for v in rep.violations:
        print(f"# VIOLATION: {v}")
    return 0 if rep.ok else 1


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kspm",
                                 description="Kadanoff sand pile model tools")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the grain-by-grain process")
    sim.add_argument("--grains", type=int, required=True)
    sim.add_argument("--d", type=int, default=None)
    sim.add_argument("--out", default="-")
    sim.add_argument("--fix-out", default=None)
    sim.add_argument("--shot-out", default=None)
    sim.add_argument("--dense-fix", action="store_true",
                     help="emit dense fixed-point prefixes in trace records")
    sim.add_argument("--snapshot", default=None)
    sim.add_argument("--snapshot-every", type=int, default=None)
    sim.add_argument("--resume-from", default=None)
    sim.set_defaults(fn=cmd_simulate)

    ver = sub.add_parser("verify", help="run invariant suites")
    ver.add_argument("--suite", default="all", choices=sorted(SUITES) + ["all"])
    ver.add_argument("--grains", type=int, default=None)
    ver.add_argument("--d", type=int, default=None)
    ver.add_argument("--seeds", type=int, default=20)
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(fn=cmd_verify)

    ben = sub.add_parser("bench", help="replay vs pseudo-local prediction")
    ben.add_argument("--grains", type=int, required=True)
    ben.add_argument("--d", type=int, default=None)
    ben.add_argument("--mode", default="both",
                     choices=["naive", "pseudolocal", "both"])
    ben.set_defaults(fn=cmd_bench)

    ana = sub.add_parser("analyze", help="growth laws of the d=3 process")
    ana.add_argument("--grains", type=int, default=100000)
    ana.add_argument("--j-max", type=int, default=6)
    ana.set_defaults(fn=cmd_analyze)
    return ap


def _validate_common(args) -> None:
    grains = getattr(args, "grains", None)
    if grains is not None:
        if grains < 0:
            raise UsageError("--grains must be >= 0")
        if grains > MASS_CAP:
            raise UsageError(f"--grains above {MASS_CAP} is unsupported")
    d = getattr(args, "d", None)
    if d is not None and d < 2:
        raise UsageError("--d must be >= 2")
    every = getattr(args, "snapshot_every", None)
    if every is not None:
        if every <= 0:
            raise UsageError("--snapshot-every must be positive")
        if not getattr(args, "snapshot", None):
            raise UsageError("--snapshot-every requires --snapshot")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        _validate_common(args)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
    except (CorruptSnapshotError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
