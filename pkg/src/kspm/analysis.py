"""Exact-rational analysis of the D = 3 iterative process.

The per-column firing counts a_i over the first N avalanches satisfy
sigma_i = a_{i-2} - 3 a_i + 2 a_{i+1} (with a_{-2} = N, a_{-1} = 0 and,
for general D, sigma_i = N[i=0] + a_{i-D+1} - D a_i + (D-1) a_{i+1}).
Sliding windows u_i = (a_{i-2}, a_{i-1}, a_i) therefore evolve linearly,
u_{i+1} = A u_i + (0, 0, sigma_i / 2), and on a fixed point with prefix
(2,0)^j the two-step map contracts the window's component along the
eigenline of -1/2 by exactly 1/4 per step.  That contraction forces the
prefix length, hence the interval column, to grow like log_4 N.

Everything here is fractions.Fraction arithmetic; no floats enter any
identity check (the growth-law fit is the one empirical, float-valued
step, and it never feeds back into an exact assertion).
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import Configuration, Parameters
from . import strategies
from .strategies import RunTrace, ShotVector

logger = logging.getLogger(__name__)

Vec3 = tuple  # 3 rational entries
Mat3 = tuple  # 3 rows of Vec3

HALF = Fraction(1, 2)

# One-step window matrix: rows shift, the last row solves the slope
# identity for a_{i+1}.
STEP_MATRIX: Mat3 = (
    (Fraction(0), Fraction(1), Fraction(0)),
    (Fraction(0), Fraction(0), Fraction(1)),
    (Fraction(-1, 2), Fraction(0), Fraction(3, 2)),
)

# Jordan basis: two generalized eigenvectors for eigenvalue 1 and the
# eigenvector for -1/2.
BASIS_FIX = (Fraction(1), Fraction(1), Fraction(1))
BASIS_RAMP = (Fraction(0), Fraction(1), Fraction(2))
BASIS_CONTRACT = (Fraction(4), Fraction(-2), Fraction(1))

# Inhomogeneous term of the two-step map on even indices of a (2,0)^j
# prefix: A*(0,0,1) with sigma_even = 2, sigma_odd = 0.
TWO_STEP_SHIFT = (Fraction(0), Fraction(1), Fraction(3, 2))

# Affine fixed vector of w -> w/4 + project(TWO_STEP_SHIFT) on the
# contracting line: solves v = v/4 - (1/18) * BASIS_CONTRACT.
CONTRACT_FIXED_COEFF = Fraction(-2, 27)
CONTRACT_FIXED = tuple(CONTRACT_FIXED_COEFF * c for c in BASIS_CONTRACT)


def mat_vec(m: Mat3, v: Vec3) -> Vec3:
    return tuple(sum(r[c] * v[c] for c in range(3)) for r in m)


def mat_mat(a: Mat3, b: Mat3) -> Mat3:
    return tuple(
        tuple(sum(a[r][t] * b[t][c] for t in range(3)) for c in range(3))
        for r in range(3)
    )


def vec_sub(a: Vec3, b: Vec3) -> Vec3:
    return tuple(x - y for x, y in zip(a, b))


def vec_add(a: Vec3, b: Vec3) -> Vec3:
    return tuple(x + y for x, y in zip(a, b))


def _det3_cols(c0: Vec3, c1: Vec3, c2: Vec3):
    return (c0[0] * (c1[1] * c2[2] - c1[2] * c2[1])
            - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1])
            + c2[0] * (c0[1] * c1[2] - c0[2] * c1[1]))


_DET_BASIS = _det3_cols(BASIS_FIX, BASIS_RAMP, BASIS_CONTRACT)  # = 9


def char_poly_coeffs() -> tuple[Fraction, ...]:
    """Monic characteristic polynomial of STEP_MATRIX, highest degree first."""
    return (Fraction(1), Fraction(-3, 2), Fraction(0), Fraction(1, 2))


def char_poly_at(x) -> Fraction:
    c3, c2, c1, c0 = char_poly_coeffs()
    x = Fraction(x)
    return c3 * x**3 + c2 * x**2 + c1 * x + c0


@dataclass(frozen=True)
class JordanData:
    """Spectral structure of the window matrix, checked exactly."""

    matrix: Mat3
    eigenvalues: tuple[tuple[Fraction, int], ...]  # (value, multiplicity)
    basis: tuple[Vec3, Vec3, Vec3]
    jordan_form: Mat3

    def verify(self) -> bool:
        a = self.matrix
        fix, ramp, contract = self.basis
        ok = mat_vec(a, fix) == fix
        ok = ok and mat_vec(a, ramp) == vec_add(fix, ramp)
        ok = ok and mat_vec(a, contract) == tuple(-HALF * c for c in contract)
        # characteristic polynomial annihilates A (Cayley-Hamilton)
        a2 = mat_mat(a, a)
        a3 = mat_mat(a2, a)
        c3, c2, c1, c0 = char_poly_coeffs()
        for r in range(3):
            for c in range(3):
                acc = c3 * a3[r][c] + c2 * a2[r][c] + c1 * a[r][c]
                if r == c:
                    acc += c0
                if acc != 0:
                    ok = False
        # factored form (1/2)(2x+1)(x-1)^2 agrees coefficient by coefficient
        factored = (Fraction(1), Fraction(-3, 2), Fraction(0), Fraction(1, 2))
        ok = ok and factored == char_poly_coeffs()
        for val, _ in self.eigenvalues:
            ok = ok and char_poly_at(val) == 0
        return ok


def jordan_data() -> JordanData:
    return JordanData(
        matrix=STEP_MATRIX,
        eigenvalues=((Fraction(-1, 2), 1), (Fraction(1), 2)),
        basis=(BASIS_FIX, BASIS_RAMP, BASIS_CONTRACT),
        jordan_form=(
            (Fraction(1), Fraction(1), Fraction(0)),
            (Fraction(0), Fraction(1), Fraction(0)),
            (Fraction(0), Fraction(0), Fraction(-1, 2)),
        ),
    )


def project_e3(x: Vec3) -> Fraction:
    """Coefficient of x along BASIS_CONTRACT in the Jordan basis.

    Cramer's rule on the basis matrix; the projection kills BASIS_FIX
    and BASIS_RAMP and is the exact observable the contraction acts on.
    """
    return _det3_cols(BASIS_FIX, BASIS_RAMP, x) / Fraction(_DET_BASIS)


def shot_identity_residual(fix: Configuration, shot: ShotVector,
                           n_grains: int, params: Parameters) -> list[int]:
    """Residuals of sigma_i = N[i=0] + a_{i-D+1} - D a_i + (D-1) a_{i+1}.

    All-zero output certifies the trace's bookkeeping; any other value
    means fix and shot do not belong to the same N-grain history.
    """
    if shot.n_grains != n_grains:
        raise ValueError(
            f"shot vector records {shot.n_grains} grains, caller says {n_grains}")
    d = params.d
    span = max(len(fix.sigma), len(shot.counts) + d)
    out = []
    for i in range(span):
        predicted = (n_grains if i == 0 else 0)
        back = i - d + 1
        if back >= 0:
            predicted += shot[back]
        predicted += (d - 1) * shot[i + 1] - d * shot[i]
        out.append(fix[i] - predicted)
    return out


def _shot_entry(shot: ShotVector, n_grains: int, j: int):
    if j == -2:
        return n_grains
    if j == -1:
        return 0
    return shot[j]


def build_u_vectors(shot: ShotVector, upto: int) -> list[Vec3]:
    """Sliding windows u_i = (a_{i-2}, a_{i-1}, a_i) for i = 0 .. upto.

    Uses the conventions a_{-2} = N and a_{-1} = 0, so u_0 = (N, 0, a_0).
    Only meaningful for D = 3 traces.
    """
    if upto < 0:
        raise ValueError("upto must be >= 0")
    n = shot.n_grains
    return [tuple(_shot_entry(shot, n, i - 2 + c) for c in range(3))
            for i in range(upto + 1)]


def verify_recurrence(us: list[Vec3], fix: Configuration) -> bool:
    """Check u_{i+1} = A u_i + (0,0,sigma_i/2), plus the two-step form.

    Exact on every index; logs and returns False at the first failure.
    """
    if fix.params.d != 3:
        raise ValueError("the window recurrence is specific to D = 3")
    a2 = mat_mat(STEP_MATRIX, STEP_MATRIX)
    for i in range(len(us) - 1):
        v_i = (Fraction(0), Fraction(0), Fraction(fix[i], 2))
        expect = vec_add(mat_vec(STEP_MATRIX, us[i]), v_i)
        if tuple(map(Fraction, us[i + 1])) != tuple(expect):
            logger.warning("one-step recurrence fails at i=%d: %s != %s",
                           i, us[i + 1], expect)
            return False
        if i + 2 < len(us):
            v_next = (Fraction(0), Fraction(0), Fraction(fix[i + 1], 2))
            two = vec_add(vec_add(mat_vec(a2, us[i]),
                                  mat_vec(STEP_MATRIX, v_i)), v_next)
            if tuple(map(Fraction, us[i + 2])) != tuple(two):
                logger.warning("two-step recurrence fails at i=%d", i)
                return False
    return True


@dataclass(frozen=True)
class ProjectionLaw:
    """Exact contraction record for one D = 3 trace with a (2,0)^j prefix."""

    n_grains: int
    j: int
    a0: int
    xs: tuple[Fraction, ...]  # x_i = project_e3(u_{2i} - CONTRACT_FIXED), i = 0..j
    closed_form: Fraction     # (3N + 3 a_0 + 2) / 27
    ok: bool
    detail: str = ""

    @property
    def x_j(self) -> Fraction:
        return self.xs[-1]


def verify_projection_law(trace: RunTrace, j: int) -> ProjectionLaw:
    """Check the quarter-contraction along the (2,0)^j prefix of a trace.

    Asserts, all in exact rationals: x_{i+1} = x_i / 4 on even windows,
    x_j > 0, project_e3(u_0 - CONTRACT_FIXED) = (3N + 3 a_0 + 2)/27, and
    that this equals 4^j x_j.  Also enforces 2 a_0 <= N: each grain adds 1
    to sum(sigma), firing column 0 subtracts 2, and every other firing
    preserves it, so sum(sigma) = N - 2 a_0 >= 0 at the fixed point.
    """
    if trace.params.d != 3:
        raise ValueError("projection law applies to D = 3 traces")
    if j < 0:
        raise ValueError("j must be >= 0")
    plen = prefix_20_length(trace.final)
    if plen < j:
        raise ValueError(f"final fixed point has (2,0)-prefix {plen} < {j}")
    n = trace.n_grains
    shot = trace.shot
    a0 = shot[0]
    us = build_u_vectors(shot, 2 * j)
    xs = tuple(project_e3(vec_sub(us[2 * i], CONTRACT_FIXED)) for i in range(j + 1))
    msgs = []
    for i in range(j):
        if xs[i + 1] != xs[i] / 4:
            msgs.append(f"x_{i+1} != x_{i}/4 ({xs[i+1]} vs {xs[i]/4})")
    closed = Fraction(3 * n + 3 * a0 + 2, 27)
    if xs[0] != closed:
        msgs.append(f"x_0 = {xs[0]} differs from closed form {closed}")
    if closed != 4**j * xs[j]:
        msgs.append(f"closed form != 4^{j} * x_{j}")
    if not xs[j] > 0:
        msgs.append(f"x_{j} = {xs[j]} not positive")
    if 2 * a0 > n:
        msgs.append(f"a_0 = {a0} exceeds N/2 with N = {n}")
    return ProjectionLaw(n_grains=n, j=j, a0=a0, xs=xs, closed_form=closed,
                         ok=not msgs, detail="; ".join(msgs))


def prefix_20_length(fix: Configuration) -> int:
    """Largest j with fix starting (2,0) repeated j times."""
    j = 0
    while fix[2 * j] == 2 and fix[2 * j + 1] == 0:
        j += 1
    return j


def check_prefix_forcing(prev_fix: Configuration, firings) -> Optional[tuple[int, int, bool]]:
    """Prefix forced by an avalanche firing column 2j but not 2j-1 (D = 3).

    Returns (j, observed_prefix_length, ok) for the largest such j, or
    None when the premise is vacuous.  The asserted bound is the weak
    form observed >= j - 2; the observed value is reported so the sharper
    offset stays visible in the data.
    """
    fired = set(firings)
    j_hit = None
    for c in fired:
        if c >= 2 and c % 2 == 0 and (c - 1) not in fired:
            j_hit = max(j_hit or 0, c // 2)
    if j_hit is None:
        return None
    observed = prefix_20_length(prev_fix)
    return j_hit, observed, observed >= max(j_hit - 2, 0)


def min_grains_for_prefix(j: int, cap: int, params: Optional[Parameters] = None) -> Optional[int]:
    """Smallest N <= cap whose fixed point starts with (2,0)^j, if any."""
    if j < 1:
        raise ValueError("j must be >= 1")
    params = params or Parameters(3)
    if params.d != 3:
        raise ValueError("the (2,0)-prefix law is specific to D = 3")
    for k, _fired, sigma in strategies.iter_process(params, cap):
        n = 0
        while (2 * n < len(sigma) and sigma[2 * n] == 2
               and (2 * n + 1 >= len(sigma) or sigma[2 * n + 1] == 0)):
            n += 1
        if n >= j:
            return k
    return None


@dataclass
class GrowthReport:
    """Empirical growth laws of prefix length, interval column and support."""

    n_grains: int
    j_max: int
    n_min: dict[int, int] = field(default_factory=dict)
    ratios: dict[int, Fraction] = field(default_factory=dict)
    l_max_samples: list[tuple[int, int]] = field(default_factory=list)
    e_samples: list[tuple[int, int]] = field(default_factory=list)
    fit_c1: float = 0.0
    fit_c2: float = 0.0
    fit_cap: int = 0
    l_bound_ok: bool = True
    e_bound_ok: bool = True
    ratio_ok: bool = True
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.l_bound_ok and self.e_bound_ok and self.ratio_ok and not self.violations


class _GrowthAccumulator:
    def __init__(self, params: Parameters, j_max: int, fit_cap: int = 1000):
        self.params = params
        self.j_max = j_max
        self.fit_cap = fit_cap
        self.n_min: dict[int, int] = {}
        self.l_max_by_k: list[int] = []  # -1 while no interval seen yet
        self.e_by_k: list[int] = []
        self._l_max = -1
        self._e = -1

    def feed(self, k: int, fired, sigma, interval_l: Optional[int]):
        d = self.params.d
        if fired:
            self._e = max(self._e, max(fired) + d - 1)
        self._e = max(self._e, 0)
        if interval_l is not None and interval_l > self._l_max:
            self._l_max = interval_l
        self.l_max_by_k.append(self._l_max)
        self.e_by_k.append(self._e)
        if d == 3:
            n = 0
            while (2 * n < len(sigma) and sigma[2 * n] == 2
                   and (2 * n + 1 >= len(sigma) or sigma[2 * n + 1] == 0)):
                n += 1
            for j in range(1, min(n, self.j_max) + 1):
                self.n_min.setdefault(j, k)

    def report(self) -> GrowthReport:
        d = self.params.d
        n = len(self.l_max_by_k)
        rep = GrowthReport(n_grains=n, j_max=self.j_max, n_min=dict(self.n_min),
                           fit_cap=min(self.fit_cap, n))
        for j in sorted(self.n_min):
            if j + 1 in self.n_min:
                rep.ratios[j] = Fraction(self.n_min[j + 1], self.n_min[j])
        lo, hi = Fraction(7, 2), Fraction(9, 2)
        for j in range(2, self.j_max):
            r = rep.ratios.get(j)
            if r is None:
                rep.ratio_ok = False
                rep.violations.append(f"n_min ratio at j={j} unavailable")
            elif not (lo <= r <= hi):
                rep.ratio_ok = False
                rep.violations.append(f"n_min ratio at j={j} is {float(r):.3f}")
        js = sorted(self.n_min)
        for a, b in zip(js, js[1:]):
            if not self.n_min[a] < self.n_min[b]:
                rep.ratio_ok = False
                rep.violations.append(f"n_min not strictly increasing at j={b}")

        k = 1
        while k <= n:
            if self.l_max_by_k[k - 1] >= 0:
                rep.l_max_samples.append((k, self.l_max_by_k[k - 1]))
            rep.e_samples.append((k, self.e_by_k[k - 1]))
            k *= 2
        if n >= 1 and (not rep.e_samples or rep.e_samples[-1][0] != n):
            rep.e_samples.append((n, self.e_by_k[n - 1]))
            if self.l_max_by_k[n - 1] >= 0:
                rep.l_max_samples.append((n, self.l_max_by_k[n - 1]))

        # fit L_max(N) <= c1 * log4(N) + c2 on the capped range, then ask
        # the bound to keep holding over the whole run
        cap = rep.fit_cap
        pts = [(math.log(k, 4), self.l_max_by_k[k - 1])
               for k in _powers_of_two(cap) if self.l_max_by_k[k - 1] >= 0]
        if len(pts) >= 2 and len({x for x, _ in pts}) >= 2:
            slope, _inter = statistics.linear_regression([p[0] for p in pts],
                                                         [float(p[1]) for p in pts])
            rep.fit_c1 = slope
        else:
            rep.fit_c1 = 0.0
        resid = [self.l_max_by_k[k - 1] - rep.fit_c1 * math.log(k, 4)
                 for k in range(1, cap + 1) if self.l_max_by_k[k - 1] >= 0]
        rep.fit_c2 = max(resid) if resid else 0.0
        for k in range(1, n + 1):
            lm = self.l_max_by_k[k - 1]
            if lm >= 0 and lm > rep.fit_c1 * math.log(k, 4) + rep.fit_c2 + 1e-9:
                rep.l_bound_ok = False
                rep.violations.append(f"L_max({k}) = {lm} above fitted log bound")
                break

        for k, e in rep.e_samples:
            if (e + 2) ** 2 * (d - 1) < 2 * k:
                rep.e_bound_ok = False
                rep.violations.append(f"e({k}) = {e} below sqrt(2N/(D-1)) - 2")
        return rep


def _powers_of_two(cap: int):
    k = 1
    while k <= cap:
        yield k
        k *= 2


def growth_report(trace: RunTrace, j_max: int = 6) -> GrowthReport:
    """Growth laws read off a stored trace."""
    acc = _GrowthAccumulator(trace.params, j_max)
    for st in trace.steps:
        acc.feed(st.k, st.avalanche.firings, st.fixed_point.sigma,
                 st.avalanche.interval_l)
    return acc.report()


def growth_sweep(n_grains: int, params: Optional[Parameters] = None,
                 j_max: int = 6) -> GrowthReport:
    """Growth laws from a streaming run; memory stays O(sqrt(N) + N scalars)."""
    params = params or Parameters(3)
    acc = _GrowthAccumulator(params, j_max)
    for k, fired, sigma in strategies.iter_process(params, n_grains):
        acc.feed(k, fired, sigma, strategies.find_interval_l(fired, params.d))
    return acc.report()
