from fractions import Fraction

import pytest

from kspm import (
    Configuration,
    Parameters,
    ShotVector,
    build_u_vectors,
    char_poly_coeffs,
    growth_report,
    growth_sweep,
    jordan_data,
    min_grains_for_prefix,
    project_e3,
    run_process,
    shot_identity_residual,
    verify_projection_law,
    verify_recurrence,
)
from kspm.analysis import (
    BASIS_CONTRACT,
    BASIS_FIX,
    BASIS_RAMP,
    CONTRACT_FIXED,
    STEP_MATRIX,
    TWO_STEP_SHIFT,
    char_poly_at,
    check_prefix_forcing,
    mat_vec,
    prefix_20_length,
    vec_sub,
)

D3 = Parameters(3)
D4 = Parameters(4)


# ------------------------------------------------------------- linear algebra


def test_characteristic_polynomial_and_roots():
    assert char_poly_coeffs() == (1, Fraction(-3, 2), 0, Fraction(1, 2))
    assert char_poly_at(Fraction(-1, 2)) == 0
    assert char_poly_at(1) == 0
    assert char_poly_at(2) != 0


def test_jordan_structure_is_exact():
    jd = jordan_data()
    assert jd.verify()
    assert dict(jd.eigenvalues) == {Fraction(-1, 2): 1, Fraction(1): 2}
    assert mat_vec(STEP_MATRIX, BASIS_FIX) == BASIS_FIX
    assert mat_vec(STEP_MATRIX, BASIS_RAMP) == (1, 2, 3)  # fix + ramp
    assert mat_vec(STEP_MATRIX, BASIS_CONTRACT) == (-2, 1, Fraction(-1, 2))


def _solve3(cols, rhs):
    # Gaussian elimination over Fraction; independent of project_e3's Cramer
    m = [[Fraction(cols[c][r]) for c in range(3)] + [Fraction(rhs[r])]
         for r in range(3)]
    for col in range(3):
        piv = next(r for r in range(col, 3) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        m[col] = [x / m[col][col] for x in m[col]]
        for r in range(3):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return tuple(m[r][3] for r in range(3))


def test_projection_agrees_with_independent_solver():
    for x in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (7, -3, 2), (4, -2, 1)]:
        coords = _solve3((BASIS_FIX, BASIS_RAMP, BASIS_CONTRACT), x)
        assert project_e3(x) == coords[2]
    assert project_e3(BASIS_CONTRACT) == 1
    assert project_e3(BASIS_FIX) == 0
    assert project_e3(BASIS_RAMP) == 0


def test_contraction_fixed_point_absorbs_two_step_shift():
    # under a (2,0) pair the two-step map is u -> A^2 u + (0,1,3/2); on
    # the contracting line v is its fixed point, so the image of v has no
    # contract component left relative to v
    a = STEP_MATRIX
    v = CONTRACT_FIXED
    image = mat_vec(a, mat_vec(a, v))
    shifted = tuple(image[i] + TWO_STEP_SHIFT[i] for i in range(3))
    assert project_e3(vec_sub(shifted, v)) == 0
    assert project_e3(v) == Fraction(-2, 27)


# ---------------------------------------------------------------- identities


@pytest.mark.parametrize("params,n", [(D3, 300), (D4, 300), (Parameters(5), 300)])
def test_shot_identity_residual_zero_on_traces(params, n):
    tr = run_process(n, params)
    res = shot_identity_residual(tr.final, tr.shot, n, params)
    assert not any(res)


def test_shot_identity_detects_tampering():
    tr = run_process(50, D3)
    bad = ShotVector(tuple(c + (i == 0) for i, c in enumerate(tr.shot.counts)),
                     50)
    res = shot_identity_residual(tr.final, bad, 50, D3)
    assert any(res)


def test_shot_identity_rejects_wrong_grain_count():
    tr = run_process(20, D3)
    with pytest.raises(ValueError):
        shot_identity_residual(tr.final, tr.shot, 19, D3)


def test_u_vector_conventions():
    tr = run_process(2, D3)
    us = build_u_vectors(tr.shot, 3)
    assert us[0] == (2, 0, 0)
    a0, a1 = tr.shot[0], tr.shot[1]
    assert us[1] == (0, a0, a1)
    tr9 = run_process(9, D3)
    us9 = build_u_vectors(tr9.shot, 4)
    assert us9[0] == (9, 0, 3)
    assert us9[1] == (0, 3, 0)
    assert us9[2] == (3, 0, 1)


@pytest.mark.parametrize("n", [2, 8, 60, 293])
def test_window_recurrence_holds(n):
    tr = run_process(n, D3)
    us = build_u_vectors(tr.shot, len(tr.shot.counts) + 2)
    assert verify_recurrence(us, tr.final)


def test_window_recurrence_fails_on_corruption():
    tr = run_process(60, D3)
    us = build_u_vectors(tr.shot, len(tr.shot.counts) + 2)
    us[3] = (us[3][0], us[3][1], us[3][2] + 1)
    assert not verify_recurrence(us, tr.final)


# ----------------------------------------------------------- projection law


def test_minimal_grain_counts_for_prefixes():
    assert min_grains_for_prefix(1, cap=50) == 2
    assert min_grains_for_prefix(2, cap=50) == 8
    assert min_grains_for_prefix(3, cap=400) == 293
    assert min_grains_for_prefix(3, cap=100) is None


def test_prefix_20_length():
    assert prefix_20_length(Configuration((2, 0, 2, 0, 1), D3)) == 2
    assert prefix_20_length(Configuration((2, 0), D3)) == 1
    assert prefix_20_length(Configuration((1, 0), D3)) == 0
    assert prefix_20_length(Configuration((), D3)) == 0


@pytest.mark.parametrize("j,n,xj", [
    (1, 2, Fraction(2, 27)),
    (2, 8, Fraction(2, 27)),
    (3, 293, Fraction(20, 27)),
])
def test_projection_law_exact(j, n, xj):
    law = verify_projection_law(run_process(n, D3), j)
    assert law.ok, law.detail
    assert law.x_j == xj
    assert law.closed_form == 4**j * xj
    assert law.closed_form == Fraction(3 * n + 3 * law.a0 + 2, 27)


def test_projection_closed_form_constant():
    # the additive constant in the closed form is 2/3 inside the ninth,
    # equivalently (3N + 3a_0 + 2)/27; the 2/27 variant contradicts the
    # recurrence on the very first trace
    tr = run_process(2, D3)
    law = verify_projection_law(tr, 1)
    n, a0 = 2, law.a0
    assert law.xs[0] == (n + a0 + Fraction(2, 3)) / 9
    assert law.xs[0] != (n + a0 + Fraction(2, 27)) / 9


def test_projection_law_requires_prefix():
    with pytest.raises(ValueError):
        verify_projection_law(run_process(3, D3), 1)  # pi(3) = (0,0,1)
    with pytest.raises(ValueError):
        verify_projection_law(run_process(8, D4), 1)  # d must be 3


def test_quarter_contraction_from_scratch():
    # recompute x_i with the independent solver on a fresh trace
    tr = run_process(293, D3)
    us = build_u_vectors(tr.shot, 7)
    xs = [_solve3((BASIS_FIX, BASIS_RAMP, BASIS_CONTRACT),
                  vec_sub(us[2 * i], CONTRACT_FIXED))[2] for i in range(4)]
    for i in range(3):
        assert xs[i + 1] == xs[i] / 4
    assert xs[0] == Fraction(3 * 293 + 3 * tr.shot[0] + 2, 27)


# ------------------------------------------------------------- prefix forcing


def test_prefix_forcing_weak_bound_along_trace():
    tr = run_process(2000, D3)
    prev = Configuration((), D3)
    seen = 0
    for step in tr.steps:
        out = check_prefix_forcing(prev, step.avalanche.firings)
        if out is not None:
            j, observed, ok = out
            assert ok, f"k={step.k}: observed prefix {observed} < {j} - 2"
            seen += 1
        prev = step.fixed_point
    assert seen > 0


# ------------------------------------------------------------------- growth


def test_growth_report_known_small_values():
    tr = run_process(2000, D3)
    rep = growth_report(tr, j_max=5)
    assert rep.n_min == {1: 2, 2: 8, 3: 293, 4: 466, 5: 1843}
    assert rep.ratios[2] == Fraction(293, 8)
    assert rep.l_bound_ok
    assert rep.e_bound_ok
    assert not rep.ratio_ok          # measured ratios leave [3.5, 4.5]
    assert not rep.ok
    assert any("ratio" in v for v in rep.violations)


def test_growth_sweep_matches_trace_report():
    tr = run_process(2000, D3)
    assert growth_sweep(2000, D3, j_max=5).n_min == growth_report(tr, 5).n_min


def test_e_bound_is_exact_integer_form():
    tr = run_process(500, D3)
    rep = growth_report(tr, j_max=3)
    for n, e in rep.e_samples:
        assert (e + 2) ** 2 * 2 >= 2 * n  # e >= sqrt(2N/(D-1)) - 2, squared


def test_largest_column_never_shrinks():
    tr = run_process(400, D3)
    top = 0
    for step in tr.steps:
        cur = len(step.fixed_point.trimmed())
        assert cur >= top
        top = max(top, cur)
