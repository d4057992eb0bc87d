import json

import numpy as np
import pytest

from extremal_lab.box import Box, default_box, parse_box
from extremal_lab.errors import DomainError, InputError
from extremal_lab.problem import Problem, load_problem
from extremal_lab.regularity import (
    BOX_NOTE,
    RankDeficiencyError,
    _k_of_c,
    _pair_values,
    check_affine_growth,
    check_coercivity,
    check_convexity,
    fit_growth,
    growth_pairs,
)

N = 2000


def _prob(L, phi=("u1",), states=("x1",), controls=("u1",)):
    return Problem.build(name="r", states=states, controls=controls, L=L, phi=list(phi), t0=0, t1=1)


# --------------------------------------------------------------------------
# boxes


def test_default_box(fx):
    b = default_box(load_problem(fx("cubicpoly.prob")))
    assert b.render() == "t:0,1;x1:-1,1;x2:-1,1;u1:-10,10"


def test_parse_box_overrides_defaults(fx):
    p = load_problem(fx("quadratic.prob"))
    b = parse_box("u1:-2,3", p)
    assert b.as_dict()["u1"] == (-2.0, 3.0) and b.as_dict()["x1"] == (-1.0, 1.0)


def test_box_errors(fx):
    p = load_problem(fx("quadratic.prob"))
    with pytest.raises(InputError, match="lower > upper"):
        parse_box("x1:1,-1", p)
    with pytest.raises(InputError, match="unknown variable"):
        parse_box("y:0,1", p)
    with pytest.raises(InputError):
        parse_box("x1:0", p)


def test_box_sampling_is_deterministic_and_inside():
    b = Box(("a", "b"), (0.0, -3.0), (1.0, 5.0))
    s1, s2 = b.sample(500, seed=0), b.sample(500, seed=0)
    assert np.array_equal(s1, s2)
    assert np.all(s1 >= [0, -3]) and np.all(s1 <= [1, 5])
    assert not np.array_equal(s1, b.sample(500, seed=1))


def test_scaled_box_about_centre():
    b = Box(("t", "u1"), (0.0, 1.0), (1.0, 3.0)).scaled(2, ["u1"])
    assert b.as_dict() == {"t": (0.0, 1.0), "u1": (0.0, 4.0)}


def test_too_few_samples(fx):
    p = load_problem(fx("quadratic.prob"))
    for call in (lambda: check_convexity(p, samples=999), lambda: fit_growth(p, "27", samples=10),
                 lambda: check_coercivity(p, "r^2", samples=100)):
        with pytest.raises(InputError, match="1000"):
            call()


# --------------------------------------------------------------------------
# coercivity and convexity


def test_coercivity_quadratic(fx):
    p = load_problem(fx("quadratic.prob"))
    v = check_coercivity(p, "r^2", samples=N)
    assert v.passed and v.note == BOX_NOTE
    w = check_coercivity(p, "r^3", samples=N)
    assert not w.passed
    # the witness is a point where u^2 < |u|^3, i.e. |u| > 1
    assert abs(w.witness["u1"]) > 1 and w.witness["L"] < w.witness["theta"]


def test_linear_growth_is_not_coercive(fx):
    v = check_coercivity(load_problem(fx("absu.prob")), "r^2", samples=N)
    assert not v.passed


def test_sublinear_gauge_fails_superlinearity(fx):
    v = check_coercivity(load_problem(fx("quadratic.prob")), "r", samples=N)
    assert not v.passed and not v.details["superlinear"]


def test_bounded_dynamics_fail_the_ray_clause():
    v = check_coercivity(_prob("u1^2", phi=("sin(u1)",)), "r^2", samples=N)
    assert not v.details["rays_unbounded"] and not v.passed


def test_theta_must_be_a_function_of_r(fx):
    with pytest.raises(InputError, match="theta"):
        check_coercivity(load_problem(fx("quadratic.prob")), "x1^2", samples=N)


@pytest.mark.parametrize("name", ("quadratic", "multiplicative", "cubicpoly", "threestate"))
def test_convexity_passes_on_convex_fixtures(fx, name):
    assert check_convexity(load_problem(fx(f"{name}.prob")), samples=N).passed


def test_convexity_fails_on_sine(fx):
    p = load_problem(fx("sine.prob"))
    box = parse_box(f"u1:0,{2 * np.pi}", p)
    v = check_convexity(p, box, samples=N)
    assert not v.passed
    w = v.witness
    u, up = w["u"][0], w["u_prime"][0]
    assert np.sin((u + up) / 2) > (np.sin(u) + np.sin(up)) / 2 + 1e-9


def test_convexity_handles_nonsmooth(fx):
    assert check_convexity(load_problem(fx("absu.prob")), samples=N).passed


# --------------------------------------------------------------------------
# growth fits


def test_quadratic_tonelli_morrey_exact(fx):
    f = fit_growth(load_problem(fx("quadratic.prob")), "27", samples=N)
    assert (f.c, f.k) == (0.0, 0.0) and not f.suspected_violation


def test_x_u_squared_trend_flags_violation(fx):
    p = load_problem(fx("xu2.prob"))
    f = fit_growth(p, "27", samples=N)
    assert f.suspected_violation
    ks = [t["k"] for t in f.trend]
    assert [t["scale"] for t in f.trend] == [1, 2, 4]
    assert all(b >= 4 * (1 - 1e-9) * a for a, b in zip(ks, ks[1:]))
    # hand bound at x1 = 0: |L_x| = u^2 while |L| = 0, so k(U) approaches U^2
    for t, U in zip(f.trend, (10, 20, 40)):
        assert 0.5 * U ** 2 <= t["k"] <= U ** 2


def test_multiplicative_applicability_trend(fx):
    f = fit_growth(load_problem(fx("multiplicative.prob")), "9", samples=N)
    ks = [t["k"] for t in f.trend]
    # |phi_x| = |u| needs k near U on the x1 = 0 slice
    assert ks[0] > 0 and ks[2] >= ks[1] >= ks[0]
    assert ks[2] <= 40 and not f.suspected_violation


def test_fitted_bound_holds_at_every_sample(fx):
    p = load_problem(fx("xu2.prob"))
    f = fit_growth(p, "9", samples=N)
    box = default_box(p)
    lhs, rhs = _pair_values(p, growth_pairs(p, "9"), box.names, box.sample(N, seed=0))
    assert np.all(lhs <= f.c * rhs + f.k + 1e-9)


@pytest.mark.parametrize("name", ("quadratic", "multiplicative", "cubicpoly", "quadhomog", "xu2", "harmonic"))
def test_k_monotone_in_box(fx, name):
    f = fit_growth(load_problem(fx(f"{name}.prob")), "27", samples=N)
    ks = [t["k"] for t in f.trend]
    assert ks == sorted(ks)


@pytest.mark.parametrize("name", ("quadratic", "multiplicative", "cubicpoly", "quadhomog", "xu2", "harmonic"))
def test_tonelli_morrey_implies_applicability_with_same_constants(fx, name):
    p = load_problem(fx(f"{name}.prob"))
    f27 = fit_growth(p, "27", samples=N)
    box = default_box(p)
    lhs, rhs = _pair_values(p, growth_pairs(p, "9"), box.names, box.sample(N, seed=0))
    assert _k_of_c(lhs, rhs, f27.c) <= f27.k + 1e-12


def test_classical_growth_condition(fx):
    f = fit_growth(load_problem(fx("harmonic.prob")), "25", samples=N)
    assert f.condition == "classical-TM" and np.isfinite(f.k)


def test_unknown_condition(fx):
    with pytest.raises(InputError):
        fit_growth(load_problem(fx("quadratic.prob")), "12", samples=N)


def test_growth_reports_are_deterministic(fx):
    p = load_problem(fx("xu2.prob"))
    a = json.dumps(fit_growth(p, "27", samples=N).to_dict(), sort_keys=True)
    b = json.dumps(fit_growth(p, "27", samples=N).to_dict(), sort_keys=True)
    assert a == b


def test_domain_error_names_point():
    p = _prob("log(x1) + u1^2")
    with pytest.raises(DomainError, match="x1"):
        fit_growth(p, "27", samples=N)


# --------------------------------------------------------------------------
# control-affine condition


def test_affine_quadratic_passes(fx):
    v = check_affine_growth(load_problem(fx("quadratic.prob")), (1, 1, 1, 0), samples=N)
    assert v.passed and v.details["min_singular_value"] == pytest.approx(1.0)


def test_affine_rejects_nonaffine_dynamics():
    with pytest.raises(InputError, match="not affine"):
        check_affine_growth(_prob("u1^2", phi=("u1^2",)), (1, 1, 1, 0), samples=N)


def test_affine_rank_deficiency_reports_point(fx):
    with pytest.raises(RankDeficiencyError) as err:
        check_affine_growth(load_problem(fx("multiplicative.prob")), (1, 1, 1, 0), samples=N)
    assert err.value.point["x1"] == 0.0


def test_affine_parameter_constraints(fx):
    p = load_problem(fx("quadratic.prob"))
    for params in ((0, 1, 1, 0), (1, 2, 1, 0), (1, 1, 1, -3)):
        with pytest.raises(InputError):
            check_affine_growth(p, params, samples=N)


def test_affine_violation_has_witness():
    p = _prob("u1^2 + x1^4")
    # bracket grows like |x1|^3 u1^2 * |u|^mu, far above gamma L^beta + eta with small constants
    v = check_affine_growth(p, (0.01, 0.5, 0.01, 1), samples=N)
    assert not v.passed and v.witness["lhs"] > v.witness["rhs"]
