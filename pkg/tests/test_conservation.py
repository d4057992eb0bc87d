import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal_lab import symbolic as sym
from extremal_lab.conservation import check_conservation, conservation_residual, monitor, poisson_bracket
from extremal_lab.errors import DomainError, InputError
from extremal_lab.extremal import solve
from extremal_lab.problem import Problem, hamiltonian, load_problem

P = sym.parse
NAMES = ("t", "x1", "x2", "u1", "psi0", "psi1", "psi2")

_atoms = st.sampled_from(["x1", "x2", "psi1", "psi2", "t", "u1", "2", "(-1)"])


def _grow(children):
    return st.one_of(
        st.tuples(children, children).map(lambda ab: f"({ab[0]})*({ab[1]})"),
        st.tuples(children, children).map(lambda ab: f"({ab[0]}) + ({ab[1]})"),
        children.map(lambda a: f"sin({a})"),
        children.map(lambda a: f"exp(({a})/4)"),
    )


exprs = st.recursive(_atoms, _grow, max_leaves=6).map(P)


def _rand_binding(rng):
    return {n: float(rng.uniform(-1.5, 1.5)) for n in NAMES}


# --------------------------------------------------------------------------
# Poisson bracket


def test_bracket_examples():
    H = P("psi0*u1^2 + psi1*u1*x1")
    assert poisson_bracket(H, H, 1) == sym.ZERO
    assert poisson_bracket(P("psi1*x1"), H, 1) == sym.ZERO
    assert poisson_bracket(P("x1"), P("psi1*u1"), 1) == P("u1")


def test_bracket_accepts_state_names():
    # a is the second state, paired with psi2
    assert poisson_bracket(P("a"), P("psi1*b + psi2*a"), ["b", "a"]) == P("a")


@settings(max_examples=100, derandomize=True, deadline=None)
@given(exprs, exprs)
def test_bracket_antisymmetry(F, G):
    lhs = poisson_bracket(F, G, 2)
    rhs = sym.mul(-1, poisson_bracket(G, F, 2))
    assert lhs == rhs


@settings(max_examples=60, derandomize=True, deadline=None)
@given(exprs, exprs, exprs)
def test_bracket_leibniz(F, G, H):
    lhs = poisson_bracket(sym.mul(F, G), H, 2)
    rhs = sym.add(sym.mul(F, poisson_bracket(G, H, 2)), sym.mul(poisson_bracket(F, H, 2), G))
    rng = np.random.default_rng(0)
    for _ in range(10):
        b = _rand_binding(rng)
        a, c = sym.evaluate(lhs, b), sym.evaluate(rhs, b)
        assert abs(a - c) <= 1e-9 * (1 + abs(a))


@settings(max_examples=30, derandomize=True, deadline=None)
@given(exprs, exprs, exprs)
def test_bracket_jacobi_numeric(F, G, H):
    pb = lambda a, b: poisson_bracket(a, b, 2)
    terms = (pb(F, pb(G, H)), pb(G, pb(H, F)), pb(H, pb(F, G)))
    f = sym.compile_exprs(terms, NAMES)
    rng = np.random.default_rng(1)
    for _ in range(5):
        vals = f(*_rand_binding(rng).values())
        assert abs(sum(vals)) <= 1e-8 * (1 + max(abs(v) for v in vals))


# --------------------------------------------------------------------------
# criterion


def test_multiplicative_psi_x_is_symbolic_zero(fx):
    v = check_conservation(load_problem(fx("multiplicative.prob")), P("psi1*x1"))
    assert v.mode == "symbolic-zero" and v.residual_expr == sym.ZERO


def test_multiplicative_H_psi_x_is_symbolic_zero(fx):
    p = load_problem(fx("multiplicative.prob"))
    v = check_conservation(p, P("H*psi1*x1"))
    assert v.mode == "symbolic-zero"


def test_on_shell_only_quantity_needs_the_control_law(fx):
    p = load_problem(fx("multiplicative.prob"))
    # F = t dH/du has residual dH/du, zero only on the stationarity manifold
    v = check_conservation(p, P("t*(2*psi0*u1 + psi1*x1)"))
    assert v.residual_expr != sym.ZERO and v.on_shell_expr == sym.ZERO
    assert v.mode == "symbolic-zero"


def test_homogeneous_quantity_on_cubicpoly(fx):
    v = check_conservation(load_problem(fx("cubicpoly.prob")), P("psi1*x1 + psi2*x2"))
    assert v.is_zero


def test_position_is_violated(fx):
    v = check_conservation(load_problem(fx("quadratic.prob")), P("x1"))
    assert v.mode == "violated"
    assert abs(v.witness["value"]) > 1e-6
    # residual is u, and on the stationarity manifold u = psi1/2
    assert v.witness["value"] == pytest.approx(abs(v.witness["u1"]))


def test_hamiltonian_conserved_on_autonomous_problem(fx):
    v = check_conservation(load_problem(fx("harmonic.prob")), P("H"))
    assert v.is_zero


def test_nonautonomous_hamiltonian_violated():
    p = Problem.build(name="na", states=["x1"], controls=["u1"], L="u1^2 + t*x1", phi=["u1"], t0=0, t1=1)
    assert check_conservation(p, P("H")).mode == "violated"


def test_implicit_law_numeric_fallback():
    p = Problem.build(name="q", states=["x1"], controls=["u1"], L="u1^4 + u1^2", phi=["u1*x1"], t0=0, t1=1)
    v = check_conservation(p, P("t*(4*psi0*u1^3 + 2*psi0*u1 + psi1*x1)"))
    assert v.mode == "numeric-zero" and v.max_abs < 1e-9 and v.on_shell_expr is None


def test_unknown_variable_rejected(fx):
    with pytest.raises(InputError, match="y"):
        check_conservation(load_problem(fx("quadratic.prob")), P("y*x1"))


def test_residual_matches_criterion_by_hand(fx):
    p = load_problem(fx("quadratic.prob"))
    # F = psi1*t + 2*psi0*x1: dF/dt = psi1, {F,H} = 2*psi0*u1 (psi0 = -1)
    R = conservation_residual(p, P("psi1*t + 2*psi0*x1"))
    assert R == P("psi1 - 2*u1")


# --------------------------------------------------------------------------
# monitor


def test_monitor_examples(fx):
    p = load_problem(fx("quadratic.prob"))
    tr = solve(p).trajectory
    assert monitor(P("psi1*t + 2*psi0*x1"), tr).max <= 1e-12
    assert monitor(P("H"), tr).max <= 1e-7
    # clock: (b - a) / (1 + |a|)
    assert monitor(P("t"), tr).max == pytest.approx(1.0, abs=1e-15)


def test_monitor_clock_on_shifted_horizon():
    p = Problem.build(name="s", states=["x1"], controls=["u1"], L="u1^2", phi=["u1"], t0=2, t1=5,
                      x_t0=[0], x_t1=[1])
    d = monitor(P("t"), solve(p).trajectory)
    assert d.max == pytest.approx(3 / 3, abs=1e-14) and d.initial == 2.0


def test_monitor_reports_domain_error_time(fx):
    tr = solve(load_problem(fx("quadratic.prob"))).trajectory
    with pytest.raises(DomainError, match="t=0"):
        monitor(P("log(x1)"), tr)


@pytest.mark.parametrize("name,F", [
    ("multiplicative", "psi1*x1"),
    ("multiplicative", "H*psi1*x1"),
    ("cubicpoly", "psi1*x1 + psi2*x2"),
    ("harmonic", "H"),
    ("threestate", "psi3"),
    ("quadhomog", "H"),
])
def test_zero_verdicts_are_coherent_with_drift(fx, name, F):
    p = load_problem(fx(f"{name}.prob"))
    tr = solve(p).trajectory
    v = check_conservation(p, P(F), trajectory=tr)
    assert v.is_zero and v.drift.max <= 1e-6


@pytest.mark.parametrize("name", ("quadratic", "harmonic", "quartic_bc"))
def test_second_erdmann(fx, name):
    if name == "quartic_bc":
        p = Problem.build(name="q", states=["x1"], controls=["u1"], L="u1^4 + u1^2", phi=["u1"],
                          t0=0, t1=1, x_t0=[0.0], x_t1=[1.0])
    else:
        p = load_problem(fx(f"{name}.prob"))
    F = sym.add(p.L, sym.mul(-1, P("u1"), sym.differentiate(p.L, "u1")))
    assert monitor(F, solve(p).trajectory).max <= 1e-6
    assert hamiltonian(p).H != sym.ZERO
