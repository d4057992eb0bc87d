"""Transformation families, first-order quasi-invariance and Noether conserved quantities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import symbolic as sym
from .config import DEFAULTS, seed as default_seed
from .errors import DomainError, InputError, NumericalError
from .problem import _expr_field, _names, _read_sections, _unquote, hamiltonian

FIRST_ORDER_NOTE = "quasi-invariance verified to first order in s"


@dataclass(frozen=True, eq=False)
class TransformationFamily:
    """rho-parameter family (h_t, h_x, u_s, Phi) in (t, x, u, s1..s_rho).

    ``h_t`` None means time is not transformed; ``Phi`` None means Phi = 0.
    """

    params: tuple
    states: tuple
    controls: tuple
    h_x: tuple
    u_s: tuple
    h_t: sym.Expr | None = None
    Phi: sym.Expr | None = None

    @property
    def rho(self):
        return len(self.params)

    def at_zero(self):
        return {s: sym.ZERO for s in self.params}

    def validate(self):
        """Check the identity at s = 0 for every component."""
        names = set(self.params) | {"t"} | set(self.states) | set(self.controls)
        comps = [("h_t", self.h_t)] if self.h_t is not None else []
        comps += [(f"h_x[{x}]", e) for x, e in zip(self.states, self.h_x)]
        comps += [(f"u_s[{u}]", e) for u, e in zip(self.controls, self.u_s)]
        if self.Phi is not None:
            comps.append(("Phi", self.Phi))
        for label, e in comps:
            extra = sym.free_vars(e) - names
            if extra:
                raise InputError(f"{label} uses unknown variable '{sorted(extra)[0]}'")
        zero = self.at_zero()
        targets = []
        if self.h_t is not None:
            targets.append(("h_t", self.h_t, sym.var("t")))
        targets += [(f"h_x[{x}]", e, sym.var(x)) for x, e in zip(self.states, self.h_x)]
        targets += [(f"u_s[{u}]", e, sym.var(u)) for u, e in zip(self.controls, self.u_s)]
        for label, e, want in targets:
            diff = sym.add(sym.substitute(e, zero), sym.mul(sym.MINUS_ONE, want))
            if not sym.zero_test(diff).is_zero:
                raise InputError(
                    f"identity-at-zero violated by {label}: at s=0 it is {sym.render(sym.substitute(e, zero))}, "
                    f"expected {sym.render(want)}"
                )
        if self.Phi is not None:
            phi0 = sym.substitute(self.Phi, zero)
            if phi0.kind != "const":
                raise InputError(f"identity-at-zero violated by Phi: Phi at s=0 is {sym.render(phi0)}, not a constant")
            if phi0 != sym.ZERO:
                warnings.warn(f"Phi at s=0 is the nonzero constant {sym.render(phi0)}", stacklevel=2)
        return self


def parse_family(text, source="<string>", problem=None):
    """Read a family file. With ``problem`` given, omitted components default to the identity."""
    cp = _read_sections(text, source)
    if not cp.has_section("family"):
        raise InputError(f"{source}: missing [family] section")
    fam = cp["family"]
    params = _names(fam.get("params", ""))
    if not params:
        raise InputError(f"{source}: [family] needs params")
    h_t = _expr_field(fam["h_t"], "h_t") if "h_t" in fam else None
    hx = dict(cp["h_x"]) if cp.has_section("h_x") else {}
    us = dict(cp["u_s"]) if cp.has_section("u_s") else {}
    if problem is not None:
        states, controls = problem.states, problem.controls
    else:
        if not hx:
            raise InputError(f"{source}: [h_x] section required when no problem is given")
        states, controls = tuple(hx), tuple(us)
    for key in hx:
        if key not in states:
            raise InputError(f"{source}: [h_x] names unknown state '{key}'")
    for key in us:
        if key not in controls:
            raise InputError(f"{source}: [u_s] names unknown control '{key}'")
    h_x = tuple(_expr_field(hx[x], f"h_x[{x}]") if x in hx else sym.var(x) for x in states)
    u_s = tuple(_expr_field(us[u], f"u_s[{u}]") if u in us else sym.var(u) for u in controls)
    Phi = None
    if cp.has_section("phi"):
        sec = cp["phi"]
        if "Phi" not in sec:
            raise InputError(f"{source}: [phi] needs key Phi")
        Phi = _expr_field(sec["Phi"], "Phi")
    return TransformationFamily(params, tuple(states), tuple(controls), h_x, u_s, h_t, Phi).validate()


def load_family(path, problem=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    return parse_family(text, str(path), problem)


def dump_family(f):
    lines = ["[family]", f"params = {','.join(f.params)}"]
    if f.h_t is not None:
        lines.append(f'h_t = "{sym.render(f.h_t)}"')
    lines += ["", "[h_x]"] + [f'{x} = "{sym.render(e)}"' for x, e in zip(f.states, f.h_x)]
    lines += ["", "[u_s]"] + [f'{u} = "{sym.render(e)}"' for u, e in zip(f.controls, f.u_s)]
    if f.Phi is not None:
        lines += ["", "[phi]", f'Phi = "{sym.render(f.Phi)}"']
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# generators and identities


@dataclass(frozen=True)
class Generators:
    """s_k-derivatives at s = 0: T (time), X (states), U (controls), P (Phi)."""

    T: sym.Expr
    X: tuple
    U: tuple
    P: sym.Expr


def generators(f, k):
    s = f.params[k] if isinstance(k, int) else k
    if s not in f.params:
        raise InputError(f"unknown family parameter '{s}'")
    zero = f.at_zero()
    d0 = lambda e: sym.substitute(sym.differentiate(e, s), zero)
    T = d0(f.h_t) if f.h_t is not None else sym.ZERO
    P = d0(f.Phi) if f.Phi is not None else sym.ZERO
    return Generators(T, tuple(d0(e) for e in f.h_x), tuple(d0(e) for e in f.u_s), P)


def total_derivative(p, e):
    """D_t e = de/dt + phi . de/dx, with u an independent symbol."""
    terms = [sym.differentiate(e, "t")]
    terms += [sym.mul(phi, sym.differentiate(e, x)) for x, phi in zip(p.states, p.phi)]
    return sym.add(*terms)


def _directional(p, e, g):
    """e_t T + e_x . X + e_u . U."""
    terms = [sym.mul(sym.differentiate(e, "t"), g.T)]
    terms += [sym.mul(sym.differentiate(e, x), X) for x, X in zip(p.states, g.X)]
    terms += [sym.mul(sym.differentiate(e, u), U) for u, U in zip(p.controls, g.U)]
    return sym.add(*terms)


def invariance_residuals(p, g):
    """First-order residuals of the cost identity and the n dynamics identities.

    cost:      L_t T + L_x.X + L_u.U + L D_t T - D_t P
    dynamics:  D_t X_i - phi_i D_t T - (phi_i,t T + phi_i,x.X + phi_i,u.U)
    """
    DT = total_derivative(p, g.T)
    lag = sym.add(_directional(p, p.L, g), sym.mul(p.L, DT), sym.mul(sym.MINUS_ONE, total_derivative(p, g.P)))
    dyn = tuple(
        sym.add(total_derivative(p, X), sym.mul(sym.MINUS_ONE, phi, DT), sym.mul(sym.MINUS_ONE, _directional(p, phi, g)))
        for X, phi in zip(g.X, p.phi)
    )
    return lag, dyn


def finite_residuals(p, f, s):
    """The two defining identities at finite s (all other parameters 0), as Exprs in (t, x, u, s)."""
    others = {q: sym.ZERO for q in f.params if q != s}
    sub = lambda e: sym.substitute(e, others)
    h_t = sub(f.h_t) if f.h_t is not None else sym.var("t")
    h_x = tuple(sub(e) for e in f.h_x)
    u_s = tuple(sub(e) for e in f.u_s)
    Phi = sub(f.Phi) if f.Phi is not None else sym.ZERO
    image = {"t": h_t, **dict(zip(p.states, h_x)), **dict(zip(p.controls, u_s))}
    Dh_t = total_derivative(p, h_t)
    lag = sym.add(
        sym.mul(sym.substitute(p.L, image), Dh_t),
        sym.mul(sym.MINUS_ONE, p.L),
        sym.mul(sym.MINUS_ONE, total_derivative(p, Phi)),
    )
    dyn = tuple(
        sym.add(total_derivative(p, hx), sym.mul(sym.MINUS_ONE, sym.substitute(phi, image), Dh_t))
        for hx, phi in zip(h_x, p.phi)
    )
    return lag, dyn


@dataclass
class IdentityVerdict:
    mode: str
    residuals: tuple
    max_abs: float = 0.0
    witness: dict | None = None
    fd_max: float | None = None

    @property
    def passed(self):
        return self.mode != "violated"

    def to_dict(self):
        d = {"mode": self.mode, "residuals": [sym.render(e) for e in self.residuals], "max_abs": self.max_abs}
        if self.witness is not None:
            d["witness"] = self.witness
        if self.fd_max is not None:
            d["fd_max"] = self.fd_max
        return d


@dataclass
class ParameterReport:
    param: str
    lagrangian: IdentityVerdict
    dynamics: IdentityVerdict
    conserved: sym.Expr | None

    def to_dict(self):
        return {
            "param": self.param,
            "lagrangian_identity": self.lagrangian.to_dict(),
            "dynamics_identity": self.dynamics.to_dict(),
            "conserved_quantity": None if self.conserved is None else sym.render(self.conserved),
        }


@dataclass
class InvarianceReport:
    parameters: list
    flags: list = field(default_factory=list)
    note: str = FIRST_ORDER_NOTE

    @property
    def invariant(self):
        return all(r.lagrangian.passed and r.dynamics.passed for r in self.parameters)

    def to_dict(self):
        return {
            "note": self.note,
            "invariant_to_first_order": self.invariant,
            "flags": list(self.flags),
            "parameters": [r.to_dict() for r in self.parameters],
        }


def _sampler(p, rng):
    def draw():
        b = {"t": float(rng.uniform(p.t0, p.t1))}
        for nm in p.states + p.controls:
            b[nm] = float(rng.uniform(-2, 2))
        return b

    return draw


def _verdict(p, residuals, rng):
    if all(e == sym.ZERO for e in residuals):
        return IdentityVerdict("symbolic-zero", residuals)
    mode, worst, witness = "symbolic-zero", 0.0, None
    for e in residuals:
        z = sym.zero_test(e, sampler=_sampler(p, rng), points=DEFAULTS["zero_points"], tol=DEFAULTS["zero_tol"])
        if z.mode == "nonzero":
            if mode != "violated" or z.max_abs > worst:
                witness = {**z.witness, "value": float(z.value)}
            mode = "violated"
        elif z.mode == "numeric-zero" and mode == "symbolic-zero":
            mode = "numeric-zero"
        worst = max(worst, z.max_abs)
    return IdentityVerdict(mode, residuals, worst, witness)


def _fd_check(p, f, s, traj, verdicts):
    """Central differences in s along ``traj`` of the finite-s identities."""
    eps = DEFAULTS["noether_fd_step"]
    lag, dyn = finite_residuals(p, f, s)
    names = ("t",) + p.states + p.controls + (s,)
    cols = traj.columns()
    for verdict, exprs in zip(verdicts, ((lag,), dyn)):
        if verdict.mode != "numeric-zero":
            continue
        fn = sym.compile_exprs(exprs, names)
        worst = 0.0
        for k in range(len(traj.grid)):
            base = [cols[nm][k] for nm in names[:-1]]
            try:
                hi = np.array(fn(*base, eps))
                lo = np.array(fn(*base, -eps))
                mid = np.array(fn(*base, 0.0))
            except DomainError:
                continue
            d = np.abs(hi - lo) / (2 * eps)
            scale = 1.0 + np.abs(hi) + np.abs(lo) + np.abs(mid)
            worst = max(worst, float(np.max(d / scale)))
        verdict.fd_max = worst
        if worst > DEFAULTS["noether_fd_rtol"]:
            verdict.mode = "violated"


def check_quasi_invariance(p, f, trajectory=None, seed=None, steps=DEFAULTS["steps"]):
    """Per-parameter first-order check of the cost and dynamics identities.

    A verdict that is only numerically zero is confirmed by central finite
    differences in s along an extremal: ``trajectory`` if given, else one
    shot from the problem's boundary data.
    """
    if f.states != p.states or f.controls != p.controls:
        raise InputError("family and problem disagree on state or control names")
    rng = np.random.default_rng(default_seed() if seed is None else seed)
    flags = []
    if f.h_t is not None and sym.depends_on(f.h_t, p.states + p.controls):
        flags.append("h_t depends on state or control; boundary term is ambiguous, numeric verification skipped")
    reports = []
    for k, s in enumerate(f.params):
        g = generators(f, k)
        lag, dyn = invariance_residuals(p, g)
        vl = _verdict(p, (lag,), rng)
        vd = _verdict(p, dyn, rng)
        if "numeric-zero" in (vl.mode, vd.mode) and not flags:
            if trajectory is None:
                trajectory = _compute_extremal(p, steps)
            _fd_check(p, f, s, trajectory, (vl, vd))
        C = conserved_quantity(p, f, k) if vl.passed and vd.passed else None
        reports.append(ParameterReport(s, vl, vd, C))
    return InvarianceReport(reports, flags)


def _compute_extremal(p, steps):
    if not p.boundary_complete:
        raise InputError("missing extremal: numeric verification needs a trajectory or complete boundary data")
    from .extremal import solve

    res = solve(p, steps=steps)
    if not res.converged:
        raise NumericalError("missing extremal: shooting did not converge")
    return res.trajectory


def conserved_quantity(p, f, k, symbolic_h=True):
    """psi . X + psi0 P - H T for parameter ``k`` (index or name).

    With ``symbolic_h`` the Hamiltonian stays as the symbol H; otherwise it is
    expanded to psi0 L + psi . phi.
    """
    g = generators(f, k)
    Hs = sym.var("H") if symbolic_h else hamiltonian(p).H
    terms = [sym.mul(sym.var(q), X) for q, X in zip(p.costates, g.X)]
    terms.append(sym.mul(sym.var("psi0"), g.P))
    terms.append(sym.mul(sym.MINUS_ONE, Hs, g.T))
    return sym.add(*terms)
