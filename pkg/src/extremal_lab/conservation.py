"""Poisson bracket, the conservation-law criterion and drift monitoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symbolic as sym
from .config import DEFAULTS, seed as default_seed
from .errors import DomainError, InputError
from .extremal import evaluate_along
from .problem import ControlLawError, costate_names, eliminate_control, hamiltonian


def _state_names(states):
    if isinstance(states, int):
        return tuple(f"x{i + 1}" for i in range(states))
    return tuple(states)


def poisson_bracket(F, H, states):
    """{F,H} = sum_i dF/dx_i dH/dpsi_i - dF/dpsi_i dH/dx_i.

    ``states`` is the state dimension n (names x1..xn) or the state names.
    """
    xs = _state_names(states)
    ps = costate_names(len(xs))
    F, H = sym._coerce(F), sym._coerce(H)
    terms = []
    for x, q in zip(xs, ps):
        terms.append(sym.mul(sym.differentiate(F, x), sym.differentiate(H, q)))
        terms.append(sym.mul(sym.MINUS_ONE, sym.differentiate(F, q), sym.differentiate(H, x)))
    return sym.add(*terms)


@dataclass
class Drift:
    max: float
    mean: float
    initial: float
    values: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"max": self.max, "mean": self.mean, "initial": self.initial}


def monitor(F, traj):
    """Deviation of F from F(a) along ``traj``, relative to 1 + |F(a)|.

    The symbol H is bound to the trajectory's Hamiltonian column.
    """
    F = sym._coerce(F)
    if "H" in sym.free_vars(F) and traj.H is None:
        raise InputError("F uses H but the trajectory carries no Hamiltonian values")
    vals = evaluate_along(F, traj)
    f0 = float(vals[0])
    dev = np.abs(vals - f0) / (1.0 + abs(f0))
    return Drift(float(dev.max()), float(dev.mean()), f0, vals)


@dataclass
class ConservationVerdict:
    mode: str
    residual_expr: sym.Expr
    on_shell_expr: sym.Expr | None = None
    witness: dict | None = None
    max_abs: float = 0.0
    drift: Drift | None = None

    @property
    def is_zero(self):
        return self.mode != "violated"

    def to_dict(self):
        d = {
            "mode": self.mode,
            "residual": sym.render(self.residual_expr),
            "on_shell_residual": None if self.on_shell_expr is None else sym.render(self.on_shell_expr),
            "max_abs": self.max_abs,
            "witness": self.witness,
        }
        if self.drift is not None:
            d["drift"] = self.drift.to_dict()
        return d


def conservation_residual(p, F, h=None):
    """dF/dt + {F,H} with H replaced by the problem's Hamiltonian and psi0 by its value."""
    h = hamiltonian(p) if h is None else h
    F = sym._coerce(F)
    allowed = set(p.symbols) | {"H"}
    extra = sym.free_vars(F) - allowed
    if extra:
        raise InputError(f"F uses unknown variable '{sorted(extra)[0]}'")
    psi0 = sym.const(p.psi0)
    Hv = sym.substitute(h.H, {"psi0": psi0})
    Fv = sym.substitute(F, {"H": Hv, "psi0": psi0})
    return sym.add(sym.differentiate(Fv, "t"), poisson_bracket(Fv, Hv, p.states))


def check_conservation(p, F, trajectory=None, points=DEFAULTS["zero_points"], seed=None):
    """Decide whether F is constant along every extremal of ``p``.

    The criterion is tested modulo stationarity: first symbolically, then
    with the closed-form control substituted, then numerically at sampled
    (t, x, psi) with u solving dH/du = 0. Numeric zero means every sample is
    below 1e-9; a residual above 1e-6 is a violation. Samples in between are
    reported as numeric zero with their max_abs, so the user can judge.
    """
    h = hamiltonian(p)
    R = conservation_residual(p, F, h)
    drift = monitor(F, trajectory) if trajectory is not None else None
    if R == sym.ZERO:
        return ConservationVerdict("symbolic-zero", R, drift=drift)
    law = eliminate_control(h)
    on_shell = None
    if law.kind == "closed":
        on_shell = sym.substitute(R, dict(zip(p.controls, law.exprs)))
        if on_shell == sym.ZERO:
            return ConservationVerdict("symbolic-zero", R, on_shell, drift=drift)

    rng = np.random.default_rng(default_seed() if seed is None else seed)
    fn = sym.compile_expr(R, p.symbols)
    worst, witness = 0.0, None
    done, tries = 0, 0
    while done < points:
        tries += 1
        if tries > 10 * points:
            raise ControlLawError("could not resolve the control law at enough sample points")
        t = float(rng.uniform(p.t0, p.t1))
        x = rng.uniform(-2, 2, p.n)
        psi = rng.uniform(-2, 2, p.n)
        try:
            u = law(t, x, psi)
            val = abs(fn(t, *x, *u, law.psi0, *psi))
        except (ControlLawError, DomainError):
            continue
        done += 1
        if val > worst or witness is None:
            worst = val
            witness = {"t": t, **dict(zip(p.states, x.tolist())), **dict(zip(p.controls, np.asarray(u).tolist())),
                       "psi0": law.psi0, **dict(zip(p.costates, psi.tolist())), "value": float(val)}
    if worst > DEFAULTS["violation_threshold"]:
        return ConservationVerdict("violated", R, on_shell, witness, worst, drift)
    return ConservationVerdict("numeric-zero", R, on_shell, None, worst, drift)
