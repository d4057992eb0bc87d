"""Autonomous images of a problem and the extremal maps between problem and image.

Both images append the clock as a state ``t_state`` and rename states to
z1..zn. The Gamkrelidze image rescales time by a positive factor Upsilon and
keeps the control names; the tau image adds the clock-rate control v and
renames controls to w1..wr. Image costates are (p_t, p_z) = (psi1, psi2..).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson, trapezoid

from . import symbolic as sym
from .box import default_box
from .config import DEFAULTS, seed as default_seed
from .errors import DomainError, InputError, NumericalError
from .extremal import Trajectory, evaluate_along, path_cost
from .problem import Problem, hamiltonian

CLOCK = "t_state"
RATE = "v"


class ZeroLevelError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class TransformedProblem:
    kind: str
    original: Problem
    image: Problem
    upsilon: sym.Expr | None = None
    link: dict = field(default_factory=dict)
    free_final_time: bool = False

    @property
    def rate(self):
        """The image's dt/dtau as an Expr over the image variables."""
        return self.image.phi[0]

    def to_dict(self):
        return {
            "kind": self.kind,
            "upsilon": None if self.upsilon is None else sym.render(self.upsilon),
            "free_final_time": self.free_final_time,
            "image": {
                "states": list(self.image.states),
                "controls": list(self.image.controls),
                "L": sym.render(self.image.L),
                "dynamics": {s: sym.render(e) for s, e in zip(self.image.states, self.image.phi)},
            },
            "link": dict(self.link),
        }


def _image_names(p, new_controls):
    z = tuple(f"z{i + 1}" for i in range(p.n))
    taken = set(p.states) | set(p.controls)
    if CLOCK in taken or (RATE in taken and new_controls):
        raise InputError(f"names '{CLOCK}' and '{RATE}' are reserved for transform images")
    return (CLOCK,) + z


def _link(p, image, rate_label):
    link = {CLOCK: "t", image.costates[0]: "p_t = -H"}
    for x, z, q, pq in zip(p.states, image.states[1:], p.costates, image.costates[1:]):
        link[z] = x
        link[pq] = q
    if rate_label:
        link[RATE] = rate_label
    for u, w in zip(p.controls, image.controls[-p.r:] if p.r else ()):
        link[w] = u
    link["p0"] = "psi0"
    return link


def _boundary(p):
    return (p.t0,) + tuple(p.x_t0), (p.t1,) + tuple(p.x_t1)


def gamkrelidze(p, upsilon, box=None, samples=DEFAULTS["positivity_samples"], seed=None):
    """Image with L_img = Y L and dynamics (Y, Y phi), Y = Upsilon(t, x, u) > 0.

    Positivity of Upsilon is asserted on ``samples`` Halton points of ``box``
    (default: the problem's default box). The final time of the image is free;
    the image horizon records the nominal [a, b].
    """
    Y = sym._coerce(upsilon)
    extra = sym.free_vars(Y) - ({"t"} | set(p.states) | set(p.controls))
    if extra:
        raise InputError(f"Upsilon uses unknown variable '{sorted(extra)[0]}'")
    box = default_box(p) if box is None else box
    fn = sym.compile_expr(Y, box.names)
    for point in box.sample(samples, seed=default_seed() if seed is None else seed):
        where = dict(zip(box.names, point.tolist()))
        try:
            val = fn(*point)
        except DomainError as err:
            raise InputError(f"Upsilon is undefined at {where}: {err}") from None
        if not val > 0:
            raise InputError(f"Upsilon must be strictly positive; Upsilon = {val} at {where}")
    states = _image_names(p, False)
    ren = {"t": sym.var(CLOCK), **{x: sym.var(z) for x, z in zip(p.states, states[1:])}}
    Yi = sym.substitute(Y, ren)
    L = sym.mul(Yi, sym.substitute(p.L, ren))
    phi = (Yi,) + tuple(sym.mul(Yi, sym.substitute(f, ren)) for f in p.phi)
    x0, x1 = _boundary(p)
    image = Problem(f"{p.name}_gam", states, p.controls, L, phi, p.t0, p.t1, x0, x1, p.psi0)
    return TransformedProblem("gamkrelidze", p, image, Y, _link(p, image, None), free_final_time=True)


def tau_transform(p):
    """Image with controls (v, w), L_img = L v and dynamics (v, phi v)."""
    states = _image_names(p, True)
    controls = (RATE,) + tuple(f"w{j + 1}" for j in range(p.r))
    ren = {"t": sym.var(CLOCK)}
    ren.update({x: sym.var(z) for x, z in zip(p.states, states[1:])})
    ren.update({u: sym.var(w) for u, w in zip(p.controls, controls[1:])})
    v = sym.var(RATE)
    L = sym.mul(sym.substitute(p.L, ren), v)
    phi = (v,) + tuple(sym.mul(sym.substitute(f, ren), v) for f in p.phi)
    x0, x1 = _boundary(p)
    image = Problem(f"{p.name}_tau", states, controls, L, phi, p.t0, p.t1, x0, x1, p.psi0)
    return TransformedProblem("tau", p, image, None, _link(p, image, "dt/dtau"))


# --------------------------------------------------------------------------
# extremal maps


def _clock_from_rate(a, b, v_profile, n_fine):
    """t(tau) on a uniform tau grid over [a, b] from a positive rate profile."""
    tau = np.linspace(a, b, n_fine)
    if v_profile is None:
        v = np.ones(n_fine)
    elif callable(v_profile):
        v = np.array([float(v_profile(s)) for s in tau])
    else:
        v = np.asarray(v_profile, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise InputError("v profile must be a callable or a 1-d array on a uniform tau grid")
        tau = np.linspace(a, b, len(v))
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        k = int(np.argmin(np.where(np.isfinite(v), v, -np.inf)))
        raise InputError(f"v profile must be positive; v = {v[k]} at tau = {tau[k]}")
    total = float(trapezoid(v, tau))
    if abs(total - (b - a)) > DEFAULTS["v_integral_tol"]:
        if abs(total - (b - a)) <= DEFAULTS["v_normalize_band"] * (b - a):
            v = v * ((b - a) / total)
        else:
            raise InputError(f"integral of v is {total}, expected b - a = {b - a}")
    t = a + cumulative_trapezoid(v, tau, initial=0.0)
    t[-1] = b
    return tau, t, v


def _check_monotone(values, label):
    d = np.diff(values)
    bad = np.nonzero(~(d > 0))[0]
    if len(bad):
        raise NumericalError(f"nonmonotone {label} at node {int(bad[0]) + 1}")


def lift_extremal(tp, e, v_profile=None):
    """Map an extremal of the original problem to a zero-level extremal of the image.

    The image is sampled at the preimages tau_k of the original nodes t_k, so
    t_state, z, controls and p_z reproduce the original samples exactly and
    p_t = -H. For tau, ``v_profile`` is None (v = 1), a callable of tau, or an
    array on a uniform tau grid over [a, b]; its integral must equal b - a
    (normalised when within 1%). For gamkrelidze, tau(t) accumulates 1/Upsilon
    by the trapezoid rule and ``v_profile`` is ignored.
    """
    p, img = tp.original, tp.image
    t = np.asarray(e.grid, dtype=float)
    H = evaluate_along(hamiltonian(p).H, e, p.symbols)
    if tp.kind == "tau":
        tau_f, t_f, v_f = _clock_from_rate(p.t0, p.t1, v_profile, 4 * (len(t) - 1) + 1)
        _check_monotone(t_f, "accumulated time")
        tau = np.interp(t, t_f, tau_f)
        tau[0], tau[-1] = tau_f[0], tau_f[-1]
        rate = np.interp(tau, tau_f, v_f)
        controls = np.column_stack([rate, e.u])
    else:
        Y = evaluate_along(tp.upsilon, e, p.symbols)
        if np.any(~(Y > 0)):
            k = int(np.argmin(Y))
            raise InputError(f"Upsilon must be positive along the extremal; {Y[k]} at t = {t[k]}")
        tau = p.t0 + cumulative_trapezoid(1.0 / Y, t, initial=0.0)
        rate = Y
        controls = e.u
    _check_monotone(tau, "image time")
    x = np.column_stack([t, e.x])
    psi = np.column_stack([-H, e.psi])
    traj = Trajectory(tau, x, psi, controls, e.psi0, 0.0, img.states, img.controls)
    traj.H = evaluate_along(hamiltonian(img).H, traj, img.symbols)
    traj.cost = image_cost(tp, traj, rate)
    return traj


def image_cost(tp, traj, rate=None):
    """Image functional: integral of L_img over tau, computed in the clock variable."""
    img = tp.image
    L = evaluate_along(img.L, traj, img.symbols)
    if rate is None:
        rate = evaluate_along(tp.rate, traj, img.symbols)
    return float(simpson(L / rate, x=traj.x[:, 0]))


def zero_level(tp, e_img):
    """max |H_img| over the nodes of an image trajectory."""
    Himg = evaluate_along(hamiltonian(tp.image).H, e_img, tp.image.symbols)
    return float(np.max(np.abs(Himg)))


def project_extremal(tp, e_img, steps=None, tol=DEFAULTS["zero_level_tol"]):
    """Map a zero-level image extremal back to the original problem.

    t(tau) is inverted by monotone linear interpolation onto a uniform grid
    over [a, b] with ``steps`` intervals (default: as many as the image).
    """
    p, img = tp.original, tp.image
    level = zero_level(tp, e_img)
    if level > tol:
        raise ZeroLevelError(f"zero-level violation: max |H_img| = {level:.6g} > {tol:g}")
    tau = np.asarray(e_img.grid, dtype=float)
    clock = e_img.x[:, 0]
    _check_monotone(clock, "t_state")
    if abs(clock[0] - p.t0) > 1e-9 or abs(clock[-1] - p.t1) > 1e-9:
        raise InputError(f"image clock runs over [{clock[0]}, {clock[-1]}], expected [{p.t0}, {p.t1}]")
    N = e_img.steps if steps is None else int(steps)
    grid = np.linspace(p.t0, p.t1, N + 1)
    tau_of_t = np.interp(grid, clock, tau)
    at = lambda cols: np.column_stack([np.interp(tau_of_t, tau, c) for c in cols.T]) if cols.shape[1] else np.zeros((N + 1, 0))
    x = at(e_img.x[:, 1:])
    psi = at(e_img.psi[:, 1:])
    u = at(e_img.u[:, 1:] if tp.kind == "tau" else e_img.u)
    traj = Trajectory(grid, x, psi, u, e_img.psi0, 0.0, p.states, p.controls)
    traj.H = evaluate_along(hamiltonian(p).H, traj, p.symbols)
    traj.cost = path_cost(p, traj)
    return traj


def max_deviation(a, b):
    """Max-norm distance between two trajectories on the same grid over (x, u, psi)."""
    if len(a.grid) != len(b.grid) or np.max(np.abs(a.grid - b.grid)) > 1e-12:
        raise InputError("trajectories live on different grids")
    return float(max(np.max(np.abs(a.x - b.x)), np.max(np.abs(a.psi - b.psi), initial=0.0),
                     np.max(np.abs(a.u - b.u), initial=0.0)))
