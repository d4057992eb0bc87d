"""Integration of the closed canonical system and single shooting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import symbolic as sym
from .config import DEFAULTS
from .errors import DomainError, InputError, NumericalError
from .problem import ControlLawError, NontrivialityError, costate_names, hamiltonian


@dataclass(eq=False)
class Trajectory:
    """A discretised Pontryagin quadruple (x, u, psi0, psi) on a time grid."""

    grid: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    psi0: float
    cost: float
    states: tuple
    controls: tuple
    H: np.ndarray = None

    def __post_init__(self):
        N = len(self.grid)
        if not (len(self.x) == len(self.psi) == len(self.u) == N):
            raise InputError("trajectory arrays must share the grid length")
        if N < 2 or np.any(np.diff(self.grid) <= 0):
            raise InputError("trajectory grid must be strictly increasing")

    @property
    def costates(self):
        return costate_names(len(self.states))

    @property
    def steps(self):
        return len(self.grid) - 1

    def columns(self):
        """Name -> per-node values for every symbol a function on the trajectory may use."""
        cols = {"t": self.grid, "psi0": np.full(len(self.grid), float(self.psi0))}
        for i, s in enumerate(self.states):
            cols[s] = self.x[:, i]
        for i, c in enumerate(self.costates):
            cols[c] = self.psi[:, i]
        for j, c in enumerate(self.controls):
            cols[c] = self.u[:, j]
        if self.H is not None:
            cols["H"] = self.H
        return cols

    def check_nontrivial(self, tol=DEFAULTS["nontrivial_tol"]):
        if self.psi0 == 0.0 and float(np.max(np.abs(self.psi), initial=0.0)) < tol:
            raise NontrivialityError("(psi0, psi) vanishes identically along the trajectory")

    def to_csv(self, path):
        header = ["t", *self.states, *self.costates, *self.controls, "H"]
        H = self.H if self.H is not None else np.full(len(self.grid), np.nan)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(len(self.grid)):
                row = [self.grid[k], *self.x[k], *self.psi[k], *self.u[k], H[k]]
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, problem, psi0=None):
        """Read a trajectory written by ``to_csv`` for ``problem``.

        psi0 is not a CSV column; it comes from the argument or the problem.
        The cost is recomputed by Simpson quadrature of L on the grid.
        """
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as err:
            raise InputError(f"cannot read {path}: {err}") from None
        if not rows:
            raise InputError(f"{path}: empty trajectory file")
        header = [h.strip() for h in rows[0]]
        want = ["t", *problem.states, *problem.costates, *problem.controls, "H"]
        missing = [w for w in want if w not in header]
        if missing:
            raise InputError(f"{path}: missing column '{missing[0]}'")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as err:
            raise InputError(f"{path}: {err}") from None
        col = {h: data[:, i] for i, h in enumerate(header)}
        stack = lambda names: np.column_stack([col[n] for n in names]) if names else np.zeros((len(data), 0))
        traj = cls(
            grid=col["t"],
            x=stack(problem.states),
            psi=stack(problem.costates),
            u=stack(problem.controls),
            psi0=float(problem.psi0 if psi0 is None else psi0),
            cost=0.0,
            states=problem.states,
            controls=problem.controls,
            H=col["H"],
        )
        traj.cost = path_cost(problem, traj)
        return traj


def path_cost(problem, traj):
    """Simpson quadrature of L over the trajectory's own grid."""
    from scipy.integrate import simpson

    vals = evaluate_along(problem.L, traj, problem.symbols)
    return float(simpson(vals, x=traj.grid))


def evaluate_along(e, traj, argnames=None):
    """Evaluate ``e`` at every node of ``traj``; domain errors report t."""
    cols = traj.columns()
    names = tuple(sorted(sym.free_vars(e))) if argnames is None else tuple(argnames)
    for nm in names:
        if nm not in cols:
            raise InputError(f"'{nm}' is not available on the trajectory")
    f = sym.compile_expr(e, names)
    out = np.empty(len(traj.grid))
    arrays = [cols[nm] for nm in names]
    for k in range(len(traj.grid)):
        try:
            out[k] = f(*(a[k] for a in arrays))
        except DomainError as err:
            raise DomainError(f"at t={traj.grid[k]}: {err}") from None
    return out


class _CanonicalSystem:
    def __init__(self, p, law):
        h = hamiltonian(p)
        self.p = p
        self.law = law
        self.psi0 = law.psi0
        rhs = tuple(h.dH_dpsi) + tuple(sym.mul(sym.MINUS_ONE, d) for d in h.dH_dx) + (p.L,)
        self.rhs = sym.compile_exprs(rhs, p.symbols)
        self.H = sym.compile_expr(h.H, p.symbols)
        self.n = p.n

    def control(self, t, y, guess):
        n = self.n
        return self.law(t, y[:n], y[n:2 * n], guess)

    def __call__(self, t, y, guess):
        n = self.n
        u = self.control(t, y, guess)
        try:
            d = self.rhs(t, *y[:n], *u, self.psi0, *y[n:2 * n])
        except DomainError as err:
            raise NumericalError(f"canonical system undefined at t={t}: {err}") from None
        return np.array(d), u


def integrate(p, law, x_a, psi_a, steps=DEFAULTS["steps"]):
    """Classical RK4 on the closed Hamiltonian system over a uniform grid.

    The running cost is carried as an extra component, so the cost is the
    RK4 (Simpson-consistent) quadrature of L over the same steps.
    """
    if steps < DEFAULTS["min_steps"]:
        raise InputError(f"steps must be >= {DEFAULTS['min_steps']}, got {steps}")
    n = p.n
    x_a = np.asarray(x_a, dtype=float).reshape(n)
    psi_a = np.asarray(psi_a, dtype=float).reshape(n)
    system = _CanonicalSystem(p, law)
    grid = np.linspace(p.t0, p.t1, steps + 1)
    h = (p.t1 - p.t0) / steps
    Y = np.empty((steps + 1, 2 * n + 1))
    U = np.empty((steps + 1, p.r))
    Y[0] = np.concatenate([x_a, psi_a, [0.0]])
    u_prev = system.control(grid[0], Y[0], None)
    U[0] = u_prev
    for k in range(steps):
        t, y = grid[k], Y[k]
        k1, ua = system(t, y, u_prev)
        k2, ub = system(t + h / 2, y + h / 2 * k1, ua)
        k3, uc = system(t + h / 2, y + h / 2 * k2, ub)
        k4, _ = system(t + h, y + h * k3, uc)
        y_next = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_next)):
            raise NumericalError(f"non-finite state (blow-up) at t={grid[k + 1]}")
        Y[k + 1] = y_next
        u_prev = system.control(grid[k + 1], y_next, u_prev)
        U[k + 1] = u_prev
    X, PSI = Y[:, :n], Y[:, n:2 * n]
    Hv = np.array([system.H(grid[k], *X[k], *U[k], law.psi0, *PSI[k]) for k in range(steps + 1)])
    traj = Trajectory(grid, X, PSI, U, law.psi0, float(Y[-1, -1]), p.states, p.controls, Hv)
    traj.check_nontrivial()
    return traj


@dataclass(eq=False)
class ShootingResult:
    trajectory: Trajectory
    psi_a: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def shoot(p, law, guess_psi_a=None, steps=DEFAULTS["steps"], tol=DEFAULTS["shoot_tol"],
          max_iter=DEFAULTS["shoot_max_iter"]):
    """Newton iteration on psi(a) so that x(b; psi(a)) hits the terminal data.

    Forward-difference Jacobian with step 1e-6*(1+|psi_a|); on residual
    increase the step is halved up to 8 times. A numerically rank-deficient
    Jacobian gets a minimum-norm step instead of a hard stop. Returns the best iterate with
    converged=False when ``max_iter`` is exhausted.
    """
    if not p.boundary_complete:
        raise InputError("boundary incomplete: shooting needs every x(t0) and x(t1) component")
    n = p.n
    x_a = np.array(p.x_t0, dtype=float)
    x_b = np.array(p.x_t1, dtype=float)
    psi = np.zeros(n) if guess_psi_a is None else np.asarray(guess_psi_a, dtype=float).reshape(n)

    def residual(q):
        tr = integrate(p, law, x_a, q, steps)
        return tr.x[-1] - x_b, tr

    def safe_residual(q):
        try:
            return residual(q)
        except (NumericalError, ControlLawError):
            return None, None

    F, traj = residual(psi)
    history = [float(np.max(np.abs(F)))]
    it = 0
    while np.max(np.abs(F)) > tol and it < max_iter:
        it += 1
        J = np.empty((n, n))
        for j in range(n):
            dq = np.zeros(n)
            dq[j] = DEFAULTS["shoot_fd_step"] * (1 + abs(psi[j]))
            Fj, _ = residual(psi + dq)
            J[:, j] = (Fj - F) / dq[j]
        if not np.all(np.isfinite(J)):
            raise NumericalError(f"singular shooting Jacobian at psi_a={psi.tolist()}")
        sv = np.linalg.svd(J, compute_uv=False)
        singular = sv[-1] <= DEFAULTS["shoot_rank_rtol"] * sv[0]
        if singular:
            # rank-deficient (some costate direction does not reach x(b)):
            # take the minimum-norm step and fail only if it gives no descent
            if sv[0] == 0.0:
                raise NumericalError(f"singular shooting Jacobian at psi_a={psi.tolist()}")
            step = np.linalg.lstsq(J, -F, rcond=DEFAULTS["shoot_rank_rtol"])[0]
        else:
            step = np.linalg.solve(J, -F)
        lam = 1.0
        norm = np.linalg.norm(F)
        accepted = False
        for _ in range(DEFAULTS["shoot_max_halvings"] + 1):
            F_new, tr_new = safe_residual(psi + lam * step)
            if F_new is not None and np.linalg.norm(F_new) < norm:
                accepted = True
                break
            lam /= 2
        if not accepted:
            if singular:
                raise NumericalError(f"singular shooting Jacobian at psi_a={psi.tolist()}")
            # no descent along the Newton direction: keep the best iterate
            break
        psi = psi + lam * step
        F, traj = F_new, tr_new
        history.append(float(np.max(np.abs(F))))
    converged = bool(np.max(np.abs(F)) <= tol)
    return ShootingResult(traj, psi, F, it, converged, history)


def solve(p, guess_psi_a=None, steps=DEFAULTS["steps"], tol=DEFAULTS["shoot_tol"],
          max_iter=DEFAULTS["shoot_max_iter"], psi0=None):
    """Hamiltonian, control law and shooting in one call."""
    from .problem import eliminate_control

    if psi0 is not None:
        p = p.with_psi0(psi0)
    law = eliminate_control(hamiltonian(p))
    return shoot(p, law, guess_psi_a, steps, tol, max_iter)
