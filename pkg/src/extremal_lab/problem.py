"""Optimal control problems in Lagrange form, their Pontryagin Hamiltonian,
and elimination of the control through stationarity."""

from __future__ import annotations

import configparser
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import symbolic as sym
from .config import DEFAULTS
from .errors import DomainError, InputError, NumericalError
from .symbolic import Expr

RESERVED = {"t", "H", "psi0"}
_COSTATE = re.compile(r"^psi\d+$")
_VECTOR = re.compile(r"^([a-zA-Z][a-zA-Z0-9_]*)\[(\d+)\]$")


def costate_names(n):
    return tuple(f"psi{i}" for i in range(1, n + 1))


def _as_expr(e):
    if isinstance(e, Expr):
        return e
    if isinstance(e, str):
        return sym.parse(e)
    return sym.const(e)


@dataclass(frozen=True, eq=False)
class Problem:
    """Problem (P): minimise the integral of L subject to x' = phi(t, x, u).

    Boundary vectors hold ``None`` for unspecified components.
    """

    name: str
    states: tuple
    controls: tuple
    L: Expr
    phi: tuple
    t0: float
    t1: float
    x_t0: tuple = None
    x_t1: tuple = None
    psi0: float = -1.0

    def __post_init__(self):
        n = len(self.states)
        if self.x_t0 is None:
            object.__setattr__(self, "x_t0", (None,) * n)
        if self.x_t1 is None:
            object.__setattr__(self, "x_t1", (None,) * n)
        self._validate()

    def _validate(self):
        n = self.n
        if not self.t0 < self.t1:
            raise InputError(f"horizon requires t0 < t1, got [{self.t0}, {self.t1}]")
        if len(self.phi) != n:
            raise InputError(f"dimension mismatch: {n} states but {len(self.phi)} dynamics entries")
        if len(self.x_t0) != n or len(self.x_t1) != n:
            raise InputError("dimension mismatch in boundary data")
        names = list(self.states) + list(self.controls)
        if len(set(names)) != len(names):
            raise InputError(f"duplicate state/control names in {names}")
        for nm in names:
            if nm in RESERVED or _COSTATE.match(nm) or nm in sym.FUNCTIONS:
                raise InputError(f"'{nm}' is reserved and cannot name a state or control")
        allowed = {"t"} | set(names)
        for label, e in [("L", self.L)] + [(f"dynamics of {s}", f) for s, f in zip(self.states, self.phi)]:
            unknown = sym.free_vars(e) - allowed
            if unknown:
                raise InputError(f"unknown variable '{sorted(unknown)[0]}' in {label}")
        if self.psi0 not in (0.0, -1.0):
            raise InputError(f"psi0 must be 0 or -1, got {self.psi0}")

    @classmethod
    def build(cls, name, states, controls, L, phi, t0=0.0, t1=1.0, x_t0=None, x_t1=None, psi0=-1.0):
        """Convenience constructor accepting expression strings."""
        return cls(
            name=name,
            states=tuple(states),
            controls=tuple(controls),
            L=_as_expr(L),
            phi=tuple(_as_expr(f) for f in phi),
            t0=float(t0),
            t1=float(t1),
            x_t0=None if x_t0 is None else tuple(None if v is None else float(v) for v in x_t0),
            x_t1=None if x_t1 is None else tuple(None if v is None else float(v) for v in x_t1),
            psi0=float(psi0),
        )

    @property
    def n(self):
        return len(self.states)

    @property
    def r(self):
        return len(self.controls)

    @property
    def costates(self):
        return costate_names(self.n)

    @property
    def symbols(self):
        """Argument order used for every compiled function of the problem."""
        return ("t",) + tuple(self.states) + tuple(self.controls) + ("psi0",) + self.costates

    @property
    def is_autonomous(self):
        return not any(sym.depends_on(e, "t") for e in (self.L,) + self.phi)

    @property
    def is_basic(self):
        """True for x' = u (the basic problem of the calculus of variations)."""
        return self.n == self.r and all(f == sym.var(u) for f, u in zip(self.phi, self.controls))

    @property
    def boundary_complete(self):
        return None not in self.x_t0 and None not in self.x_t1

    def with_psi0(self, psi0):
        return Problem(self.name, self.states, self.controls, self.L, self.phi, self.t0, self.t1,
                       self.x_t0, self.x_t1, float(psi0))


# --------------------------------------------------------------------------
# problem files


def _read_sections(text, source):
    cp = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        delimiters=("=",),
        strict=True,
    )
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as err:
        raise InputError(f"malformed file {source}: {err}") from None
    return cp


def _unquote(v):
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _names(spec):
    out = []
    for item in (s.strip() for s in _unquote(spec).split(",")):
        if not item:
            continue
        m = _VECTOR.match(item)
        if m:
            out.extend(f"{m.group(1)}{i}" for i in range(1, int(m.group(2)) + 1))
        else:
            out.append(item)
    return tuple(out)


def _expr_field(value, where):
    try:
        return sym.parse(_unquote(value))
    except InputError as err:
        raise InputError(f"{where}: {err}") from None


def _float_field(value, where):
    try:
        return float(_unquote(value))
    except ValueError:
        raise InputError(f"{where}: expected a real number, got {value!r}") from None


def parse_problem(text, source="<string>"):
    cp = _read_sections(text, source)
    for sec in ("problem", "lagrangian", "dynamics"):
        if not cp.has_section(sec):
            raise InputError(f"{source}: missing [{sec}] section")
    meta = cp["problem"]
    states = _names(meta.get("states", ""))
    controls = _names(meta.get("controls", ""))
    if not states:
        raise InputError(f"{source}: no states declared")
    for key, names in (("n", states), ("r", controls)):
        if key in meta and int(_unquote(meta[key])) != len(names):
            raise InputError(f"{source}: dimension mismatch: {key}={meta[key]} but {len(names)} names declared")
    if "L" not in cp["lagrangian"]:
        raise InputError(f"{source}: [lagrangian] needs key L")
    L = _expr_field(cp["lagrangian"]["L"], "L")
    dyn = cp["dynamics"]
    extra = set(dyn) - set(states)
    if extra:
        raise InputError(f"{source}: dynamics given for undeclared state '{sorted(extra)[0]}'")
    if len(dyn) != len(states):
        raise InputError(f"{source}: dimension mismatch: {len(states)} states but {len(dyn)} dynamics entries")
    phi = tuple(_expr_field(dyn[s], f"dynamics of {s}") for s in states)
    x_t0 = [None] * len(states)
    x_t1 = [None] * len(states)
    if cp.has_section("boundary"):
        for key, val in cp["boundary"].items():
            m = re.match(r"^(.+)_t([01])$", key)
            if not m or m.group(1) not in states:
                raise InputError(f"{source}: unknown boundary key '{key}'")
            target = x_t0 if m.group(2) == "0" else x_t1
            target[states.index(m.group(1))] = _float_field(val, key)
    return Problem(
        name=_unquote(meta.get("name", Path(str(source)).stem)),
        states=states,
        controls=controls,
        L=L,
        phi=phi,
        t0=_float_field(meta.get("t0", "0"), "t0"),
        t1=_float_field(meta.get("t1", "1"), "t1"),
        x_t0=tuple(x_t0),
        x_t1=tuple(x_t1),
        psi0=_float_field(meta.get("psi0", "-1"), "psi0"),
    )


def load_problem(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    return parse_problem(text, path)


def _num(v):
    return sym.render(sym.const(v))


def dump_problem(p, comments=()):
    """Serialise to the problem-file format."""
    lines = [f"# {c}" for c in comments]
    lines += [
        "[problem]",
        f"name = {p.name}",
        f"t0 = {_num(p.t0)}",
        f"t1 = {_num(p.t1)}",
        f"states = {', '.join(p.states)}",
        f"controls = {', '.join(p.controls)}",
        f"psi0 = {_num(p.psi0)}",
        "",
        "[lagrangian]",
        f'L = "{sym.render(p.L)}"',
        "",
        "[dynamics]",
    ]
    lines += [f'{s} = "{sym.render(f)}"' for s, f in zip(p.states, p.phi)]
    bnd = [(f"{s}_t0", v) for s, v in zip(p.states, p.x_t0) if v is not None]
    bnd += [(f"{s}_t1", v) for s, v in zip(p.states, p.x_t1) if v is not None]
    if bnd:
        lines += ["", "[boundary]"] + [f"{k} = {v!r}" for k, v in bnd]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Hamiltonian


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    problem: Problem
    H: Expr
    dH_dpsi: tuple
    dH_dx: tuple
    dH_du: tuple


def hamiltonian(p):
    """H = psi0*L + sum_i psi_i*phi_i with all gradient blocks."""
    H = sym.add(
        sym.mul(sym.var("psi0"), p.L),
        *(sym.mul(sym.var(c), f) for c, f in zip(p.costates, p.phi)),
    )
    return Hamiltonian(
        problem=p,
        H=H,
        dH_dpsi=sym.gradient(H, p.costates),
        dH_dx=sym.gradient(H, p.states),
        dH_du=sym.gradient(H, p.controls),
    )


# --------------------------------------------------------------------------
# control elimination


class ControlLawError(NumericalError):
    pass


class ControlUndetermined(NumericalError):
    pass


class NontrivialityError(NumericalError):
    pass


@dataclass(eq=False)
class ControlLaw:
    """u*(t, x, psi) from dH/du = 0 on a fixed psi0 branch.

    ``kind`` is 'closed' (``exprs`` solves stationarity symbolically) or
    'implicit' (Newton on ``stationarity`` with ``jacobian``, warm-started).
    """

    problem: Problem
    kind: str
    psi0: float
    stationarity: tuple
    jacobian: tuple
    exprs: tuple | None = None
    max_iter: int = DEFAULTS["newton_max_iter"]
    tol: float = DEFAULTS["newton_tol"]
    positive_curvature: list = field(default_factory=list)
    zero_check: str = ""

    def __post_init__(self):
        p = self.problem
        args = ("t",) + p.states + p.costates
        if self.kind == "closed":
            self._closed = sym.compile_exprs(self.exprs, args)
        else:
            self._G = sym.compile_exprs(self.stationarity, p.symbols)
            self._J = sym.compile_exprs([e for row in self.jacobian for e in row], p.symbols)

    @property
    def stationary(self):
        return not self.positive_curvature

    def __call__(self, t, x, psi, guess=None):
        if self.kind == "closed":
            try:
                return np.array(self._closed(t, *x, *psi))
            except DomainError as err:
                raise ControlLawError(f"control law undefined at t={t}: {err}") from None
        return self._newton(t, x, psi, guess)

    def _newton(self, t, x, psi, guess):
        r = self.problem.r
        u = np.zeros(r) if guess is None else np.array(guess, dtype=float)
        for _ in range(self.max_iter):
            try:
                G = np.array(self._G(t, *x, *u, self.psi0, *psi))
                J = np.array(self._J(t, *x, *u, self.psi0, *psi)).reshape(r, r)
            except DomainError as err:
                raise ControlLawError(f"stationarity undefined at t={t}: {err}") from None
            if np.max(np.abs(G)) <= self.tol:
                return u
            try:
                step = np.linalg.solve(J, G)
            except np.linalg.LinAlgError:
                raise ControlLawError(f"singular d2H/du2 in Newton solve at t={t}") from None
            u = u - step
            if not np.all(np.isfinite(u)):
                break
            if np.max(np.abs(step)) <= 4e-16 * (1 + np.max(np.abs(u))) and np.max(np.abs(G)) <= 1e-9:
                return u
        raise ControlLawError(f"Newton solve for the control diverged at t={t}")


def _sample_state(p, rng):
    b = {"t": float(rng.uniform(p.t0, p.t1))}
    for s in p.states:
        b[s] = float(rng.uniform(-2, 2))
    for c in p.costates:
        b[c] = float(rng.uniform(-2, 2))
    return b


def eliminate_control(h, psi0=None, seed=0):
    """Solve the stationarity form of the maximality condition for u.

    Closed form when dH/du is affine in u (Cramer's rule on the symbolic
    coefficient matrix); otherwise an implicit Newton law. The sampled
    Hessian d2H/du2 must be negative semidefinite; positive-curvature samples
    are recorded on the law.
    """
    p = h.problem
    psi0 = p.psi0 if psi0 is None else float(psi0)
    if psi0 not in (0.0, -1.0):
        raise InputError(f"psi0 must be 0 or -1, got {psi0}")
    if psi0 == 0.0 and p.is_basic:
        warnings.warn("the basic problem has no abnormal extremals (psi = -psi0 dL/du)", stacklevel=2)
    sub0 = {"psi0": sym.const(psi0)}
    G = tuple(sym.substitute(g, sub0) for g in h.dH_du)
    A = tuple(tuple(sym.differentiate(g, u) for u in p.controls) for g in G)
    hess = A
    affine = all(not sym.depends_on(a, p.controls) for row in A for a in row)
    rng = np.random.default_rng(seed)

    if all(g == sym.ZERO for g in G):
        # H does not involve u at all: every control maximises, take u = 0
        zeros = tuple(sym.ZERO for _ in p.controls)
        return ControlLaw(p, "closed", psi0, G, A, zeros, zero_check="symbolic-zero")
    if affine and all(a == sym.ZERO for row in A for a in row):
        _undetermined(p, G, rng)

    law = None
    if affine:
        det = sym.symbolic_matrix_det([list(row) for row in A])
        if det == sym.ZERO:
            raise ControlLawError(
                f"singular stationarity system: coefficient determinant of d2H/du2 = {sym.render(det)} vanishes identically"
            )
        zero_u = {u: sym.ZERO for u in p.controls}
        rhs = [sym.mul(sym.MINUS_ONE, sym.substitute(g, zero_u)) for g in G]
        inv_det = sym.power(det, sym.MINUS_ONE)
        exprs = []
        for j in range(p.r):
            Aj = [[rhs[i] if k == j else A[i][k] for k in range(p.r)] for i in range(p.r)]
            exprs.append(sym.mul(sym.symbolic_matrix_det(Aj), inv_det))
        exprs = tuple(exprs)
        residual = [sym.substitute(g, dict(zip(p.controls, exprs))) for g in G]
        verdicts = [sym.zero_test(e, sampler=_law_sampler(p, rng)) for e in residual]
        if not all(v.is_zero for v in verdicts):
            raise ControlLawError("closed-form control law fails to satisfy stationarity")
        mode = "symbolic-zero" if all(v.mode == "symbolic-zero" for v in verdicts) else "numeric-zero"
        law = ControlLaw(p, "closed", psi0, G, A, exprs, zero_check=mode)
    else:
        law = ControlLaw(p, "implicit", psi0, G, A)
    law.positive_curvature = _curvature_witnesses(p, law, hess, rng)
    if law.positive_curvature:
        warnings.warn(
            f"d2H/du2 has positive eigenvalues at {len(law.positive_curvature)} sampled points; "
            "the law is stationary but not maximising there",
            stacklevel=2,
        )
    return law


def _law_sampler(p, rng):
    def draw():
        b = _sample_state(p, rng)
        return {k: b[k] for k in b}

    return draw


def _undetermined(p, G, rng):
    """Stationarity does not involve u: decide between psi = 0 and a free control."""
    B = [[sym.differentiate(g, c) for c in p.costates] for g in G]
    full_rank = True
    args = ("t",) + p.states + p.costates
    fn = sym.compile_exprs([e for row in B for e in row], args)
    for _ in range(DEFAULTS["zero_points"]):
        b = _sample_state(p, rng)
        try:
            M = np.array(fn(*(b[a] for a in args))).reshape(p.r, p.n)
        except DomainError:
            continue
        if np.linalg.matrix_rank(M, tol=1e-9) < p.n:
            full_rank = False
            break
    if full_rank and p.r >= p.n:
        raise NontrivialityError(
            "abnormal branch: stationarity dH/du = 0 forces psi = 0, so (psi0, psi) = 0 "
            "violates the nontriviality condition"
        )
    raise ControlUndetermined(
        "abnormal branch: dH/du does not depend on u, so the control is undetermined by stationarity"
    )


def _curvature_witnesses(p, law, hess, rng):
    fn = sym.compile_exprs([e for row in hess for e in row], p.symbols)
    bad = []
    for _ in range(DEFAULTS["zero_points"]):
        b = _sample_state(p, rng)
        x = [b[s] for s in p.states]
        psi = [b[c] for c in p.costates]
        try:
            u = law(b["t"], x, psi)
            M = np.array(fn(b["t"], *x, *u, law.psi0, *psi)).reshape(p.r, p.r)
        except (ControlLawError, DomainError):
            continue
        eig = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eig.max() > DEFAULTS["curvature_tol"]:
            bad.append({**b, **dict(zip(p.controls, map(float, u))), "max_eigenvalue": float(eig.max())})
    return bad
