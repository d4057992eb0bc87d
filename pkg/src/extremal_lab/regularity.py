"""Box-sampled audits of the existence and Lipschitzian-regularity hypotheses.

Nothing here decides a global statement: every verdict holds on the sampled
box, and growth fits report a trend across nested boxes so that a suspected
global violation can be flagged. Norms are Euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symbolic as sym
from .box import default_box
from .config import DEFAULTS, seed as default_seed
from .errors import DomainError, InputError

BOX_NOTE = "verified on the stated box only; global validity is not decided"

CONDITIONS = {
    "9": "applicability-9",
    "25": "classical-TM",
    "26": "affine-26",
    "27": "tonelli-morrey-27",
}


class RankDeficiencyError(InputError):
    def __init__(self, msg, point=None):
        super().__init__(msg)
        self.point = point


def _check_samples(n):
    if n < DEFAULTS["min_samples"]:
        raise InputError(f"at least {DEFAULTS['min_samples']} samples are required, got {n}")


def _evaluate(exprs, names, pts):
    """Vectorised evaluation at the rows of ``pts``; non-finite values name the point."""
    fn = sym.compile_exprs(exprs, names, backend="numpy")
    cols = [pts[:, i] for i in range(pts.shape[1])]
    out = np.array(fn(*cols)) if exprs else np.zeros((0, len(pts)))
    bad = ~np.isfinite(out)
    if bad.any():
        k = int(np.nonzero(bad.any(axis=0))[0][0])
        where = dict(zip(names, pts[k].tolist()))
        exact = sym.compile_exprs(exprs, names)
        try:
            exact(*pts[k])
        except DomainError as err:
            raise DomainError(f"at {where}: {err}") from None
        raise DomainError(f"non-finite value at {where}")
    return out


def _point(names, row):
    return {n: float(v) for n, v in zip(names, row)}


@dataclass
class Verdict:
    check: str
    passed: bool
    box: str
    samples: int
    witness: dict | None = None
    details: dict = field(default_factory=dict)
    note: str = BOX_NOTE

    def to_dict(self):
        return {
            "check": self.check,
            "passed": self.passed,
            "box": self.box,
            "samples": self.samples,
            "witness": self.witness,
            "details": self.details,
            "note": self.note,
        }


# --------------------------------------------------------------------------
# Tonelli existence hypotheses


def check_coercivity(p, theta, box=None, samples=DEFAULTS["samples"], seed=None):
    """L >= theta(|phi|) on the box, theta(r)/r superlinear, |phi| unbounded along rays in u."""
    _check_samples(samples)
    theta = sym._coerce(theta)
    extra = sym.free_vars(theta) - {"r"}
    if extra:
        raise InputError(f"theta must be a function of r only; found '{sorted(extra)[0]}'")
    box = default_box(p) if box is None else box
    seed = default_seed() if seed is None else seed
    names = box.names
    pts = box.sample(samples, seed=seed)
    vals = _evaluate((p.L,) + p.phi, names, pts)
    L, phi = vals[0], vals[1:]
    r = np.sqrt(np.sum(phi ** 2, axis=0))
    th = _evaluate((theta,), ("r",), r[:, None])[0]
    gap = L - th
    k = int(np.argmin(gap))
    bound_ok = bool(gap[k] >= -DEFAULTS["convexity_tol"])

    # theta(r)/r increasing and large at the end of a geometric r grid
    rs = np.array([10.0, 1e2, 1e3, 1e4])
    ratio = _evaluate((theta,), ("r",), rs[:, None])[0] / rs
    super_ok = bool(np.all(np.diff(ratio) > 0) and ratio[-1] > DEFAULTS["theta_ratio_floor"])
    low = float(np.min(_evaluate((theta,), ("r",), np.linspace(0.0, 1e4, 1001)[:, None])[0]))

    # |phi(t, x, sigma d)| increasing in sigma and growing by the ray factor
    rng = np.random.default_rng(seed)
    centre = box.centre()
    cidx = [names.index(c) for c in p.controls]
    sig = np.array(DEFAULTS["ray_sigmas"], dtype=float)
    rays_ok, ray_witness = True, None
    if p.r == 0:
        rays_ok = False
    for _ in range(DEFAULTS["ray_directions"] if p.r else 0):
        d = rng.standard_normal(p.r)
        d /= np.linalg.norm(d)
        rows = np.tile(centre, (len(sig), 1))
        rows[:, cidx] = sig[:, None] * d[None, :]
        nrm = np.sqrt(np.sum(_evaluate(p.phi, names, rows) ** 2, axis=0))
        if not (np.all(np.diff(nrm) > 0) and nrm[-1] >= DEFAULTS["ray_growth"] * nrm[0]):
            rays_ok = False
            ray_witness = {"direction": d.tolist(), "sigma": sig.tolist(), "norm_phi": nrm.tolist()}
            break
    witness = None
    if not bound_ok:
        witness = {**_point(names, pts[k]), "L": float(L[k]), "theta": float(th[k]), "norm_phi": float(r[k])}
    elif not rays_ok:
        witness = ray_witness
    details = {
        "lower_bound": bound_ok,
        "min_gap": float(gap[k]),
        "superlinear": super_ok,
        "theta_over_r": dict(zip([f"{x:g}" for x in rs], ratio.tolist())),
        "theta_min_on_0_1e4": low,
        "rays_unbounded": rays_ok,
        "ray_rule": f"|phi| increasing over sigma in {list(DEFAULTS['ray_sigmas'])} and growing at least {DEFAULTS['ray_growth']:g}x",
    }
    return Verdict("coercivity", bound_ok and super_ok and rays_ok, box.render(), samples, witness, details)


def check_convexity(p, box=None, samples=DEFAULTS["samples"], seed=None):
    """Midpoint convexity in u of L and each phi_i at sampled (t, x, u, u')."""
    _check_samples(samples)
    box = default_box(p) if box is None else box
    seed = default_seed() if seed is None else seed
    names = box.names
    cidx = [names.index(c) for c in p.controls]
    pts = box.sample(2 * samples, seed=seed)
    a, b = pts[:samples], pts[samples:].copy()
    b_other = a.copy()
    b_other[:, cidx] = b[:, cidx]
    mid = a.copy()
    mid[:, cidx] = (a[:, cidx] + b[:, cidx]) / 2
    exprs = (p.L,) + p.phi
    fa, fb, fm = (_evaluate(exprs, names, q) for q in (a, b_other, mid))
    excess = fm - (fa + fb) / 2
    labels = ["L"] + [f"phi[{s}]" for s in p.states]
    i, k = np.unravel_index(int(np.argmax(excess)), excess.shape)
    ok = bool(excess[i, k] <= DEFAULTS["convexity_tol"])
    witness = None
    if not ok:
        witness = {
            "function": labels[i],
            "point": _point(names, a[k]),
            "u": a[k, cidx].tolist(),
            "u_prime": b[k, cidx].tolist(),
            "excess": float(excess[i, k]),
        }
    per = {lab: bool(np.max(excess[j]) <= DEFAULTS["convexity_tol"]) for j, lab in enumerate(labels)}
    return Verdict("convexity", ok, box.render(), samples, witness, {"per_function": per, "max_excess": float(excess[i, k])})


# --------------------------------------------------------------------------
# growth conditions


def growth_pairs(p, condition):
    """(label, LHS components, RHS components) with norms taken over components."""
    cond = str(condition)
    Lx = tuple(sym.differentiate(p.L, x) for x in p.states)
    Lu = tuple(sym.differentiate(p.L, u) for u in p.controls)
    Lt = (sym.differentiate(p.L, "t"),)
    phi_x = [tuple(sym.differentiate(f, x) for x in p.states) for f in p.phi]
    phi_t = tuple(sym.differentiate(f, "t") for f in p.phi)
    pairs = []
    if cond == "25":
        pairs.append(("|L_x|+|L_u|", (Lx, Lu), (p.L,)))
        return pairs
    if cond == "27":
        pairs.append(("|L_t|", (Lt,), (p.L,)))
    if cond in ("9", "27"):
        pairs.append(("|L_x|", (Lx,), (p.L,)))
    else:
        raise InputError(f"unknown growth condition '{condition}' (expected 9, 25 or 27)")
    if cond == "27":
        pairs.append(("|phi_t|", (phi_t,), p.phi))
    for s, f, fx in zip(p.states, p.phi, phi_x):
        pairs.append((f"|phi[{s}]_x|", (fx,), (f,)))
    return pairs


def _pair_values(p, pairs, names, pts):
    """LHS and RHS-base arrays, shape (pairs, samples)."""
    flat = []
    layout = []
    for _, lhs_groups, rhs in pairs:
        spans = []
        for g in lhs_groups:
            spans.append((len(flat), len(flat) + len(g)))
            flat.extend(g)
        rspan = (len(flat), len(flat) + len(rhs))
        flat.extend(rhs)
        layout.append((spans, rspan))
    vals = _evaluate(tuple(flat), names, pts)
    lhs = np.empty((len(pairs), len(pts)))
    rhs = np.empty((len(pairs), len(pts)))
    for j, (spans, (r0, r1)) in enumerate(layout):
        lhs[j] = sum(np.sqrt(np.sum(vals[a:b] ** 2, axis=0)) if b > a else 0.0 for a, b in spans)
        rhs[j] = np.sqrt(np.sum(vals[r0:r1] ** 2, axis=0)) if r1 > r0 else 0.0
    return lhs, rhs


def c_grid():
    step, top = DEFAULTS["c_grid_step"], DEFAULTS["c_grid_max"]
    return np.arange(int(round(top / step)) + 1) * step


def _k_of_c(lhs, rhs, c):
    # pairwise max in fixed order keeps the reduction bit-reproducible
    return max(0.0, float(np.max(lhs - c * rhs)))


@dataclass
class GrowthFit:
    condition: str
    c: float
    k: float
    box: str
    samples: int
    witness: dict
    trend: list
    suspected_violation: bool
    note: str = BOX_NOTE

    def holds_with(self, c, k):
        return self.k <= k + 1e-9 and self.c <= c

    def to_dict(self):
        return {
            "condition": self.condition,
            "c": self.c,
            "k": self.k,
            "box": self.box,
            "samples": self.samples,
            "witness": self.witness,
            "trend": self.trend,
            "suspected_global_violation": self.suspected_violation,
            "conventions": {
                "c_grid": f"0..{DEFAULTS['c_grid_max']:g} step {DEFAULTS['c_grid_step']:g}",
                "trend_scales": list(DEFAULTS["trend_scales"]),
                "trend_rule": f"k grows by >= {DEFAULTS['trend_factor']:g}x per box doubling",
                "norm": "euclidean",
            },
            "note": self.note,
        }


def fit_growth(p, condition, box=None, samples=DEFAULTS["samples"], seed=None):
    """Fit LHS <= c RHS + k on a c grid, then track k(c) over nested control boxes.

    For each c the smallest admissible k is the max of LHS - c RHS (floored at
    0); the pair (c, k) with least k is kept, ties going to the smallest c.
    The trend scales the control intervals x1, x2, x4 about their centres and
    evaluates k at the fitted c on the union of the nested sample sets, so k
    is monotone in the box.
    """
    _check_samples(samples)
    pairs = growth_pairs(p, condition)
    box = default_box(p) if box is None else box
    seed = default_seed() if seed is None else seed
    names = box.names
    base = box.sample(samples, seed=seed)
    lhs, rhs = _pair_values(p, pairs, names, base)
    best_c, best_k = 0.0, np.inf
    for c in c_grid():
        k = _k_of_c(lhs, rhs, c)
        if k < best_k:
            best_c, best_k = float(c), k
    gap = lhs - best_c * rhs
    j, i = np.unravel_index(int(np.argmax(gap)), gap.shape)
    witness = {"pair": pairs[j][0], "point": _point(names, base[i]), "lhs": float(lhs[j, i]), "rhs_base": float(rhs[j, i])}

    trend = []
    L_all, R_all = lhs, rhs
    for scale in DEFAULTS["trend_scales"]:
        if scale != 1:
            pts = box.scaled(scale, p.controls).sample(samples, seed=seed)
            l2, r2 = _pair_values(p, pairs, names, pts)
            L_all, R_all = np.concatenate([L_all, l2], axis=1), np.concatenate([R_all, r2], axis=1)
        trend.append({"scale": scale, "c": best_c, "k": _k_of_c(L_all, R_all, best_c)})
    ks = [t["k"] for t in trend]
    factor = DEFAULTS["trend_factor"] * (1 - 1e-9)
    suspected = len(ks) > 1 and ks[0] > 0 and all(b >= factor * a for a, b in zip(ks, ks[1:]))
    return GrowthFit(CONDITIONS[str(condition)], best_c, float(best_k), box.render(), samples, witness, trend, bool(suspected))


def check_affine_growth(p, params, box=None, samples=DEFAULTS["samples"], seed=None):
    """Control-affine regularity condition on the box, for each state index i:

    (|L_t| + |L_xi| + |L phi_t - L_t phi| + |L phi_xi - L_xi phi|) |u|^mu <= gamma L^beta + eta.
    """
    _check_samples(samples)
    gamma, beta, eta, mu = (float(v) for v in params)
    if not (gamma > 0 and beta < 2 and mu >= max(beta - 2, -2)):
        raise InputError("parameters need gamma > 0, beta < 2 and mu >= max(beta - 2, -2)")
    for s, f in zip(p.states, p.phi):
        deg = sym.polynomial_degree(f, p.controls)
        if deg is None or deg > 1:
            raise InputError(f"dynamics are not affine in the control: phi[{s}] = {sym.render(f)}")
    box = default_box(p) if box is None else box
    seed = default_seed() if seed is None else seed
    names = box.names

    # complete rank of g = dphi/du at the box centre and Halton points
    g = tuple(sym.differentiate(f, u) for f in p.phi for u in p.controls)
    rpts = np.vstack([box.centre()[None, :], box.sample(DEFAULTS["rank_samples"] - 1, seed=seed)])
    gv = _evaluate(g, names, rpts) if g else np.zeros((0, len(rpts)))
    min_sv = np.inf
    for k in range(len(rpts)):
        sv = np.linalg.svd(gv[:, k].reshape(p.n, p.r), compute_uv=False) if p.r else np.array([np.inf])
        s_min = float(sv[p.r - 1]) if p.r <= p.n else 0.0
        min_sv = min(min_sv, s_min)
        if not s_min > DEFAULTS["rank_tol"]:
            point = {n: float(v) for n, v in zip(names, rpts[k]) if n not in p.controls}
            raise RankDeficiencyError(
                f"g(t,x) = dphi/du does not have complete rank {p.r} at {point} (smallest singular value {s_min:.3g})",
                point,
            )

    pts = box.sample(samples, seed=seed)
    Lt = sym.differentiate(p.L, "t")
    phit = [sym.differentiate(f, "t") for f in p.phi]
    exprs = [p.L, Lt] + list(p.phi) + phit
    for x in p.states:
        exprs.append(sym.differentiate(p.L, x))
        exprs.extend(sym.differentiate(f, x) for f in p.phi)
    vals = _evaluate(tuple(exprs), names, pts)
    n = p.n
    L, Lt_v = vals[0], vals[1]
    phi = vals[2:2 + n]
    phi_t = vals[2 + n:2 + 2 * n]
    off = 2 + 2 * n
    cidx = [names.index(c) for c in p.controls]
    unorm = np.sqrt(np.sum(pts[:, cidx] ** 2, axis=1))
    with np.errstate(all="ignore"):
        umu = np.where(unorm == 0, 1.0 if mu == 0 else (0.0 if mu > 0 else np.inf), unorm ** mu)
        rhs = gamma * np.power(L, beta) + eta
    if not np.all(np.isfinite(rhs)):
        k = int(np.nonzero(~np.isfinite(rhs))[0][0])
        raise DomainError(f"L^beta is undefined at {_point(names, pts[k])} (L = {L[k]})")
    worst_excess, worst = -np.inf, None
    base_t = np.abs(Lt_v) + np.sqrt(np.sum((L * phi_t - Lt_v * phi) ** 2, axis=0))
    for i, x in enumerate(p.states):
        Lx = vals[off + i * (n + 1)]
        phix = vals[off + i * (n + 1) + 1: off + (i + 1) * (n + 1)]
        bracket = base_t + np.abs(Lx) + np.sqrt(np.sum((L * phix - Lx * phi) ** 2, axis=0))
        with np.errstate(all="ignore"):
            lhs = np.where(bracket == 0, 0.0, bracket * umu)
        excess = lhs - rhs
        k = int(np.argmax(excess))
        if excess[k] > worst_excess:
            worst_excess = float(excess[k])
            worst = {"state": x, "point": _point(names, pts[k]), "lhs": float(lhs[k]), "rhs": float(rhs[k]),
                     "ratio": float(lhs[k] / rhs[k]) if rhs[k] != 0 else None}
    ok = bool(worst_excess <= 1e-9)
    details = {"params": {"gamma": gamma, "beta": beta, "eta": eta, "mu": mu}, "max_excess": worst_excess,
               "min_singular_value": min_sv}
    return Verdict("affine-26", ok, box.render(), samples, None if ok else worst, details)
