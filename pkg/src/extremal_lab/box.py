"""Sampling boxes over (t, x, u) with deterministic low-discrepancy points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .config import seed as default_seed
from .errors import InputError

STATE_HALF_WIDTH = 1.0
CONTROL_HALF_WIDTH = 10.0


@dataclass(frozen=True)
class Box:
    """Closed intervals keyed by variable name, kept in a fixed order."""

    names: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise InputError("box names and bounds differ in length")
        for nm, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo <= hi:
                raise InputError(f"box interval for {nm} has lower > upper ({lo} > {hi})")

    @classmethod
    def from_dict(cls, d):
        names = tuple(d)
        return cls(names, tuple(float(d[n][0]) for n in names), tuple(float(d[n][1]) for n in names))

    def as_dict(self):
        return {n: (lo, hi) for n, lo, hi in zip(self.names, self.lower, self.upper)}

    def render(self):
        return ";".join(f"{n}:{lo:g},{hi:g}" for n, lo, hi in zip(self.names, self.lower, self.upper))

    def scaled(self, factor, which=None):
        """Scale the intervals named in ``which`` (default all) about their centres."""
        which = set(self.names if which is None else which)
        lo, hi = [], []
        for n, a, b in zip(self.names, self.lower, self.upper):
            if n in which:
                c, h = (a + b) / 2, (b - a) / 2
                a, b = c - factor * h, c + factor * h
            lo.append(a)
            hi.append(b)
        return Box(self.names, tuple(lo), tuple(hi))

    def centre(self):
        return (np.array(self.lower) + np.array(self.upper)) / 2

    def sample(self, n, seed=None, skip=0):
        """n scrambled Halton points, shape (n, d); identical for identical inputs."""
        d = len(self.names)
        if d == 0:
            return np.zeros((n, 0))
        eng = qmc.Halton(d, scramble=True, seed=default_seed() if seed is None else seed)
        if skip:
            eng.fast_forward(skip)
        u = eng.random(n)
        lo, hi = np.array(self.lower), np.array(self.upper)
        # plain affine map: qmc.scale rejects degenerate intervals
        return lo + u * (hi - lo)


def default_box(p):
    d = {"t": (p.t0, p.t1)}
    d.update({s: (-STATE_HALF_WIDTH, STATE_HALF_WIDTH) for s in p.states})
    d.update({c: (-CONTROL_HALF_WIDTH, CONTROL_HALF_WIDTH) for c in p.controls})
    return Box.from_dict(d)


def parse_box(text, p=None):
    """Parse "t:0,1;x1:-1,1;u1:-10,10"; variables not given keep the problem defaults."""
    d = default_box(p).as_dict() if p is not None else {}
    given = {}
    for part in filter(None, (s.strip() for s in (text or "").split(";"))):
        name, sep, rng = part.partition(":")
        bounds = rng.split(",")
        if not sep or len(bounds) != 2:
            raise InputError(f"box entry '{part}' is not name:lo,hi")
        try:
            lo, hi = float(bounds[0]), float(bounds[1])
        except ValueError:
            raise InputError(f"box entry '{part}' has non-numeric bounds") from None
        name = name.strip()
        if p is not None and name not in d:
            raise InputError(f"box names unknown variable '{name}'")
        given[name] = (lo, hi)
    d.update(given)
    return Box.from_dict(d)
