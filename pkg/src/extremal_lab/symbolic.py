"""Immutable expression trees in canonical form.

Every constructor returns a canonical tree: sums and products are flattened,
constants folded, like terms and like powers merged, products distributed over
sums, and children sorted by a structural key. Two trees are equal exactly when
their keys are equal, so "identically zero" is decidable by comparison with the
zero constant for anything that is a polynomial in its atoms (variables,
function applications, non-integer or negative powers of sums).

Negation and quotients are not separate node kinds: ``-a`` is ``(-1)*a`` and
``a/b`` is ``a*b^-1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, ParseError, UnboundVariableError

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs", "sign")
_MAX_EXPAND_POWER = 10
_ULP_CANCEL = 4 * np.finfo(float).eps

_KIND_RANK = {"const": 0, "var": 1, "pow": 3, "func": 4, "mul": 5, "add": 6}


class Expr:
    __slots__ = ("kind", "value", "args", "key", "_hash")

    def __init__(self, kind, value=None, args=()):
        self.kind = kind
        self.value = value
        self.args = args
        if kind == "const":
            self.key = (0, value)
        elif kind == "var":
            self.key = (1, value)
        elif kind == "func":
            self.key = (4, value, args[0].key)
        elif kind == "pow":
            self.key = (3, args[0].key, args[1].key)
        else:
            self.key = (_KIND_RANK[kind], tuple(a.key for a in args))
        self._hash = hash(self.key)

    def __setattr__(self, name, val):
        if hasattr(self, "_hash"):
            raise AttributeError("Expr is immutable")
        object.__setattr__(self, name, val)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self._hash == other._hash and self.key == other.key

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __repr__(self):
        return f"Expr({render(self)!r})"

    def __str__(self):
        return render(self)

    # arithmetic sugar; all of it goes through the canonical constructors
    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, _coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(_coerce(other), MINUS_ONE))

    def __rtruediv__(self, other):
        return mul(_coerce(other), power(self, MINUS_ONE))

    def __pow__(self, other):
        return power(self, _coerce(other))

    def __rpow__(self, other):
        return power(_coerce(other), self)

    def __neg__(self):
        return mul(MINUS_ONE, self)

    @property
    def is_const(self):
        return self.kind == "const"


def _coerce(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return const(x)


# --------------------------------------------------------------------------
# canonical constructors


def const(value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"non-finite constant {value}")
    if value == 0.0:
        value = 0.0  # drop the sign of -0.0
    return Expr("const", value)


def var(name):
    return Expr("var", name)


ZERO = const(0)
ONE = const(1)
MINUS_ONE = const(-1)


def _split_coeff(term):
    """term = c * monomial with c a float and monomial free of constants."""
    if term.kind == "mul" and term.args[0].kind == "const":
        rest = term.args[1:]
        return term.args[0].value, rest[0] if len(rest) == 1 else Expr("mul", None, rest)
    return 1.0, term


def _scaled(c, mono):
    if c == 1.0:
        return mono
    body = mono.args if mono.kind == "mul" else (mono,)
    return Expr("mul", None, (const(c),) + body)


def _flatten(items, kind):
    for it in items:
        it = _coerce(it)
        if it.kind == kind:
            yield from it.args
        else:
            yield it


def _cancelled(total, magnitude):
    return total == 0.0 or abs(total) <= _ULP_CANCEL * magnitude


def add(*terms):
    const_sum = 0.0
    const_mag = 0.0
    coeffs = {}
    mags = {}
    for t in _flatten(terms, "add"):
        if t.kind == "const":
            const_sum += t.value
            const_mag += abs(t.value)
            continue
        c, mono = _split_coeff(t)
        coeffs[mono] = coeffs.get(mono, 0.0) + c
        mags[mono] = mags.get(mono, 0.0) + abs(c)
    out = []
    for mono, c in coeffs.items():
        if not _cancelled(c, mags[mono]):
            out.append((mono.key, _scaled(c, mono)))
    out.sort(key=lambda kv: kv[0])
    items = [t for _, t in out]
    if not _cancelled(const_sum, const_mag):
        items.insert(0, const(const_sum))
    if not items:
        return ZERO
    if len(items) == 1:
        return items[0]
    return Expr("add", None, tuple(items))


def _base_exp(f):
    if f.kind == "pow":
        return f.args[0], f.args[1]
    return f, ONE


def mul(*factors):
    coeff = 1.0
    flat = []
    for f in _flatten(factors, "mul"):
        if f.kind == "const":
            coeff *= f.value
        else:
            flat.append(f)
    if not math.isfinite(coeff):
        raise DomainError("constant overflow in product")
    if coeff == 0.0:
        return ZERO
    for i, f in enumerate(flat):
        if f.kind == "add":
            rest = flat[:i] + flat[i + 1:]
            c = const(coeff)
            return add(*(mul(c, term, *rest) for term in f.args))
    groups = {}
    for f in flat:
        base, ex = _base_exp(f)
        groups.setdefault(base, []).append((ex, f))
    out = []
    merged = False
    for base, entries in groups.items():
        if len(entries) == 1:
            out.append(entries[0][1])
        else:
            merged = True
            out.append(power(base, add(*(ex for ex, _ in entries))))
    if merged and any(f.kind in ("const", "mul", "add") for f in out):
        return mul(const(coeff), *out)
    out.sort(key=lambda f: (_base_exp(f)[0].key, _base_exp(f)[1].key))
    if not out:
        return const(coeff)
    if coeff == 1.0:
        return out[0] if len(out) == 1 else Expr("mul", None, tuple(out))
    return Expr("mul", None, (const(coeff),) + tuple(out))


def _is_int(x):
    return float(x).is_integer()


def power(base, ex):
    base, ex = _coerce(base), _coerce(ex)
    if ex.kind == "const":
        e = ex.value
        if e == 0.0:
            return ONE
        if e == 1.0:
            return base
        if base.kind == "const":
            return const(_fold_pow(base.value, e))
        if _is_int(e):
            n = int(e)
            if base.kind == "pow":
                return power(base.args[0], mul(base.args[1], ex))
            if base.kind == "mul":
                return mul(*(power(f, ex) for f in base.args))
            if base.kind == "add" and 0 < n <= _MAX_EXPAND_POWER:
                return mul(*([base] * n))
    elif base.kind == "const":
        if base.value == 1.0:
            return ONE
    return Expr("pow", None, (base, ex))


def _fold_pow(b, e):
    if b == 0.0 and e < 0:
        raise DomainError("zero raised to a negative power")
    if b < 0 and not _is_int(e):
        raise DomainError(f"negative base {b} with non-integer exponent {e}")
    try:
        v = b ** e
    except OverflowError:
        raise DomainError(f"overflow in {b}^{e}") from None
    if not math.isfinite(v):
        raise DomainError(f"overflow in {b}^{e}")
    return v


def _sign(v):
    return float((v > 0) - (v < 0))


_MATH = {
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "abs": abs,
    "sign": _sign,
}


def func(name, arg):
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function '{name}'")
    arg = _coerce(arg)
    if arg.kind == "const":
        return const(_apply(name, arg.value, lambda: f"{name}({render(arg)})"))
    return Expr("func", name, (arg,))


def _apply(name, v, where):
    if name == "log" and v <= 0:
        raise DomainError(f"log of non-positive value {v} in {where()}")
    if name == "sqrt" and v < 0:
        raise DomainError(f"sqrt of negative value {v} in {where()}")
    try:
        out = _MATH[name](v)
    except OverflowError:
        raise DomainError(f"overflow in {where()}") from None
    if not math.isfinite(out):
        raise DomainError(f"non-finite value in {where()}")
    return out


def exp(a):
    return func("exp", _coerce(a))


def log(a):
    return func("log", _coerce(a))


def sin(a):
    return func("sin", _coerce(a))


def cos(a):
    return func("cos", _coerce(a))


def sqrt(a):
    return func("sqrt", _coerce(a))


def canonical(e):
    """Rebuild ``e`` through the canonical constructors (idempotent)."""
    return _rebuild(e, lambda leaf: leaf)


def _rebuild(e, leaf_map):
    memo = {}

    def go(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        k = node.kind
        if k in ("const", "var"):
            out = leaf_map(node)
        elif k == "add":
            out = add(*(go(a) for a in node.args))
        elif k == "mul":
            out = mul(*(go(a) for a in node.args))
        elif k == "pow":
            out = power(go(node.args[0]), go(node.args[1]))
        else:
            out = func(node.value, go(node.args[0]))
        memo[node] = out
        return out

    return go(e)


# --------------------------------------------------------------------------
# structural queries


def free_vars(e):
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n.kind == "var":
            out.add(n.value)
        else:
            stack.extend(n.args)
    return out


def depends_on(e, names):
    if isinstance(names, str):
        names = {names}
    return not free_vars(e).isdisjoint(names)


def substitute(e, assignments):
    """Simultaneous substitution of variables by expressions."""
    if not assignments:
        return e
    table = {k: _coerce(v) for k, v in assignments.items()}

    def leaf(node):
        if node.kind == "var":
            return table.get(node.value, node)
        return node

    return _rebuild(e, leaf)


def differentiate(e, v):
    """Exact partial derivative with respect to variable name ``v``.

    ``abs`` differentiates to ``sign`` with sign(0) = 0; ``sign`` has derivative 0.
    """
    memo = {}

    def d(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        k = node.kind
        if k == "const":
            out = ZERO
        elif k == "var":
            out = ONE if node.value == v else ZERO
        elif k == "add":
            out = add(*(d(a) for a in node.args))
        elif k == "mul":
            terms = []
            args = node.args
            for i, a in enumerate(args):
                da = d(a)
                if da != ZERO:
                    terms.append(mul(da, *args[:i], *args[i + 1:]))
            out = add(*terms)
        elif k == "pow":
            b, x = node.args
            db, dx = d(b), d(x)
            if dx == ZERO:
                out = ZERO if db == ZERO else mul(x, power(b, add(x, MINUS_ONE)), db)
            else:
                # b^x * (x' log b + x b'/b)
                out = mul(node, add(mul(dx, func("log", b)), mul(x, db, power(b, MINUS_ONE))))
        else:
            a = node.args[0]
            da = d(a)
            if da == ZERO:
                out = ZERO
            else:
                name = node.value
                if name == "exp":
                    inner = node
                elif name == "log":
                    inner = power(a, MINUS_ONE)
                elif name == "sin":
                    inner = func("cos", a)
                elif name == "cos":
                    inner = mul(MINUS_ONE, func("sin", a))
                elif name == "sqrt":
                    inner = mul(const(0.5), power(node, MINUS_ONE))
                elif name == "abs":
                    inner = func("sign", a)
                else:
                    inner = ZERO
                out = mul(inner, da)
        memo[node] = out
        return out

    return d(e)


def gradient(e, names):
    return tuple(differentiate(e, n) for n in names)


def polynomial_degree(e, names):
    """Degree of ``e`` as a polynomial in ``names``; None if not polynomial."""
    names = set(names)

    def deg(node):
        k = node.kind
        if k == "const":
            return 0
        if k == "var":
            return 1 if node.value in names else 0
        if not depends_on(node, names):
            return 0
        if k == "add":
            parts = [deg(a) for a in node.args]
            return None if None in parts else max(parts)
        if k == "mul":
            parts = [deg(a) for a in node.args]
            return None if None in parts else sum(parts)
        if k == "pow":
            b, x = node.args
            if x.kind == "const" and _is_int(x.value) and x.value > 0 and not depends_on(x, names):
                db = deg(b)
                return None if db is None else db * int(x.value)
        return None

    return deg(e)


# --------------------------------------------------------------------------
# rendering


def _fmt_num(v):
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _is_negative(term):
    if term.kind == "const":
        return term.value < 0
    return term.kind == "mul" and term.args[0].kind == "const" and term.args[0].value < 0


def render(e):
    """Text form that ``parse`` maps back to a structurally equal tree."""
    k = e.kind
    if k == "const":
        return _fmt_num(e.value)
    if k == "var":
        return e.value
    if k == "func":
        return f"{e.value}({render(e.args[0])})"
    if k == "pow":
        b, x = e.args
        if b.kind in ("var", "func") or (b.kind == "const" and b.value >= 0):
            bs = render(b)
        else:
            bs = f"({render(b)})"
        if x.kind in ("var", "func", "const"):
            xs = render(x)
        else:
            xs = f"({render(x)})"
        return f"{bs}^{xs}"
    if k == "mul":
        args = e.args
        if args[0].kind == "const":
            c, rest = args[0].value, args[1:]
        else:
            c, rest = 1.0, args
        body = "*".join(_render_factor(f) for f in rest)
        if c == 1.0:
            return body
        if c == -1.0:
            return "-" + body
        return f"{_fmt_num(c)}*{body}"
    parts = []
    for i, t in enumerate(e.args):
        if i == 0:
            parts.append(render(t))
        elif _is_negative(t):
            parts.append(" - " + render(mul(MINUS_ONE, t)))
        else:
            parts.append(" + " + render(t))
    return "".join(parts)


def _render_factor(f):
    if f.kind == "add":
        return f"({render(f)})"
    return render(f)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = m.start() + chunk.rindex("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _EOFError(ParseError):
    pass


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok):
        cls = _EOFError if tok.kind == "eof" else ParseError
        raise cls(msg, tok.line, tok.col)

    def parse(self):
        e = self.expr()
        t = self.peek()
        if t.kind != "eof":
            self.fail(f"unexpected {t.text!r}", t)
        return e

    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, mul(MINUS_ONE, rhs))
        return e

    def term(self):
        e = self.factor()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            op_tok = self.take()
            rhs = self.factor()
            if op_tok.text == "*":
                e = mul(e, rhs)
            else:
                if rhs == ZERO:
                    raise ParseError("division by a zero constant", op_tok.line, op_tok.col)
                e = mul(e, power(rhs, MINUS_ONE))
        return e

    def factor(self):
        base = self.atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            ex = self.atom()
            try:
                return power(base, ex)
            except DomainError as err:
                raise ParseError(str(err), t.line, t.col) from None
        return base

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return const(float(t.text))
        if t.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(f"unknown function '{t.text}'", t.line, t.col)
                self.take()
                arg = self._group(nxt)
                try:
                    return func(t.text, arg)
                except DomainError as err:
                    raise ParseError(str(err), t.line, t.col) from None
            if t.text in FUNCTIONS:
                raise ParseError(f"function '{t.text}' used without argument", t.line, t.col)
            return var(t.text)
        if t.kind == "op" and t.text == "(":
            return self._group(t)
        if t.kind == "op" and t.text == "-":
            # unary minus binds looser than '^': -x^2 == -(x^2)
            return mul(MINUS_ONE, self.factor())
        if t.kind == "eof":
            self.fail("unexpected end of input", t)
        self.fail(f"unexpected {t.text!r}", t)

    def _group(self, open_tok):
        try:
            e = self.expr()
        except _EOFError:
            raise ParseError("unclosed '('", open_tok.line, open_tok.col) from None
        close = self.take()
        if close.kind == "eof":
            raise ParseError("unclosed '('", open_tok.line, open_tok.col)
        if close.text != ")":
            self.fail(f"expected ')' but found {close.text!r}", close)
        return e


def parse(text):
    """Parse infix text into a canonical expression."""
    try:
        return _Parser(text).parse()
    except _EOFError as err:
        raise ParseError(str(err).split(" (line")[0], err.line, err.col) from None


# --------------------------------------------------------------------------
# evaluation


def evaluate(e, bindings):
    """Evaluate with IEEE doubles. Raises on unbound variables and domain errors."""
    memo = {}

    def ev(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        k = node.kind
        if k == "const":
            out = node.value
        elif k == "var":
            try:
                out = float(bindings[node.value])
            except KeyError:
                raise UnboundVariableError(node.value) from None
        elif k == "add":
            out = math.fsum(ev(a) for a in node.args)
        elif k == "mul":
            out = 1.0
            for a in node.args:
                out *= ev(a)
        elif k == "pow":
            b, x = ev(node.args[0]), ev(node.args[1])
            if b == 0.0 and x < 0:
                raise DomainError(f"division by zero in {render(node)}")
            if b < 0 and not _is_int(x):
                raise DomainError(f"negative base with non-integer exponent in {render(node)}")
            try:
                out = b ** x
            except OverflowError:
                raise DomainError(f"overflow in {render(node)}") from None
        else:
            out = _apply(node.value, ev(node.args[0]), lambda: render(node))
        if not math.isfinite(out):
            raise DomainError(f"non-finite value in {render(node)}")
        memo[node] = out
        return out

    return ev(e)


# --------------------------------------------------------------------------
# compilation to Python callables


def _safe_pow(b, x):
    if b < 0 and not float(x).is_integer():
        raise ValueError("negative base")
    return b ** x


_NS_MATH = {"_" + k: v for k, v in _MATH.items()}
_NS_MATH["_pow"] = _safe_pow
_NS_NUMPY = {
    "_exp": np.exp,
    "_log": np.log,
    "_sin": np.sin,
    "_cos": np.cos,
    "_sqrt": np.sqrt,
    "_abs": np.abs,
    "_sign": np.sign,
    "_pow": np.power,
}


def _codegen(e, names):
    memo = {}

    def g(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        k = node.kind
        if k == "const":
            out = f"({node.value!r})"
        elif k == "var":
            out = names[node.value]
        elif k == "add":
            out = "(" + " + ".join(g(a) for a in node.args) + ")"
        elif k == "mul":
            out = "(" + " * ".join(g(a) for a in node.args) + ")"
        elif k == "pow":
            b, x = node.args
            if x.kind == "const" and _is_int(x.value) and abs(x.value) <= 64:
                n = int(x.value)
                out = f"({g(b)} ** {n})" if n > 0 else f"(1.0 / ({g(b)} ** {-n}))"
            else:
                out = f"_pow({g(b)}, {g(x)})"
        else:
            out = f"_{node.value}({g(node.args[0])})"
        memo[node] = out
        return out

    return g(e)


@lru_cache(maxsize=4096)
def _compile(exprs, argnames, backend):
    missing = set().union(*(free_vars(e) for e in exprs)) - set(argnames)
    if missing:
        raise UnboundVariableError(sorted(missing)[0])
    names = {a: f"_a{i}" for i, a in enumerate(argnames)}
    params = ", ".join(names[a] for a in argnames)
    body = ", ".join(_codegen(e, names) for e in exprs)
    src = f"def _f({params}):\n    return ({body},)\n"
    ns = dict(_NS_MATH if backend == "math" else _NS_NUMPY)
    exec(compile(src, "<extremal_lab.compiled>", "exec"), ns)
    return ns["_f"]


def compile_exprs(exprs, argnames, backend="math"):
    """Compile expressions into one function of positional ``argnames``.

    The math backend returns a tuple of floats and raises DomainError naming the
    offending subexpression. The numpy backend evaluates elementwise over arrays
    and leaves non-finite entries for the caller to inspect.
    """
    exprs = tuple(exprs)
    argnames = tuple(argnames)
    raw = _compile(exprs, argnames, backend)
    if backend == "numpy":

        def fn_np(*args):
            arrs = [np.asarray(a, dtype=float) for a in args]
            shape = np.broadcast_shapes(*(a.shape for a in arrs)) if arrs else ()
            with np.errstate(all="ignore"):
                out = raw(*arrs)
            return [np.broadcast_to(np.asarray(o, dtype=float), shape) for o in out]

        return fn_np

    def fn(*args):
        try:
            out = raw(*args)
        except (ValueError, OverflowError, ZeroDivisionError):
            out = None
        if out is None or not all(map(math.isfinite, out)):
            b = dict(zip(argnames, args))
            for e in exprs:
                evaluate(e, b)
            raise DomainError("non-finite value during evaluation")
        return out

    return fn


def compile_expr(e, argnames, backend="math"):
    f = compile_exprs((e,), argnames, backend)
    return lambda *a: f(*a)[0]


# --------------------------------------------------------------------------
# two-tier zero testing


@dataclass(frozen=True)
class ZeroTest:
    """Outcome of deciding whether an expression vanishes identically.

    mode is 'symbolic-zero' (canonical form is the zero constant),
    'numeric-zero' (all sampled values below tolerance) or 'nonzero'.
    """

    mode: str
    witness: dict | None = None
    value: float | None = None
    max_abs: float = 0.0

    @property
    def is_zero(self):
        return self.mode != "nonzero"


def uniform_sampler(names, rng, low=-2.0, high=2.0):
    def draw():
        return {n: float(rng.uniform(low, high)) for n in sorted(names)}

    return draw


def zero_test(e, sampler=None, points=20, tol=1e-9, rng=None, max_tries=None):
    """Decide whether ``e`` is identically zero.

    ``sampler`` returns a bindings dict per call; points where evaluation hits a
    domain error are redrawn. The numeric tier accepts when every sampled
    ``|e|`` is at most ``tol``; otherwise the worst point is the witness.
    """
    if e == ZERO:
        return ZeroTest("symbolic-zero")
    if e.kind == "const":
        return ZeroTest("nonzero", witness={}, value=e.value, max_abs=abs(e.value))
    if sampler is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        sampler = uniform_sampler(free_vars(e), rng)
    names = tuple(sorted(free_vars(e)))
    fn = compile_expr(e, names)
    worst, worst_b = -1.0, None
    got = 0
    tries = 0
    max_tries = max_tries or 20 * points
    while got < points and tries < max_tries:
        tries += 1
        b = sampler()
        try:
            v = fn(*(b[n] for n in names))
        except DomainError:
            continue
        got += 1
        if abs(v) > worst:
            worst, worst_b = abs(v), (b, v)
    if got == 0:
        raise DomainError(f"no valid sample point for {render(e)}")
    if worst <= tol:
        return ZeroTest("numeric-zero", max_abs=worst)
    return ZeroTest("nonzero", witness=worst_b[0], value=worst_b[1], max_abs=worst)


def symbolic_matrix_det(rows):
    """Determinant of a small square matrix of expressions (Laplace expansion)."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return add(mul(rows[0][0], rows[1][1]), mul(MINUS_ONE, rows[0][1], rows[1][0]))
    terms = []
    for j in range(n):
        if rows[0][j] == ZERO:
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        sign = ONE if j % 2 == 0 else MINUS_ONE
        terms.append(mul(sign, rows[0][j], symbolic_matrix_det(minor)))
    return add(*terms)


__all__ = [
    "Expr",
    "ZeroTest",
    "add",
    "canonical",
    "compile_expr",
    "compile_exprs",
    "const",
    "depends_on",
    "differentiate",
    "evaluate",
    "free_vars",
    "func",
    "gradient",
    "mul",
    "parse",
    "polynomial_degree",
    "power",
    "render",
    "substitute",
    "var",
    "zero_test",
]
