"""Terms and formulas of linear integer arithmetic with free unary functions.

Terms are built from index variables, numerals, free constants, linear
arithmetic, applications of free unary functions (the arrays), if-then-else,
and integer division by a fixed positive constant.  Array writes appear as a
derived form (`Store`) that is eliminated by `expand_writes` before any
formula leaves the symbolic layer.

Everything is immutable; structural equality and hashing come from frozen
dataclasses.  Substitution is capture-avoiding with deterministic renaming,
so identical inputs always produce identical outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union


class Term:
    """Base class for index/value terms."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_sexpr(self)


@dataclass(frozen=True)
class Var(Term):
    """Index variable (bound by a quantifier or a transition's exist list)."""

    name: str


@dataclass(frozen=True)
class Num(Term):
    """Integer numeral."""

    value: int


@dataclass(frozen=True)
class Sym(Term):
    """Free constant of the program (counter, parameter, scalar)."""

    name: str


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Sub(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Mul(Term):
    """Multiplication by a concrete integer coefficient (keeps terms linear)."""

    coeff: int
    arg: Term


@dataclass(frozen=True)
class Store:
    """Array-write expression wr(arr, idx, val); arr is a name or nested Store."""

    arr: Union[str, "Store"]
    idx: Term
    val: Term

    def __str__(self) -> str:
        return to_sexpr(self)


@dataclass(frozen=True)
class App(Term):
    """Application of an array (free unary function) to an index term."""

    fn: Union[str, Store]
    arg: Term


@dataclass(frozen=True)
class Ite(Term):
    cond: "Formula"
    then: Term
    other: Term


@dataclass(frozen=True)
class Div(Term):
    """Integer division by a fixed positive constant (floor, naturals domain)."""

    arg: Term
    divisor: int

    def __post_init__(self) -> None:
        if self.divisor <= 0:
            raise ValueError("division constant must be positive")


class Formula:
    """Base class for formulas."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_sexpr(self)


@dataclass(frozen=True)
class BoolVal(Formula):
    value: bool


TRUE = BoolVal(True)
FALSE = BoolVal(False)

# Relation symbols of atoms.  Negation of an atom stays an atom.
_NEGATED_OP = {"=": "!=", "!=": "=", "<": None, "<=": None}


@dataclass(frozen=True)
class Atom(Formula):
    op: str  # one of =, !=, <, <=
    left: Term
    right: Term

    def __post_init__(self) -> None:
        if self.op not in _NEGATED_OP:
            raise ValueError(f"bad relation {self.op!r}")


@dataclass(frozen=True)
class PcEq(Formula):
    """Program-counter literal pc = location."""

    loc: str


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def __init__(self, args) -> None:
        object.__setattr__(self, "args", tuple(args))


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def __init__(self, args) -> None:
        object.__setattr__(self, "args", tuple(args))


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple
    body: Formula

    def __init__(self, vars, body) -> None:
        object.__setattr__(self, "vars", tuple(vars))
        object.__setattr__(self, "body", body)


@dataclass(frozen=True)
class Forall(Formula):
    vars: tuple
    body: Formula

    def __init__(self, vars, body) -> None:
        object.__setattr__(self, "vars", tuple(vars))
        object.__setattr__(self, "body", body)


def conj(*parts: Formula) -> Formula:
    """n-ary conjunction, flattening nested And and dropping TRUE."""
    out = []
    for p in parts:
        if p is TRUE or p == TRUE:
            continue
        if isinstance(p, And):
            out.extend(p.args)
        else:
            out.append(p)
    if any(p == FALSE for p in out):
        return FALSE
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(out)


def disj(*parts: Formula) -> Formula:
    out = []
    for p in parts:
        if p == FALSE:
            continue
        if isinstance(p, Or):
            out.extend(p.args)
        else:
            out.append(p)
    if any(p == TRUE for p in out):
        return TRUE
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(out)


def eq(l: Term, r: Term) -> Formula:
    return Atom("=", l, r)


def neq(l: Term, r: Term) -> Formula:
    return Atom("!=", l, r)


def lt(l: Term, r: Term) -> Formula:
    return Atom("<", l, r)


def le(l: Term, r: Term) -> Formula:
    return Atom("<=", l, r)


def add(l: Term, r: Term) -> Term:
    if isinstance(r, Num) and r.value == 0:
        return l
    if isinstance(l, Num) and l.value == 0:
        return r
    if isinstance(l, Num) and isinstance(r, Num):
        return Num(l.value + r.value)
    return Add(l, r)


def sub(l: Term, r: Term) -> Term:
    if isinstance(r, Num) and r.value == 0:
        return l
    if isinstance(l, Num) and isinstance(r, Num):
        return Num(l.value - r.value)
    return Sub(l, r)


# ---------------------------------------------------------------------------
# Traversal helpers


def subterms(t: Term) -> Iterator[Term]:
    """All subterms of t, t first (does not descend into Ite conditions)."""
    yield t
    if isinstance(t, (Add, Sub)):
        yield from subterms(t.left)
        yield from subterms(t.right)
    elif isinstance(t, Mul):
        yield from subterms(t.arg)
    elif isinstance(t, App):
        yield from subterms(t.arg)
        if isinstance(t.fn, Store):
            yield from _store_subterms(t.fn)
    elif isinstance(t, Ite):
        yield from subterms(t.then)
        yield from subterms(t.other)
    elif isinstance(t, Div):
        yield from subterms(t.arg)


def _store_subterms(s: Store) -> Iterator[Term]:
    yield from subterms(s.idx)
    yield from subterms(s.val)
    if isinstance(s.arr, Store):
        yield from _store_subterms(s.arr)


def terms_of(f: Formula) -> Iterator[Term]:
    """Top-level terms appearing in atoms of f (including Ite conditions)."""
    if isinstance(f, Atom):
        yield f.left
        yield f.right
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from terms_of(a)
    elif isinstance(f, Not):
        yield from terms_of(f.arg)
    elif isinstance(f, (Exists, Forall)):
        yield from terms_of(f.body)


def _walk_terms(f: Formula) -> Iterator[Term]:
    for t in terms_of(f):
        for s in subterms(t):
            yield s
            if isinstance(s, Ite):
                yield from _walk_terms(s.cond)


def free_vars_term(t: Term) -> set:
    out = set()
    for s in subterms(t):
        if isinstance(s, Var):
            out.add(s.name)
        elif isinstance(s, Ite):
            out |= free_vars(s.cond)
    return out


def free_vars(f: Formula) -> set:
    if isinstance(f, (BoolVal, PcEq)):
        return set()
    if isinstance(f, Atom):
        return free_vars_term(f.left) | free_vars_term(f.right)
    if isinstance(f, (And, Or)):
        out = set()
        for a in f.args:
            out |= free_vars(a)
        return out
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - set(f.vars)
    raise TypeError(f"not a formula: {f!r}")


def symbols_of(f: Formula) -> set:
    """Names of free constants occurring in f."""
    return {s.name for s in _walk_terms(f) if isinstance(s, Sym)}


def arrays_of(f: Formula) -> set:
    """Names of arrays applied somewhere in f (including under stores)."""
    out = set()
    for s in _walk_terms(f):
        if isinstance(s, App):
            fn = s.fn
            while isinstance(fn, Store):
                fn = fn.arr
            out.add(fn)
    return out


def locations_of(f: Formula) -> set:
    out = set()

    def walk(g: Formula) -> None:
        if isinstance(g, PcEq):
            out.add(g.loc)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (Exists, Forall)):
            walk(g.body)
        elif isinstance(g, Atom):
            for t in (g.left, g.right):
                for s in subterms(t):
                    if isinstance(s, Ite):
                        walk(s.cond)

    walk(f)
    return out


def bound_names(f: Formula) -> set:
    out = set()
    if isinstance(f, (Exists, Forall)):
        out |= set(f.vars)
        out |= bound_names(f.body)
    elif isinstance(f, (And, Or)):
        for a in f.args:
            out |= bound_names(a)
    elif isinstance(f, Not):
        out |= bound_names(f.arg)
    elif isinstance(f, Atom):
        for s in _walk_terms(f):
            if isinstance(s, Ite):
                out |= bound_names(s.cond)
    return out


def fresh_name(base: str, used) -> str:
    """Smallest numeric-suffix variant of base not in used (deterministic)."""
    if base not in used:
        return base
    i = 1
    while f"{base}_{i}" in used:
        i += 1
    return f"{base}_{i}"


# ---------------------------------------------------------------------------
# Substitution


def substitute_term(t: Term, binding: Mapping[str, Term]) -> Term:
    if not binding:
        return t
    if isinstance(t, Var):
        return binding.get(t.name, t)
    if isinstance(t, (Num, Sym)):
        return t
    if isinstance(t, Add):
        l, r = substitute_term(t.left, binding), substitute_term(t.right, binding)
        return t if l is t.left and r is t.right else Add(l, r)
    if isinstance(t, Sub):
        l, r = substitute_term(t.left, binding), substitute_term(t.right, binding)
        return t if l is t.left and r is t.right else Sub(l, r)
    if isinstance(t, Mul):
        a = substitute_term(t.arg, binding)
        return t if a is t.arg else Mul(t.coeff, a)
    if isinstance(t, App):
        a = substitute_term(t.arg, binding)
        fn = _substitute_store(t.fn, binding) if isinstance(t.fn, Store) else t.fn
        return t if a is t.arg and fn is t.fn else App(fn, a)
    if isinstance(t, Ite):
        c = _substitute(t.cond, binding)
        a = substitute_term(t.then, binding)
        b = substitute_term(t.other, binding)
        return t if c is t.cond and a is t.then and b is t.other else Ite(c, a, b)
    if isinstance(t, Div):
        a = substitute_term(t.arg, binding)
        return t if a is t.arg else Div(a, t.divisor)
    raise TypeError(f"not a term: {t!r}")


def _substitute_store(s: Store, binding: Mapping[str, Term]) -> Store:
    arr = _substitute_store(s.arr, binding) if isinstance(s.arr, Store) else s.arr
    return Store(arr, substitute_term(s.idx, binding), substitute_term(s.val, binding))


def _substitute(f: Formula, binding: Mapping[str, Term]) -> Formula:
    if not binding:
        return f
    if isinstance(f, (BoolVal, PcEq)):
        return f
    if isinstance(f, Atom):
        l = substitute_term(f.left, binding)
        r = substitute_term(f.right, binding)
        return f if l is f.left and r is f.right else Atom(f.op, l, r)
    if isinstance(f, And):
        args = tuple(_substitute(a, binding) for a in f.args)
        return f if all(x is y for x, y in zip(args, f.args)) else And(args)
    if isinstance(f, Or):
        args = tuple(_substitute(a, binding) for a in f.args)
        return f if all(x is y for x, y in zip(args, f.args)) else Or(args)
    if isinstance(f, Not):
        a = _substitute(f.arg, binding)
        return f if a is f.arg else Not(a)
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in binding.items() if k not in f.vars}
        if not inner:
            return f
        # Rename bound vars that would capture free vars of the replacement terms.
        clash = set()
        for v in inner.values():
            clash |= free_vars_term(v)
        body, newvars = f.body, list(f.vars)
        taken = clash | set(newvars) | free_vars(f.body) | set(inner.keys())
        renamed = {}
        for i, v in enumerate(newvars):
            if v in clash:
                nv = fresh_name(v, taken)
                taken.add(nv)
                renamed[v] = Var(nv)
                newvars[i] = nv
        if renamed:
            body = _substitute(body, renamed)
        body = _substitute(body, inner)
        cls = Exists if isinstance(f, Exists) else Forall
        return cls(newvars, body)
    raise TypeError(f"not a formula: {f!r}")


def substitute(f: Formula, binding: Mapping[str, Term]) -> Formula:
    """Simultaneous capture-avoiding substitution of index variables.

    Every key must be a free variable of f; unknown keys are rejected.
    """
    if not binding:
        return f
    fv = free_vars(f)
    unknown = set(binding) - fv
    if unknown:
        raise ValueError(f"binding for variables not free in formula: {sorted(unknown)}")
    return _substitute(f, binding)


def substitute_free(f: Formula, binding: Mapping[str, Term]) -> Formula:
    """Like substitute, but silently ignores keys that are not free in f."""
    fv = free_vars(f)
    binding = {k: v for k, v in binding.items() if k in fv}
    return _substitute(f, binding)


def replace_symbols(f: Formula, mapping: Mapping[str, Term]) -> Formula:
    """Replace free constants by terms (used by preimage/composition).

    Bound variables never collide with constants (separate namespaces), but
    quantified bodies are still rewritten; binder names clashing with free
    variables of the replacement terms are renamed first.
    """

    def term(t: Term) -> Term:
        if isinstance(t, Sym):
            return mapping.get(t.name, t)
        if isinstance(t, (Num, Var)):
            return t
        if isinstance(t, Add):
            return Add(term(t.left), term(t.right))
        if isinstance(t, Sub):
            return Sub(term(t.left), term(t.right))
        if isinstance(t, Mul):
            return Mul(t.coeff, term(t.arg))
        if isinstance(t, App):
            fn = store(t.fn) if isinstance(t.fn, Store) else t.fn
            return App(fn, term(t.arg))
        if isinstance(t, Ite):
            return Ite(form(t.cond), term(t.then), term(t.other))
        if isinstance(t, Div):
            return Div(term(t.arg), t.divisor)
        raise TypeError(f"not a term: {t!r}")

    def store(s: Store) -> Store:
        arr = store(s.arr) if isinstance(s.arr, Store) else s.arr
        return Store(arr, term(s.idx), term(s.val))

    repl_vars = set()
    for v in mapping.values():
        repl_vars |= free_vars_term(v)

    def form(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq)):
            return g
        if isinstance(g, Atom):
            return Atom(g.op, term(g.left), term(g.right))
        if isinstance(g, And):
            return And(form(a) for a in g.args)
        if isinstance(g, Or):
            return Or(form(a) for a in g.args)
        if isinstance(g, Not):
            return Not(form(g.arg))
        if isinstance(g, (Exists, Forall)):
            body, vars_ = g.body, list(g.vars)
            clash = [v for v in vars_ if v in repl_vars]
            if clash:
                taken = repl_vars | set(vars_) | free_vars(body)
                ren = {}
                for v in clash:
                    nv = fresh_name(v, taken)
                    taken.add(nv)
                    ren[v] = Var(nv)
                body = _substitute(body, ren)
                vars_ = [ren[v].name if v in ren else v for v in vars_]
            cls = Exists if isinstance(g, Exists) else Forall
            return cls(vars_, form(body))
        raise TypeError(f"not a formula: {g!r}")

    return form(f)


def replace_symbols_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    if isinstance(t, Sym):
        return mapping.get(t.name, t)
    if isinstance(t, (Num, Var)):
        return t
    if isinstance(t, Add):
        return Add(replace_symbols_term(t.left, mapping), replace_symbols_term(t.right, mapping))
    if isinstance(t, Sub):
        return Sub(replace_symbols_term(t.left, mapping), replace_symbols_term(t.right, mapping))
    if isinstance(t, Mul):
        return Mul(t.coeff, replace_symbols_term(t.arg, mapping))
    if isinstance(t, App):
        fn = _replace_symbols_store(t.fn, mapping) if isinstance(t.fn, Store) else t.fn
        return App(fn, replace_symbols_term(t.arg, mapping))
    if isinstance(t, Ite):
        return Ite(
            replace_symbols(t.cond, mapping),
            replace_symbols_term(t.then, mapping),
            replace_symbols_term(t.other, mapping),
        )
    if isinstance(t, Div):
        return Div(replace_symbols_term(t.arg, mapping), t.divisor)
    raise TypeError(f"not a term: {t!r}")


def _replace_symbols_store(s: Store, mapping: Mapping[str, Term]) -> Store:
    arr = _replace_symbols_store(s.arr, mapping) if isinstance(s.arr, Store) else s.arr
    return Store(arr, replace_symbols_term(s.idx, mapping), replace_symbols_term(s.val, mapping))


def rewrite_apps_term(t: Term, rewriter) -> Term:
    if isinstance(t, (Num, Sym, Var)):
        return t
    if isinstance(t, Add):
        return Add(rewrite_apps_term(t.left, rewriter), rewrite_apps_term(t.right, rewriter))
    if isinstance(t, Sub):
        return Sub(rewrite_apps_term(t.left, rewriter), rewrite_apps_term(t.right, rewriter))
    if isinstance(t, Mul):
        return Mul(t.coeff, rewrite_apps_term(t.arg, rewriter))
    if isinstance(t, App):
        a = rewrite_apps_term(t.arg, rewriter)
        if isinstance(t.fn, Store):
            return App(_rewrite_apps_store(t.fn, rewriter), a)
        return rewriter(t.fn, a)
    if isinstance(t, Ite):
        return Ite(
            rewrite_apps(t.cond, rewriter),
            rewrite_apps_term(t.then, rewriter),
            rewrite_apps_term(t.other, rewriter),
        )
    if isinstance(t, Div):
        return Div(rewrite_apps_term(t.arg, rewriter), t.divisor)
    raise TypeError(f"not a term: {t!r}")


def _rewrite_apps_store(s: Store, rewriter) -> Store:
    arr = _rewrite_apps_store(s.arr, rewriter) if isinstance(s.arr, Store) else s.arr
    return Store(arr, rewrite_apps_term(s.idx, rewriter), rewrite_apps_term(s.val, rewriter))


def rename_bound(f: Formula, avoid) -> Formula:
    """Rename quantified variables whose names fall in avoid."""
    avoid = set(avoid)

    def go(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq, Atom)):
            return g
        if isinstance(g, And):
            return And(go(a) for a in g.args)
        if isinstance(g, Or):
            return Or(go(a) for a in g.args)
        if isinstance(g, Not):
            return Not(go(g.arg))
        if isinstance(g, (Exists, Forall)):
            body = go(g.body)
            vars_ = list(g.vars)
            clash = [v for v in vars_ if v in avoid]
            if clash:
                taken = avoid | set(vars_) | free_vars(body) | bound_names(body)
                ren = {}
                for v in clash:
                    nv = fresh_name(v, taken)
                    taken.add(nv)
                    ren[v] = Var(nv)
                body = _substitute(body, ren)
                vars_ = [ren[v].name if v in ren else v for v in vars_]
            cls = Exists if isinstance(g, Exists) else Forall
            return cls(vars_, body)
        raise TypeError(f"not a formula: {g!r}")

    return go(f)


def rewrite_apps(f: Formula, rewriter) -> Formula:
    """Rebuild f, passing every App(name, idx) through rewriter(name, idx).

    The rewriter receives the already-rewritten index term and returns a Term.
    Store-applied functions are left to expand_writes.
    """

    def term(t: Term) -> Term:
        if isinstance(t, (Num, Sym, Var)):
            return t
        if isinstance(t, Add):
            return Add(term(t.left), term(t.right))
        if isinstance(t, Sub):
            return Sub(term(t.left), term(t.right))
        if isinstance(t, Mul):
            return Mul(t.coeff, term(t.arg))
        if isinstance(t, App):
            a = term(t.arg)
            if isinstance(t.fn, Store):
                return App(store(t.fn), a)
            return rewriter(t.fn, a)
        if isinstance(t, Ite):
            return Ite(form(t.cond), term(t.then), term(t.other))
        if isinstance(t, Div):
            return Div(term(t.arg), t.divisor)
        raise TypeError(f"not a term: {t!r}")

    def store(s: Store) -> Store:
        arr = store(s.arr) if isinstance(s.arr, Store) else s.arr
        return Store(arr, term(s.idx), term(s.val))

    def form(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq)):
            return g
        if isinstance(g, Atom):
            return Atom(g.op, term(g.left), term(g.right))
        if isinstance(g, And):
            return And(form(a) for a in g.args)
        if isinstance(g, Or):
            return Or(form(a) for a in g.args)
        if isinstance(g, Not):
            return Not(form(g.arg))
        if isinstance(g, (Exists, Forall)):
            cls = Exists if isinstance(g, Exists) else Forall
            return cls(g.vars, form(g.body))
        raise TypeError(f"not a formula: {g!r}")

    return form(f)


# ---------------------------------------------------------------------------
# Sentence classification


class SentenceClass(enum.IntEnum):
    """Quantifier-prefix class; ordered Ground < Sigma01 < Sigma02 < Other."""

    GROUND = 0
    SIGMA01 = 1
    SIGMA02 = 2
    OTHER = 3


_QF, _E, _A, _EA, _OTHER = "qf", "e", "a", "ea", "other"


def _prefix_pattern(f: Formula) -> str:
    if isinstance(f, (BoolVal, Atom, PcEq)):
        return _QF
    if isinstance(f, Not):
        # Quantifiers are not pulled through negation.
        return _QF if _prefix_pattern(f.arg) == _QF else _OTHER
    if isinstance(f, (And, Or)):
        pats = [_prefix_pattern(a) for a in f.args]
        if any(p == _OTHER for p in pats):
            return _OTHER
        has_e = any(p in (_E, _EA) for p in pats)
        has_a = any(p in (_A, _EA) for p in pats)
        if has_e and has_a:
            return _EA
        if has_e:
            return _E
        if has_a:
            return _A
        return _QF
    if isinstance(f, Exists):
        p = _prefix_pattern(f.body)
        if p in (_QF, _E):
            return _E
        if p in (_A, _EA):
            return _EA
        return _OTHER
    if isinstance(f, Forall):
        p = _prefix_pattern(f.body)
        if p in (_QF, _A):
            return _A
        return _OTHER
    raise TypeError(f"not a formula: {f!r}")


def classify(f: Formula) -> SentenceClass:
    """Quantifier class after pulling quantifiers out of positive structure only."""
    p = _prefix_pattern(f)
    if p == _QF:
        return SentenceClass.GROUND
    if p == _E:
        return SentenceClass.SIGMA01
    if p in (_A, _EA):
        return SentenceClass.SIGMA02
    return SentenceClass.OTHER


def negate(f: Formula) -> Formula:
    """Negation pushed to atoms (NNF); quantifiers flip."""
    if isinstance(f, BoolVal):
        return FALSE if f.value else TRUE
    if isinstance(f, Atom):
        if f.op == "=":
            return Atom("!=", f.left, f.right)
        if f.op == "!=":
            return Atom("=", f.left, f.right)
        if f.op == "<":
            return Atom("<=", f.right, f.left)
        return Atom("<", f.right, f.left)
    if isinstance(f, PcEq):
        return Not(f)
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, And):
        return Or(negate(a) for a in f.args)
    if isinstance(f, Or):
        return And(negate(a) for a in f.args)
    if isinstance(f, Exists):
        return Forall(f.vars, negate(f.body))
    if isinstance(f, Forall):
        return Exists(f.vars, negate(f.body))
    raise TypeError(f"not a formula: {f!r}")


def prenex_positive(f: Formula):
    """Float positively-bound existentials into one outer prefix.

    Only sound for the exists-forall fragment (no positive existential under
    a universal); binder collisions are renamed with deterministic suffixes.
    Returns (prefix variable names, matrix).
    """
    taken = set(free_vars(f))
    prefix: list = []

    def go(g: Formula) -> Formula:
        if isinstance(g, Exists):
            ren = {}
            body = g.body
            for v in g.vars:
                nv = fresh_name(v, taken)
                taken.add(nv)
                prefix.append(nv)
                if nv != v:
                    ren[v] = Var(nv)
            if ren:
                body = _substitute(body, ren)
            return go(body)
        if isinstance(g, And):
            return And(go(a) for a in g.args)
        if isinstance(g, Or):
            return Or(go(a) for a in g.args)
        return g

    matrix = go(f)
    return prefix, matrix


# ---------------------------------------------------------------------------
# Write expansion


def contains_store(f: Formula) -> bool:
    return any(isinstance(s, App) and isinstance(s.fn, Store) for s in _walk_terms(f))


def expand_writes_term(t: Term) -> Term:
    """Eliminate store applications: store(a,i,x)(j) -> ite(j=i, x, a(j)).

    Nested stores expand outermost-first; the result contains no store
    applied to an index.
    """
    if isinstance(t, (Var, Num, Sym)):
        return t
    if isinstance(t, Add):
        return Add(expand_writes_term(t.left), expand_writes_term(t.right))
    if isinstance(t, Sub):
        return Sub(expand_writes_term(t.left), expand_writes_term(t.right))
    if isinstance(t, Mul):
        return Mul(t.coeff, expand_writes_term(t.arg))
    if isinstance(t, App):
        arg = expand_writes_term(t.arg)
        if isinstance(t.fn, Store):
            s = t.fn
            inner = App(s.arr, arg)
            return Ite(
                eq(arg, expand_writes_term(s.idx)),
                expand_writes_term(s.val),
                expand_writes_term(inner),
            )
        return App(t.fn, arg)
    if isinstance(t, Ite):
        return Ite(expand_writes(t.cond), expand_writes_term(t.then), expand_writes_term(t.other))
    if isinstance(t, Div):
        return Div(expand_writes_term(t.arg), t.divisor)
    raise TypeError(f"not a term: {t!r}")


def expand_writes(f: Formula) -> Formula:
    if isinstance(f, (BoolVal, PcEq)):
        return f
    if isinstance(f, Atom):
        return Atom(f.op, expand_writes_term(f.left), expand_writes_term(f.right))
    if isinstance(f, And):
        return And(expand_writes(a) for a in f.args)
    if isinstance(f, Or):
        return Or(expand_writes(a) for a in f.args)
    if isinstance(f, Not):
        return Not(expand_writes(f.arg))
    if isinstance(f, Exists):
        return Exists(f.vars, expand_writes(f.body))
    if isinstance(f, Forall):
        return Forall(f.vars, expand_writes(f.body))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Linear views and simplification


def linear_view(t: Term) -> Optional[tuple]:
    """Write t as a linear combination (coeffs, constant).

    Keys of coeffs are Var/Sym/App/Div nodes treated opaquely (App and Div
    only when their own arguments are store/ite-free).  Returns None when t
    contains an Ite or a store application.
    """
    coeffs: dict = {}

    def go(u: Term, k: int) -> bool:
        nonlocal const
        if isinstance(u, Num):
            const += k * u.value
            return True
        if isinstance(u, (Var, Sym)):
            coeffs[u] = coeffs.get(u, 0) + k
            return True
        if isinstance(u, Add):
            return go(u.left, k) and go(u.right, k)
        if isinstance(u, Sub):
            return go(u.left, k) and go(u.right, -k)
        if isinstance(u, Mul):
            return go(u.arg, k * u.coeff)
        if isinstance(u, (App, Div)):
            if isinstance(u, App) and isinstance(u.fn, Store):
                return False
            if _opaque_ok(u):
                coeffs[u] = coeffs.get(u, 0) + k
                return True
            return False
        return False

    def _opaque_ok(u: Term) -> bool:
        return all(not isinstance(s, Ite) for s in subterms(u)) and all(
            not (isinstance(s, App) and isinstance(s.fn, Store)) for s in subterms(u)
        )

    const = 0
    if not go(t, 1):
        return None
    return ({k: v for k, v in coeffs.items() if v != 0}, const)


def terms_equal(l: Term, r: Term) -> Optional[bool]:
    """Decide l = r by linear normalization; None when undecidable."""
    lv, rv = linear_view(l), linear_view(r)
    if lv is None or rv is None:
        return True if l == r else None
    (lc, lk), (rc, rk) = lv, rv
    if lc == rc:
        return lk == rk
    return None


def _decide_atom(op: str, l: Term, r: Term) -> Optional[bool]:
    lv, rv = linear_view(l), linear_view(r)
    if lv is None or rv is None:
        if l == r:
            return {"=": True, "!=": False, "<": False, "<=": True}[op]
        return None
    (lc, lk), (rc, rk) = lv, rv
    diff = dict(lc)
    for k, v in rc.items():
        diff[k] = diff.get(k, 0) - v
        if diff[k] == 0:
            del diff[k]
    if diff:
        return None
    d = lk - rk  # l - r = d
    return {"=": d == 0, "!=": d != 0, "<": d < 0, "<=": d <= 0}[op]


def simplify_term(t: Term) -> Term:
    if isinstance(t, (Var, Num, Sym)):
        return t
    if isinstance(t, Add):
        return add(simplify_term(t.left), simplify_term(t.right))
    if isinstance(t, Sub):
        return sub(simplify_term(t.left), simplify_term(t.right))
    if isinstance(t, Mul):
        a = simplify_term(t.arg)
        if t.coeff == 0:
            return Num(0)
        if t.coeff == 1:
            return a
        if isinstance(a, Num):
            return Num(t.coeff * a.value)
        return Mul(t.coeff, a)
    if isinstance(t, App):
        fn = t.fn
        if isinstance(fn, Store):
            fn = _simplify_store(fn)
        return App(fn, simplify_term(t.arg))
    if isinstance(t, Ite):
        c = simplify(t.cond)
        a, b = simplify_term(t.then), simplify_term(t.other)
        if c == TRUE:
            return a
        if c == FALSE:
            return b
        if terms_equal(a, b) is True:
            return a
        return Ite(c, a, b)
    if isinstance(t, Div):
        a = simplify_term(t.arg)
        if isinstance(a, Num) and a.value >= 0:
            return Num(a.value // t.divisor)
        if t.divisor == 1:
            return a
        return Div(a, t.divisor)
    raise TypeError(f"not a term: {t!r}")


def _simplify_store(s: Store) -> Store:
    arr = _simplify_store(s.arr) if isinstance(s.arr, Store) else s.arr
    return Store(arr, simplify_term(s.idx), simplify_term(s.val))


def _one_point(vars_: tuple, parts: tuple):
    """Find an existential one-point binding v = t (t free of v) in parts."""
    vset = set(vars_)
    for i, p in enumerate(parts):
        if not (isinstance(p, Atom) and p.op == "="):
            continue
        for cand, other in ((p.left, p.right), (p.right, p.left)):
            if isinstance(cand, Var) and cand.name in vset:
                if cand.name not in free_vars_term(other):
                    return cand.name, other, i
    return None


def simplify(f: Formula) -> Formula:
    """Equivalence-preserving cleanup: folding, decided ites and literals,
    flattening, duplicate/complementary conjunct handling, unused binders,
    and the existential one-point rule."""
    if isinstance(f, BoolVal) or isinstance(f, PcEq):
        return f
    if isinstance(f, Atom):
        l, r = simplify_term(f.left), simplify_term(f.right)
        dec = _decide_atom(f.op, l, r)
        if dec is not None:
            return TRUE if dec else FALSE
        return Atom(f.op, l, r)
    if isinstance(f, Not):
        a = simplify(f.arg)
        if a == TRUE:
            return FALSE
        if a == FALSE:
            return TRUE
        if isinstance(a, Not):
            return a.arg
        if isinstance(a, Atom):
            return simplify(negate(a))
        return Not(a)
    if isinstance(f, And):
        flat = []
        seen = set()
        for a in f.args:
            s = simplify(a)
            if s == FALSE:
                return FALSE
            if s == TRUE:
                continue
            items = s.args if isinstance(s, And) else (s,)
            for it in items:
                if it not in seen:
                    seen.add(it)
                    flat.append(it)
        for it in flat:
            if negate(it) in seen or Not(it) in seen:
                return FALSE
            if isinstance(it, PcEq):
                for other in flat:
                    if isinstance(other, PcEq) and other.loc != it.loc:
                        return FALSE
        if not flat:
            return TRUE
        if len(flat) == 1:
            return flat[0]
        return And(flat)
    if isinstance(f, Or):
        flat = []
        seen = set()
        for a in f.args:
            s = simplify(a)
            if s == TRUE:
                return TRUE
            if s == FALSE:
                continue
            items = s.args if isinstance(s, Or) else (s,)
            for it in items:
                if it not in seen:
                    seen.add(it)
                    flat.append(it)
        for it in flat:
            if negate(it) in seen or Not(it) in seen:
                return TRUE
        if not flat:
            return FALSE
        if len(flat) == 1:
            return flat[0]
        return Or(flat)
    if isinstance(f, Exists):
        body = simplify(f.body)
        if isinstance(body, BoolVal):
            return body
        fv = free_vars(body)
        vars_ = tuple(v for v in f.vars if v in fv)
        if not vars_:
            return body
        parts = body.args if isinstance(body, And) else (body,)
        hit = _one_point(vars_, parts)
        if hit is not None:
            name, repl, idx = hit
            rest = conj(*(p for j, p in enumerate(parts) if j != idx))
            rest = substitute_free(rest, {name: repl})
            remaining = tuple(v for v in vars_ if v != name)
            return simplify(Exists(remaining, rest) if remaining else rest)
        if isinstance(body, Exists) and not set(vars_) & set(body.vars):
            return Exists(vars_ + body.vars, body.body)
        return Exists(vars_, body)
    if isinstance(f, Forall):
        body = simplify(f.body)
        if isinstance(body, BoolVal):
            return body
        fv = free_vars(body)
        vars_ = tuple(v for v in f.vars if v in fv)
        if not vars_:
            return body
        if isinstance(body, Forall) and not set(vars_) & set(body.vars):
            return Forall(vars_ + body.vars, body.body)
        return Forall(vars_, body)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Alpha-equality (bound names ignored)


def alpha_key(f: Formula, env: Optional[dict] = None) -> object:
    """Hashable key invariant under renaming of bound variables."""
    env = env or {}

    def term(t: Term):
        if isinstance(t, Var):
            return ("v", env.get(t.name, t.name))
        if isinstance(t, Num):
            return ("n", t.value)
        if isinstance(t, Sym):
            return ("s", t.name)
        if isinstance(t, Add):
            return ("+", term(t.left), term(t.right))
        if isinstance(t, Sub):
            return ("-", term(t.left), term(t.right))
        if isinstance(t, Mul):
            return ("*", t.coeff, term(t.arg))
        if isinstance(t, App):
            return ("app", store(t.fn) if isinstance(t.fn, Store) else t.fn, term(t.arg))
        if isinstance(t, Ite):
            return ("ite", alpha_key(t.cond, env), term(t.then), term(t.other))
        if isinstance(t, Div):
            return ("div", term(t.arg), t.divisor)
        raise TypeError(repr(t))

    def store(s: Store):
        return ("store", store(s.arr) if isinstance(s.arr, Store) else s.arr, term(s.idx), term(s.val))

    if isinstance(f, BoolVal):
        return ("bool", f.value)
    if isinstance(f, PcEq):
        return ("pc", f.loc)
    if isinstance(f, Atom):
        return ("atom", f.op, term(f.left), term(f.right))
    if isinstance(f, And):
        return ("and",) + tuple(alpha_key(a, env) for a in f.args)
    if isinstance(f, Or):
        return ("or",) + tuple(alpha_key(a, env) for a in f.args)
    if isinstance(f, Not):
        return ("not", alpha_key(f.arg, env))
    if isinstance(f, (Exists, Forall)):
        tag = "ex" if isinstance(f, Exists) else "fa"
        inner = dict(env)
        base = len(env)
        for i, v in enumerate(f.vars):
            inner[v] = f"#{base + i}"
        return (tag, len(f.vars), alpha_key(f.body, inner))
    raise TypeError(repr(f))


def alpha_equal(f: Formula, g: Formula) -> bool:
    return alpha_key(f) == alpha_key(g)


# ---------------------------------------------------------------------------
# Printing (shared specification syntax)


def to_sexpr(x) -> str:
    if isinstance(x, Var) or isinstance(x, Sym):
        return x.name
    if isinstance(x, Num):
        return str(x.value) if x.value >= 0 else f"(- 0 {-x.value})"
    if isinstance(x, Add):
        return f"(+ {to_sexpr(x.left)} {to_sexpr(x.right)})"
    if isinstance(x, Sub):
        return f"(- {to_sexpr(x.left)} {to_sexpr(x.right)})"
    if isinstance(x, Mul):
        return f"(* {x.coeff} {to_sexpr(x.arg)})"
    if isinstance(x, App):
        return f"(select {to_sexpr(x.fn)} {to_sexpr(x.arg)})"
    if isinstance(x, Store):
        return f"(store {to_sexpr(x.arr)} {to_sexpr(x.idx)} {to_sexpr(x.val)})"
    if isinstance(x, Ite):
        return f"(ite {to_sexpr(x.cond)} {to_sexpr(x.then)} {to_sexpr(x.other)})"
    if isinstance(x, Div):
        return f"(div {to_sexpr(x.arg)} {x.divisor})"
    if isinstance(x, BoolVal):
        return "true" if x.value else "false"
    if isinstance(x, Atom):
        if x.op == "!=":
            return f"(not (= {to_sexpr(x.left)} {to_sexpr(x.right)}))"
        return f"({x.op} {to_sexpr(x.left)} {to_sexpr(x.right)})"
    if isinstance(x, PcEq):
        return f"(loc {x.loc})"
    if isinstance(x, And):
        return "(and " + " ".join(to_sexpr(a) for a in x.args) + ")" if x.args else "true"
    if isinstance(x, Or):
        return "(or " + " ".join(to_sexpr(a) for a in x.args) + ")" if x.args else "false"
    if isinstance(x, Not):
        return f"(not {to_sexpr(x.arg)})"
    if isinstance(x, Exists):
        return f"(exists ({' '.join(x.vars)}) {to_sexpr(x.body)})"
    if isinstance(x, Forall):
        return f"(forall ({' '.join(x.vars)}) {to_sexpr(x.body)})"
    if isinstance(x, str):
        return x
    raise TypeError(f"cannot print {x!r}")
