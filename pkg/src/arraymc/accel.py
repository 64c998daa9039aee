"""Loop acceleration: recognizing local self-loop assignments and building
the exact exists-forall transition covering any positive number of
iterations.

A self-loop qualifies when exactly one constant steps by a fixed amount,
every array is either untouched or written at a single cell selected by an
affine function of the counter, and the guard reads arrays only through that
selected cell or through idle constants.  The accelerated transition
existentially quantifies the iteration count, universally constrains the
guard along the iteration window, and rewrites each array as a case split
between freshly written cells and the original contents.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import terms as T
from .program import LAMBDA_VAR, Program, Transition, TransitionKind, compose, make_transition
from .smt import SatResult, SolverClient, check_sat
from .terms import (
    Add, And, App, Atom, Div, Formula, Ite, Mul, Num, Sub, Sym, Term, Var,
    conj, disj, eq, le, lt, negate, neq, simplify,
)

# Reserved names for variables introduced by acceleration (user symbols
# cannot start with an underscore).
ITER_VAR = "_n"
SWEEP_VAR = "_z"


class Flavor(enum.Enum):
    SIMPLE = "simple"
    SIMPLE_PLUS = "simple+"
    GENERAL = "general"


@dataclass(frozen=True)
class IteratorSpec:
    """Single-counter iterator x -> x + step with closed form x + step*y."""

    step: int

    def step_term(self, x: Term) -> Term:
        return _shift(x, self.step)

    def closed_form(self, x: Term, y: Term) -> Term:
        if self.step == 1:
            return Add(x, y)
        if self.step == -1:
            return Sub(x, y)
        if self.step > 0:
            return Add(x, Mul(self.step, y))
        return Sub(x, Mul(-self.step, y))

    def unfold(self, x: Term, n: int) -> Term:
        out = x
        for _ in range(n):
            out = self.step_term(out)
        return out


@dataclass(frozen=True)
class SelectorSpec:
    """Selector kappa(x) = eps*x + base with the iteration-count inverse.

    eps is +-1; base may mention idle constants but not the counter.
    """

    eps: int
    base: Term
    step: int

    def kappa(self, x: Term) -> Term:
        if self.eps == 1:
            return T.simplify_term(Add(x, self.base))
        return T.simplify_term(Sub(self.base, x))

    def iota(self, x: Term, z: Term) -> Term:
        # z = eps*(x + step*y) + base  =>  y = (z - base - eps*x) / (eps*step)
        pre = Sub(Sub(z, self.base), x) if self.eps == 1 else Add(Sub(z, self.base), x)
        m = self.eps * self.step
        if m == 1:
            return T.simplify_term(pre)
        if m == -1:
            return T.simplify_term(Sub(Num(0), pre))
        if m > 0:
            return Div(T.simplify_term(pre), m)
        return Div(T.simplify_term(Sub(Num(0), pre)), -m)


def _neg_of(x: Term) -> Term:
    return Sub(Num(0), x)


def _shift(x: Term, k: int) -> Term:
    if k >= 0:
        return Add(x, Num(k))
    return Sub(x, Num(-k))


def _lin_to_term(coeffs: dict, const: int) -> Term:
    out: Optional[Term] = Num(const) if const != 0 else None
    for key in sorted(coeffs, key=lambda k: getattr(k, "name", str(k))):
        c = coeffs[key]
        piece = key if c == 1 else Mul(c, key)
        out = piece if out is None else Add(out, piece)
    return out if out is not None else Num(0)


# Shipped iterator/selector repository; recognition derives concrete
# selectors, these entries pin down the laws that are checked by SMT.
REPOSITORY: List[Tuple[IteratorSpec, List[SelectorSpec]]] = []
for _step in (1, -1, 2, -2, 3, -3):
    _sels = [SelectorSpec(eps=1, base=Num(0), step=_step)]
    if abs(_step) == 1:
        _sels.append(SelectorSpec(eps=1, base=Sym("_b"), step=_step))
        _sels.append(SelectorSpec(eps=-1, base=Sym("_b"), step=_step))
    else:
        _sels.append(SelectorSpec(eps=-1, base=Sym("_b"), step=_step))
    REPOSITORY.append((IteratorSpec(_step), _sels))


@dataclass(frozen=True)
class RecognizedLoop:
    """Shape evidence produced by recognize and consumed by accelerate."""

    flavor: Flavor
    counter: str
    iterator: IteratorSpec
    idle: Tuple[str, ...]
    selectors: Dict[str, SelectorSpec]
    writes: Dict[str, Term]  # array -> written value (absent = identity)


def _match_single_write(arr: str, lam: str, body: Term) -> Optional[Tuple[Term, Term]]:
    """Match ite(j = w, val, arr(j)); returns (w, val)."""
    if not isinstance(body, Ite):
        return None
    if body.other != App(arr, Var(lam)):
        return None
    cond = body.cond
    if not (isinstance(cond, Atom) and cond.op == "="):
        return None
    if cond.left == Var(lam):
        w = cond.right
    elif cond.right == Var(lam):
        w = cond.left
    else:
        return None
    if lam in T.free_vars_term(w) or lam in T.free_vars_term(body.then):
        return None
    return w, body.then


def _collect_reads(formulas: Sequence[Formula], value_terms: Sequence[Term]) -> Optional[Dict[str, List[Term]]]:
    """Array name -> list of read index terms; None if stores/nesting appear."""
    reads: Dict[str, List[Term]] = {}

    def from_term(t: Term) -> bool:
        for s in T.subterms(t):
            if isinstance(s, (Ite, Div)):
                return False
            if isinstance(s, App):
                if isinstance(s.fn, T.Store):
                    return False
                reads.setdefault(s.fn, []).append(s.arg)
        return True

    def from_formula(f: Formula) -> bool:
        if isinstance(f, (T.BoolVal, T.PcEq)):
            return True
        if isinstance(f, Atom):
            return from_term(f.left) and from_term(f.right)
        if isinstance(f, (T.And, T.Or)):
            return all(from_formula(a) for a in f.args)
        if isinstance(f, T.Not):
            return from_formula(f.arg)
        return False  # quantifiers: not a ground guard

    for f in formulas:
        if not from_formula(f):
            return None
    for t in value_terms:
        if not from_term(t):
            return None
    return reads


def _lin_equal(a: Term, b: Term) -> bool:
    return T.terms_equal(a, b) is True


def _guard_conjuncts(guard: Formula) -> List[Formula]:
    if isinstance(guard, And):
        out = []
        for a in guard.args:
            out.extend(_guard_conjuncts(a))
        return out
    return [guard]


def _has_disequality(guard: Formula, l: Term, r: Term) -> bool:
    want = T.linear_view(Sub(l, r))
    if want is None:
        return False
    for c in _guard_conjuncts(guard):
        if isinstance(c, Atom) and c.op == "!=":
            got = T.linear_view(Sub(c.left, c.right))
            if got is None:
                continue
            if got == want:
                return True
            neg = ({k: -v for k, v in got[0].items()}, -got[1])
            if neg == want:
                return True
    return False


def recognize(t: Transition) -> Optional[RecognizedLoop]:
    """Shape check: is t a single-counter local self-loop assignment?"""
    if t.kind() is not TransitionKind.GROUND:
        return None
    if t.source != t.target:
        return None

    counter: Optional[str] = None
    step = 0
    idle: List[str] = []
    for c in sorted(t.const_updates):
        up = t.const_updates[c]
        if up == Sym(c):
            idle.append(c)
            continue
        lv = T.linear_view(Sub(up, Sym(c)))
        if lv is None or lv[0] or lv[1] == 0:
            return None
        if counter is not None:
            return None  # multi-counter loops are outside the repository
        counter, step = c, lv[1]
    if counter is None:
        return None

    writes: Dict[str, Tuple[Term, Term]] = {}
    for a in sorted(t.array_updates):
        lam, body = t.array_updates[a]
        if body == App(a, Var(lam)):
            continue
        m = _match_single_write(a, lam, body)
        if m is None:
            return None
        writes[a] = m

    reads = _collect_reads(
        [t.guard], [val for _, val in writes.values()] + [w for w, _ in writes.values()]
    )
    if reads is None:
        return None

    idle_set = set(idle)
    selectors: Dict[str, SelectorSpec] = {}
    for a in sorted(set(reads) | set(writes)):
        kappa_term: Optional[Term] = writes[a][0] if a in writes else None
        idle_reads: List[str] = []
        for idx in reads.get(a, []):
            if isinstance(idx, Sym) and idx.name in idle_set:
                idle_reads.append(idx.name)
                continue
            lv = T.linear_view(idx)
            if lv is None or counter not in {k.name for k in lv[0] if isinstance(k, Sym)}:
                return None  # read at a compound idle index: not local
            if kappa_term is None:
                kappa_term = idx
            elif not _lin_equal(kappa_term, idx):
                return None
        if kappa_term is None:
            kappa_term = Sym(counter)
        lv = T.linear_view(kappa_term)
        if lv is None:
            return None
        coeffs, const = lv
        eps = None
        base_coeffs = {}
        for key, cf in coeffs.items():
            if not isinstance(key, Sym):
                return None
            if key.name == counter:
                eps = cf
            elif key.name in idle_set:
                base_coeffs[key] = cf
            else:
                return None
        if eps not in (1, -1):
            return None
        base = _lin_to_term(base_coeffs, const)
        selectors[a] = SelectorSpec(eps=eps, base=base, step=step)
        if a in writes:
            for d in idle_reads:
                if not _has_disequality(t.guard, kappa_term, Sym(d)):
                    return None

    has_idle_reads = any(
        isinstance(idx, Sym) and idx.name in idle_set
        for idxs in reads.values()
        for idx in idxs
    )
    identity_sel = all(s.eps == 1 and _lin_equal(s.base, Num(0)) for s in selectors.values())
    if step == 1 and identity_sel and not has_idle_reads:
        flavor = Flavor.SIMPLE
    elif abs(step) == 1 and identity_sel:
        flavor = Flavor.SIMPLE_PLUS
    else:
        flavor = Flavor.GENERAL

    return RecognizedLoop(
        flavor=flavor,
        counter=counter,
        iterator=IteratorSpec(step),
        idle=tuple(idle),
        selectors=selectors,
        writes={a: val for a, (_, val) in writes.items()},
    )


# ---------------------------------------------------------------------------
# Accelerated transition construction


def _window(start: Term, direction: int, n: Term, j: Term) -> Formula:
    """j ranges over the cells touched in n iterations from start.

    direction +1: start <= j < start+n; direction -1: start-n < j <= start.
    """
    if direction > 0:
        return conj(le(start, j), lt(j, Add(start, n)))
    return conj(lt(Sub(start, n), j), le(j, start))


def accelerate(t: Transition, shape: RecognizedLoop, name: Optional[str] = None) -> Transition:
    """The exists-forall transition equivalent to one-or-more iterations of t."""
    if t.source != t.target:
        raise ValueError("only self-loops accelerate")
    c = shape.counter
    s = shape.iterator.step
    n = Var(ITER_VAR)
    z = Var(SWEEP_VAR)

    # Universal conjunct: the guard holds along the whole sweep.
    if abs(s) == 1:
        sweep_guard = T.replace_symbols(t.guard, {c: z})
        window = _window(Sym(c), s, n, z)
    else:
        sweep_guard = T.replace_symbols(t.guard, {c: shape.iterator.closed_form(Sym(c), z)})
        window = conj(le(Num(0), z), lt(z, n))
    ubody = disj(negate(window), sweep_guard)
    uguard = ((SWEEP_VAR,), ubody)

    const_updates: Dict[str, Term] = {c: shape.iterator.closed_form(Sym(c), n)}
    for d in shape.idle:
        const_updates[d] = Sym(d)

    array_updates: Dict[str, Tuple[str, Term]] = {}
    j = Var(LAMBDA_VAR)
    for a, val in shape.writes.items():
        sel = shape.selectors[a]
        if abs(s) == 1:
            # cell(z) = eps*(c + s*z) + base; parametrize by the cell itself
            start = T.simplify_term(Add(Sym(c), sel.base) if sel.eps == 1 else Sub(sel.base, Sym(c)))
            cond = _window(start, sel.eps * s, n, j)
            csub = T.simplify_term(Sub(j, sel.base) if sel.eps == 1 else Sub(sel.base, j))
            val_expr = T.replace_symbols_term(val, {c: csub})
        else:
            iota = sel.iota(Sym(c), j)
            cell = sel.kappa(shape.iterator.closed_form(Sym(c), iota))
            cond = conj(le(Num(0), iota), lt(iota, n), eq(j, cell))
            val_expr = T.replace_symbols_term(val, {c: shape.iterator.closed_form(Sym(c), iota)})
        array_updates[a] = (LAMBDA_VAR, Ite(cond, val_expr, App(a, j)))

    return Transition(
        name=name or f"{t.name}+",
        source=t.source,
        target=t.source,
        evars=(ITER_VAR,),
        guard=lt(Num(0), n),
        uguard=uguard,
        array_updates={
            a: array_updates.get(a, (LAMBDA_VAR, App(a, Var(LAMBDA_VAR))))
            for a in t.array_updates
        },
        const_updates={**{cc: Sym(cc) for cc in t.const_updates}, **const_updates},
        accelerated_from=t.accelerated_from or t.name,
    )


# ---------------------------------------------------------------------------
# Iterator/selector laws (SMT-checked)


def iterator_law_holds(it: IteratorSpec, n: int, client: SolverClient) -> bool:
    """Closed form agrees with n-fold unfolding (checked as unsat of a difference)."""
    x = Sym("_x0")
    lhs = it.unfold(x, n)
    rhs = it.closed_form(x, Num(n))
    return check_sat(neq(lhs, rhs), client) is SatResult.UNSAT


def verify_selector(it: IteratorSpec, sel: SelectorSpec, client: SolverClient) -> bool:
    """Validity of: z = kappa(closed_form(x, y)) implies y = iota(x, z)."""
    x, y, z = Sym("_x0"), Sym("_y0"), Sym("_z0")
    premise = eq(z, sel.kappa(it.closed_form(x, y)))
    bad = conj(premise, neq(y, sel.iota(x, z)))
    return check_sat(bad, client) is SatResult.UNSAT


def verify_repository(client: SolverClient, max_unfold: int = 5) -> None:
    """Startup self-check of every shipped iterator/selector pair."""
    for it, sels in REPOSITORY:
        for k in range(0, max_unfold + 1):
            if not iterator_law_holds(it, k, client):
                raise AssertionError(f"iterator law failed for step {it.step}, n={k}")
        for sel in sels:
            if not verify_selector(it, sel, client):
                raise AssertionError(
                    f"selector law failed for step {it.step}, eps={sel.eps}"
                )


# ---------------------------------------------------------------------------
# Preprocessing: add accelerated transitions for loop cycles


def _array_index_consts(t: Transition, consts) -> List[str]:
    """Constants used as array indexes anywhere in t (order of first use)."""
    names: List[str] = []

    def note(term: Term) -> None:
        for s in T.subterms(term):
            if isinstance(s, App) and isinstance(s.arg, Sym):
                if s.arg.name in consts and s.arg.name not in names:
                    names.append(s.arg.name)
            if isinstance(s, Ite):
                walk(s.cond)

    def walk(f: Formula) -> None:
        if isinstance(f, Atom):
            note(f.left)
            note(f.right)
        elif isinstance(f, (T.And, T.Or)):
            for a in f.args:
                walk(a)
        elif isinstance(f, T.Not):
            walk(f.arg)

    walk(t.guard)
    for _, body in t.array_updates.values():
        note(body)
    for u in t.const_updates.values():
        note(u)
    return names


def split_on_index_literals(t: Transition, consts) -> List[Transition]:
    """Case-split the guard so every pair of index constants is ordered.

    When two constants both index arrays and the guard fixes neither i=j nor
    i!=j, the transition splits into both cases; inconsistent copies are
    dropped.
    """
    idx = _array_index_consts(t, set(consts))
    pairs = [
        (a, b)
        for i, a in enumerate(idx)
        for b in idx[i + 1:]
        if not _has_order_literal(t.guard, Sym(a), Sym(b))
    ]
    if not pairs:
        return [t]
    copies = [t]
    for k, (a, b) in enumerate(pairs):
        out = []
        for tc in copies:
            for suffix, lit in (("eq", eq(Sym(a), Sym(b))), ("ne", neq(Sym(a), Sym(b)))):
                g = simplify(conj(tc.guard, lit))
                if g == T.FALSE:
                    continue
                out.append(
                    Transition(
                        name=f"{tc.name}.{suffix}",
                        source=tc.source,
                        target=tc.target,
                        evars=tc.evars,
                        guard=g,
                        uguard=tc.uguard,
                        array_updates=tc.array_updates,
                        const_updates=tc.const_updates,
                        accelerated_from=tc.accelerated_from,
                    )
                )
        copies = out
    return copies


def _has_order_literal(guard: Formula, a: Term, b: Term) -> bool:
    want = T.linear_view(Sub(a, b))
    for c in _guard_conjuncts(guard):
        if isinstance(c, Atom) and c.op in ("=", "!="):
            got = T.linear_view(Sub(c.left, c.right))
            if got is None:
                continue
            if got == want or ({k: -v for k, v in got[0].items()}, -got[1]) == want:
                return True
    return False


def preprocess(p: Program) -> Program:
    """Extend p with accelerations of its self-loops and two-step cycles."""
    added: List[Transition] = []
    names = {t.name for t in p.transitions}

    def unique(base: str) -> str:
        name = base
        i = 2
        while name in names:
            name = f"{base}{i}"
            i += 1
        names.add(name)
        return name

    self_loops = [t for t in p.transitions if t.source == t.target and not t.is_accelerated]
    for t in self_loops:
        for copy in split_on_index_literals(t, p.consts):
            shape = recognize(copy)
            if shape is not None:
                added.append(accelerate(copy, shape, name=unique(f"{copy.name}+")))

    by_loc: Dict[str, List[Transition]] = {}
    for t in self_loops:
        by_loc.setdefault(t.source, []).append(t)
    for loc, loops in sorted(by_loc.items()):
        for t1, t2 in itertools.combinations(loops, 2):
            for a, b in ((t1, t2), (t2, t1)):
                comp = compose(a, b)
                if comp is None:
                    continue
                comp = Transition(
                    name=comp.name,
                    source=comp.source,
                    target=comp.target,
                    evars=comp.evars,
                    guard=simplify(comp.guard),
                    uguard=comp.uguard,
                    array_updates={
                        arr: (lam, T.simplify_term(body))
                        for arr, (lam, body) in comp.array_updates.items()
                    },
                    const_updates={c: T.simplify_term(u) for c, u in comp.const_updates.items()},
                    accelerated_from=None,
                )
                if comp.guard == T.FALSE:
                    continue
                shape = recognize(comp)
                if shape is not None:
                    added.append(accelerate(comp, shape, name=unique(f"{comp.name}+")))
                    break

    if not added:
        return p
    return Program(
        arrays=list(p.arrays),
        consts=list(p.consts),
        locations=list(p.locations),
        init_loc=p.init_loc,
        error_loc=p.error_loc,
        transitions=list(p.transitions) + added,
    )
