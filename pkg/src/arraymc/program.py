"""Programs as guarded-assignment transition systems.

A transition is a guarded assignment between locations: an optional block of
existential index variables, a quantifier-free guard, an optional universal
guard conjunct, and functional updates for every array and constant (identity
updates are materialized at construction).  Composition and preimage are the
two symbolic operations the backward search is built on; both eliminate the
primed vocabulary by substitution so formulas stay single-vocabulary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from . import terms as T
from .terms import (
    App, Formula, Sym, Term, Var, conj, expand_writes, free_vars,
    fresh_name, simplify, substitute_free,
)

# Lambda variable used for array-update bodies; reserved (parser rejects
# leading underscores in user symbols).
LAMBDA_VAR = "_j"


class TransitionKind(enum.Enum):
    GROUND = "ground"
    SIGMA01 = "sigma01"
    SIGMA02 = "sigma02"


@dataclass(frozen=True)
class Transition:
    """Guarded assignment l -> l' with functional updates.

    guard is quantifier-free over constants, arrays and evars; uguard, when
    present, is a pair (vars, body) standing for the conjunct forall vars body.
    array_updates maps each array name to (lambda_var, body); const_updates
    maps each constant name to its update term.  accelerated_from names the
    source transition when this transition is an acceleration.
    """

    name: str
    source: str
    target: str
    evars: Tuple[str, ...]
    guard: Formula
    uguard: Optional[Tuple[Tuple[str, ...], Formula]]
    array_updates: Dict[str, Tuple[str, Term]]
    const_updates: Dict[str, Term]
    accelerated_from: Optional[str] = None

    @property
    def is_accelerated(self) -> bool:
        return self.accelerated_from is not None

    def update_at(self, arr: str, idx: Term) -> Term:
        """Value written to arr at index idx (the lambda body instantiated)."""
        lam, body = self.array_updates[arr]
        return _subst_term_var(body, lam, idx)

    def kind(self) -> TransitionKind:
        if self.uguard is not None:
            return TransitionKind.SIGMA02
        if self.evars:
            return TransitionKind.SIGMA01
        return TransitionKind.GROUND


def _subst_term_var(t: Term, var: str, repl: Term) -> Term:
    return T.substitute_term(t, {var: repl})


def kind(t: Transition) -> TransitionKind:
    return t.kind()


@dataclass
class Program:
    arrays: List[str]
    consts: List[str]
    locations: List[str]
    init_loc: str
    error_loc: str
    transitions: List[Transition] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.init_loc not in self.locations:
            raise ValueError(f"initial location {self.init_loc!r} not declared")
        if self.error_loc not in self.locations:
            raise ValueError(f"error location {self.error_loc!r} not declared")
        if self.init_loc == self.error_loc:
            raise ValueError("initial and error locations must differ")
        names = [t.name for t in self.transitions]
        if len(names) != len(set(names)):
            raise ValueError("duplicate transition names")
        for t in self.transitions:
            self._check_transition(t)

    def _check_transition(self, t: Transition) -> None:
        for loc in (t.source, t.target):
            if loc not in self.locations:
                raise ValueError(f"transition {t.name}: unknown location {loc!r}")
        known = set(self.arrays) | set(self.consts)
        used = T.symbols_of(t.guard) | T.arrays_of(t.guard)
        if t.uguard:
            used |= T.symbols_of(t.uguard[1]) | T.arrays_of(t.uguard[1])
        for _, (lam, body) in t.array_updates.items():
            used |= {s.name for s in T.subterms(body) if isinstance(s, Sym)}
            used |= {a for a in _apps_in_term(body)}
        for term in t.const_updates.values():
            used |= {s.name for s in T.subterms(term) if isinstance(s, Sym)}
            used |= {a for a in _apps_in_term(term)}
        unknown = used - known
        if unknown:
            raise ValueError(f"transition {t.name}: undeclared symbols {sorted(unknown)}")
        missing = set(self.arrays) - set(t.array_updates)
        if missing:
            raise ValueError(f"transition {t.name}: arrays without update {sorted(missing)}")
        missing = set(self.consts) - set(t.const_updates)
        if missing:
            raise ValueError(f"transition {t.name}: constants without update {sorted(missing)}")

    def transition(self, name: str) -> Transition:
        for t in self.transitions:
            if t.name == name:
                return t
        raise KeyError(name)


def _apps_in_term(t: Term) -> set:
    out = set()
    for s in T.subterms(t):
        if isinstance(s, App):
            fn = s.fn
            while isinstance(fn, T.Store):
                fn = fn.arr
            out.add(fn)
        if isinstance(s, T.Ite):
            out |= T.arrays_of(s.cond)
    return out


def make_transition(
    program_arrays,
    program_consts,
    name: str,
    source: str,
    target: str,
    guard: Formula = T.TRUE,
    evars=(),
    uguard=None,
    array_updates: Optional[Dict[str, Tuple[str, Term]]] = None,
    const_updates: Optional[Dict[str, Term]] = None,
    accelerated_from: Optional[str] = None,
) -> Transition:
    """Build a transition, filling in identity updates for untouched symbols."""
    arr_up = dict(array_updates or {})
    for a in program_arrays:
        if a not in arr_up:
            arr_up[a] = (LAMBDA_VAR, App(a, Var(LAMBDA_VAR)))
    const_up = dict(const_updates or {})
    for c in program_consts:
        if c not in const_up:
            const_up[c] = Sym(c)
    return Transition(
        name=name,
        source=source,
        target=target,
        evars=tuple(evars),
        guard=guard,
        uguard=uguard,
        array_updates=arr_up,
        const_updates=const_up,
        accelerated_from=accelerated_from,
    )


def is_identity_update(t: Transition, arr: str) -> bool:
    lam, body = t.array_updates[arr]
    return body == App(arr, Var(lam))


# ---------------------------------------------------------------------------
# Post-state substitution: rewrite a formula over the post-state of t into the
# pre-state vocabulary, replacing constants by their update terms and array
# applications by the update bodies.


def _apply_updates(f: Formula, t: Transition) -> Formula:
    f = T.rewrite_apps(f, lambda name, idx: t.update_at(name, idx))
    f = T.replace_symbols(f, {c: up for c, up in t.const_updates.items() if up != Sym(c)})
    return expand_writes(f)


def _rename_clashing(t2: Transition, taken: set) -> Transition:
    """Rename t2's evars/uguard vars away from taken (deterministic suffixes)."""
    ren: Dict[str, Term] = {}
    used = set(taken)
    new_evars = []
    for v in t2.evars:
        if v in used:
            nv = fresh_name(v, used)
            ren[v] = Var(nv)
            used.add(nv)
            new_evars.append(nv)
        else:
            used.add(v)
            new_evars.append(v)
    guard = T._substitute(t2.guard, ren) if ren else t2.guard
    uguard = t2.uguard
    if uguard is not None:
        uvars, ubody = uguard
        uren = dict(ren)
        new_uvars = []
        for v in uvars:
            if v in used:
                nv = fresh_name(v, used)
                uren[v] = Var(nv)
                used.add(nv)
                new_uvars.append(nv)
            else:
                used.add(v)
                new_uvars.append(v)
        ubody = T._substitute(ubody, uren) if uren else ubody
        uguard = (tuple(new_uvars), ubody)
    arr_up = {}
    for a, (lam, body) in t2.array_updates.items():
        arr_up[a] = (lam, T.substitute_term(body, {k: v for k, v in ren.items() if k != lam}))
    const_up = {c: T.substitute_term(u, ren) for c, u in t2.const_updates.items()}
    return replace(t2, evars=tuple(new_evars), guard=guard, uguard=uguard,
                   array_updates=arr_up, const_updates=const_up)


def compose(t1: Transition, t2: Transition) -> Optional[Transition]:
    """Sequential composition t1;t2, or None on location mismatch.

    The intermediate state is eliminated by substituting t1's updates into
    t2's guard and updates; store applications introduced on the way are
    expanded immediately.
    """
    if t1.target != t2.source:
        return None
    taken = set(t1.evars) | {LAMBDA_VAR}
    if t1.uguard:
        taken |= set(t1.uguard[0])
    t2 = _rename_clashing(t2, taken)

    guard2 = _apply_updates(t2.guard, t1)
    uguard_parts = []
    if t1.uguard is not None:
        uguard_parts.append(t1.uguard)
    if t2.uguard is not None:
        uvars, ubody = t2.uguard
        uguard_parts.append((uvars, _apply_updates(ubody, t1)))
    if len(uguard_parts) == 2:
        (v1, b1), (v2, b2) = uguard_parts
        uguard = (v1 + v2, conj(b1, b2))
    elif uguard_parts:
        uguard = uguard_parts[0]
    else:
        uguard = None

    arr_up = {}
    for a, (lam, body2) in t2.array_updates.items():
        body = T.rewrite_apps_term(body2, lambda name, idx: t1.update_at(name, idx))
        body = T.replace_symbols_term(body, {c: u for c, u in t1.const_updates.items() if u != Sym(c)})
        arr_up[a] = (lam, T.expand_writes_term(body))
    const_up = {}
    for c, u2 in t2.const_updates.items():
        u = T.rewrite_apps_term(u2, lambda name, idx: t1.update_at(name, idx))
        u = T.replace_symbols_term(u, {cc: uu for cc, uu in t1.const_updates.items() if uu != Sym(cc)})
        const_up[c] = T.expand_writes_term(u)

    return Transition(
        name=f"{t1.name}.{t2.name}",
        source=t1.source,
        target=t2.target,
        evars=t1.evars + t2.evars,
        guard=conj(t1.guard, guard2),
        uguard=uguard,
        array_updates=arr_up,
        const_updates=const_up,
        accelerated_from=None,
    )


def preimage(t: Transition, k: Formula) -> Formula:
    """States with a t-successor satisfying k.

    k must be a sentence over the state vocabulary (no free index variables).
    """
    fv = free_vars(k)
    if fv:
        raise ValueError(f"state formula has free variables: {sorted(fv)}")

    avoid = set(t.evars) | {LAMBDA_VAR}
    if t.uguard:
        avoid |= set(t.uguard[0])
    if avoid & T.bound_names(k):
        k = T.rename_bound(k, avoid)

    post = _replace_pc(k, t.target)
    post = _apply_updates(post, t)

    body = conj(t.guard, _uguard_formula(t), post)
    if t.evars:
        body = T.Exists(t.evars, body)
    return conj(T.PcEq(t.source), body)


def _uguard_formula(t: Transition) -> Formula:
    if t.uguard is None:
        return T.TRUE
    uvars, ubody = t.uguard
    return T.Forall(uvars, ubody)


def _replace_pc(f: Formula, target: str) -> Formula:
    if isinstance(f, T.PcEq):
        return T.TRUE if f.loc == target else T.FALSE
    if isinstance(f, T.And):
        return T.And(_replace_pc(a, target) for a in f.args)
    if isinstance(f, T.Or):
        return T.Or(_replace_pc(a, target) for a in f.args)
    if isinstance(f, T.Not):
        return T.Not(_replace_pc(f.arg, target))
    if isinstance(f, T.Exists):
        return T.Exists(f.vars, _replace_pc(f.body, target))
    if isinstance(f, T.Forall):
        return T.Forall(f.vars, _replace_pc(f.body, target))
    return f


def transition_formula_kind_closed(k1: TransitionKind, k2: TransitionKind) -> TransitionKind:
    """Expected kind of a composition per the closure table."""
    order = [TransitionKind.GROUND, TransitionKind.SIGMA01, TransitionKind.SIGMA02]
    return order[max(order.index(k1), order.index(k2))]
