"""Monotonic approximation of exists-forall sentences.

A universal block is weakened by instantiating its variables over a finite
set of terms; the result is an existential sentence implied by the original,
so backward-search labels only ever grow.  The default term set is the
existential prefix of the sentence itself; an extended mode also collects
the ground index terms occurring in it.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from . import terms as T
from .terms import (
    And, App, Atom, BoolVal, Div, Exists, Forall, Formula, Ite, Not, Num,
    Or, PcEq, Sym, Term, Var, classify, SentenceClass, simplify,
)


class InstantiationMode(enum.Enum):
    EVARS = "evars"
    EVARS_AND_TERMS = "terms"


class InstantiationError(ValueError):
    """No usable instantiation set (empty existential prefix)."""


class InstantiationBudget(RuntimeError):
    """The instantiation product exceeds the configured cap."""


@dataclass(frozen=True)
class InstantiationSet:
    mode: InstantiationMode
    terms: Tuple[Term, ...]


def _existential_prefix(f: Formula) -> List[str]:
    """Existential prefix after floating positive binders out."""
    prefix, _ = T.prenex_positive(f)
    return prefix


def _ground_terms(f: Formula, uvars: set) -> List[Term]:
    """Maximal arithmetic subterms free of universal variables and arrays."""
    out: List[Term] = []

    def pure(t: Term) -> bool:
        for s in T.subterms(t):
            if isinstance(s, (App, Ite, Div)):
                return False
            if isinstance(s, Var) and s.name in uvars:
                return False
        return True

    def note(t: Term) -> None:
        if pure(t):
            if not isinstance(t, Num) and t not in out:
                out.append(t)
            return
        if isinstance(t, (T.Add, T.Sub)):
            note(t.left)
            note(t.right)
        elif isinstance(t, T.Mul):
            note(t.arg)
        elif isinstance(t, App):
            note(t.arg)
        elif isinstance(t, Div):
            note(t.arg)
        elif isinstance(t, Ite):
            visit(t.cond)
            note(t.then)
            note(t.other)

    def visit(g: Formula, bound: set = frozenset()) -> None:
        if isinstance(g, Atom):
            note(g.left)
            note(g.right)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                visit(a)
        elif isinstance(g, Not):
            visit(g.arg)
        elif isinstance(g, (Exists, Forall)):
            visit(g.body)

    visit(f)
    return out


def _universal_vars(f: Formula) -> List[str]:
    out: List[str] = []

    def walk(g: Formula) -> None:
        if isinstance(g, Forall):
            out.extend(g.vars)
            walk(g.body)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Exists):
            walk(g.body)

    walk(f)
    return out


def default_set(f: Formula, mode: InstantiationMode = InstantiationMode.EVARS) -> InstantiationSet:
    """The natural instantiation set for f: its existential prefix variables,
    plus (in the extended mode) ground index terms of f."""
    evars = _existential_prefix(f)
    terms: List[Term] = [Var(v) for v in evars]
    if mode is InstantiationMode.EVARS_AND_TERMS:
        uvars = set(_universal_vars(f))
        for t in _ground_terms(f, uvars):
            if t not in terms:
                terms.append(t)
    return InstantiationSet(mode, tuple(terms))


def monotonic_approx(f: Formula, s: InstantiationSet, cap: int = 4096) -> Formula:
    """Weaken every positive universal block to a finite conjunction over s.

    The output is implied by f; for inputs without universals it is f itself.
    """
    cls = classify(f)
    if cls is SentenceClass.OTHER:
        raise ValueError("not an exists-forall sentence")
    if cls is not SentenceClass.SIGMA02:
        return f
    if not s.terms:
        raise InstantiationError("empty instantiation set with universals present")

    # Instantiation terms live in the scope of the floated existential
    # prefix, so pull it out first (deterministic renaming keeps the terms
    # from default_set aligned).
    prefix, matrix = T.prenex_positive(f)

    def walk(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq, Atom, Not)):
            return g
        if isinstance(g, And):
            return And(walk(a) for a in g.args)
        if isinstance(g, Or):
            return Or(walk(a) for a in g.args)
        if isinstance(g, Forall):
            body = walk(g.body)
            count = len(s.terms) ** len(g.vars)
            if count > cap:
                raise InstantiationBudget(
                    f"{count} instantiations exceed cap {cap}"
                )
            parts = []
            for combo in itertools.product(s.terms, repeat=len(g.vars)):
                parts.append(T.substitute_free(body, dict(zip(g.vars, combo))))
            return T.conj(*parts)
        raise TypeError(f"not a formula: {g!r}")

    out = walk(matrix)
    if prefix:
        out = Exists(prefix, out)
    return simplify(out)
