"""Explicit-state enumeration over small finite models.

This is the brute-force reference semantics used to validate the symbolic
layer (write expansion, composition, preimage, acceleration) and to replay
counterexample traces concretely.  Arrays are tabulated over a widened index
window 0..table_size-1 so terms like N-c or c+n evaluate without wraparound;
any evaluation that leaves the window marks the state as not representable
and the caller skips it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

from .terms import (
    Add, And, App, Atom, BoolVal, Div, Exists, Forall, Formula, Ite, Mul,
    Not, Num, Or, PcEq, Store, Sub, Sym, Term, Var,
)


class OutOfTable(Exception):
    """An index or constant left the tabulated window; state not representable."""


@dataclass(frozen=True)
class BoundedModel:
    """Finite enumeration bounds.

    array_len   tabulated "real" prefix of each array (quantifier range floor)
    max_value   array entries range over 0..max_value
    max_const   constants range over 0..max_const
    """

    array_len: int = 3
    max_value: int = 1
    max_const: int = 4

    @property
    def table_size(self) -> int:
        return self.array_len + self.max_const

    def index_range(self) -> range:
        return range(self.table_size)


@dataclass(frozen=True)
class State:
    pc: str
    consts: Tuple[Tuple[str, int], ...]
    arrays: Tuple[Tuple[str, Tuple[int, ...]], ...]

    def const(self, name: str) -> int:
        for k, v in self.consts:
            if k == name:
                return v
        raise KeyError(name)

    def array(self, name: str) -> Tuple[int, ...]:
        for k, v in self.arrays:
            if k == name:
                return v
        raise KeyError(name)

    def replace(self, consts: Dict[str, int], arrays: Dict[str, Tuple[int, ...]],
                pc: Optional[str] = None) -> "State":
        return State(
            pc if pc is not None else self.pc,
            tuple((k, consts.get(k, v)) for k, v in self.consts),
            tuple((k, arrays.get(k, v)) for k, v in self.arrays),
        )


def make_state(pc: str, consts: Dict[str, int], arrays: Dict[str, Tuple[int, ...]]) -> State:
    return State(pc, tuple(sorted(consts.items())), tuple(sorted(arrays.items())))


def eval_term(t: Term, state: State, model: BoundedModel, env: Dict[str, int]) -> int:
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        return env[t.name]
    if isinstance(t, Sym):
        return state.const(t.name)
    if isinstance(t, Add):
        return eval_term(t.left, state, model, env) + eval_term(t.right, state, model, env)
    if isinstance(t, Sub):
        return eval_term(t.left, state, model, env) - eval_term(t.right, state, model, env)
    if isinstance(t, Mul):
        return t.coeff * eval_term(t.arg, state, model, env)
    if isinstance(t, App):
        idx = eval_term(t.arg, state, model, env)
        return _apply(t.fn, idx, state, model, env)
    if isinstance(t, Ite):
        if _eval(t.cond, state, model, env):
            return eval_term(t.then, state, model, env)
        return eval_term(t.other, state, model, env)
    if isinstance(t, Div):
        return eval_term(t.arg, state, model, env) // t.divisor
    raise TypeError(f"not a term: {t!r}")


def _apply(fn, idx: int, state: State, model: BoundedModel, env: Dict[str, int]) -> int:
    if isinstance(fn, Store):
        if idx == eval_term(fn.idx, state, model, env):
            return eval_term(fn.val, state, model, env)
        return _apply(fn.arr, idx, state, model, env)
    table = state.array(fn)
    if 0 <= idx < len(table):
        return table[idx]
    raise OutOfTable()


def _eval(f: Formula, state: State, model: BoundedModel, env: Dict[str, int]) -> bool:
    if isinstance(f, BoolVal):
        return f.value
    if isinstance(f, PcEq):
        return state.pc == f.loc
    if isinstance(f, Atom):
        l = eval_term(f.left, state, model, env)
        r = eval_term(f.right, state, model, env)
        return {"=": l == r, "!=": l != r, "<": l < r, "<=": l <= r}[f.op]
    if isinstance(f, And):
        return all(_eval(a, state, model, env) for a in f.args)
    if isinstance(f, Or):
        return any(_eval(a, state, model, env) for a in f.args)
    if isinstance(f, Not):
        return not _eval(f.arg, state, model, env)
    if isinstance(f, Exists):
        return _quant(f.vars, f.body, state, model, env, any_of=True)
    if isinstance(f, Forall):
        return not _quant(f.vars, negate_body(f.body), state, model, env, any_of=True)
    raise TypeError(f"not a formula: {f!r}")


def negate_body(f: Formula) -> Formula:
    return Not(f)


def _quant(vars_, body, state, model, env, any_of: bool) -> bool:
    rng = model.index_range()
    for combo in itertools.product(rng, repeat=len(vars_)):
        inner = dict(env)
        inner.update(zip(vars_, combo))
        if _eval(body, state, model, inner):
            return True
    return False


def eval_formula(f: Formula, state: State, model: BoundedModel,
                 env: Optional[Dict[str, int]] = None) -> bool:
    """Finite-model truth of f in state; quantifiers range over the widened table.

    States whose relevant terms leave the table, or that hit a negative
    division numerator, count as not satisfying f.
    """
    try:
        return _eval(f, state, model, env or {})
    except OutOfTable:
        return False


def enum_states(pc_choices, consts, arrays, model: BoundedModel) -> Iterator[State]:
    """All states over the given vocabulary within the model bounds."""
    const_names = list(consts)
    arr_names = list(arrays)
    w = model.table_size
    const_vals = range(model.max_const + 1)
    cell_vals = range(model.max_value + 1)
    for pc in pc_choices:
        for cvals in itertools.product(const_vals, repeat=len(const_names)):
            for avals in itertools.product(
                itertools.product(cell_vals, repeat=w), repeat=len(arr_names)
            ):
                yield make_state(
                    pc,
                    dict(zip(const_names, cvals)),
                    dict(zip(arr_names, avals)),
                )


def find_state(f: Formula, program, model: BoundedModel) -> Optional[State]:
    """First state of the program vocabulary satisfying f, or None."""
    for s in enum_states(program.locations, program.consts, program.arrays, model):
        if eval_formula(f, s, model):
            return s
    return None


def successors(t, state: State, model: BoundedModel) -> Iterator[State]:
    """Concrete successors of state under transition t (see program module)."""
    if state.pc != t.source:
        return
    rng = model.index_range()
    for combo in itertools.product(rng, repeat=len(t.evars)):
        env = dict(zip(t.evars, combo))
        try:
            if not _eval(t.guard, state, model, env):
                continue
            if t.uguard is not None:
                uvars, ubody = t.uguard
                ok = True
                for ucombo in itertools.product(rng, repeat=len(uvars)):
                    uenv = dict(env)
                    uenv.update(zip(uvars, ucombo))
                    if not _eval(ubody, state, model, uenv):
                        ok = False
                        break
                if not ok:
                    continue
            new_consts = {}
            for name, term in t.const_updates.items():
                v = eval_term(term, state, model, env)
                if not (0 <= v <= model.max_const):
                    raise OutOfTable()
                new_consts[name] = v
            new_arrays = {}
            for name, (lam_var, body) in t.array_updates.items():
                cells = []
                for j in rng:
                    jenv = dict(env)
                    jenv[lam_var] = j
                    cells.append(eval_term(body, state, model, jenv))
                    if not (0 <= cells[-1] <= model.max_value):
                        raise OutOfTable()
                new_arrays[name] = tuple(cells)
        except OutOfTable:
            continue
        yield state.replace(new_consts, new_arrays, pc=t.target)


def step_relation(t, program, model: BoundedModel) -> set:
    """All concrete (state, state') pairs of transition t within the bounds."""
    pairs = set()
    for s in enum_states([t.source], program.consts, program.arrays, model):
        for s2 in successors(t, s, model):
            pairs.add((s, s2))
    return pairs


def compose_relations(r1: set, r2: set) -> set:
    by_src: Dict[State, list] = {}
    for a, b in r2:
        by_src.setdefault(a, []).append(b)
    out = set()
    for a, b in r1:
        for c in by_src.get(b, ()):
            out.add((a, c))
    return out


def power_relation(r: set, n: int) -> set:
    out = r
    for _ in range(n - 1):
        out = compose_relations(out, r)
    return out


def replay(program, trace, state: State, model: BoundedModel) -> bool:
    """Run the named transitions from state; true iff the error location is hit."""
    by_name = {t.name: t for t in program.transitions}
    current = [state]
    for name in trace:
        t = by_name[name]
        nxt = []
        for s in current:
            nxt.extend(successors(t, s, model))
        if not nxt:
            return False
        current = nxt
    return any(s.pc == program.error_loc for s in current)
