"""Decision core: quantifier-free LIA with free unary functions.

Assertions arrive as S-expression trees (SMT-LIB term syntax).  The pipeline
is: lift term-level ite to the formula level, translate to negation normal
form whose atoms are integer rows (sum of coeff*key <= b or == b), add
congruence clauses for applications of the same function (Ackermann), then
run DPLL over the boolean structure with exact integer feasibility checks on
the atoms supporting each candidate model.  Unsat answers are exact; sat
answers come with a concrete model for get-value.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from . import lia
from .lia import SolveBudget  # re-exported

_ATOM_OPS = ("=", "<", "<=", ">", ">=")


class SmtError(ValueError):
    pass


# Keys identifying integer unknowns: ("sym", name) for constants and
# ("app", fn, lin) for function applications, lin being a canonical linear
# combination (tuple of (key, coeff) pairs, constant).


def _lin_add(a, b, k=1):
    coeffs = dict(a[0])
    for key, c in b[0].items():
        coeffs[key] = coeffs.get(key, 0) + k * c
        if coeffs[key] == 0:
            del coeffs[key]
    return coeffs, a[1] + k * b[1]


def _lin_scale(a, k):
    if k == 0:
        return {}, 0
    return {key: k * c for key, c in a[0].items()}, k * a[1]


def _lin_canon(a) -> tuple:
    return tuple(sorted(a[0].items())), a[1]


class _Ctx:
    """One check-sat: atom interning, CNF clauses, key numbering."""

    def __init__(self) -> None:
        self.atoms: List[Tuple[str, tuple, int]] = []  # (kind, coeff items, bound)
        self.atom_ids: Dict[tuple, int] = {}
        self.apps: Dict[tuple, None] = {}  # insertion-ordered set of app keys
        self.aux_count = 0

    def atom(self, kind: str, lin) -> tuple:
        """Intern an atom; returns ('lit', id). kind in {'le','eq'}: lin ~ 0."""
        coeffs, const = lin
        items = tuple(sorted(coeffs.items()))
        bound = -const
        if not items:
            ok = (0 == bound) if kind == "eq" else (0 <= bound)
            return ("true",) if ok else ("false",)
        if kind == "eq" and items[0][1] < 0:
            items = tuple((k, -c) for k, c in items)
            bound = -bound
        key = (kind, items, bound)
        if key not in self.atom_ids:
            self.atom_ids[key] = len(self.atoms)
            self.atoms.append(key)
            for k, _ in items:
                self._note_apps(k)
        return ("lit", self.atom_ids[key])

    def _note_apps(self, key) -> None:
        if key[0] == "app":
            if key not in self.apps:
                self.apps[key] = None
            for k, _ in key[2][0]:
                self._note_apps(k)


class SolverCore:
    """Holds declarations and an assertion stack; answers check-sat/get-value."""

    def __init__(self, budget: int = 2_000_000) -> None:
        self.consts: Dict[str, str] = {}
        self.funs: Dict[str, int] = {}
        self.stack: List[List[list]] = [[]]
        self.budget = budget
        self._model: Optional[Dict] = None

    # -- declarations and stack ------------------------------------------------

    def declare(self, name: str, arg_sorts: List[str], ret: str) -> None:
        if arg_sorts == [] and ret == "Int":
            self.consts[name] = "Int"
        elif arg_sorts == ["Int"] and ret == "Int":
            self.funs[name] = 1
        else:
            raise SmtError(f"unsupported declaration {name}: {arg_sorts} -> {ret}")

    def assert_form(self, sx) -> None:
        self.stack[-1].append(sx)
        self._model = None

    def push(self, n: int = 1) -> None:
        for _ in range(n):
            self.stack.append([])

    def pop(self, n: int = 1) -> None:
        for _ in range(n):
            if len(self.stack) > 1:
                self.stack.pop()
        self._model = None

    def reset(self) -> None:
        self.consts.clear()
        self.funs.clear()
        self.stack = [[]]
        self._model = None

    # -- term/formula translation ----------------------------------------------

    def _lift_ites(self, sx):
        """Pull term-level ite up to the formula level."""
        if not isinstance(sx, list) or not sx:
            return sx
        head = sx[0]
        if head in ("and", "or", "not", "=>"):
            return [head] + [self._lift_ites(a) for a in sx[1:]]
        if head == "ite":
            # formula-level ite (both branches formulas)
            _, c, a, b = sx
            return self._lift_ites(["or", ["and", c, a], ["and", ["not", c], b]])
        if head in _ATOM_OPS or head == "distinct":
            path = _find_term_ite(sx)
            if path is not None:
                cond, then, other = path
                return self._lift_ites(
                    ["or",
                     ["and", cond, _replace_ite(sx, cond, then, other, True)],
                     ["and", ["not", cond], _replace_ite(sx, cond, then, other, False)]]
                )
            return sx
        return sx

    def _formula(self, sx, ctx: _Ctx, neg: bool):
        if sx == "true" or sx is True:
            return ("false",) if neg else ("true",)
        if sx == "false" or sx is False:
            return ("true",) if neg else ("false",)
        if not isinstance(sx, list) or not sx:
            raise SmtError(f"bad formula {sx!r}")
        head = sx[0]
        if head == "not":
            return self._formula(sx[1], ctx, not neg)
        if head == "=>":
            l, r = sx[1], sx[2]
            return self._formula(["or", ["not", l], r], ctx, neg)
        if head == "and":
            kids = [self._formula(a, ctx, neg) for a in sx[1:]]
            return _mk_node("or" if neg else "and", kids)
        if head == "or":
            kids = [self._formula(a, ctx, neg) for a in sx[1:]]
            return _mk_node("and" if neg else "or", kids)
        if head == "distinct":
            args = sx[1:]
            pairs = [["not", ["=", a, b]]
                     for i, a in enumerate(args) for b in args[i + 1:]]
            return self._formula(_mk_and(pairs), ctx, neg)
        if head in _ATOM_OPS:
            l = self._linear(sx[1], ctx)
            r = self._linear(sx[2], ctx)
            return self._atom(head, l, r, ctx, neg)
        raise SmtError(f"bad formula head {head!r}")

    def _atom(self, op: str, l, r, ctx: _Ctx, neg: bool):
        if op == ">":
            return self._atom("<", r, l, ctx, neg)
        if op == ">=":
            return self._atom("<=", r, l, ctx, neg)
        diff = _lin_add(l, r, -1)  # l - r
        if op == "=":
            if neg:  # l != r: l < r or r < l
                lt1 = ctx.atom("le", _lin_add(diff, ({}, 1)))      # l - r + 1 <= 0
                lt2 = ctx.atom("le", _lin_add(_lin_scale(diff, -1), ({}, 1)))
                return _mk_node("or", [lt1, lt2])
            return ctx.atom("eq", diff)
        if op == "<":
            if neg:  # not(l<r): r <= l
                return ctx.atom("le", _lin_add(_lin_scale(diff, -1), ({}, 0)))
            return ctx.atom("le", _lin_add(diff, ({}, 1)))
        if op == "<=":
            if neg:  # not(l<=r): r < l
                return ctx.atom("le", _lin_add(_lin_scale(diff, -1), ({}, 1)))
            return ctx.atom("le", diff)
        raise SmtError(f"bad relation {op!r}")

    def _linear(self, sx, ctx: _Ctx):
        if isinstance(sx, int):
            return {}, sx
        if isinstance(sx, str):
            if sx in self.consts:
                return {("sym", sx): 1}, 0
            raise SmtError(f"undeclared symbol {sx!r}")
        if not isinstance(sx, list) or not sx:
            raise SmtError(f"bad term {sx!r}")
        head = sx[0]
        if head == "+":
            out = ({}, 0)
            for a in sx[1:]:
                out = _lin_add(out, self._linear(a, ctx))
            return out
        if head == "-":
            if len(sx) == 2:
                return _lin_scale(self._linear(sx[1], ctx), -1)
            out = self._linear(sx[1], ctx)
            for a in sx[2:]:
                out = _lin_add(out, self._linear(a, ctx), -1)
            return out
        if head == "*":
            parts = [self._linear(a, ctx) for a in sx[1:]]
            consts = [p for p in parts if not p[0]]
            lins = [p for p in parts if p[0]]
            if len(lins) > 1:
                raise SmtError("nonlinear multiplication")
            k = 1
            for p in consts:
                k *= p[1]
            return _lin_scale(lins[0], k) if lins else ({}, k)
        if isinstance(head, str) and head in self.funs:
            if len(sx) != 2:
                raise SmtError(f"{head} expects one argument")
            arg = self._linear(sx[1], ctx)
            key = ("app", head, _lin_canon(arg))
            return {key: 1}, 0
        raise SmtError(f"bad term head {head!r}")

    # -- congruence ------------------------------------------------------------

    def _congruence(self, ctx: _Ctx) -> List[tuple]:
        out = []
        apps = list(ctx.apps)
        by_fn: Dict[str, List[tuple]] = {}
        for key in apps:
            by_fn.setdefault(key[1], []).append(key)
        for fn in sorted(by_fn):
            keys = by_fn[fn]
            for i, k1 in enumerate(keys):
                for k2 in keys[i + 1:]:
                    l1 = (dict(k1[2][0]), k1[2][1])
                    l2 = (dict(k2[2][0]), k2[2][1])
                    diff = _lin_add(l1, l2, -1)
                    if not diff[0] and diff[1] != 0:
                        continue  # arguments never equal
                    kids = []
                    if diff[0] or diff[1] != 0:
                        kids.append(ctx.atom("le", _lin_add(diff, ({}, 1))))
                        kids.append(ctx.atom("le", _lin_add(_lin_scale(diff, -1), ({}, 1))))
                    val_diff = ({k1: 1, k2: -1}, 0)
                    kids.append(ctx.atom("eq", val_diff))
                    out.append(_mk_node("or", kids))
        return out

    # -- CNF + DPLL + theory loop ------------------------------------------------

    def check(self) -> Tuple[str, Optional[Dict]]:
        """Returns (answer, model); answer in {'sat','unsat','unknown'}."""
        ctx = _Ctx()
        try:
            trees = []
            for frame in self.stack:
                for sx in frame:
                    trees.append(self._formula(self._lift_ites(sx), ctx, False))
            trees.extend(self._congruence(ctx))
            root = _mk_node("and", trees)
            if root == ("false",):
                return "unsat", None
            n_atoms = len(ctx.atoms)
            clauses, n_vars = _to_cnf(root, n_atoms)
            while True:
                assign = _dpll(n_vars, clauses, self.budget)
                if assign is None:
                    return "unsat", None
                support = _support(root, assign)
                assert support is not None, "model does not satisfy root"
                eqs, les = [], []
                keymap: Dict[tuple, int] = {}
                rows = []
                for aid in sorted(support):
                    kind, items, bound = ctx.atoms[aid]
                    row = ({keymap.setdefault(k, len(keymap)): c for k, c in items}, bound)
                    rows.append((aid, kind, row))
                    (eqs if kind == "eq" else les).append(row)
                sol = lia.solve(eqs, les, budget=self.budget)
                if sol is not None:
                    model = self._build_model(ctx, keymap, sol)
                    self._model = model
                    return "sat", model
                core = self._shrink(rows)
                clauses.append([-(aid + 1) for aid, _, _ in core])
        except SolveBudget:
            return "unknown", None

    def _shrink(self, rows) -> list:
        """Greedy unsat-core reduction; rows is a list of (atom_id, kind, row)."""
        core = list(rows)
        tests = 0
        i = 0
        while i < len(core) and tests < 200:
            trial = core[:i] + core[i + 1:]
            eqs = [r for _, k, r in trial if k == "eq"]
            les = [r for _, k, r in trial if k == "le"]
            tests += 1
            if lia.solve(eqs, les, budget=self.budget) is None:
                core = trial
            else:
                i += 1
        return core

    def _build_model(self, ctx: _Ctx, keymap: Dict[tuple, int], sol: Dict[int, int]) -> Dict:
        values: Dict[tuple, int] = {}
        for key, vid in keymap.items():
            values[key] = sol.get(vid, 0)

        def key_value(key) -> int:
            if key in values:
                return values[key]
            values[key] = 0
            return 0

        def lin_value(canon) -> int:
            items, const = canon
            return const + sum(c * key_value(k) for k, c in items)

        tables: Dict[str, Dict[int, int]] = {fn: {} for fn in self.funs}
        for key in ctx.apps:
            _, fn, arg = key
            argval = lin_value(arg)
            val = key_value(key)
            tables.setdefault(fn, {})
            if argval not in tables[fn]:
                tables[fn][argval] = val
        consts = {name: values.get(("sym", name), 0) for name in self.consts}
        return {"consts": consts, "funs": tables}

    # -- model queries -----------------------------------------------------------

    def eval_term(self, sx) -> int:
        if self._model is None:
            raise SmtError("no model available")
        m = self._model

        def ev(t) -> int:
            if isinstance(t, int):
                return t
            if isinstance(t, str):
                if t in m["consts"]:
                    return m["consts"][t]
                raise SmtError(f"unknown symbol {t!r}")
            head = t[0]
            if head == "+":
                return sum(ev(a) for a in t[1:])
            if head == "-":
                if len(t) == 2:
                    return -ev(t[1])
                return ev(t[1]) - sum(ev(a) for a in t[2:])
            if head == "*":
                out = 1
                for a in t[1:]:
                    out *= ev(a)
                return out
            if head in self.funs:
                return m["funs"].get(head, {}).get(ev(t[1]), 0)
            raise SmtError(f"cannot evaluate {t!r}")

        return ev(sx)


# ---------------------------------------------------------------------------
# helpers


def _mk_node(op: str, kids: list):
    flat = []
    for k in kids:
        if k == ("true",):
            if op == "or":
                return ("true",)
            continue
        if k == ("false",):
            if op == "and":
                return ("false",)
            continue
        if isinstance(k, tuple) and k[0] == op:
            flat.extend(k[1])
        else:
            flat.append(k)
    if not flat:
        return ("true",) if op == "and" else ("false",)
    if len(flat) == 1:
        return flat[0]
    return (op, flat)


def _mk_and(parts: list) -> list:
    if not parts:
        return "true"
    if len(parts) == 1:
        return parts[0]
    return ["and"] + parts


def _find_term_ite(sx):
    """First (ite c a b) in a term position inside an atom; returns (c, a, b)."""

    def scan_term(t):
        if not isinstance(t, list) or not t:
            return None
        if t[0] == "ite":
            return t[1], t[2], t[3]
        for a in t[1:]:
            hit = scan_term(a)
            if hit is not None:
                return hit
        return None

    for arg in sx[1:]:
        hit = scan_term(arg)
        if hit is not None:
            return hit
    return None


def _replace_ite(sx, cond, then, other, take_then: bool):
    """Replace the first occurrence of (ite cond then other) in sx."""
    done = [False]

    def rep(t):
        if done[0] or not isinstance(t, list):
            return t
        if t and t[0] == "ite" and t[1] == cond and t[2] == then and t[3] == other:
            done[0] = True
            return then if take_then else other
        return [rep(a) for a in t]

    return rep(sx)


def _to_cnf(root, n_atoms: int):
    """Plaisted-Greenbaum: all polarities positive after NNF."""
    clauses: List[List[int]] = []
    counter = [n_atoms]

    def lit(node) -> int:
        if node[0] == "lit":
            return node[1] + 1
        counter[0] += 1
        p = counter[0]
        if node[0] == "and":
            for kid in node[1]:
                clauses.append([-p, lit(kid)])
        else:  # or
            clauses.append([-p] + [lit(k) for k in node[1]])
        return p

    if root == ("true",):
        return [], n_atoms
    if root == ("false",):
        return [[]], n_atoms
    if root[0] == "and":
        for kid in root[1]:
            if kid[0] == "and":
                clauses.append([lit(kid)])
            elif kid[0] == "or":
                clauses.append([lit(k) for k in kid[1]])
            else:
                clauses.append([kid[1] + 1])
    else:
        clauses.append([lit(root)])
    return clauses, counter[0]


def _dpll(n_vars: int, clauses: List[List[int]], budget: int) -> Optional[List[bool]]:
    """Iterative DPLL with watched literals and chronological backtracking.

    Returns assignment (index 0 unused) or None.
    """
    assign: List[int] = [0] * (n_vars + 1)  # 0 unknown, 1 true, -1 false
    watches: Dict[int, List[int]] = {}
    for ci, cl in enumerate(clauses):
        if not cl:
            return None
        for l in cl[:2]:
            watches.setdefault(l, []).append(ci)

    def value(l: int) -> int:
        v = assign[abs(l)]
        return v if l > 0 else -v

    trail: List[int] = []
    level_marks: List[int] = []
    decisions: List[int] = []
    steps = 0

    def enqueue(l: int) -> bool:
        if value(l) == -1:
            return False
        if value(l) == 0:
            assign[abs(l)] = 1 if l > 0 else -1
            trail.append(l)
        return True

    def propagate(start: int) -> bool:
        nonlocal steps
        i = start
        while i < len(trail):
            steps += 1
            if steps > budget:
                raise SolveBudget()
            l = -trail[i]
            i += 1
            wl = watches.get(l, [])
            j = 0
            while j < len(wl):
                ci = wl[j]
                cl = clauses[ci]
                # ensure l is cl[1]
                if len(cl) >= 2 and cl[0] == l:
                    cl[0], cl[1] = cl[1], cl[0]
                if len(cl) == 1:
                    if value(cl[0]) == -1:
                        return False
                    if not enqueue(cl[0]):
                        return False
                    j += 1
                    continue
                if value(cl[0]) == 1:
                    j += 1
                    continue
                moved = False
                for k in range(2, len(cl)):
                    if value(cl[k]) != -1:
                        cl[1], cl[k] = cl[k], cl[1]
                        watches.setdefault(cl[1], []).append(ci)
                        wl[j] = wl[-1]
                        wl.pop()
                        moved = True
                        break
                if moved:
                    continue
                if not enqueue(cl[0]):
                    return False
                j += 1
            watches[l] = wl
        return True

    # top-level units
    for ci, cl in enumerate(clauses):
        if len(cl) == 1:
            if not enqueue(cl[0]):
                return None
    if not propagate(0):
        return None

    next_var = 1
    while True:
        while next_var <= n_vars and assign[next_var] != 0:
            next_var += 1
        if next_var > n_vars:
            return [v == 1 for v in ([0] + assign[1:])]
        # decide False first: fewer true atoms tends to keep supports small
        decisions.append(-next_var)
        level_marks.append(len(trail))
        ok = enqueue(-next_var) and propagate(len(trail) - 1)
        while not ok:
            # backtrack
            while decisions:
                d = decisions.pop()
                mark = level_marks.pop()
                for l in trail[mark:]:
                    assign[abs(l)] = 0
                del trail[mark:]
                if d < 0:  # tried False, now try True
                    decisions.append(-d)
                    level_marks.append(len(trail))
                    ok = enqueue(-d) and propagate(len(trail) - 1)
                    if ok:
                        next_var = 1
                        break
                # both polarities exhausted: keep unwinding
            else:
                return None
        next_var = 1


def _support(node, assign: List[bool]) -> Optional[set]:
    """Atom ids that make node true under assign; None if node is false."""
    if node == ("true",):
        return set()
    if node == ("false",):
        return None
    if node[0] == "lit":
        return {node[1]} if assign[node[1] + 1] else None
    if node[0] == "and":
        out: set = set()
        for kid in node[1]:
            s = _support(kid, assign)
            if s is None:
                return None
            out |= s
        return out
    # or
    for kid in node[1]:
        s = _support(kid, assign)
        if s is not None:
            return s
    return None
