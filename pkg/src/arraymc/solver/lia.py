"""Exact integer feasibility of linear constraint systems (Omega test).

Constraints are rows over integer variables identified by ints:

    LE row  (coeffs, b)  means  sum(coeffs[i] * x_i) <= b
    EQ row  (coeffs, b)  means  sum(coeffs[i] * x_i) == b

`solve` decides feasibility over the integers and, when feasible, returns a
witness assignment for every variable mentioned.  Equalities are eliminated
by unit substitution (with Pugh's symmetric-mod reduction when no unit
coefficient exists); inequalities by shadow elimination with dark-shadow and
splinter handling, so answers are exact, not merely rational-relaxation
sound.  All arithmetic is on Python ints.
"""

from __future__ import annotations

import math
from functools import reduce
from typing import Dict, List, Optional, Tuple

Row = Tuple[Dict[int, int], int]


class SolveBudget(Exception):
    """Raised when the search exceeds its step budget."""


def _gcd_all(values) -> int:
    return reduce(math.gcd, (abs(v) for v in values), 0)


def _clean(coeffs: Dict[int, int]) -> Dict[int, int]:
    return {k: v for k, v in coeffs.items() if v != 0}


def _row_sub_scaled(r1: Dict[int, int], k1: int, r2: Dict[int, int], k2: int) -> Dict[int, int]:
    out = {i: k1 * v for i, v in r1.items()}
    for i, v in r2.items():
        out[i] = out.get(i, 0) + k2 * v
    return _clean(out)


def _ceil_div(p: int, q: int) -> int:
    return -((-p) // q)


def _smod(a: int, m: int) -> int:
    """Symmetric remainder: a - m*floor(a/m + 1/2), magnitude <= m/2."""
    return a - m * ((2 * a + m) // (2 * m))


def _normalize_les(les: List[Row]) -> Optional[List[Row]]:
    """gcd-tighten, drop trivial rows, dedupe keeping the tightest bound."""
    best: Dict[tuple, int] = {}
    for coeffs, b in les:
        coeffs = _clean(coeffs)
        if not coeffs:
            if b < 0:
                return None
            continue
        g = _gcd_all(coeffs.values())
        if g > 1:
            coeffs = {i: v // g for i, v in coeffs.items()}
            b = b // g  # floor: integer tightening
        key = tuple(sorted(coeffs.items()))
        if key not in best or b < best[key]:
            best[key] = b
    return [(dict(k), b) for k, b in best.items()]


class _Context:
    def __init__(self, budget: int, next_var: int) -> None:
        self.budget = budget
        self.next_var = next_var

    def tick(self, cost: int = 1) -> None:
        self.budget -= cost
        if self.budget <= 0:
            raise SolveBudget()

    def fresh(self) -> int:
        v = self.next_var
        self.next_var += 1
        return v


def solve(eqs: List[Row], les: List[Row], budget: int = 200000) -> Optional[Dict[int, int]]:
    """Integer feasibility; returns a witness assignment or None."""
    all_vars = set()
    for coeffs, _ in list(eqs) + list(les):
        all_vars |= set(coeffs)
    ctx = _Context(budget, max(all_vars, default=0) + 1)
    sol = _solve(list(eqs), list(les), ctx)
    if sol is None:
        return None
    for v in all_vars:
        sol.setdefault(v, 0)
    return {v: sol[v] for v in all_vars}


def _solve(eqs: List[Row], les: List[Row], ctx: _Context) -> Optional[Dict[int, int]]:
    ctx.tick()
    # Phase 1: eliminate equalities by substitution.
    subs: List[Tuple[int, Dict[int, int], int]] = []  # var = coeffs·x + const
    eqs = list(eqs)
    les = list(les)
    while eqs:
        ctx.tick()
        coeffs, b = eqs.pop()
        coeffs = _clean(coeffs)
        if not coeffs:
            if b != 0:
                return None
            continue
        g = _gcd_all(coeffs.values())
        if b % g:
            return None
        if g > 1:
            coeffs = {i: v // g for i, v in coeffs.items()}
            b //= g
        unit = None
        for i in sorted(coeffs):
            if abs(coeffs[i]) == 1:
                unit = i
                break
        if unit is not None:
            a = coeffs[unit]  # +-1
            # a*x + rest = b  ->  x = a*(b - rest)
            expr_coeffs = {i: -a * v for i, v in coeffs.items() if i != unit}
            expr_const = a * b
            subs.append((unit, expr_coeffs, expr_const))
            eqs = [_subst_row(r, unit, expr_coeffs, expr_const) for r in eqs]
            les = [_subst_row(r, unit, expr_coeffs, expr_const) for r in les]
        else:
            # Pugh's reduction: derive an equation where some variable
            # appears with a unit coefficient.
            k = min(sorted(coeffs), key=lambda i: abs(coeffs[i]))
            m = abs(coeffs[k]) + 1
            sigma = ctx.fresh()
            new_coeffs = {i: _smod(v, m) for i, v in coeffs.items()}
            new_coeffs[sigma] = -m
            new_b = _smod(b, m)
            # coefficient of k in new_coeffs is -sign(coeffs[k]): a unit
            eqs.append((coeffs, b))
            eqs.append((_clean(new_coeffs), new_b))
    # Phase 2: inequality elimination.
    sol = _solve_les(les, ctx)
    if sol is None:
        return None
    for var, expr_coeffs, expr_const in reversed(subs):
        val = expr_const + sum(c * sol.get(i, 0) for i, c in expr_coeffs.items())
        sol[var] = val
    return sol


def _subst_row(row: Row, var: int, expr_coeffs: Dict[int, int], expr_const: int) -> Row:
    coeffs, b = row
    if var not in coeffs:
        return row
    k = coeffs[var]
    out = {i: v for i, v in coeffs.items() if i != var}
    for i, v in expr_coeffs.items():
        out[i] = out.get(i, 0) + k * v
    return _clean(out), b - k * expr_const


def _solve_les(les: List[Row], ctx: _Context) -> Optional[Dict[int, int]]:
    ctx.tick()
    norm = _normalize_les(les)
    if norm is None:
        return None
    les = norm
    variables = sorted({i for coeffs, _ in les for i in coeffs})
    if not variables:
        return {}

    def score(x: int) -> tuple:
        lo = sum(1 for coeffs, _ in les if coeffs.get(x, 0) < 0)
        up = sum(1 for coeffs, _ in les if coeffs.get(x, 0) > 0)
        return (lo * up, lo + up, x)

    x = min(variables, key=score)
    lowers: List[Tuple[int, Dict[int, int], int]] = []  # a*x >= lc·y + lконст
    uppers: List[Tuple[int, Dict[int, int], int]] = []  # a*x <= uc·y + uconst
    free_rows: List[Row] = []
    for coeffs, b in les:
        a = coeffs.get(x, 0)
        rest = {i: v for i, v in coeffs.items() if i != x}
        if a == 0:
            free_rows.append((rest, b))
        elif a > 0:
            uppers.append((a, {i: -v for i, v in rest.items()}, b))
        else:
            lowers.append((-a, rest, -b))

    if not lowers or not uppers:
        sol = _solve_les(free_rows, ctx)
        if sol is None:
            return None
        sol[x] = _pick_value(lowers, uppers, sol)
        return sol

    real_rows = list(free_rows)
    dark_rows = list(free_rows)
    exact = True
    for al, lc, lb in lowers:
        for au, uc, ub in uppers:
            # au*(lower value) <= al*au*x <= al*(upper value)
            coeffs = _row_sub_scaled(lc, au, uc, -al)
            bound = al * ub - au * lb
            real_rows.append((coeffs, bound))
            gap = (al - 1) * (au - 1)
            dark_rows.append((coeffs, bound - gap))
            if gap:
                exact = False

    sol = _solve_les(dark_rows, ctx)
    if sol is not None:
        sol[x] = _pick_value(lowers, uppers, sol)
        return sol
    if exact:
        return None
    sol = _solve_les(real_rows, ctx)
    if sol is None:
        return None
    # Dark shadow failed but the relaxation is feasible: splinter on each
    # lower bound (Pugh's exact case analysis).
    b_hat = max(au for au, _, _ in uppers)
    for al, lc, lb in sorted(lowers, key=lambda t: (t[0], sorted(t[1].items()), t[2])):
        top = (al * b_hat - al - b_hat) // b_hat
        for d in range(top + 1):
            ctx.tick()
            eq_coeffs = dict(lc)
            eq_coeffs[x] = eq_coeffs.get(x, 0) - al
            # al*x = lower_value + d  ->  lc·y - al*x = -lb - d ... rearranged:
            eqs = [(_clean(eq_coeffs), -(lb + d))]
            sub = _solve(eqs, les, ctx)
            if sub is not None:
                return sub
    return None


def _pick_value(lowers, uppers, sol: Dict[int, int]) -> int:
    lo = None
    for a, coeffs, const in lowers:
        val = const + sum(c * sol.get(i, 0) for i, c in coeffs.items())
        cand = _ceil_div(val, a)
        lo = cand if lo is None else max(lo, cand)
    hi = None
    for a, coeffs, const in uppers:
        val = const + sum(c * sol.get(i, 0) for i, c in coeffs.items())
        cand = val // a
        hi = cand if hi is None else min(hi, cand)
    if lo is not None and hi is not None and lo > hi:
        raise AssertionError("shadow elimination produced an empty interval")
    if lo is not None:
        return lo
    if hi is not None:
        return min(hi, 0)
    return 0
