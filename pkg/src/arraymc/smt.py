"""SMT-LIB 2 encoding and solver subprocess management.

Formulas are encoded over the naturals: every declared constant, every array
value, and the program counter carry explicit non-negativity assertions, and
integer division by a constant is compiled away with a fresh bounded
quotient.  Ground and existential sentences are decided by Skolemization;
existential-universal sentences used in fixpoint checks are handled by
instantiating the universals over Skolem constants and ground index terms,
which keeps unsat answers trustworthy and downgrades sat to unknown.

One solver child process serves one verification task; queries are isolated
with push/pop.  Any SMT-LIB-2 solver works; the default command runs the
built-in one.
"""

from __future__ import annotations

import enum
import itertools
import os
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Dict, List, Optional, Sequence, Tuple

from . import terms as T
from .sexpr import parse_one
from .terms import (
    And, App, Atom, BoolVal, Div, Exists, Forall, Formula, Ite, Not, Num,
    Or, PcEq, Sub, Sym, Term, Var, classify, SentenceClass,
)


class SolverError(RuntimeError):
    """Backend failure: the process died or spoke garbage."""


class SatResult(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


def default_command() -> List[str]:
    return [sys.executable, "-m", "arraymc.solver"]


@dataclass
class SolverConfig:
    command: Sequence[str] = field(default_factory=default_command)
    timeout_ms: int = 10_000
    logic: str = "QF_UFLIA"
    dump_dir: Optional[str] = None
    inst_cap: int = 4096

    def __post_init__(self) -> None:
        if isinstance(self.command, str):
            self.command = shlex.split(self.command)
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class Vocabulary:
    arrays: Sequence[str]
    consts: Sequence[str]
    locations: Sequence[str]

    @classmethod
    def of_formula(cls, f: Formula) -> "Vocabulary":
        return cls(
            arrays=sorted(T.arrays_of(f)),
            consts=sorted(T.symbols_of(f)),
            locations=sorted(T.locations_of(f)),
        )

    @classmethod
    def of_program(cls, p) -> "Vocabulary":
        return cls(arrays=list(p.arrays), consts=list(p.consts), locations=list(p.locations))

    def loc_code(self, loc: str) -> int:
        return list(self.locations).index(loc)


PC = "pc"


# ---------------------------------------------------------------------------
# Division elimination


def _eliminate_div(f: Formula):
    """Replace each distinct Div term by a fresh quotient constant.

    Returns (formula, constraints, quotient names); constraints pin
    n*q <= numerator < n*(q+1) and q >= 0, matching the naturals reading.
    """
    quotients: Dict[Tuple[Term, int], Sym] = {}
    constraints: List[Formula] = []

    def term(t: Term) -> Term:
        if isinstance(t, (Num, Sym, Var)):
            return t
        if isinstance(t, T.Add):
            return T.Add(term(t.left), term(t.right))
        if isinstance(t, Sub):
            return Sub(term(t.left), term(t.right))
        if isinstance(t, T.Mul):
            return T.Mul(t.coeff, term(t.arg))
        if isinstance(t, App):
            if isinstance(t.fn, T.Store):
                raise ValueError("store must be expanded before encoding")
            return App(t.fn, term(t.arg))
        if isinstance(t, Ite):
            return Ite(form(t.cond), term(t.then), term(t.other))
        if isinstance(t, Div):
            num = term(t.arg)
            key = (num, t.divisor)
            if key not in quotients:
                q = Sym(f"_q{len(quotients)}")
                quotients[key] = q
                n = t.divisor
                # floor quotient: n*q <= num < n*(q+1); total on all of Z so
                # ite else-branches stay reachable when the numerator dips
                # below zero
                constraints.append(T.le(T.Mul(n, q), num))
                constraints.append(T.lt(num, T.Mul(n, T.Add(q, Num(1)))))
            return quotients[key]
        raise TypeError(f"not a term: {t!r}")

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
        raise ValueError("residual quantifier at encoding time")

    out = form(f)
    return out, constraints, [q.name for q in quotients.values()]


# ---------------------------------------------------------------------------
# Encoding


def _smt_term(t: Term, vocab: Vocabulary) -> str:
    if isinstance(t, Num):
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, (Sym, Var)):
        return t.name if isinstance(t, Sym) else t.name
    if isinstance(t, T.Add):
        return f"(+ {_smt_term(t.left, vocab)} {_smt_term(t.right, vocab)})"
    if isinstance(t, Sub):
        return f"(- {_smt_term(t.left, vocab)} {_smt_term(t.right, vocab)})"
    if isinstance(t, T.Mul):
        return f"(* {t.coeff} {_smt_term(t.arg, vocab)})"
    if isinstance(t, App):
        return f"({t.fn} {_smt_term(t.arg, vocab)})"
    if isinstance(t, Ite):
        return f"(ite {_smt_formula(t.cond, vocab)} {_smt_term(t.then, vocab)} {_smt_term(t.other, vocab)})"
    raise TypeError(f"cannot encode term {t!r}")


def _smt_formula(f: Formula, vocab: Vocabulary) -> str:
    if isinstance(f, BoolVal):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        l, r = _smt_term(f.left, vocab), _smt_term(f.right, vocab)
        if f.op == "!=":
            return f"(not (= {l} {r}))"
        return f"({f.op} {l} {r})"
    if isinstance(f, PcEq):
        return f"(= {PC} {vocab.loc_code(f.loc)})"
    if isinstance(f, And):
        if not f.args:
            return "true"
        return "(and " + " ".join(_smt_formula(a, vocab) for a in f.args) + ")"
    if isinstance(f, Or):
        if not f.args:
            return "false"
        return "(or " + " ".join(_smt_formula(a, vocab) for a in f.args) + ")"
    if isinstance(f, Not):
        return f"(not {_smt_formula(f.arg, vocab)})"
    raise ValueError("residual quantifier at encoding time")


def _collect_apps(f: Formula) -> List[App]:
    seen: Dict[App, None] = {}
    for s in T._walk_terms(f):
        if isinstance(s, App) and not isinstance(s.fn, T.Store):
            seen.setdefault(s, None)
    return list(seen)


def encode(f: Formula, vocab: Optional[Vocabulary] = None, logic: str = "QF_UFLIA") -> str:
    """SMT-LIB 2 script for a quantifier-free formula over the naturals."""
    if T.free_vars(f):
        raise ValueError(f"free variables at encoding time: {sorted(T.free_vars(f))}")
    if vocab is None:
        vocab = Vocabulary.of_formula(f)
    body, div_constraints, quotient_names = _eliminate_div(f)

    lines = [f"(set-logic {logic})"]
    quotients = set(quotient_names)
    consts = sorted(set(vocab.consts) | set(T.symbols_of(body)) | quotients)
    arrays = sorted(set(vocab.arrays) | set(T.arrays_of(body)))
    has_pc = bool(T.locations_of(body))
    for c in consts:
        lines.append(f"(declare-fun {c} () Int)")
    for a in arrays:
        lines.append(f"(declare-fun {a} (Int) Int)")
    if has_pc:
        lines.append(f"(declare-fun {PC} () Int)")
        lines.append(f"(assert (>= {PC} 0))")
    for c in consts:
        if c not in quotients:  # floor quotients may be negative
            lines.append(f"(assert (>= {c} 0))")
    full = T.conj(body, *div_constraints)
    for app in _collect_apps(full):
        lines.append(f"(assert (>= {_smt_term(app, vocab)} 0))")
    for g in div_constraints:
        lines.append(f"(assert {_smt_formula(g, vocab)})")
    lines.append(f"(assert {_smt_formula(body, vocab)})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Skolemization and instantiation


def skolemize(f: Formula, start: int = 0) -> Tuple[Formula, List[str]]:
    """Replace positively-bound existentials by fresh constants _sk<N>."""
    counter = [start]
    names: List[str] = []

    def go(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq, Atom)):
            return g
        if isinstance(g, And):
            return And(go(a) for a in g.args)
        if isinstance(g, Or):
            return Or(go(a) for a in g.args)
        if isinstance(g, Not):
            return g  # ground under negation (callers ensure)
        if isinstance(g, Exists):
            mapping = {}
            for v in g.vars:
                name = f"_sk{counter[0]}"
                counter[0] += 1
                names.append(name)
                mapping[v] = Sym(name)
            return go(T._substitute(g.body, mapping))
        if isinstance(g, Forall):
            return Forall(g.vars, go(g.body))
        raise TypeError(f"not a formula: {g!r}")

    return go(f), names


def ground_index_terms(f: Formula) -> List[Term]:
    """Maximal variable-free, application-free arithmetic subterms of f."""
    out: Dict[Term, None] = {}

    def is_pure(t: Term) -> bool:
        return all(
            not isinstance(s, (Var, App, Ite, Div)) for s in T.subterms(t)
        )

    def visit_term(t: Term) -> None:
        if is_pure(t):
            if not isinstance(t, Num):
                out.setdefault(t, None)
            return
        if isinstance(t, (T.Add, Sub)):
            visit_term(t.left)
            visit_term(t.right)
        elif isinstance(t, T.Mul):
            visit_term(t.arg)
        elif isinstance(t, App):
            visit_term(t.arg)
        elif isinstance(t, Ite):
            visit(t.cond)
            visit_term(t.then)
            visit_term(t.other)
        elif isinstance(t, Div):
            visit_term(t.arg)

    def visit(g: Formula) -> None:
        if isinstance(g, Atom):
            visit_term(g.left)
            visit_term(g.right)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                visit(a)
        elif isinstance(g, Not):
            visit(g.arg)
        elif isinstance(g, (Exists, Forall)):
            visit(g.body)

    visit(f)
    return list(out)


def instantiate_foralls(f: Formula, terms: Sequence[Term], cap: int) -> Formula:
    """Replace positive universal blocks by finite conjunctions over terms."""

    def go(g: Formula) -> Formula:
        if isinstance(g, (BoolVal, PcEq, Atom, Not)):
            return g
        if isinstance(g, And):
            return And(go(a) for a in g.args)
        if isinstance(g, Or):
            return Or(go(a) for a in g.args)
        if isinstance(g, Exists):
            return Exists(g.vars, go(g.body))
        if isinstance(g, Forall):
            body = go(g.body)
            n = len(terms) ** len(g.vars)
            if n > cap:
                raise InstantiationBudget(
                    f"instantiation needs {n} cases (cap {cap})"
                )
            parts = []
            for combo in itertools.product(terms, repeat=len(g.vars)):
                parts.append(T.substitute_free(body, dict(zip(g.vars, combo))))
            return T.conj(*parts)
        raise TypeError(f"not a formula: {g!r}")

    return go(f)


class InstantiationBudget(Exception):
    pass


# ---------------------------------------------------------------------------
# Solver client


class SolverClient:
    """One solver process; queries isolated by push/pop, serialized."""

    def __init__(self, cfg: Optional[SolverConfig] = None) -> None:
        self.cfg = cfg or SolverConfig()
        self._proc: Optional[subprocess.Popen] = None
        self._lines: Optional[Queue] = None
        self.queries = 0
        self._dump_n = 0

    # -- process plumbing ---------------------------------------------------

    def _spawn(self) -> None:
        try:
            self._proc = subprocess.Popen(
                list(self.cfg.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as exc:
            raise SolverError(f"cannot start solver {self.cfg.command!r}: {exc}")
        self._lines = Queue()

        def reader(proc, q):
            for line in proc.stdout:
                q.put(line.rstrip("\n"))
            q.put(None)

        threading.Thread(target=reader, args=(self._proc, self._lines), daemon=True).start()

    def _ensure(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def __enter__(self) -> "SolverClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _send(self, text: str) -> None:
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except OSError as exc:
            raise SolverError(f"solver pipe broken: {exc}")

    def _read_line(self, deadline_ms: int) -> Optional[str]:
        try:
            line = self._lines.get(timeout=deadline_ms / 1000.0)
        except Empty:
            return None
        return line

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
        self._proc = None

    def _dump(self, script: str) -> None:
        if not self.cfg.dump_dir:
            return
        os.makedirs(self.cfg.dump_dir, exist_ok=True)
        path = os.path.join(self.cfg.dump_dir, f"query{self._dump_n:04d}.smt2")
        with open(path, "w") as fh:
            fh.write(script + "\n(check-sat)\n")
        self._dump_n += 1

    # -- queries --------------------------------------------------------------

    def raw_check(self, script: str, value_exprs: Optional[List[str]] = None):
        """Run one scripted query inside a push/pop frame.

        Returns (SatResult, values) where values maps requested expression
        text to an integer (only on sat when value_exprs given).
        """
        self._ensure()
        self._dump(script)
        self.queries += 1
        self._send("(push 1)")
        self._send(script)
        self._send("(check-sat)")
        line = self._read_line(self.cfg.timeout_ms)
        if line is None:
            self._kill()
            return SatResult.UNKNOWN, None
        line = line.strip()
        if line.startswith("(error"):
            self._kill()
            raise SolverError(f"solver error: {line}")
        result = {"sat": SatResult.SAT, "unsat": SatResult.UNSAT}.get(line, SatResult.UNKNOWN)
        values = None
        if result is SatResult.SAT and value_exprs:
            self._send(f"(get-value ({' '.join(value_exprs)}))")
            text = self._read_balanced()
            if text is None:
                self._kill()
                return SatResult.UNKNOWN, None
            values = _parse_values(text, value_exprs)
        self._send("(pop 1)")
        return result, values

    def _read_balanced(self) -> Optional[str]:
        chunks = []
        depth = 0
        while True:
            line = self._read_line(self.cfg.timeout_ms)
            if line is None:
                return None
            chunks.append(line)
            depth += line.count("(") - line.count(")")
            if depth <= 0 and chunks:
                return "\n".join(chunks)

    def _get_values(self, exprs: List[str]) -> Optional[Dict[str, int]]:
        self._send(f"(get-value ({' '.join(exprs)}))")
        text = self._read_balanced()
        if text is None:
            self._kill()
            return None
        return _parse_values(text, exprs)

    def check_with_model(self, script: str, const_exprs: List[str],
                         arrays: List[str], window: int):
        """check-sat plus staged get-value queries in one frame.

        Returns (SatResult, consts dict, cells dict {(a, i): v}); the cell
        window is 0..max(const values)+window, derived from the same model.
        """
        self._ensure()
        self._dump(script)
        self.queries += 1
        self._send("(push 1)")
        self._send(script)
        self._send("(check-sat)")
        line = self._read_line(self.cfg.timeout_ms)
        if line is None:
            self._kill()
            return SatResult.UNKNOWN, None, None
        line = line.strip()
        if line.startswith("(error"):
            self._kill()
            raise SolverError(f"solver error: {line}")
        if line != "sat":
            self._send("(pop 1)")
            return {"unsat": SatResult.UNSAT}.get(line, SatResult.UNKNOWN), None, None
        consts = {}
        if const_exprs:
            vals = self._get_values(const_exprs)
            if vals is None:
                return SatResult.UNKNOWN, None, None
            consts = vals
        cells = {}
        if arrays:
            hi = max(list(consts.values()) + [0]) + max(window, 2)
            cell_exprs = [f"({a} {i})" for a in arrays for i in range(hi + 1)]
            vals = self._get_values(cell_exprs)
            if vals is None:
                return SatResult.UNKNOWN, None, None
            for a in arrays:
                for i in range(hi + 1):
                    cells[(a, i)] = vals.get(f"({a} {i})", 0)
        self._send("(pop 1)")
        return SatResult.SAT, consts, cells


def _parse_values(text: str, exprs: List[str]) -> Dict[str, int]:
    node = parse_one(text)
    out: Dict[str, int] = {}
    for pair in node:
        expr, val = pair[0], pair[1]
        key = _expr_text(expr)
        out[key] = _value_int(val)
    return out


def _expr_text(node) -> str:
    if isinstance(node, list):
        return "(" + " ".join(_expr_text(a) for a in node) + ")"
    return str(node)


def _value_int(node) -> int:
    if isinstance(node, int):
        return node
    if isinstance(node, list) and len(node) == 2 and node[0] == "-":
        return -_value_int(node[1])
    raise SolverError(f"unexpected model value {node!r}")


# ---------------------------------------------------------------------------
# Decision procedures


def check_sat(f: Formula, client: SolverClient, vocab: Optional[Vocabulary] = None) -> SatResult:
    """Decide a ground or existential sentence by Skolemization."""
    cls = classify(f)
    if cls not in (SentenceClass.GROUND, SentenceClass.SIGMA01):
        raise ValueError(f"check_sat needs a ground or existential sentence, got {cls.name}")
    g, _ = skolemize(f)
    script = encode(g, vocab, logic=client.cfg.logic)
    result, _ = client.raw_check(script)
    return result


def check_sat_sigma02(
    f: Formula,
    client: SolverClient,
    vocab: Optional[Vocabulary] = None,
) -> SatResult:
    """Conservative test for exists-forall sentences used by fixpoint checks.

    Universals are instantiated over the Skolem constants plus ground index
    terms; unsat is exact for the original sentence, sat is reported unknown.
    """
    cls = classify(f)
    if cls not in (SentenceClass.SIGMA02, SentenceClass.SIGMA01, SentenceClass.GROUND):
        raise ValueError(f"check_sat_sigma02 cannot handle class {cls.name}")
    g, sk_names = skolemize(f)
    inst_terms: List[Term] = [Sym(n) for n in sk_names]
    inst_terms.extend(t for t in ground_index_terms(g))
    if not inst_terms:
        inst_terms = [Num(0)]
    try:
        g = instantiate_foralls(g, inst_terms, client.cfg.inst_cap)
    except InstantiationBudget:
        return SatResult.UNKNOWN
    script = encode(T.simplify(g), vocab, logic=client.cfg.logic)
    result, _ = client.raw_check(script)
    if result is SatResult.SAT:
        return SatResult.UNKNOWN
    return result


def model_values(
    f: Formula,
    client: SolverClient,
    vocab: Vocabulary,
    index_window: int = 2,
) -> Optional[Dict]:
    """Satisfying assignment for a ground/existential sentence, or None.

    Returns {"consts": {...}, "pc": loc or None, "arrays": {a: {i: v}}},
    with arrays tabulated on 0..max(consts)+index_window, all values drawn
    from one model.
    """
    g, _ = skolemize(f)
    script = encode(g, vocab, logic=client.cfg.logic)
    const_exprs = sorted(set(vocab.consts) | set(T.symbols_of(g)))
    exprs = list(const_exprs)
    if T.locations_of(g) or vocab.locations:
        exprs.append(PC)
    arr_names = sorted(set(vocab.arrays) | set(T.arrays_of(g)))
    result, values, cells = client.check_with_model(script, exprs, arr_names, index_window)
    if result is not SatResult.SAT or values is None:
        return None
    consts = {c: values.get(c, 0) for c in const_exprs}
    pc_loc = None
    if PC in values and vocab.locations:
        code = values[PC]
        if 0 <= code < len(vocab.locations):
            pc_loc = list(vocab.locations)[code]
    arrays: Dict[str, Dict[int, int]] = {}
    for (a, i), v in (cells or {}).items():
        arrays.setdefault(a, {})[i] = v
    return {"consts": consts, "pc": pc_loc, "arrays": arrays}
