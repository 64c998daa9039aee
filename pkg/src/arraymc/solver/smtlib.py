"""SMT-LIB 2 front end for the built-in solver.

Reads commands from a stream, maintains the assertion stack, and prints
check-sat/get-value answers.  Only the fragment the checker emits is
supported: Int constants, unary Int->Int functions, and the usual boolean
and linear arithmetic operators.
"""

from __future__ import annotations

import sys
from typing import IO, List

from ..sexpr import SexprError, parse_all, show
from .core import SmtError, SolverCore


def _fmt_value(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


class Session:
    def __init__(self, out: IO[str]) -> None:
        self.core = SolverCore()
        self.out = out

    def _reply(self, text: str) -> None:
        self.out.write(text + "\n")
        self.out.flush()

    def execute(self, cmd) -> bool:
        """Run one command; returns False when the session should end."""
        if not isinstance(cmd, list) or not cmd:
            self._reply('(error "malformed command")')
            return True
        head = cmd[0]
        try:
            if head in ("set-logic", "set-option", "set-info", "echo"):
                pass
            elif head == "declare-fun":
                _, name, args, ret = cmd
                self.core.declare(name, list(args), ret)
            elif head == "declare-const":
                _, name, ret = cmd
                self.core.declare(name, [], ret)
            elif head == "assert":
                self.core.assert_form(cmd[1])
            elif head == "push":
                self.core.push(cmd[1] if len(cmd) > 1 else 1)
            elif head == "pop":
                self.core.pop(cmd[1] if len(cmd) > 1 else 1)
            elif head == "reset":
                self.core.reset()
            elif head == "check-sat":
                answer, _ = self.core.check()
                self._reply(answer)
            elif head == "get-value":
                vals = []
                for term in cmd[1]:
                    vals.append(f"({show(term)} {_fmt_value(self.core.eval_term(term))})")
                self._reply("(" + " ".join(vals) + ")")
            elif head == "exit":
                return False
            else:
                self._reply(f'(error "unsupported command {head}")')
        except (SmtError, SexprError, ValueError, IndexError) as exc:
            self._reply(f'(error "{exc}")')
        return True


def main_loop(inp: IO[str], out: IO[str]) -> int:
    session = Session(out)
    buffer = ""
    depth = 0
    for line in inp:
        buffer += line
        depth += line.count("(") - line.count(")")
        if depth > 0 or not buffer.strip():
            continue
        try:
            commands = parse_all(buffer)
        except SexprError as exc:
            session._reply(f'(error "{exc}")')
            buffer = ""
            depth = 0
            continue
        buffer = ""
        depth = 0
        for cmd in commands:
            if not session.execute(cmd):
                return 0
    return 0


def main() -> int:
    return main_loop(sys.stdin, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
