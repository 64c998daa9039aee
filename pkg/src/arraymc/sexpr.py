"""Minimal S-expression reader shared by the spec parser and the SMT backend.

Symbols come back as Python str, numerals as int, groups as lists.  Comments
run from ';' to end of line.  Parse errors carry line:column positions.
"""

from __future__ import annotations

from typing import Iterator, List, Tuple, Union

Node = Union[str, int, list]


class SexprError(ValueError):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_DELIMS = "()"
_WS = " \t\r\n"


def tokenize(text: str) -> Iterator[Tuple[str, int, int]]:
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in _WS:
            i += 1
            col += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in _DELIMS:
            yield c, line, col
            i += 1
            col += 1
            continue
        start, scol = i, col
        while i < n and text[i] not in _WS + _DELIMS + ";":
            i += 1
            col += 1
        yield text[start:i], line, scol


def parse_all(text: str) -> List[Node]:
    """Parse every top-level form in text."""
    out: List[Node] = []
    stack: List[list] = []
    last = (1, 1)
    for tok, line, col in tokenize(text):
        last = (line, col)
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SexprError("unbalanced ')'", line, col)
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
        else:
            atom: Node
            try:
                atom = int(tok)
            except ValueError:
                atom = tok
            (stack[-1] if stack else out).append(atom)
    if stack:
        raise SexprError("unclosed '('", *last)
    return out


def parse_one(text: str) -> Node:
    forms = parse_all(text)
    if len(forms) != 1:
        raise SexprError(f"expected one form, got {len(forms)}", 1, 1)
    return forms[0]


def show(node: Node) -> str:
    if isinstance(node, list):
        return "(" + " ".join(show(x) for x in node) + ")"
    return str(node)
