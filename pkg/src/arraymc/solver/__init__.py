"""Built-in SMT-LIB 2 backend for quantifier-free linear integer arithmetic
with uninterpreted unary functions.

Runs as a child process (`python -m arraymc.solver`) speaking SMT-LIB 2 on
stdin/stdout, so the checker talks to it exactly as it would to any external
solver.  Decisions are exact: integer feasibility uses the Omega test over
Python integers, and uninterpreted functions are handled by Ackermann
expansion with congruence clauses.
"""

from .core import SolverCore, SolveBudget  # noqa: F401
