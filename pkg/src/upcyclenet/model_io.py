"""Model interchange and solution handling.

Three jobs live here:

* writing the canonical model as free-format MPS (the bit-exact interchange
  artifact) plus an LP-style listing for human eyes,
* parsing and verifying solution files in a neutral ``name value`` line
  format,
* driving an external MPS-capable solver as a subprocess through a command
  template.

Solution file format (UTF-8, one item per line, ``#`` starts a comment):

    =obj= 540.0          optional reported objective
    =status= optimal     optional declared status (optimal, feasible,
                         infeasible, unbounded, unknown)
    =bound= 523.1        optional best proven bound (enables gap reporting)
    xsrccf_t1_w_s1_f1_c1 10.0
    bcf_f1_c1 1

Unlisted columns default to 0.  Unknown names, duplicate assignments and
unparsable numbers are hard errors: a silently misread solution is worse
than no solution.  ``=status=`` and ``=bound=`` are extensions of the plain
``name value`` contract; adapters for common solvers live in
``docs/solver_adapters.md``.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NamingError, SolutionError, SolverRunError
from .model import Model, Row

SOLUTION_STATUSES = ("optimal", "feasible", "infeasible", "unbounded", "unknown")


@dataclass
class Solution:
    """A (claimed) assignment of the model's columns, from any producer."""

    values: dict[str, float]
    objective_reported: float
    status: str = "unknown"
    source: str = "external"  # 'oracle' | 'external'
    bound: float | None = None
    gap: float | None = None
    diagnostics: str = ""

    def value(self, name: str) -> float:
        return self.values.get(name, 0.0)


def compute_gap(objective: float, bound: float) -> float | None:
    """Relative optimality gap (objective - bound) / objective; None at 0/0."""
    if objective != 0.0:
        return (objective - bound) / objective
    return 0.0 if bound == 0.0 else None


# ---------------------------------------------------------------------------
# MPS writing


def _fmt(x: float) -> str:
    """Shortest exact decimal for a float; keeps files byte-deterministic."""
    return repr(float(x))


def write_mps(model: Model, name: str = "") -> str:
    """Free-format MPS text for the model.

    Sections NAME, ROWS, COLUMNS, RHS, BOUNDS, ENDATA; binaries sit inside a
    single INTORG/INTEND marker block and get BV bound lines.  Output is a
    pure function of the model, byte for byte.
    """
    names = model.column_names()
    if len(set(names)) != len(names):
        seen: set[str] = set()
        for n in names:
            if n in seen:
                raise NamingError(f"column name collision after sanitization: '{n}'")
            seen.add(n)
    row_names = [r.name for r in model.rows]
    if len(set(row_names)) != len(row_names):
        seen = set()
        for n in row_names:
            if n in seen:
                raise NamingError(f"row name collision after sanitization: '{n}'")
            seen.add(n)

    # transpose rows into per-column entry lists, objective first
    entries: list[list[tuple[str, float]]] = [[] for _ in range(model.n_columns)]
    for c in range(model.n_columns):
        if model.objective[c] != 0.0:
            entries[c].append(("COST", float(model.objective[c])))
    for row in model.rows:
        for c, v in zip(row.cols, row.coefs):
            if v != 0.0:
                entries[c].append((row.name, v))

    out: list[str] = []
    out.append(f"NAME {name or 'UPCYCLENET'}")
    out.append("ROWS")
    out.append(" N COST")
    for row in model.rows:
        out.append(f" {row.sense} {row.name}")
    out.append("COLUMNS")
    first_binary = model.index.n_continuous
    for c in range(model.n_columns):
        if c == first_binary:
            out.append(" MARKER 'MARKER' 'INTORG'")
        col = names[c]
        if not entries[c]:
            # a column must appear at least once to exist for the reader
            out.append(f" {col} COST 0")
            continue
        for row_name, v in entries[c]:
            out.append(f" {col} {row_name} {_fmt(v)}")
    if model.index.n_binary:
        out.append(" MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    for row in model.rows:
        if row.rhs != 0.0:
            out.append(f" RHS {row.name} {_fmt(row.rhs)}")
    out.append("BOUNDS")
    for c in range(first_binary, model.n_columns):
        out.append(f" BV BND {names[c]}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_lp_listing(model: Model) -> str:
    """LP-style listing for humans; not a solver interchange format."""
    names = model.column_names()
    sense_txt = {"L": "<=", "G": ">=", "E": "="}

    def term(coef: float, col: int) -> str:
        sign = "- " if coef < 0 else "+ "
        return f"{sign}{_fmt(abs(coef))} {names[col]}"

    lines = ["Minimize", " COST:"]
    obj_terms = [term(float(model.objective[c]), c) for c in range(model.n_columns)
                 if model.objective[c] != 0.0]
    for i in range(0, len(obj_terms), 4):
        lines.append("  " + " ".join(obj_terms[i : i + 4]))
    lines.append("Subject To")
    for row in model.rows:
        terms = " ".join(term(v, c) for c, v in zip(row.cols, row.coefs) if v != 0.0)
        lines.append(f" {row.name}: {terms} {sense_txt[row.sense]} {_fmt(row.rhs)}")
    lines.append("Binary")
    for c in model.binary_columns:
        lines.append(f" {names[c]}")
    lines.append("End")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# solution parsing and formatting


def parse_solution(text: str, model: Model, source: str = "external") -> Solution:
    """Parse a neutral solution file against the model's column names."""
    known = set(model.column_names())
    values: dict[str, float] = {}
    declared_obj: float | None = None
    declared_status: str | None = None
    declared_bound: float | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise SolutionError(f"line {lineno}: expected 'name value', got {raw!r}")
        key, val = tokens

        def number(what: str) -> float:
            try:
                return float(val)
            except ValueError:
                raise SolutionError(f"line {lineno}: unparsable {what} {val!r}") from None

        if key == "=obj=":
            if declared_obj is not None:
                raise SolutionError(f"line {lineno}: duplicate =obj= directive")
            declared_obj = number("objective")
        elif key == "=bound=":
            if declared_bound is not None:
                raise SolutionError(f"line {lineno}: duplicate =bound= directive")
            declared_bound = number("bound")
        elif key == "=status=":
            if declared_status is not None:
                raise SolutionError(f"line {lineno}: duplicate =status= directive")
            if val not in SOLUTION_STATUSES:
                raise SolutionError(f"line {lineno}: unknown status {val!r}")
            declared_status = val
        elif key.startswith("="):
            raise SolutionError(f"line {lineno}: unknown directive {key!r}")
        else:
            if key not in known:
                raise SolutionError(f"line {lineno}: unknown column name {key!r}")
            if key in values:
                raise SolutionError(f"line {lineno}: duplicate assignment to {key!r}")
            values[key] = number("value")

    if declared_status is not None:
        status = declared_status
    elif values or declared_obj is not None:
        status = "feasible"
    else:
        status = "unknown"

    objective = declared_obj if declared_obj is not None else recompute_objective(values, model)
    gap = compute_gap(objective, declared_bound) if declared_bound is not None else None
    return Solution(
        values=values,
        objective_reported=objective,
        status=status,
        source=source,
        bound=declared_bound,
        gap=gap,
    )


def format_solution(sol: Solution) -> str:
    """Inverse of parse_solution for the fields the format carries."""
    lines = [f"=obj= {_fmt(sol.objective_reported)}", f"=status= {sol.status}"]
    if sol.bound is not None:
        lines.append(f"=bound= {_fmt(sol.bound)}")
    for name, v in sol.values.items():
        if v != 0.0:
            lines.append(f"{name} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def solution_vector(sol: Solution, model: Model) -> np.ndarray:
    """Dense column-ordered value vector; unknown names are a hard error."""
    name_to_col = {n: c for c, n in enumerate(model.column_names())}
    x = np.zeros(model.n_columns, dtype=np.float64)
    for name, v in sol.values.items():
        try:
            x[name_to_col[name]] = v
        except KeyError:
            raise SolutionError(f"solution names column {name!r} not in model") from None
    return x


def recompute_objective(values: dict[str, float], model: Model) -> float:
    name_to_col = {n: c for c, n in enumerate(model.column_names())}
    total = 0.0
    for name, v in values.items():
        try:
            total += float(model.objective[name_to_col[name]]) * v
        except KeyError:
            raise SolutionError(f"solution names column {name!r} not in model") from None
    return total


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    """Row-by-row recheck of a solution against every constraint family."""

    passed: bool
    tol: float
    violations_by_family: dict[str, int]
    worst_violation: float
    worst_row: str | None
    integrality_violations: int
    worst_integrality: float
    negative_value_violations: int
    objective_recomputed: float
    messages: list[str] = field(default_factory=list)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        fams = ", ".join(f"{k}={v}" for k, v in self.violations_by_family.items() if v)
        lines = [
            f"verification {verdict} (tol {self.tol:g})",
            f"  worst row violation {self.worst_violation:.3e}"
            + (f" at {self.worst_row}" if self.worst_row else ""),
            f"  integrality violations {self.integrality_violations}"
            f" (worst {self.worst_integrality:.3e})",
            f"  negative flow values {self.negative_value_violations}",
            f"  objective recomputed {self.objective_recomputed!r}",
        ]
        if fams:
            lines.insert(1, f"  violations by family: {fams}")
        lines.extend("  " + m for m in self.messages)
        return "\n".join(lines)


def _row_violation(row: Row, activity: float) -> float:
    if row.sense == "L":
        return max(0.0, activity - row.rhs)
    if row.sense == "G":
        return max(0.0, row.rhs - activity)
    return abs(activity - row.rhs)


INTEGRALITY_TOL = 1e-6


def verify_solution(sol: Solution, model: Model, tol: float = 1e-6) -> VerificationReport:
    """Recheck every row, sign bound and binary against the raw model data.

    PASS means all row activities land within `tol` (absolute) of their
    sense, every binary is within 1e-6 of 0 or 1, and no flow is below
    -tol.  The report never raises on violations; it carries them.
    """
    x = solution_vector(sol, model)
    violations = {fam: 0 for fam in
                  ("demand", "quota", "source_cap", "flow_balance", "facility_cap", "one_size")}
    worst = 0.0
    worst_row: str | None = None
    for row in model.rows:
        v = _row_violation(row, row.activity(x))
        if v > tol:
            violations[row.family] += 1
        if v > worst:
            worst, worst_row = v, row.name
    n_int = 0
    worst_int = 0.0
    for c in model.binary_columns:
        d = min(abs(x[c]), abs(x[c] - 1.0))
        if d > INTEGRALITY_TOL:
            n_int += 1
        worst_int = max(worst_int, d)
    neg = int(np.sum(x[: model.index.n_continuous] < -tol))
    messages = []
    recomputed = float(model.objective @ x)
    if sol.objective_reported != 0.0 or recomputed != 0.0:
        denom = max(1.0, abs(recomputed))
        if abs(recomputed - sol.objective_reported) > 1e-6 * denom:
            messages.append(
                f"reported objective {sol.objective_reported!r} differs from "
                f"recomputed {recomputed!r}"
            )
    passed = worst <= tol and n_int == 0 and neg == 0
    return VerificationReport(
        passed=passed,
        tol=tol,
        violations_by_family=violations,
        worst_violation=worst,
        worst_row=worst_row,
        integrality_violations=n_int,
        worst_integrality=worst_int,
        negative_value_violations=neg,
        objective_recomputed=recomputed,
        messages=messages,
    )


# ---------------------------------------------------------------------------
# external solver subprocess


def run_external_solver(model: Model, solver_cmd: str,
                        time_limit: float | None = None) -> Solution:
    """Write MPS, run the user's solver command, parse back its solution.

    `solver_cmd` is a shell-less command template; every occurrence of
    `{mps}` and `{sol}` in its tokens is replaced by the model path and the
    expected solution path.  The child runs in a fresh temp directory with
    the caller's environment.  A declared `=status=` in the solution file
    wins; otherwise a nonzero exit means status unknown (diagnostics
    captured), and a timeout with an incumbent file present means feasible.
    """
    if "{mps}" not in solver_cmd or "{sol}" not in solver_cmd:
        raise SolverRunError("solver command template must use both {mps} and {sol}")
    tokens = shlex.split(solver_cmd)
    with tempfile.TemporaryDirectory(prefix="upcyclenet-") as tmp:
        mps_path = Path(tmp) / "model.mps"
        sol_path = Path(tmp) / "model.sol"
        mps_path.write_text(write_mps(model))
        cmd = [t.replace("{mps}", str(mps_path)).replace("{sol}", str(sol_path)) for t in tokens]
        t0 = time.monotonic()
        timed_out = False
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=time_limit)
            exit_code: int | None = proc.returncode
            stdout, stderr = proc.stdout, proc.stderr
        except subprocess.TimeoutExpired as exc:
            timed_out = True
            exit_code = None
            stdout = exc.stdout.decode(errors="replace") if exc.stdout else ""
            stderr = exc.stderr.decode(errors="replace") if exc.stderr else ""
        except FileNotFoundError as exc:
            raise SolverRunError(f"cannot spawn solver: {exc}") from exc
        elapsed = time.monotonic() - t0

        diag = (
            f"cmd={' '.join(cmd)}\nexit={'timeout' if timed_out else exit_code} "
            f"elapsed={elapsed:.2f}s\nstdout: {stdout[-2000:]}\nstderr: {stderr[-2000:]}"
        )

        if not sol_path.exists():
            return Solution(values={}, objective_reported=0.0, status="unknown",
                            source="external", diagnostics=diag)
        text = sol_path.read_text()
        try:
            sol = parse_solution(text, model, source="external")
        except SolutionError as exc:
            return Solution(values={}, objective_reported=0.0, status="unknown",
                            source="external", diagnostics=f"{diag}\nparse error: {exc}")
        sol.diagnostics = diag
        declared = any(
            line.split("#", 1)[0].split()[:1] == ["=status="] for line in text.splitlines()
        )
        if not declared:
            if timed_out:
                sol.status = "feasible"
            elif exit_code != 0:
                sol.status = "unknown"
        return sol
