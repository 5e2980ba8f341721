"""Deterministic LP-format export and a plain solution-file reader.

The writer emits CPLEX-style LP text: objective, constraint rows, bounds and a
binary section, with variables and rows in model order and coefficients
rendered with %.17g so identical models serialize byte-for-byte identically.
Square brackets in variable names become parentheses, which every mainstream
solver accepts.

Solution files are the matching import half: one ``name value`` pair per line,
``#`` comments and blank lines ignored.
"""

from __future__ import annotations

import math

import numpy as np

from .milp import BINARY, EQ, GE, LE, MilpModel


def lp_var_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")")


def _coef(value: float) -> str:
    return f"{value:.17g}"


def _terms(pairs, names) -> str:
    parts = []
    for pos, coef in pairs:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_coef(abs(coef))} {names[pos]}")
    if not parts:
        return ""
    out = " ".join(parts)
    return out[2:] if out.startswith("+ ") else out


def lp_string(model: MilpModel) -> str:
    names = [lp_var_name(v.name) for v in model.variables]
    lines = [f"\\ {model.name}", "Maximize"]
    obj = _terms(model.objective, names)
    if model.objective_constant:
        extra = f"{'+' if model.objective_constant > 0 else '-'} {_coef(abs(model.objective_constant))}"
        obj = f"{obj} {extra}" if obj else extra
    lines.append(f" obj: {obj if obj else '0 ' + names[0]}")
    lines.append("Subject To")
    senses = {LE: "<=", EQ: "=", GE: ">="}
    for row in model.rows:
        body = _terms(row.coeffs, names)
        if not body:
            body = f"0 {names[0]}"
        lines.append(f" {lp_var_name(row.name)}: {body} {senses[row.sense]} {_coef(row.rhs)}")
    lines.append("Bounds")
    for name, v in zip(names, model.variables):
        if v.kind == BINARY and v.lb == 0.0 and v.ub == 1.0:
            continue
        if v.lb == v.ub:
            lines.append(f" {name} = {_coef(v.lb)}")
        elif math.isinf(v.lb) and math.isinf(v.ub):
            lines.append(f" {name} free")
        elif v.lb == 0.0 and math.isinf(v.ub):
            continue  # LP-format default
        else:
            lo = "-inf" if math.isinf(v.lb) else _coef(v.lb)
            hi = "+inf" if math.isinf(v.ub) else _coef(v.ub)
            lines.append(f" {lo} <= {name} <= {hi}")
    binaries = [name for name, v in zip(names, model.variables) if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[i:i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(lp_string(model))


def read_solution(path) -> dict:
    """Parse ``name value`` pairs, one per line."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'name value', got {raw.rstrip()!r}")
            try:
                values[parts[0]] = float(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad numeric value {parts[1]!r}") from None
    return values


def apply_solution(model: MilpModel, values: dict) -> np.ndarray:
    """Map a solution-file dict onto the model's variable vector.

    Accepts either raw variable names or their LP-format spellings. Variables
    absent from the file default to their lower bound when finite, else zero
    (solvers commonly omit variables at default levels).
    """
    x = np.zeros(len(model.variables))
    for j, v in enumerate(model.variables):
        if v.name in values:
            x[j] = values[v.name]
        elif lp_var_name(v.name) in values:
            x[j] = values[lp_var_name(v.name)]
        else:
            x[j] = v.lb if math.isfinite(v.lb) else 0.0
    return x
