"""Solver-agnostic intermediate representation for linear and mixed-integer models.

All constraint builders in this package emit variables and rows into a
:class:`ModelBuilder`; :meth:`ModelBuilder.build` freezes the result into an
immutable :class:`MilpModel` with a deterministic variable ordering (sorted by
symbol, then indices) so that identical inputs produce byte-identical models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="

VarKey = tuple  # (symbol, indices)


def _index_sort_key(indices):
    # ints sort numerically, strings lexically; mixed tuples stay comparable
    return tuple((0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v)) for v in indices)


def format_name(symbol: str, indices: tuple) -> str:
    if not indices:
        return symbol
    return f"{symbol}[{','.join(str(i) for i in indices)}]"


@dataclass(frozen=True)
class Variable:
    name: str
    symbol: str
    indices: tuple
    kind: str
    lb: float
    ub: float


@dataclass(frozen=True)
class Row:
    name: str
    family: str
    indices: tuple
    coeffs: tuple  # ((var_position, coefficient), ...)
    sense: str
    rhs: float


class LinExpr:
    """Mutable linear expression over (symbol, indices) keys plus a constant."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[VarKey, float] | None = None, constant: float = 0.0):
        self.terms: dict[VarKey, float] = dict(terms) if terms else {}
        self.constant = constant

    def add(self, key: VarKey, coef: float) -> "LinExpr":
        if coef != 0.0:
            self.terms[key] = self.terms.get(key, 0.0) + coef
        return self

    def add_const(self, value: float) -> "LinExpr":
        self.constant += value
        return self

    def add_expr(self, other: "LinExpr", scale: float = 1.0) -> "LinExpr":
        for key, coef in other.terms.items():
            self.add(key, scale * coef)
        self.constant += scale * other.constant
        return self

    def items(self):
        return self.terms.items()


class ModelError(ValueError):
    pass


class ModelBuilder:
    """Collects variables, rows and objective terms; ``build`` freezes them."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._vars: dict[VarKey, Variable] = {}
        self._rows: list[tuple[str, str, tuple, dict, str, float]] = []
        self._row_names: set[str] = set()
        self._objective: dict[VarKey, float] = {}
        self._objective_constant = 0.0

    # -- variables ---------------------------------------------------------

    def add_var(self, symbol: str, indices: tuple = (), kind: str = CONTINUOUS,
                lb: float = 0.0, ub: float = math.inf) -> VarKey:
        key = (symbol, tuple(indices))
        if key in self._vars:
            raise ModelError(f"duplicate variable {format_name(symbol, tuple(indices))}")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"bad bounds [{lb}, {ub}] for {format_name(symbol, tuple(indices))}")
        self._vars[key] = Variable(format_name(symbol, tuple(indices)), symbol,
                                   tuple(indices), kind, float(lb), float(ub))
        return key

    def has_var(self, symbol: str, indices: tuple = ()) -> bool:
        return (symbol, tuple(indices)) in self._vars

    def var_bounds(self, key: VarKey) -> tuple[float, float]:
        v = self._vars[key]
        return v.lb, v.ub

    # -- rows and objective --------------------------------------------------

    def add_row(self, family: str, indices: tuple, expr: LinExpr, sense: str, rhs: float):
        if sense not in (LE, EQ, GE):
            raise ModelError(f"unknown sense {sense!r}")
        name = format_name(family, tuple(indices))
        if name in self._row_names:
            raise ModelError(f"duplicate row {name}")
        self._row_names.add(name)
        for key in expr.terms:
            if key not in self._vars:
                raise ModelError(f"row {name} references unknown variable {key}")
        # constants on the left move to the right-hand side
        self._rows.append((name, family, tuple(indices), dict(expr.terms), sense,
                           float(rhs) - expr.constant))

    def add_objective(self, expr: LinExpr, scale: float = 1.0):
        for key, coef in expr.terms.items():
            if key not in self._vars:
                raise ModelError(f"objective references unknown variable {key}")
            self._objective[key] = self._objective.get(key, 0.0) + scale * coef
        self._objective_constant += scale * expr.constant

    # -- finalize ------------------------------------------------------------

    def build(self) -> "MilpModel":
        order = sorted(self._vars, key=lambda k: (k[0], _index_sort_key(k[1])))
        position = {key: i for i, key in enumerate(order)}
        variables = tuple(self._vars[key] for key in order)
        rows = []
        for name, family, indices, terms, sense, rhs in self._rows:
            coeffs = tuple(sorted(((position[k], c) for k, c in terms.items() if c != 0.0)))
            for _, c in coeffs:
                if not math.isfinite(c):
                    raise ModelError(f"non-finite coefficient in row {name}")
            if not math.isfinite(rhs):
                raise ModelError(f"non-finite right-hand side in row {name}")
            rows.append(Row(name, family, indices, coeffs, sense, rhs))
        objective = tuple(sorted((position[k], c) for k, c in self._objective.items() if c != 0.0))
        for _, c in objective:
            if not math.isfinite(c):
                raise ModelError("non-finite objective coefficient")
        return MilpModel(self.name, variables, tuple(rows), objective,
                         self._objective_constant)


@dataclass(frozen=True)
class MilpModel:
    """Immutable linear model: maximize objective subject to rows and bounds."""

    name: str
    variables: tuple
    rows: tuple
    objective: tuple  # ((var_position, coefficient), ...)
    objective_constant: float
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lookup = {(v.symbol, v.indices): i for i, v in enumerate(self.variables)}
        object.__setattr__(self, "_index", lookup)

    # -- lookups -------------------------------------------------------------

    def var_index(self, symbol: str, indices: tuple = ()) -> int:
        return self._index[(symbol, tuple(indices))]

    def value(self, x: np.ndarray, symbol: str, indices: tuple = ()) -> float:
        return float(x[self.var_index(symbol, indices)])

    def values(self, x: np.ndarray, symbol: str) -> dict:
        return {v.indices: float(x[i]) for i, v in enumerate(self.variables)
                if v.symbol == symbol}

    @property
    def num_binaries(self) -> int:
        return sum(1 for v in self.variables if v.kind == BINARY)

    @property
    def num_continuous(self) -> int:
        return sum(1 for v in self.variables if v.kind == CONTINUOUS)

    def count_vars(self, symbol: str) -> int:
        return sum(1 for v in self.variables if v.symbol == symbol)

    def count_rows(self, family: str) -> int:
        return sum(1 for r in self.rows if r.family == family)

    def stats(self) -> dict:
        var_counts: dict[str, int] = {}
        for v in self.variables:
            var_counts[v.symbol] = var_counts.get(v.symbol, 0) + 1
        row_counts: dict[str, int] = {}
        for r in self.rows:
            row_counts[r.family] = row_counts.get(r.family, 0) + 1
        nnz = sum(len(r.coeffs) for r in self.rows)
        return {
            "variables": len(self.variables),
            "binaries": self.num_binaries,
            "rows": len(self.rows),
            "nonzeros": nnz,
            "variables_by_symbol": dict(sorted(var_counts.items())),
            "rows_by_family": dict(sorted(row_counts.items())),
        }

    # -- numeric views ---------------------------------------------------------

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for i, coef in self.objective:
            c[i] = coef
        return c

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return lb, ub

    def integrality_vector(self) -> np.ndarray:
        return np.array([1 if v.kind == BINARY else 0 for v in self.variables])

    def constraint_matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Rows as a sparse matrix with per-row lower/upper envelope [rlo, rup]."""
        data, ri, ci = [], [], []
        rlo = np.empty(len(self.rows))
        rup = np.empty(len(self.rows))
        for i, row in enumerate(self.rows):
            for j, coef in row.coeffs:
                ri.append(i)
                ci.append(j)
                data.append(coef)
            if row.sense == LE:
                rlo[i], rup[i] = -np.inf, row.rhs
            elif row.sense == GE:
                rlo[i], rup[i] = row.rhs, np.inf
            else:
                rlo[i], rup[i] = row.rhs, row.rhs
        a = sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), len(self.variables)))
        return a, rlo, rup

    def row_activities(self, x: np.ndarray) -> np.ndarray:
        a, _, _ = self.constraint_matrix()
        return a @ x

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x + self.objective_constant)

    def relax_integrality(self) -> "MilpModel":
        relaxed = tuple(
            Variable(v.name, v.symbol, v.indices, CONTINUOUS, v.lb, v.ub)
            if v.kind == BINARY else v
            for v in self.variables)
        return MilpModel(self.name, relaxed, self.rows, self.objective,
                         self.objective_constant)

    def fix_variables(self, fixed: Mapping[int, float]) -> "MilpModel":
        """New model with the given variable positions pinned to values."""
        variables = list(self.variables)
        for i, val in fixed.items():
            v = variables[i]
            variables[i] = Variable(v.name, v.symbol, v.indices, CONTINUOUS,
                                    float(val), float(val))
        return MilpModel(self.name, tuple(variables), self.rows, self.objective,
                         self.objective_constant)
