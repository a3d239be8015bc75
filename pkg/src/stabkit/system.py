"""System definitions: file format, validation, linearization, structure.

A system is dx/dt = f(x, u) in continuous mode or x+ = f(x, u) in discrete
mode, with f given componentwise in the expression language and a designated
equilibrium (fixed point in discrete mode) that the right-hand side must
actually satisfy to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr as ex
from .linalg import MAX_DIM, numerical_rank

CONTINUOUS = "continuous"
DISCRETE = "discrete"
EQUILIBRIUM_TOL = 1e-9


class SystemFormatError(ValueError):
    """Malformed system file; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SystemValidationError(ValueError):
    """System violates a structural invariant."""


@dataclass(frozen=True)
class SystemSpec:
    """Validated system description.

    Construction checks dimensions, variable indices and the equilibrium
    residual, so downstream code can assume a well-posed system.
    """

    n: int
    m: int
    mode: str
    components: tuple[ex.Expr, ...]
    x_eq: tuple[float, ...]
    u_eq: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "x_eq", tuple(float(v) for v in self.x_eq))
        object.__setattr__(self, "u_eq", tuple(float(v) for v in self.u_eq))
        if self.mode not in (CONTINUOUS, DISCRETE):
            raise SystemValidationError(f"mode must be continuous or discrete, got {self.mode!r}")
        if self.n < 1 or self.m < 1:
            raise SystemValidationError("need at least one state and one control")
        if self.n > MAX_DIM:
            raise SystemValidationError(
                f"state dimension {self.n} exceeds the supported cap of {MAX_DIM}"
            )
        if len(self.components) != self.n:
            raise SystemValidationError(
                f"expected {self.n} components, got {len(self.components)}"
            )
        if len(self.x_eq) != self.n or len(self.u_eq) != self.m:
            raise SystemValidationError("equilibrium dimensions do not match the system")
        for i, comp in enumerate(self.components, start=1):
            max_x, max_u = ex.max_indices(comp)
            if max_x > self.n:
                raise SystemValidationError(
                    f"component f{i} references x{max_x} but the system has n={self.n}"
                )
            if max_u > self.m:
                raise SystemValidationError(
                    f"component f{i} references u{max_u} but the system has m={self.m}"
                )
        try:
            values = evaluate(self, self.x_eq, self.u_eq)
        except ex.EvalError as err:
            raise SystemValidationError(f"evaluation failed at the equilibrium: {err}") from err
        residual = values - np.asarray(self.x_eq) if self.mode == DISCRETE else values
        norm = float(np.linalg.norm(residual))
        if norm > EQUILIBRIUM_TOL:
            raise SystemValidationError(
                f"equilibrium residual {norm:.3e} exceeds {EQUILIBRIUM_TOL:.0e}"
            )


def evaluate(system: SystemSpec, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
    """Exact scalar evaluation of f at one point."""
    return np.array([ex.eval_expr(comp, x, u) for comp in system.components])


def system_from_strings(
    mode: str,
    components: Sequence[str],
    x_eq: Sequence[float] | None = None,
    u_eq: Sequence[float] | None = None,
    m: int | None = None,
) -> SystemSpec:
    """Build a system from component strings; dimensions are inferred."""
    parsed = tuple(ex.parse_expr(text) for text in components)
    n = len(parsed)
    if m is None:
        m = max((ex.max_indices(c)[1] for c in parsed), default=0) or 1
    if x_eq is None:
        x_eq = (0.0,) * n
    if u_eq is None:
        u_eq = (0.0,) * m
    return SystemSpec(n, m, mode, parsed, tuple(x_eq), tuple(u_eq))


# --- file format ----------------------------------------------------------
#
#   # comment
#   mode continuous
#   states 2
#   controls 1
#   eq x = 0 0
#   eq u = 0
#   f1 = x1^3 + x2
#   f2 = u1


def parse_system(text: str) -> SystemSpec:
    mode: str | None = None
    n: int | None = None
    m: int | None = None
    x_eq: tuple[float, ...] | None = None
    u_eq: tuple[float, ...] | None = None
    component_lines: dict[int, tuple[str, int]] = {}

    def parse_floats(payload: str, lineno: int) -> tuple[float, ...]:
        try:
            return tuple(float(tok) for tok in payload.split())
        except ValueError:
            raise SystemFormatError(f"expected numbers, got {payload!r}", lineno) from None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "mode":
            if rest not in (CONTINUOUS, DISCRETE):
                raise SystemFormatError(f"mode must be continuous or discrete, got {rest!r}", lineno)
            mode = rest
        elif key == "states":
            try:
                n = int(rest)
            except ValueError:
                raise SystemFormatError(f"states expects an integer, got {rest!r}", lineno) from None
        elif key == "controls":
            try:
                m = int(rest)
            except ValueError:
                raise SystemFormatError(f"controls expects an integer, got {rest!r}", lineno) from None
        elif key == "eq":
            which, eq, payload = rest.partition("=")
            which = which.strip()
            if not eq or which not in ("x", "u"):
                raise SystemFormatError("expected 'eq x = ...' or 'eq u = ...'", lineno)
            values = parse_floats(payload, lineno)
            if which == "x":
                x_eq = values
            else:
                u_eq = values
        elif key.startswith("f") and key[1:].isdigit():
            name, eq, payload = line.partition("=")
            if not eq:
                raise SystemFormatError(f"expected '{key} = <expression>'", lineno)
            index = int(key[1:])
            if index in component_lines:
                raise SystemFormatError(f"duplicate component f{index}", lineno)
            component_lines[index] = (payload.strip(), lineno)
        else:
            raise SystemFormatError(f"unrecognized directive {key!r}", lineno)

    for field, value in (("mode", mode), ("states", n), ("controls", m),
                         ("eq x", x_eq), ("eq u", u_eq)):
        if value is None:
            raise SystemFormatError(f"missing {field} line", len(text.splitlines()) or 1)
    assert mode is not None and n is not None and m is not None
    assert x_eq is not None and u_eq is not None

    missing = [i for i in range(1, n + 1) if i not in component_lines]
    if missing:
        raise SystemFormatError(f"missing component f{missing[0]}", len(text.splitlines()) or 1)
    extra = [i for i in component_lines if i < 1 or i > n]
    if extra:
        raise SystemFormatError(
            f"component f{extra[0]} is out of range for states {n}", component_lines[extra[0]][1]
        )

    components = []
    for i in range(1, n + 1):
        payload, lineno = component_lines[i]
        try:
            components.append(ex.parse_expr(payload))
        except ex.ParseError as err:
            raise SystemFormatError(f"in f{i}: {err}", lineno) from err
    return SystemSpec(n, m, mode, tuple(components), x_eq, u_eq)


def load_system(path: str | Path) -> SystemSpec:
    return parse_system(Path(path).read_text())


# --- linearization --------------------------------------------------------


@dataclass(frozen=True)
class Linearization:
    """Jacobians of f with respect to state (a) and control (b)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def augmented(self) -> np.ndarray:
        """The stacked matrix [A | B] whose smallest singular value matters."""
        return np.hstack([self.a, self.b])


def jacobian(system: SystemSpec, x: Sequence[float] | None = None,
             u: Sequence[float] | None = None) -> Linearization:
    """Exact Jacobians at a point (default: the equilibrium), via forward mode."""
    x = tuple(system.x_eq if x is None else x)
    u = tuple(system.u_eq if u is None else u)
    n, m = system.n, system.m
    a = np.empty((n, n))
    b = np.empty((n, m))
    zero_x = (0.0,) * n
    zero_u = (0.0,) * m
    for j in range(n):
        seed = tuple(1.0 if k == j else 0.0 for k in range(n))
        for i, comp in enumerate(system.components):
            a[i, j] = ex.eval_tangent(comp, x, u, seed, zero_u)[1]
    for j in range(m):
        seed = tuple(1.0 if k == j else 0.0 for k in range(m))
        for i, comp in enumerate(system.components):
            b[i, j] = ex.eval_tangent(comp, x, u, zero_x, seed)[1]
    return Linearization(a, b)


# --- structural analysis --------------------------------------------------


def _affine_parts(e: ex.Expr, m: int) -> list[ex.Expr] | None:
    """Split e into [c0, c1, ..., cm] with e = c0 + sum ci * ui, or None."""
    zero = ex.Const(0.0)
    if isinstance(e, ex.ControlVar):
        parts = [zero] * (m + 1)
        parts[e.index] = ex.Const(1.0)
        return parts
    if not ex.uses_control(e):
        return [e] + [zero] * m
    if isinstance(e, ex.Neg):
        inner = _affine_parts(e.arg, m)
        if inner is None:
            return None
        return [ex.neg(p) for p in inner]
    if isinstance(e, ex.BinOp):
        if e.op in "+-":
            left = _affine_parts(e.lhs, m)
            right = _affine_parts(e.rhs, m)
            if left is None or right is None:
                return None
            combine = ex.add if e.op == "+" else ex.sub
            return [combine(a, b) for a, b in zip(left, right)]
        if e.op == "*":
            if not ex.uses_control(e.rhs):
                inner = _affine_parts(e.lhs, m)
                if inner is None:
                    return None
                return [ex.mul(p, e.rhs) for p in inner]
            if not ex.uses_control(e.lhs):
                inner = _affine_parts(e.rhs, m)
                if inner is None:
                    return None
                return [ex.mul(e.lhs, p) for p in inner]
            return None
        if not ex.uses_control(e.rhs):
            inner = _affine_parts(e.lhs, m)
            if inner is None:
                return None
            return [ex.div(p, e.rhs) for p in inner]
        return None
    if isinstance(e, ex.Pow) and e.exponent == 1.0:
        return _affine_parts(e.base, m)
    return None


def detect_control_affine(system: SystemSpec) -> tuple[tuple[ex.Expr, ...], ...] | None:
    """Extract drift and input fields when f = g0(x) + sum gi(x) ui.

    Returns (g0, g1, ..., gm) as tuples of componentwise expressions, or None
    when some component is not affine in the controls.  The reconstruction
    g0 + sum gi * ui agrees with f pointwise.
    """
    per_component = []
    for comp in system.components:
        parts = _affine_parts(comp, system.m)
        if parts is None:
            return None
        per_component.append(parts)
    return tuple(
        tuple(per_component[i][j] for i in range(system.n)) for j in range(system.m + 1)
    )


def _total_degree(e: ex.Expr) -> int | None:
    """Joint polynomial degree in (x, u), or None when not polynomial."""
    if isinstance(e, ex.Const):
        return 0
    if isinstance(e, (ex.StateVar, ex.ControlVar)):
        return 1
    if isinstance(e, ex.Neg):
        return _total_degree(e.arg)
    if isinstance(e, ex.BinOp):
        left = _total_degree(e.lhs)
        right = _total_degree(e.rhs)
        if left is None or right is None:
            return None
        if e.op in "+-":
            return max(left, right)
        if e.op == "*":
            return left + right
        return left if right == 0 else None
    if isinstance(e, ex.Pow):
        base = _total_degree(e.base)
        if base is None:
            return None
        if float(e.exponent).is_integer() and e.exponent >= 0:
            return base * int(e.exponent)
        return 0 if base == 0 else None
    if isinstance(e, ex.Call):
        return 0 if _total_degree(e.arg) == 0 else None
    return None


def is_affine_system(system: SystemSpec) -> bool:
    """True when every component is jointly affine in states and controls."""
    return all(
        (deg := _total_degree(comp)) is not None and deg <= 1 for comp in system.components
    )


def span_dimension_estimate(
    fields: Sequence[Sequence[ex.Expr]],
    center: Sequence[float],
    radius: float,
    samples: int,
    tol: float | None = None,
    seed: int = 0,
) -> int:
    """Numerical dimension of span of the given state-space vector fields.

    Each field is evaluated at points drawn from the ball of the given radius
    around center and the values are stacked; the result is the numerical rank
    of that stack.  Deterministic for a fixed seed.
    """
    center_arr = np.asarray(center, dtype=float)
    dim = center_arr.shape[0]
    if radius <= 0:
        raise ValueError("radius must be positive")
    if samples < 1:
        raise ValueError("need at least one sample point")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.random((samples, 1)) ** (1.0 / dim)
    points = center_arr + directions / norms * radii
    dummy_u = np.zeros((samples, 1))
    rows = []
    with np.errstate(all="ignore"):
        for field in fields:
            evaluator = ex.compile_field(tuple(field))
            rows.append(evaluator(points, dummy_u))
    stacked = np.vstack(rows)
    if not np.all(np.isfinite(stacked)):
        raise ValueError("field evaluation produced non-finite values in the sample ball")
    return numerical_rank(stacked, tol)
