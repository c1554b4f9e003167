"""Scenario files, builtin scenarios and the runners behind the command line.

A scenario is a JSON object

    {"schema_version": 1, "name": ..., "kind": ..., "seed": ...,
     "truncation": N, "depth": K, "tolerances": {...}, "payload": {...}}

validated against a versioned schema.  Running a scenario produces a Report
whose JSON form is deterministic for a fixed scenario and seed; timings are
kept on the Report object and only serialized on request.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import foliated as fol
from .errors import LocIndexError, ScenarioSchemaError
from .harmonics import TrigPoly, flow_time_one
from .operators import (
    canonical_q,
    fredholm_index,
    make_chi,
    milnor_idempotent,
    multiplication_operator,
    nonneg_projector,
    quantize,
    second_q,
    shift_isometry,
    toeplitz,
    toeplitz_parametrix,
    winding_number,
)
from .symbols import ClassicalSymbol, ProductSymbol2D
from .zeta import (
    ContinuationConfig,
    continue_zeta,
    equivariant_residue_local,
    equivariant_residue_spectral,
    residue_pairing_laurent,
    wodzicki_local,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPORT_VERSION = 1
OUTPUT_ENV = "LOCINDEX_OUTPUT_DIR"
GOLDEN_ANGLE = 2 * math.pi * (math.sqrt(5.0) - 1.0) / 2.0

KINDS = ("wodzicki", "equivariant_residue", "toeplitz_index", "trace_formulas", "index_theorem", "robustness")

CONVENTIONS = {
    "quantization": "left: A[k, l] = a_hat_{k-l}(l), symbols cut off by chi(p) = smoothstep((|p| - a) / (1 - a))",
    "index_sign": "index(T_u) = dim ker - dim coker = -winding(u); residue pairing = +winding(u)",
    "milnor": "tr(e - e0) = -index(P)",
    "orientation": "circle x in [0, 2 pi) positively oriented; winding counts u'/u counterclockwise",
    "q_operator": "Q = diag sqrt(1 + k^2) (canonical), second Q = diag c_sign sqrt(3 + k^2) with c_+ = 2, c_- = 1",
    "leaf_operator": "D_+ acts on leaf mode m by m + shift",
    "normalization": "no sqrt(2 pi i) factors; circle measure dx / 2 pi in residues",
}

# --------------------------------------------------------------------------
# schema

_POS = {"type": "number", "exclusiveMinimum": 0}
_COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_FOURIER_TERMS = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    "minItems": 1,
}
_TRIG = {
    "type": "object",
    "properties": {
        "winding": {"type": "integer"},
        "fourier": _FOURIER_TERMS,
        "shape": {"enum": ["sin", "cos"]},
        "k": {"type": "integer"},
        "scale": {"type": "number"},
    },
    "additionalProperties": False,
}
_ANGLE = {"anyOf": [{"type": "number"}, {"const": "golden"}]}
_COMPONENT = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["periodic", "fixed_point"]},
        "period": _POS,
        "kappa": {"type": "number"},
        "return_map": {
            "type": "object",
            "properties": {"rotation": _ANGLE, "field": _TRIG, "epsilon": {"type": "number"}},
            "additionalProperties": False,
        },
        "bundle": {
            "type": "object",
            "properties": {"j": {"type": "array", "items": {"type": "array", "items": _COMPLEX}}},
            "additionalProperties": False,
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_MODEL = {
    "type": "object",
    "properties": {
        "components": {"type": "array", "items": _COMPONENT, "minItems": 1},
        "n_plus": {"type": "integer", "minimum": 0},
        "n_minus": {"type": "integer", "minimum": 0},
        "leaf_modes": {"type": "integer", "minimum": 0},
        "n_max": {"type": "integer", "minimum": 1},
    },
    "required": ["components"],
    "additionalProperties": False,
}
_GRID = {
    "type": "object",
    "properties": {"T": _POS, "h": _POS, "nb": {"type": "integer", "minimum": 1}},
    "additionalProperties": False,
}

PAYLOAD_SCHEMAS: dict[str, dict] = {
    "wodzicki": {
        "type": "object",
        "properties": {
            "random": {
                "type": "object",
                "properties": {
                    "count": {"type": "integer", "minimum": 0},
                    "orders": {"type": "array", "items": {"type": "integer", "minimum": -3, "maximum": 2}, "minItems": 1},
                    "max_degree": {"type": "integer", "minimum": 0},
                },
                "additionalProperties": False,
            },
            "symbols": {"type": "array", "items": {"type": "object"}},
            "points": {"enum": ["residue", "all"]},
            "canonical": {
                "type": "object",
                "properties": {"truncation": {"type": "integer", "minimum": 8}},
                "additionalProperties": False,
            },
            "toeplitz_windings": {"type": "array", "items": {"type": "integer"}},
            "min_continuations": {"type": "integer", "minimum": 0},
            "q": {"enum": ["canonical", "second"]},
        },
        "additionalProperties": False,
    },
    "equivariant_residue": {
        "type": "object",
        "properties": {
            "field": _TRIG,
            "epsilons": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "symbol": {
                "type": "object",
                "properties": {
                    "order": {"type": "integer"},
                    "terms": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "number"}, "minItems": 6, "maxItems": 6},
                        "minItems": 1,
                    },
                },
                "required": ["order", "terms"],
                "additionalProperties": False,
            },
            "ordering": {"enum": ["exact", "frozen"]},
            "max_seconds": _POS,
        },
        "required": ["epsilons"],
        "additionalProperties": False,
    },
    "toeplitz_index": {
        "type": "object",
        "properties": {
            "symbols": {"type": "array", "items": _TRIG},
            "pairing": {"type": "boolean"},
            "milnor": {
                "type": "object",
                "properties": {
                    "random": {"type": "integer", "minimum": 0},
                    "truncation": {"type": "integer", "minimum": 1},
                    "shifts": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
        },
        "additionalProperties": False,
    },
    "trace_formulas": {
        "type": "object",
        "properties": {
            "kernel_samples": {"type": "integer", "minimum": 0},
            "pairs": {"type": "integer", "minimum": 0},
            "grid": _GRID,
            "rotation": _ANGLE,
            "kappa": {"type": "number"},
            "msize": {"type": "integer", "minimum": 1, "maximum": 4},
        },
        "additionalProperties": False,
    },
    "index_theorem": {
        "type": "object",
        "properties": {
            "model": _MODEL,
            "element": {
                "type": "object",
                "properties": {
                    "type": {"enum": ["rank_one", "nilpotent"]},
                    "sharpness": _POS,
                    "delta": _POS,
                    "component": {"type": "integer", "minimum": 0},
                    "grid": _GRID,
                    "bumps": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "component": {"type": "integer", "minimum": 0},
                                "center": {"type": "number"},
                                "width": _POS,
                                "amplitude": _COMPLEX,
                                "b_mode": {"type": "integer"},
                            },
                            "required": ["component", "center", "width"],
                            "additionalProperties": False,
                        },
                    },
                },
                "required": ["type"],
                "additionalProperties": False,
            },
            "operator": {
                "type": "object",
                "properties": {"shift": {"type": "number"}},
                "additionalProperties": False,
            },
        },
        "required": ["model", "element"],
        "additionalProperties": False,
    },
    "robustness": {
        "type": "object",
        "properties": {
            "count": {"type": "integer", "minimum": 0},
            "max_degree": {"type": "integer", "minimum": 0},
            "chi_inner": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}, "minItems": 2},
            "toeplitz_windings": {"type": "array", "items": {"type": "integer"}},
            "morita": {
                "type": "object",
                "properties": {"q": {"type": "integer", "minimum": 1}, "amplitudes": {"type": "array", "items": {"type": "number"}, "minItems": 2}},
                "additionalProperties": False,
            },
        },
        "additionalProperties": False,
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "kind": {"enum": list(KINDS)},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "truncation": {"type": "integer", "minimum": 1},
        "depth": {"type": "integer", "minimum": 1},
        "tolerances": {"type": "object", "additionalProperties": _POS},
        "payload": {"type": "object"},
    },
    "required": ["schema_version", "name", "kind", "payload"],
    "additionalProperties": False,
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path) if path else ""


def _errors(schema: dict, data: Any, prefix: tuple = ()) -> list[tuple[str, str]]:
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in validator.iter_errors(data):
        out.append((_pointer(prefix + tuple(err.absolute_path)), err.message))
    return sorted(out)


def validate(data: Any) -> list[tuple[str, str]]:
    """Schema diagnostics as (JSON pointer, message) pairs; empty when valid."""
    diags = _errors(SCENARIO_SCHEMA, data)
    if diags or not isinstance(data, dict):
        return diags
    return _errors(PAYLOAD_SCHEMAS[data["kind"]], data["payload"], ("payload",))


# --------------------------------------------------------------------------
# scenario and report types


@dataclass
class Scenario:
    name: str
    kind: str
    payload: dict
    seed: int = 0
    truncation: int | None = None
    depth: int | None = None
    tolerances: dict = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_dict(cls, data: Any) -> "Scenario":
        diags = validate(data)
        if diags:
            pointer, message = diags[0]
            raise ScenarioSchemaError(pointer, message)
        return cls(
            name=data["name"],
            kind=data["kind"],
            payload=copy.deepcopy(data["payload"]),
            seed=int(data.get("seed", 0)),
            truncation=data.get("truncation"),
            depth=data.get("depth"),
            tolerances=dict(data.get("tolerances", {})),
            description=data.get("description", ""),
        )

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "name": self.name, "kind": self.kind, "seed": self.seed, "payload": self.payload}
        if self.description:
            out["description"] = self.description
        if self.truncation is not None:
            out["truncation"] = self.truncation
        if self.depth is not None:
            out["depth"] = self.depth
        if self.tolerances:
            out["tolerances"] = self.tolerances
        return out

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))


@dataclass
class Check:
    """One pass/fail comparison.  ``criterion`` ties it to an acceptance item."""

    name: str
    passed: bool
    value: Any = None
    reference: Any = None
    error: float | None = None
    tolerance: float | None = None
    criterion: int | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": _jsonable(self.value),
            "reference": _jsonable(self.reference),
            "error": _jsonable(self.error),
            "tolerance": self.tolerance,
            "criterion": self.criterion,
            "message": self.message,
        }


@dataclass
class Report:
    scenario: Scenario
    quantities: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def criteria(self) -> dict[int, bool]:
        out: dict[int, bool] = {}
        for c in self.checks:
            if c.criterion is not None:
                out[c.criterion] = out.get(c.criterion, True) and c.passed
        return out

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "report_version": REPORT_VERSION,
            "scenario": self.scenario.to_dict(),
            "conventions": CONVENTIONS,
            "quantities": _jsonable(self.quantities),
            "checks": [c.to_dict() for c in self.checks],
            "tables": _jsonable(self.tables),
            "passed": self.passed,
        }
        if timings:
            out["timings"] = _jsonable(self.timings)
        return out

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, indent=2) + "\n"

    def write_csv(self, directory: str | os.PathLike) -> list[Path]:
        """One CSV per table plus checks.csv."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        tables = dict(self.tables)
        tables["checks"] = [
            {k: v for k, v in c.to_dict().items() if k in ("name", "passed", "error", "tolerance", "criterion")} for c in self.checks
        ]
        for key in sorted(tables):
            rows = tables[key]
            if not rows:
                continue
            path = d / f"{self.scenario.name}.{key}.csv"
            cols = sorted({k for r in rows for k in r})
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                for r in rows:
                    w.writerow({k: _csv_cell(r.get(k)) for k in cols})
            written.append(path)
        return written


def _round(x: float) -> float:
    # 13 significant digits keep reports byte-stable across BLAS summation orders
    return float(f"{x:.13g}") if math.isfinite(x) else x


def _jsonable(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _round(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        z = complex(v)
        return [_round(z.real), _round(z.imag)]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return str(v)


def _csv_cell(v):
    v = _jsonable(v)
    return json.dumps(v) if isinstance(v, (list, dict)) else v


# --------------------------------------------------------------------------
# payload helpers


def trig_from_spec(spec: dict) -> TrigPoly:
    scale = float(spec.get("scale", 1.0))
    if "winding" in spec:
        return TrigPoly.monomial(int(spec["winding"]), scale)
    if "fourier" in spec:
        return TrigPoly.from_dict({int(k): complex(re, im) for k, re, im in spec["fourier"]}) * scale
    k = int(spec.get("k", 1))
    shape = spec.get("shape", "sin")
    return TrigPoly.sin(k, scale) if shape == "sin" else TrigPoly.cos(k, scale)


def _angle(v) -> float:
    return GOLDEN_ANGLE if v == "golden" else float(v)


def product_symbol_from_spec(spec: dict | None) -> ProductSymbol2D:
    """Terms [j, kx, ky, ktheta, re, im] give component j a summand c exp(i(kx x + ky y + kt theta))."""
    spec = spec or {"order": -1, "terms": [[0, 0, 0, 0, 1.0, 0.0]]}
    terms = spec["terms"]
    depth = int(max(t[0] for t in terms)) + 1
    kx = max(abs(int(t[1])) for t in terms)
    ky = max(abs(int(t[2])) for t in terms)
    kt = max(abs(int(t[3])) for t in terms)
    nx = 2 if kx == 0 else 4 * kx + 4
    ny = max(8, 4 * ky + 8)
    nth = max(8, 4 * kt + 8)

    def make(j):
        mine = [t for t in terms if int(t[0]) == j]
        if not mine:
            return None

        def f(X, Y, T):
            out = np.zeros(X.shape, dtype=complex)
            for _, a, b, c, re, im in mine:
                out += complex(re, im) * np.exp(1j * (a * X + b * Y + c * T))
            return out

        return f

    return ProductSymbol2D.from_functions(int(spec["order"]), [make(j) for j in range(depth)], nx=nx, ny=ny, ntheta=nth)


def model_from_spec(spec: dict, name: str = "") -> fol.FoliatedModel:
    comps = []
    for c in spec["components"]:
        j = None
        if "bundle" in c and "j" in c["bundle"]:
            j = np.array([[complex(a, b) for a, b in row] for row in c["bundle"]["j"]])
        if c["kind"] == "periodic":
            rm = c.get("return_map", {"rotation": 0.0})
            if "rotation" in rm:
                comps.append(fol.rotation_component(float(c.get("period", 1.0)), _angle(rm["rotation"]), j))
            else:
                fieldp = trig_from_spec(rm.get("field", {"shape": "sin"})) * float(rm.get("epsilon", 1.0))
                comps.append(fol.PeriodicComponent(float(c.get("period", 1.0)), flow_time_one(fieldp), j))
        else:
            comps.append(fol.FixedPointComponent(float(c.get("kappa", math.log(2.0))), j))
    return fol.FoliatedModel(
        tuple(comps),
        n_plus=int(spec.get("n_plus", 1)),
        n_minus=int(spec.get("n_minus", 0)),
        n_max=int(spec.get("n_max", 4)),
        leaf_modes=int(spec.get("leaf_modes", 4)),
        name=name,
    )


def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1 - s**2, 1.0)), 0.0)


def random_element(rng: np.random.Generator, model: fol.FoliatedModel, grid: fol.TimeGrid, nb: int, msize: int, positive: bool = False) -> fol.CrossedElement:
    """Smooth compactly supported element with random matrix coefficients."""
    funcs = []
    for comp in model.components:
        C = (rng.standard_normal((3, msize, msize)) + 1j * rng.standard_normal((3, msize, msize))) / 2
        # non-positive supports straddle t = 0 and reach the windings n = +-1
        t0 = rng.uniform(0.35, 0.85) if positive else rng.uniform(-0.3, 0.3)
        w = rng.uniform(0.2, 0.3) if positive else rng.uniform(0.5, 1.2)
        period = comp.period if isinstance(comp, fol.PeriodicComponent) else 1.0

        def f(b, t, C=C, t0=t0, w=w, period=period):
            x = 2 * np.pi * b / period
            bump = _bump((t - t0) / w)[..., None, None]
            return bump * (C[0] + np.exp(1j * x)[..., None, None] * C[1] + np.cos(2 * x + t)[..., None, None] * C[2])

        funcs.append(f)
    return fol.CrossedElement.from_function(model, grid, funcs, nb=nb, msize=msize, positive=positive)


def _grid(spec: dict | None, T: float, h: float, nb: int) -> tuple[fol.TimeGrid, int]:
    spec = spec or {}
    return fol.TimeGrid(float(spec.get("T", T)), float(spec.get("h", h))), int(spec.get("nb", nb))


def _rel(a, b) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


# --------------------------------------------------------------------------
# runners


class _Ctx:
    """Collects checks, quantities and the list of continuations for the pole check."""

    def __init__(self, scenario: Scenario):
        self.report = Report(scenario)
        self.continuations: list[tuple[str, float, complex]] = []

    def check(self, name, passed, value=None, reference=None, error=None, tolerance=None, criterion=None, message=""):
        self.report.checks.append(Check(name, bool(passed), value, reference, error, tolerance, criterion, message))

    def fail(self, name, exc: Exception, criterion=None):
        self.check(name, False, criterion=criterion, message=f"{type(exc).__name__}: {exc}")

    def laurent(self, label: str, ld):
        self.continuations.append((label, float(ld.a_minus2), complex(ld.residue)))
        return ld


def _pole_check(ctx: _Ctx, tol: float, minimum: int, criterion):
    ratios = [a2 / (1 + abs(r)) for _, a2, r in ctx.continuations]
    worst = max(ratios) if ratios else 0.0
    n = len(ratios)
    ctx.report.quantities["continuations"] = n
    ctx.check(
        "simple_poles",
        worst <= tol and n >= minimum,
        value=worst,
        error=worst,
        tolerance=tol,
        criterion=criterion,
        message=f"{n} continuations (at least {minimum} required)",
    )


def run_wodzicki(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    N = sc.truncation or 256
    K = sc.depth or 6
    rng = np.random.default_rng(sc.seed)
    Q = canonical_q(N) if p.get("q", "canonical") == "canonical" else second_q(N)
    symbols: list[ClassicalSymbol] = [ClassicalSymbol.from_dict(s) for s in p.get("symbols", [])]
    rnd = p.get("random", {"count": 3})
    for i in range(int(rnd.get("count", 3))):
        orders = rnd.get("orders", [-1])
        symbols.append(ClassicalSymbol.random(rng, int(orders[i % len(orders)]), K, int(rnd.get("max_degree", 4))))
    tol = max(sc.tol("residue", 1e-3), 5.0 / N)
    rows = []
    for i, a in enumerate(symbols):
        A = quantize(a, N)
        points = [a.order + 1] if p.get("points", "residue") == "residue" else list(range(a.order + 1, -1, -1))
        for z0 in points:
            label = f"symbol[{i}]@z={z0}"
            try:
                ld = ctx.laurent(label, continue_zeta(A, None, Q, float(z0)))
            except LocIndexError as exc:
                ctx.fail(label, exc, _crit(sc, 3))
                continue
            rows.append({"symbol": i, "order": a.order, "z0": z0, "residue": ld.residue, "a_minus2": ld.a_minus2, "spread": ld.spread})
            if z0 == 0:
                local = wodzicki_local(a)
                err = abs(complex(ld.residue) - local)
                ctx.check(f"wodzicki[{i}]", err <= tol, ld.residue, local, err, tol, _crit(sc, 1))
    ctx.report.tables["continuations"] = rows
    if "canonical" in p:
        Nc = int(p["canonical"].get("truncation", 4096))
        try:
            ld = ctx.laurent("canonical@z=1", continue_zeta(None, None, canonical_q(Nc), 1.0))
            ctx.report.quantities["canonical_residue"] = {k: v[0] for k, v in sorted(ld.estimates.items())}
            ctol = sc.tol("canonical", 1e-4)
            for name, (r, _) in sorted(ld.estimates.items()):
                err = abs(complex(r) - 2.0)
                ctx.check(f"canonical[{name}]", err <= ctol, r, 2.0, err, ctol, _crit(sc, 2))
        except LocIndexError as exc:
            ctx.fail("canonical", exc, _crit(sc, 2))
    Nt = min(N, 128)
    for w in p.get("toeplitz_windings", []):
        u = TrigPoly.monomial(int(w))
        T = toeplitz(nonneg_projector(Nt), multiplication_operator(u, Nt))
        label = f"toeplitz_pairing[{w}]"
        try:
            ld = ctx.laurent(label, residue_pairing_laurent(T, canonical_q(Nt), parametrix=toeplitz_parametrix(u, Nt)))
            rows.append({"symbol": label, "order": -1, "z0": 0, "residue": ld.residue, "a_minus2": ld.a_minus2, "spread": ld.spread})
        except LocIndexError as exc:
            ctx.fail(label, exc, _crit(sc, 3))
    _pole_check(ctx, sc.tol("pole2", 1e-6), int(p.get("min_continuations", 0)), _crit(sc, 3))


def _crit(sc: Scenario, n: int):
    """Acceptance criterion number, attached only for the acceptance builtins."""
    return n if sc.name.startswith("acceptance-") else None


def run_equivariant(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    N = sc.truncation or 128
    K = sc.depth or 4
    sigma = product_symbol_from_spec(p.get("symbol"))
    base_field = trig_from_spec(p.get("field", {"shape": "sin", "k": 1}))
    tol = sc.tol("equivariant", 1e-2)
    ordering = p.get("ordering", "exact")
    limit = float(p.get("max_seconds", 600.0))
    rows = []
    for eps in p["epsilons"]:
        label = f"equivariant[eps={eps:g}]"
        t0 = time.perf_counter()
        try:
            psi = flow_time_one(base_field * float(eps))
            ld = ctx.laurent(label, equivariant_residue_spectral(sigma, psi, N))
            local = equivariant_residue_local(sigma, psi, Kmax=K, ordering=ordering)
        except LocIndexError as exc:
            ctx.fail(label, exc, _crit(sc, 4))
            continue
        elapsed = time.perf_counter() - t0
        ctx.report.timings[label] = elapsed
        spectral = complex(ld.residue)
        err = abs(complex(local) - spectral)
        bound = tol * (1 + abs(spectral))
        ctx.check(label, err <= bound, local, spectral, err, bound, _crit(sc, 4))
        ctx.check(f"runtime[eps={eps:g}]", elapsed < limit, tolerance=limit, criterion=_crit(sc, 4), message="wall-clock seconds below the limit")
        rows.append({"epsilon": eps, "spectral": spectral, "local": local, "estimates": {k: v[0] for k, v in ld.estimates.items()}, "a_minus2": ld.a_minus2})
    ctx.report.tables["equivariant"] = rows


def run_toeplitz(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    N = sc.truncation or 128
    rows = []
    specs = p.get("symbols", [{"winding": w} for w in range(-3, 4)])
    ptol = sc.tol("pairing", 1e-3)
    for i, spec in enumerate(specs):
        u = trig_from_spec(spec)
        label = f"u[{i}]"
        try:
            w = winding_number(u)
            T = toeplitz(nonneg_projector(N), multiplication_operator(u, N, strict=False))
            S = toeplitz_parametrix(u, N)
            ind = fredholm_index(T, parametrix=S)
        except LocIndexError as exc:
            ctx.fail(f"index[{i}]", exc, _crit(sc, 5))
            continue
        ctx.check(f"index[{i}]", ind == -w, ind, -w, abs(ind + w), 0, _crit(sc, 5), "fredholm_index = -winding")
        row = {"symbol": label, "winding": w, "index": ind}
        if p.get("pairing", False):
            try:
                ld = ctx.laurent(f"pairing[{i}]", residue_pairing_laurent(T, canonical_q(N), parametrix=S))
                r = complex(ld.residue)
                ctx.check(f"pairing[{i}]", abs(r - w) <= ptol, r, w, abs(r - w), ptol)
                row["pairing"] = r
            except LocIndexError as exc:
                ctx.fail(f"pairing[{i}]", exc)
        rows.append(row)
    ctx.report.tables["toeplitz"] = rows
    m = p.get("milnor")
    if m:
        rng = np.random.default_rng(sc.seed)
        Nm = int(m.get("truncation", 64))
        n = 2 * Nm + 1
        mtol = sc.tol("idempotent", 1e-12)
        for i in range(int(m.get("random", 0))):
            P = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)
            Qm = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)
            res = milnor_idempotent(P, Qm)
            ctx.check(f"milnor_random[{i}]", res.defect <= mtol, res.defect, 0.0, res.defect, mtol, _crit(sc, 6))
        if m.get("shifts", True):
            for adj in (False, True):
                S = shift_isometry(Nm, adjoint=adj)
                ind = fredholm_index(S, window=False)
                res = milnor_idempotent(S, S.adjoint())
                label = f"milnor_shift[{'adjoint' if adj else 'forward'}]"
                ok = res.distance == 0.0 and res.nearest == -ind and abs(ind) == 1 and res.defect <= mtol
                ctx.check(label, ok, res.pairing, -ind, abs(res.pairing + ind), 0, _crit(sc, 6), "tr(e - e0) = -index")


def run_traces(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    rng = np.random.default_rng(sc.seed)
    msize = int(p.get("msize", 2))
    grid, nb = _grid(p.get("grid"), 3.0, 1 / 32, 16)
    angle = _angle(p.get("rotation", "golden"))
    kappa = float(p.get("kappa", math.log(2.0)))
    jfix = np.diag(np.linspace(0.3, -0.2, msize)).astype(complex)
    split = (msize + 1) // 2
    per = fol.FoliatedModel((fol.rotation_component(1.0, angle),), n_plus=split, n_minus=msize - split)
    mixed = fol.FoliatedModel(
        (fol.rotation_component(1.0, angle), fol.FixedPointComponent(kappa, jfix)), n_plus=split, n_minus=msize - split
    )
    ktol = sc.tol("kernel", 1e-6)
    ctol = sc.tol("commutator", 1e-8)
    for i in range(int(p.get("kernel_samples", 10))):
        f = random_element(rng, per, grid, nb, msize)
        twist = rng.uniform(0.0, 2 * math.pi)
        a = fol.trace_op(f, twist)
        b = fol.kernel_trace(fol.rep_kernel(f, twist=twist, nb_out=max(nb, 64)), 1.0)
        err = _rel(b, a)
        ctx.check(f"kernel[{i}]", err <= ktol, a, b, err, ktol, _crit(sc, 7))
    rows = []
    fp = [o for o in mixed.orbits() if o.kind == "fixed_point"][0]
    functionals: list[tuple[str, Callable, bool]] = [
        ("trace_op", fol.trace_op, False),
        ("trace_units", fol.trace_units, False),
        ("trace_extended", fol.trace_extended, True),
        ("w_trace", lambda x: fol.w_trace(fp, x), True),
    ]
    for name, T, positive in functionals:
        model = mixed if positive else per
        worst = 0.0
        for i in range(int(p.get("pairs", 20))):
            f = random_element(rng, model, grid, nb, msize, positive)
            g = random_element(rng, model, grid, nb, msize, positive)
            try:
                a, b = T(fol.convolve(f, g)), T(fol.convolve(g, f))
            except LocIndexError as exc:
                ctx.fail(f"{name}[{i}]", exc, _crit(sc, 7))
                continue
            err = abs(a - b)
            bound = ctol * (1 + abs(a))
            worst = max(worst, err / (1 + abs(a)))
            rows.append({"functional": name, "pair": i, "T_fg": a, "T_gf": b})
            ctx.check(f"{name}[{i}]", err <= bound, a, b, err, bound, _crit(sc, 7))
        ctx.report.quantities[f"{name}_worst_relative_commutator"] = worst
    ctx.report.tables["traces"] = rows


def _element(sc: Scenario, model: fol.FoliatedModel, spec: dict):
    """(e, e0) for the element description; e0 is None for rank-one classes."""
    if spec["type"] == "rank_one":
        comp = int(spec.get("component", 0))
        period = model.components[comp].period
        grid, nb = _grid(spec.get("grid"), 2.0, 1 / 128, 256)
        phi = fol.concentrated_phi(period, float(spec.get("sharpness", 12.0)))
        g = fol.partition_profile(period, float(spec.get("delta", 0.04)))
        return fol.rank_one_projection(model, phi, g, grid, nb=nb, component=comp), None
    grid, nb = _grid(spec.get("grid"), 5.0, 1 / 32, 16)
    bumps = spec.get("bumps") or [{"component": c, "center": 1.2, "width": 0.8} for c in range(len(model.components))]
    funcs: list = [None] * len(model.components)
    for bmp in bumps:
        c = int(bmp["component"])
        amp = complex(*bmp.get("amplitude", [1.0, 0.0]))
        mode = int(bmp.get("b_mode", 1))
        comp = model.components[c]
        period = comp.period if isinstance(comp, fol.PeriodicComponent) else 1.0
        prev = funcs[c]

        def f(b, t, prev=prev, amp=amp, mode=mode, period=period, bmp=bmp):
            val = amp * _bump((t - bmp["center"]) / bmp["width"]) * (1 + 0.3 * np.cos(2 * np.pi * mode * b / period))
            return val if prev is None else prev(b, t) + val

        funcs[c] = f
    base = fol.CrossedElement.from_function(model, grid, funcs, nb=nb, positive=True)
    return fol.nilpotent_class(base)


def run_index(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    N = sc.truncation or 128
    model = model_from_spec(p["model"], sc.name)
    shift = float(p.get("operator", {}).get("shift", 0.5))
    D = fol.leaf_dirac(shift)
    nd = fol.check_nondegenerate(model)
    ctx.report.quantities["nondegenerate"] = nd
    ctx.check("nondegenerate", nd["nondegenerate"])
    try:
        e, e0 = _element(sc, model, p["element"])
    except LocIndexError as exc:
        ctx.fail("element", exc, _crit(sc, 8))
        return
    x = e if e0 is None else e - e0
    defect = (fol.convolve(e, e) - e).sup_norm()
    ctx.report.quantities["idempotent_defect"] = defect
    ctx.check("idempotent", defect <= sc.tol("idempotent", 1e-6), defect, 0.0, defect, sc.tol("idempotent", 1e-6))
    pairings = {}
    mode_rows = []
    selectors = ("full", "units", "periodic") if not e.positive else ("full", "periodic", "fixed")
    for sel in selectors:
        rep = fol.index_pairing(model, e, D, N, sel, e0, report=True)
        pairings[sel] = rep.value
        for m in sorted(rep.mode_traces):
            mode_rows.append({"selector": sel, "mode": m, "trace": rep.mode_traces[m], "residue": rep.mode_residues[m]})
    ctx.report.quantities["pairings"] = pairings
    ctx.report.tables["modes"] = mode_rows
    rhs, parts = fol.index_rhs(model, e, None, D, N, e0, breakdown=True)
    orbit_rows = []
    orbits = model.orbits()
    theta = w = 0.0 + 0.0j
    for k, orb in enumerate(orbits):
        key = f"theta[{k}]" if orb.kind == "periodic" else f"w[{k}]"
        val = complex(parts.get(key, 0.0))
        if orb.kind == "periodic":
            theta += val
        else:
            w += val
        orbit_rows.append(
            {"orbit": k, "kind": orb.kind, "component": orb.component, "period": orb.period, "kappa": orb.kappa, "hprime": orb.hprime, "value": val}
        )
    ctx.report.tables["orbits"] = orbit_rows
    full = pairings["full"]
    dist = abs(full - round(full))
    ctx.report.quantities.update({"sum_theta": theta, "sum_w": w, "rhs": rhs, "integrality_distance": dist})
    if e0 is None:
        units = pairings["units"]
        itol = sc.tol("index", 1e-2)
        ctx.check("full_vs_units", abs(full - units) <= itol, full, units, abs(full - units), itol, _crit(sc, 8))
        ctx.check("theta_sum", abs(theta) <= sc.tol("theta", 1e-12), theta, 0.0, abs(theta), sc.tol("theta", 1e-12), _crit(sc, 8))
        ctx.check("integrality", dist <= itol, full, round(full), dist, itol, _crit(sc, 8))
        ctx.report.quantities["trace_units"] = fol.trace_units(e)
    else:
        ntol = sc.tol("nilpotent", 1e-6)
        ctx.check("full_pairing", abs(full) <= ntol, full, 0.0, abs(full), ntol, _crit(sc, 8))
        ctx.check("theta_plus_w", abs(theta + w) <= ntol, theta + w, 0.0, abs(theta + w), ntol, _crit(sc, 8))
        # the scalar part alone carries non-trivial orbit data
        base = fol.CrossedElement(model, x.grid, tuple(a[..., :1, 1:] for a in x.data), True)
        ctx.report.quantities["base_orbit_traces"] = {
            f"w[{k}]": fol.w_trace(o, base) for k, o in enumerate(orbits) if o.kind == "fixed_point"
        }


def run_robustness(sc: Scenario, ctx: _Ctx):
    p = sc.payload
    N = sc.truncation or 256
    K = sc.depth or 6
    rng = np.random.default_rng(sc.seed)
    tol = sc.tol("robust", 1e-3)
    crit = _crit(sc, 9)
    inner = p.get("chi_inner", [0.5, 0.25])
    Q1, Q2 = canonical_q(N), second_q(N)
    for i in range(int(p.get("count", 3))):
        a = ClassicalSymbol.random(rng, -1, K, int(p.get("max_degree", 4)))
        try:
            A = quantize(a, N, make_chi(inner[0]))
            ld = ctx.laurent(f"symbol[{i}]", continue_zeta(A, None, Q1, 0.0))
            r = complex(ld.residue)
            (rt, _), (rh, _) = ld.estimates["tail"], ld.estimates["heat"]
            ctx.check(f"estimator_swap[{i}]", abs(rt - rh) <= tol, rh, rt, abs(rt - rh), tol, crit)
            for c in inner[1:]:
                r2 = complex(continue_zeta(quantize(a, N, make_chi(c)), None, Q1, 0.0).residue)
                ctx.check(f"chi_bridge[{i}][{c:g}]", abs(r2 - r) <= tol, r2, r, abs(r2 - r), tol, crit)
            r3 = complex(ctx.laurent(f"symbol[{i}]/second_q", continue_zeta(A, None, Q2, 0.0)).residue)
            ctx.check(f"second_q[{i}]", abs(r3 - r) <= tol, r3, r, abs(r3 - r), tol, crit)
        except LocIndexError as exc:
            ctx.fail(f"symbol[{i}]", exc, crit)
    Nt = min(N, 128)
    for w in p.get("toeplitz_windings", [-2, 1, 3]):
        u = TrigPoly.monomial(int(w))
        T = toeplitz(nonneg_projector(Nt), multiplication_operator(u, Nt))
        S = toeplitz_parametrix(u, Nt)
        try:
            l1 = residue_pairing_laurent(T, canonical_q(Nt), parametrix=S)
            l2 = residue_pairing_laurent(T, second_q(Nt), parametrix=S)
        except LocIndexError as exc:
            ctx.fail(f"toeplitz[{w}]", exc, crit)
            continue
        (rt, _), (rh, _) = l1.estimates["tail"], l1.estimates["heat"]
        ctx.check(f"toeplitz_estimator_swap[{w}]", abs(rt - rh) <= tol, rh, rt, abs(rt - rh), tol, crit)
        ctx.check(f"toeplitz_second_q[{w}]", abs(l2.residue - l1.residue) <= tol, l2.residue, l1.residue, abs(l2.residue - l1.residue), tol, crit)
    mor = p.get("morita", {})
    q = int(mor.get("q", 2))
    amps = mor.get("amplitudes", [0.5, 0.3])
    model = fol.FoliatedModel((fol.rotation_component(1.0, GOLDEN_ANGLE),), n_plus=1, n_minus=1, leaf_modes=4)
    e, _ = _element(sc, model, {"type": "rank_one"})
    D = fol.leaf_dirac()
    reps = []
    for k, amp in enumerate(amps):
        c = fol.morita_cutoff(q, 1.0, lambda x, amp=amp, k=k: 1 + amp * (np.cos if k % 2 == 0 else np.sin)(np.pi * x))
        reps.append(fol.index_pairing(model, fol.rho_morita(e, c, q), D, 128, "full", report=True))
    direct = fol.index_pairing(model, e, D, 128, "full", report=True)
    for k, rep in enumerate(reps[1:], start=1):
        dv = abs(rep.value - reps[0].value)
        ctx.check(f"morita_pairing[{k}]", dv <= tol, rep.value, reps[0].value, dv, tol, crit)
        dt = max(abs(rep.mode_traces[m] - reps[0].mode_traces[m]) for m in rep.mode_traces)
        ctx.check(f"morita_mode_traces[{k}]", dt <= tol, None, None, dt, tol, crit, "largest change of a twisted mode trace")
    dd = abs(reps[0].value - direct.value)
    ctx.check("morita_vs_direct", dd <= tol, reps[0].value, direct.value, dd, tol, crit)
    _pole_check(ctx, sc.tol("pole2", 1e-6), 0, None)


RUNNERS: dict[str, Callable[[Scenario, _Ctx], None]] = {
    "wodzicki": run_wodzicki,
    "equivariant_residue": run_equivariant,
    "toeplitz_index": run_toeplitz,
    "trace_formulas": run_traces,
    "index_theorem": run_index,
    "robustness": run_robustness,
}


def run(scenario: Scenario | dict, truncation: int | None = None, depth: int | None = None) -> Report:
    """Execute a scenario; explicit overrides replace truncation and depth."""
    sc = scenario if isinstance(scenario, Scenario) else Scenario.from_dict(scenario)
    if truncation is not None or depth is not None:
        data = sc.to_dict()
        if truncation is not None:
            data["truncation"] = truncation
        if depth is not None:
            data["depth"] = depth
        sc = Scenario.from_dict(data)
    ctx = _Ctx(sc)
    t0 = time.perf_counter()
    RUNNERS[sc.kind](sc, ctx)
    ctx.report.timings["total"] = time.perf_counter() - t0
    return ctx.report


# --------------------------------------------------------------------------
# builtins

_KRONECKER_MODEL = {"components": [{"kind": "periodic", "period": 1.0, "return_map": {"rotation": "golden"}}], "n_plus": 1, "n_minus": 1, "leaf_modes": 4}
_PARABOLIC_MODEL = {
    "components": [
        {"kind": "periodic", "period": 1.0, "return_map": {"rotation": "golden"}},
        {"kind": "fixed_point", "kappa": math.log(2.0), "bundle": {"j": [[[0.3, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.2, 0.0]]]}},
    ],
    "n_plus": 1,
    "n_minus": 1,
    "leaf_modes": 4,
}


def _sc(name, kind, payload, description, **kw) -> dict:
    d = {"schema_version": SCHEMA_VERSION, "name": name, "kind": kind, "description": description, "seed": kw.pop("seed", 0), "payload": payload}
    d.update(kw)
    return d


BUILTINS: dict[str, dict] = {
    s["name"]: s
    for s in [
        _sc(
            "wodzicki-basic",
            "wodzicki",
            {"random": {"count": 3, "orders": [-1], "max_degree": 4}, "canonical": {"truncation": 1024}},
            "Wodzicki residue of random order -1 symbols and the residue 2 of the canonical Q",
            truncation=256,
            depth=6,
        ),
        _sc(
            "equivariant-sin-flow",
            "equivariant_residue",
            {"field": {"shape": "sin", "k": 1}, "epsilons": [0.7]},
            "Equivariant residue of the inverse radius symbol for the time-1 flow of 0.7 sin y",
            truncation=128,
        ),
        _sc(
            "toeplitz-winding",
            "toeplitz_index",
            {"symbols": [{"winding": w} for w in (-2, -1, 0, 1, 2)], "pairing": True},
            "Fredholm index and residue pairing of Toeplitz operators with monomial symbols",
            truncation=64,
        ),
        _sc(
            "parabolic-fixed-point",
            "index_theorem",
            {"model": _PARABOLIC_MODEL, "element": {"type": "nilpotent"}},
            "Flow with a fixed point and a rotation component paired with a nilpotent class",
        ),
        _sc(
            "kronecker-index",
            "index_theorem",
            {"model": _KRONECKER_MODEL, "element": {"type": "rank_one"}},
            "Kronecker flow with a rank-one projection class",
        ),
        _sc(
            "trace-formulas",
            "trace_formulas",
            {"kernel_samples": 3, "pairs": 4},
            "Trace property of the four trace functionals on random elements",
            seed=1,
        ),
        _sc(
            "acceptance-1-wodzicki",
            "wodzicki",
            {"random": {"count": 10, "orders": [-1], "max_degree": 4}},
            "Local Wodzicki residue against zeta continuation for 10 random order -1 symbols",
            truncation=256,
            depth=6,
            seed=1,
        ),
        _sc(
            "acceptance-2-canonical-residue",
            "wodzicki",
            {"random": {"count": 0}, "canonical": {"truncation": 4096}},
            "Residue of Tr Q^-z at z = 1 via both estimators",
        ),
        _sc(
            "acceptance-3-simple-poles",
            "wodzicki",
            {
                "random": {"count": 12, "orders": [-1, 0, 1], "max_degree": 4},
                "points": "all",
                "canonical": {"truncation": 1024},
                "toeplitz_windings": [-3, -2, -1, 1, 2, 3],
                "min_continuations": 30,
            },
            "Second-order Laurent coefficients across a suite of continuations",
            truncation=256,
            depth=6,
            seed=3,
        ),
        _sc(
            "acceptance-4-equivariant",
            "equivariant_residue",
            {"field": {"shape": "sin", "k": 1}, "epsilons": [0.3, 0.7], "max_seconds": 600},
            "Local equivariant residue against spectral continuation on the torus",
            truncation=128,
        ),
        _sc(
            "acceptance-5-toeplitz-index",
            "toeplitz_index",
            {"symbols": [{"winding": w} for w in range(-3, 4)] + [{"fourier": [[2, 0.5, 0.0], [3, 2.0, 0.0], [4, 0.5, 0.0]]}]},
            "Fredholm index equals minus the winding number",
            truncation=128,
        ),
        _sc(
            "acceptance-6-milnor",
            "toeplitz_index",
            {"symbols": [], "milnor": {"random": 5, "truncation": 64, "shifts": True}},
            "Milnor idempotent on random pairs and on the shift",
            seed=6,
        ),
        _sc(
            "acceptance-7-traces",
            "trace_formulas",
            {"kernel_samples": 10, "pairs": 20},
            "Kernel trace and the trace property of four functionals",
            seed=7,
        ),
        _sc(
            "acceptance-8-index",
            "index_theorem",
            {"model": _KRONECKER_MODEL, "element": {"type": "rank_one"}},
            "Index pairing localized at units for the Kronecker flow",
        ),
        _sc(
            "acceptance-8-parabolic",
            "index_theorem",
            {"model": _PARABOLIC_MODEL, "element": {"type": "nilpotent"}},
            "Nilpotent class over a flow with a fixed point",
        ),
        _sc(
            "acceptance-9-robustness",
            "robustness",
            {"count": 3, "chi_inner": [0.5, 0.25], "toeplitz_windings": [-2, 1, 3], "morita": {"q": 2, "amplitudes": [0.5, 0.3]}},
            "Residues under estimator, cutoff, Q and Morita cutoff changes",
            truncation=256,
            depth=6,
            seed=9,
        ),
    ]
}


def list_builtins() -> list[dict]:
    return [{"name": k, "kind": v["kind"], "description": v["description"]} for k, v in sorted(BUILTINS.items())]


def load(target: str) -> dict:
    """Raw scenario data from a builtin name or a JSON file."""
    if target in BUILTINS:
        return copy.deepcopy(BUILTINS[target])
    path = Path(target)
    if not path.exists():
        raise FileNotFoundError(f"no builtin or file named {target!r}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioSchemaError("", f"invalid JSON: {exc}") from exc


def run_scenario(target: str, overrides: dict | None = None) -> Report:
    overrides = overrides or {}
    return run(Scenario.from_dict(load(target)), overrides.get("truncation"), overrides.get("depth"))


def output_dir() -> Path | None:
    d = os.environ.get(OUTPUT_ENV)
    return Path(d) if d else None
