"""Experiment registry, JSON configuration and reports.

An experiment is a named check with a config (:class:`ExperimentConfig`)
and a report.  A report holds one or more :class:`Check` rows, each
comparing a computed value with an expected one at a tolerance.  Every
expected value carries a source tag:

``theorem``  value predicted by an integral formula (e.g. ``omega_n f(X_0)``)
``derived``  closed-form evaluation (e.g. ``C_{p,q}``) or a derived identity
``exact``    exact algebraic identity, checked with zero tolerance
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .algebra import (
    Multivector, Paravector, Signature, blade_name, cayley_table, iota_factors, iota_inverse, mul_arrays,
)
from .fields import BlackBoxField, PolynomialField, dirac, factorization_residual, fueter_basis
from .geometry import (
    Boundary, HybridAngles, hybrid_jacobian, hybrid_to_cartesian, sphere_volume,
)
from .kernels import dirac_of_g_eps, g_eps_array, g_kernel_array, g_kernel_coords
from .quadrature import (
    EpsSchedule, GridSpec, IntegralEstimate, NonConvergedError, c_constant, c_constant_closed_form,
    cauchy_classical, cauchy_first, cauchy_second, plan_boundary, stokes_check,
)

ENV_OUT_DIR = "VERIFY_OUT_DIR"
DEFAULT_OUT_DIR = "verify-out"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``"field: message"`` strings."""

    def __init__(self, errors: list[str], source: str = ""):
        self.errors = errors
        head = f"invalid configuration{' in ' + source if source else ''}"
        super().__init__(head + ":\n  " + "\n  ".join(errors))


class ExperimentError(RuntimeError):
    """A numerical error raised while running a named experiment."""


# ---------------------------------------------------------------------------
# configuration


class GridModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    inner_nodes: int = Field(16, ge=4)
    inner_panels: int = Field(4, ge=1)
    outer_nodes: int | list[int] = 24
    band_halfwidth: float = Field(0.25, gt=0)
    depth: Optional[int] = Field(None, ge=0)
    band_ratio: float = Field(0.25, gt=0)
    volume_nodes: int = Field(12, ge=4)

    @field_validator("outer_nodes")
    @classmethod
    def _outer(cls, v):
        vals = v if isinstance(v, list) else [v]
        if min(vals) < 4:
            raise ValueError("node counts must be >= 4")
        return v

    def to_grid(self, threads: int = 1) -> GridSpec:
        d = self.model_dump()
        if isinstance(d["outer_nodes"], list):
            d["outer_nodes"] = tuple(d["outer_nodes"])
        return GridSpec(threads=threads, **d)


class EpsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps0: float = Field(0.1, gt=0)
    ratio: float = Field(0.5, gt=0, lt=1)
    steps: int = Field(6, ge=2)
    sign: Literal[1, -1] = 1
    order: int = Field(4, ge=0)

    def to_schedule(self) -> EpsSchedule:
        return EpsSchedule(**self.model_dump())


class BoundaryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["sphere", "box", "ellipsoid"] = "sphere"
    center: Optional[list[float]] = None
    radius: Optional[float] = Field(None, gt=0)
    size: Optional[list[float]] = None

    @model_validator(mode="after")
    def _sizes(self):
        if self.kind == "sphere" and self.size is not None:
            raise ValueError("a sphere takes 'radius', not 'size'")
        if self.kind != "sphere" and self.radius is not None:
            raise ValueError(f"a {self.kind} takes 'size', not 'radius'")
        if self.size is not None and min(self.size) <= 0:
            raise ValueError("sizes must be positive")
        return self

    def build(self, sig: Signature) -> Boundary:
        center = np.zeros(sig.n + 1) if self.center is None else np.array(self.center, dtype=float)
        if self.kind == "sphere":
            return Boundary.sphere(sig, self.radius or 1.0, center)
        size = np.ones(sig.n + 1) if self.size is None else np.array(self.size, dtype=float)
        if size.size == 1:
            size = np.full(sig.n + 1, size[0])
        return Boundary(self.kind, center, size)


Side = Literal["left", "right"]


class ExperimentConfig(BaseModel):
    """One experiment run.  Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    experiment: str
    name: Optional[str] = None
    signature: tuple[int, int] = (1, 1)
    signatures: Optional[list[tuple[int, int]]] = None
    space: Literal["real-pq", "complex"] = "real-pq"
    fields: list[str] = Field(default_factory=lambda: ["constant"])
    boundary: BoundaryModel = Field(default_factory=BoundaryModel)
    x0: Optional[list[float]] = None
    grid: GridModel = Field(default_factory=GridModel)
    eps: EpsModel = Field(default_factory=EpsModel)
    eps_values: list[float] = Field(default_factory=lambda: [0.05, 0.1])
    side: Side = "left"
    samples: int = Field(100, ge=1)
    max_n: int = Field(5, ge=1, le=7)
    tolerance: Optional[float] = Field(None, gt=0)
    seed: int = 0
    out_dir: Optional[str] = None
    time_limit: Optional[float] = Field(None, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _aliases(cls, data):
        if isinstance(data, dict) and "field" in data:
            data = dict(data)
            f = data.pop("field")
            if "fields" in data:
                raise ValueError("fields: give either 'field' or 'fields', not both")
            data["fields"] = [f] if isinstance(f, str) else f
        return data

    @field_validator("signature")
    @classmethod
    def _sig(cls, v):
        Signature(*v)
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.experiment not in REGISTRY:
            raise ValueError(f"experiment: unknown experiment {self.experiment!r}; known: {', '.join(sorted(REGISTRY))}")
        spec = REGISTRY[self.experiment]
        if spec.validate is not None:
            spec.validate(self)
        sig = Signature(*self.signature)
        if spec.uses_fields:
            for i, s in enumerate(self.fields):
                try:
                    parse_selector(s, sig)
                except ValueError as e:
                    raise ValueError(f"fields.{i}: {e}") from None
        if self.x0 is not None and len(self.x0) != sig.n + 1:
            raise ValueError(f"x0: needs {sig.n + 1} coordinates for signature {sig}")
        if self.boundary.center is not None and len(self.boundary.center) != sig.n + 1:
            raise ValueError(f"boundary.center: needs {sig.n + 1} coordinates")
        if self.boundary.size is not None and len(self.boundary.size) not in (1, sig.n + 1):
            raise ValueError(f"boundary.size: needs 1 or {sig.n + 1} entries")
        return self

    @property
    def sig(self) -> Signature:
        return Signature(*self.signature)

    @property
    def run_name(self) -> str:
        return self.name or self.experiment


def _format_validation(e: ValidationError) -> list[str]:
    out = []
    for err in e.errors():
        loc = ".".join(str(x) for x in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        out.append(f"{loc}: {msg}" if loc else msg)
    return out


def load_config(data: dict, source: str = "") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation(e), source) from None


def parse_json_text(text: str, source: str = "<string>") -> Any:
    """``json.loads`` with errors that quote the offending line."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        lines = text.splitlines()
        line = lines[e.lineno - 1] if 0 < e.lineno <= len(lines) else ""
        pointer = " " * (e.colno - 1) + "^"
        raise ConfigError([f"line {e.lineno}, column {e.colno}: {e.msg}\n    {line}\n    {pointer}"],
                          source) from None


def read_json(path: str | Path) -> Any:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError([f"cannot read {p}: {e.strerror}"], str(p)) from None
    return parse_json_text(text, str(p))


# ---------------------------------------------------------------------------
# field selectors


def parse_selector(sel: str, sig: Signature) -> tuple[str, Any]:
    kind, _, arg = sel.partition(":")
    if kind == "constant":
        if arg:
            raise ValueError(f"selector {sel!r}: 'constant' takes no argument")
        return kind, None
    if kind == "fueter":
        try:
            k = int(arg)
        except ValueError:
            raise ValueError(f"selector {sel!r}: expected fueter:k with integer k") from None
        if not 1 <= k <= sig.n:
            raise ValueError(f"selector {sel!r}: k must lie in 1..{sig.n}")
        return kind, k
    if kind == "translated-green":
        try:
            c = [float(x) for x in arg.split(",")]
        except ValueError:
            raise ValueError(f"selector {sel!r}: expected comma-separated center coordinates") from None
        if len(c) != sig.n + 1:
            raise ValueError(f"selector {sel!r}: center needs {sig.n + 1} coordinates")
        return kind, np.array(c)
    raise ValueError(f"unknown field selector {sel!r} (constant, fueter:k, translated-green:c0,...,cn)")


def _green_field(sig: Signature, center: np.ndarray, domain: str):
    if domain == "real-pq":
        c = center

        def batch(x):
            return g_kernel_array(np.asarray(x).real - c, sig, "real-pq")
    else:
        c = np.array(center, dtype=complex)
        c[sig.p + 1:] *= 1j

        def batch(z):
            return g_kernel_array(np.asarray(z) - c, sig, "complex")

    def one(P: Paravector) -> Multivector:
        return Multivector(sig, batch(P.coords[None])[0], domain)

    return BlackBoxField(sig, domain, one, batch=batch)


def make_field(sel: str, sig: Signature, domain: str = "real-pq"):
    """A field from a selector string, on the real-pq or complex domain."""
    kind, arg = parse_selector(sel, sig)
    if kind == "constant":
        return PolynomialField.constant(Multivector.scalar(1.0, sig, domain), sig, domain)
    if kind == "fueter":
        return fueter_basis(sig, domain)[arg - 1]
    return _green_field(sig, arg, domain)


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    label: str
    value: np.ndarray
    expected: np.ndarray
    source: str
    deviation: float
    tolerance: float
    components: list[str]
    error_estimate: Optional[float] = None
    series: list[dict] = field(default_factory=list)
    eps: Optional[float | str] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tolerance)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "eps": self.eps,
            "value": _components(self.value, self.components),
            "expected": _components(self.expected, self.components),
            "expected_source": self.source,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "error_estimate": self.error_estimate,
            "pass": self.passed,
            "eps_table": self.series,
            "details": _jsonable(self.details),
        }


def _components(v: np.ndarray, names: list[str]) -> dict:
    return {n: [float(np.real(c)), float(np.imag(c))] for n, c in zip(names, np.asarray(v, dtype=complex))}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def blade_names(sig: Signature, space: str = "real-pq") -> list[str]:
    return [blade_name(m, sig, space) for m in range(sig.dim)]


def compact(v: np.ndarray, names: list[str], tol: float = 1e-14) -> str:
    """Readable ``a*e0 + b*e1`` form of a coefficient vector."""
    v = np.asarray(v, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    parts = []
    for n, c in zip(names, v):
        if abs(c) <= tol * scale:
            continue
        s = f"{c.real:.12g}" if abs(c.imag) <= tol * scale else f"({c.real:.12g}{c.imag:+.12g}j)"
        parts.append(f"{s}*{n}")
    return " + ".join(parts) or "0"


@dataclass
class Report:
    config: ExperimentConfig
    checks: list[Check] = field(default_factory=list)
    wall_time: float = 0.0
    nodes: int = 0
    error: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = self.error is None and all(c.passed for c in self.checks)
        if self.config.time_limit is not None:
            ok = ok and self.wall_time <= self.config.time_limit
        return ok

    def to_json(self) -> dict:
        return {
            "experiment": self.config.experiment,
            "name": self.config.run_name,
            "signature": list(self.config.signature),
            "pass": self.passed,
            "error": self.error,
            "wall_time_s": self.wall_time,
            "time_limit_s": self.config.time_limit,
            "node_count": self.nodes,
            "version": __version__,
            "config": self.config.model_dump(mode="json"),
            "checks": [c.to_json() for c in self.checks],
            "meta": _jsonable(self.meta),
        }

    def csv_rows(self) -> list[dict]:
        """Flat rows: the eps series of every check, then its final row."""
        p, q = self.config.signature
        rows = []
        for c in self.checks:
            exp = compact(c.expected, c.components)
            base = {"experiment": f"{self.config.run_name}/{c.label}", "p": p, "q": q,
                    "expected": exp, "pass": c.passed}
            for s in c.series:
                row = dict(base, eps=s["eps"], error_estimate="")
                row.update({f"re_{k}": v[0] for k, v in s["value"].items()})
                row.update({f"im_{k}": v[1] for k, v in s["value"].items()})
                rows.append(row)
            row = dict(base, eps="" if c.eps is None else c.eps,
                       error_estimate="" if c.error_estimate is None else c.error_estimate)
            for k, v in _components(c.value, c.components).items():
                row[f"re_{k}"], row[f"im_{k}"] = v
            rows.append(row)
        if self.error is not None:
            rows.append({"experiment": f"{self.config.run_name}/error", "p": p, "q": q, "eps": "",
                         "error_estimate": "", "expected": self.error, "pass": False})
        return rows


# ---------------------------------------------------------------------------
# output


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows: list[dict]) -> str:
    comp = []
    for r in rows:
        for k in r:
            if (k.startswith("re_") or k.startswith("im_")) and k[3:] not in comp:
                comp.append(k[3:])
    cols = ["experiment", "p", "q", "eps"]
    for c in comp:
        cols += [f"re_{c}", f"im_{c}"]
    cols += ["error_estimate", "expected", "pass"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_cell(v) for k, v in r.items()})
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def resolve_out_dir(cli_out: Optional[str], cfg: Optional[ExperimentConfig] = None) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(os.environ.get(ENV_OUT_DIR, DEFAULT_OUT_DIR))


def write_report(report: Report, out_dir: Path) -> tuple[Path, Path]:
    stem = _safe(report.config.run_name)
    jp, cp = out_dir / f"{stem}.json", out_dir / f"{stem}.csv"
    atomic_write(jp, json.dumps(report.to_json(), indent=2) + "\n")
    atomic_write(cp, csv_text(report.csv_rows()))
    return jp, cp


def _safe(name: str) -> str:
    name = name.replace("/", "_").replace(",", "-").replace("(", "").replace(")", "")
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in name)


# ---------------------------------------------------------------------------
# registry


@dataclass
class ExperimentSpec:
    name: str
    summary: str
    run: Callable[["RunContext"], list[Check]]
    validate: Optional[Callable[[ExperimentConfig], None]] = None
    uses_fields: bool = False


REGISTRY: dict[str, ExperimentSpec] = {}


def register(name: str, summary: str, validate=None, uses_fields: bool = False):
    def deco(fn):
        REGISTRY[name] = ExperimentSpec(name, summary, fn, validate, uses_fields)
        return fn
    return deco


@dataclass
class RunContext:
    cfg: ExperimentConfig
    threads: int = 1
    tolerance_scale: float = 1.0
    nodes: int = 0
    meta: dict = field(default_factory=dict)

    def tol(self, default: float) -> float:
        return (self.cfg.tolerance if self.cfg.tolerance is not None else default) * self.tolerance_scale

    @property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.cfg.seed)

    @property
    def grid(self) -> GridSpec:
        return self.cfg.grid.to_grid(self.threads)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, tolerance_scale: float = 1.0,
                   seed: Optional[int] = None) -> Report:
    """Run one experiment.  Numerical failures are recorded in the report."""
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    ctx = RunContext(cfg, threads, tolerance_scale)
    report = Report(cfg)
    t0 = time.perf_counter()
    try:
        report.checks = REGISTRY[cfg.experiment].run(ctx)
    except (ArithmeticError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        report.error = f"{cfg.run_name} ({cfg.experiment}, signature {tuple(cfg.signature)}): " \
                       f"{type(e).__name__}: {e}"
        est = getattr(e, "estimate", None)
        if est is not None:
            report.meta["last_estimate_error"] = est.error
    report.wall_time = time.perf_counter() - t0
    report.nodes = ctx.nodes
    report.meta.update(ctx.meta)
    return report


def _need_q(cfg: ExperimentConfig):
    if cfg.sig.q < 1:
        raise ValueError(f"signature: {cfg.experiment} needs q >= 1, got signature {cfg.sig}")


def _need_surface(cfg: ExperimentConfig, q0: bool = False):
    sig = cfg.sig
    if sig.n < 2:
        raise ValueError(f"signature: {cfg.experiment} needs p + q >= 2, got signature {sig}")
    if q0 and sig.q != 0:
        raise ValueError(f"signature: {cfg.experiment} is the q = 0 case, got signature {sig}")
    if cfg.boundary.kind == "box":
        raise ValueError(f"boundary.kind: {cfg.experiment} integrates over a sphere or ellipsoid, not a box")


def _mv_check(label, value, expected, scale, tol, sig, space, source, **kw) -> Check:
    value = np.asarray(value, dtype=complex)
    expected = np.asarray(expected, dtype=complex)
    dev = float(np.linalg.norm(value - expected)) / scale
    return Check(label, value, expected, source, dev, tol, blade_names(sig, space), **kw)


def _scalar_check(label, value, expected, tol, source, **kw) -> Check:
    dev = abs(complex(value) - complex(expected))
    return Check(label, np.array([value], dtype=complex), np.array([expected], dtype=complex),
                 source, dev, tol, ["value"], **kw)


def _sig_list(cfg: ExperimentConfig, default) -> list[Signature]:
    return [Signature(*s) for s in (cfg.signatures or default)]


# ----- algebra --------------------------------------------------------------


def _table_violations(sig: Signature, space: str) -> tuple[int, int]:
    """(associativity, relation) violations over all blade triples / generator pairs."""
    sign, index = cayley_table(sig, space)
    s = sign.astype(np.int64)
    d, n = sig.dim, sig.n
    a, b, c = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    ab, bc = index[a, b], index[b, c]
    assoc = (index[ab, c] != index[a, bc]) | (s[a, b] * s[ab, c] != s[b, c] * s[a, bc])
    rel = 0
    for j in range(n):
        mj = 1 << j
        want = 1 if (space == "real-pq" and j >= sig.p) else -1
        rel += int(sign[mj, mj] != want or index[mj, mj] != 0)
        rel += int(sign[0, mj] != 1 or sign[mj, 0] != 1 or index[0, mj] != mj)
        for k in range(j + 1, n):
            mk = 1 << k
            rel += int(sign[mj, mk] != -sign[mk, mj] or index[mj, mk] != index[mk, mj])
    return int(np.count_nonzero(assoc)), rel


@register("algebra", "exhaustive associativity and generator relations for n <= max_n")
def _exp_algebra(ctx: RunContext) -> list[Check]:
    checks = []
    for n in range(1, ctx.cfg.max_n + 1):
        # the complex algebra depends on n only
        cases = [(Signature(p, n - p), "real-pq", f"({p},{n - p})") for p in range(n + 1)]
        cases.append((Signature(n, 0), "complex", f"complex(n={n})"))
        for sig, space, label in cases:
            bad, rel = _table_violations(sig, space)
            checks.append(_scalar_check(label, bad + rel, 0, 0.0, "exact",
                                        details={"triples": sig.dim ** 3, "associativity_violations": bad,
                                                 "relation_violations": rel}))
    return checks


@register("embedding", "iota(x y) = iota(x) iota(y) on random integer multivectors")
def _exp_embedding(ctx: RunContext) -> list[Check]:
    rng = ctx.rng
    checks = []
    for sig in _sig_list(ctx.cfg, [(1, 1), (2, 1), (1, 2), (2, 2)]):
        m = ctx.cfg.samples
        x = rng.integers(-5, 6, (m, sig.dim)) + 1j * rng.integers(-5, 6, (m, sig.dim))
        y = rng.integers(-5, 6, (m, sig.dim)) + 1j * rng.integers(-5, 6, (m, sig.dim))
        f = iota_factors(sig)
        lhs = mul_arrays(x, y, sig, "real-pq") * f
        rhs = mul_arrays(x * f, y * f, sig, "complex")
        bad = int(np.count_nonzero(np.any(lhs != rhs, axis=-1)))
        checks.append(_scalar_check(f"({sig.p},{sig.q})", bad, 0, 0.0, "exact",
                                    details={"pairs": m, "max_abs_diff": float(np.max(np.abs(lhs - rhs)))}))
    return checks


@register("factorization", "exact residual of nabla nabla+ = nabla+ nabla = box on random polynomials")
def _exp_factorization(ctx: RunContext) -> list[Check]:
    rng = ctx.rng
    checks = []
    for sig in _sig_list(ctx.cfg, [(1, 1), (2, 1), (1, 2), (2, 2)]):
        worst = 0
        for _ in range(ctx.cfg.samples):
            deg = int(rng.integers(0, 4))
            f = PolynomialField.random(sig, ctx.cfg.space, deg, rng, exact=True)
            worst = max(worst, factorization_residual(f))
        checks.append(_scalar_check(f"({sig.p},{sig.q})", worst, 0, 0.0, "exact",
                                    details={"fields": ctx.cfg.samples, "max_degree": 3}))
    return checks


def _fd_jacobian(a: HybridAngles, sig: Signature, h: float = 1e-4) -> float:
    v0 = np.array([a.rho, *a.phi, a.theta, *a.psi])

    def point(v):
        return hybrid_to_cartesian(HybridAngles(v[0], v[1 + sig.p], tuple(v[1:1 + sig.p]),
                                                tuple(v[2 + sig.p:]), a.tilde_sign), sig).coords.real

    J = np.empty((sig.n + 1, sig.n + 1))
    for k in range(sig.n + 1):
        cols = []
        for off in (-2, -1, 1, 2):
            v = v0.copy()
            v[k] += off * h
            cols.append(point(v))
        J[:, k] = (cols[0] - 8 * cols[1] + 8 * cols[2] - cols[3]) / (12 * h)
    return float(np.linalg.det(J))


def random_hybrid(sig: Signature, rng: np.random.Generator, margin: float = 0.05) -> HybridAngles:
    """Random interior hybrid angles (away from the chart's degenerate edges)."""
    def angles(m):
        out = [rng.uniform(margin, math.pi - margin) for _ in range(max(m - 1, 0))]
        return out + ([rng.uniform(margin, 2 * math.pi - margin)] if m else [])

    return HybridAngles(rng.uniform(0.5, 2.0), rng.uniform(margin, math.pi / 2 - margin),
                        tuple(angles(sig.p)), tuple(angles(sig.q - 1)), int(rng.choice([1, -1])))


@register("jacobian", "hybrid-coordinate Jacobian: closed form vs numerical determinant")
def _exp_jacobian(ctx: RunContext) -> list[Check]:
    rng = ctx.rng
    checks = []
    for sig in _sig_list(ctx.cfg, [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)]):
        worst = 0.0
        for _ in range(ctx.cfg.samples):
            a = random_hybrid(sig, rng)
            exact = hybrid_jacobian(a, sig)
            num = _fd_jacobian(a, sig)
            worst = max(worst, abs(num - exact) / abs(exact))
        checks.append(_scalar_check(f"({sig.p},{sig.q})", worst, 0, ctx.tol(1e-8), "derived",
                                    details={"points": ctx.cfg.samples}))
    return checks


def random_point(sig: Signature, rng: np.random.Generator, rmin=0.5, rmax=2.0) -> np.ndarray:
    x = rng.standard_normal(sig.n + 1)
    return x / np.linalg.norm(x) * rng.uniform(rmin, rmax)


@register("dirac-g-eps", "closed-form nabla+ of the regularized kernel vs 4th-order differences")
def _exp_dirac_g_eps(ctx: RunContext) -> list[Check]:
    rng = ctx.rng
    checks = []
    for sig in _sig_list(ctx.cfg, [(1, 1), (2, 1), (1, 2), (2, 2)]):
        worst = 0.0
        for _ in range(ctx.cfg.samples):
            x = random_point(sig, rng)
            eps = rng.uniform(0.05, 0.5)
            X = Paravector(sig, x)
            f = BlackBoxField(sig, "real-pq", lambda P, e=eps: Multivector(sig, g_eps_array(P.coords.real, e, sig)),
                              batch=lambda c, e=eps: g_eps_array(np.asarray(c).real, e, sig))
            for side in ("left", "right"):
                exact = dirac_of_g_eps(X, eps, side)
                num = dirac(f, X, "nabla_plus", side, h=1e-4)
                worst = max(worst, (num - exact).norm() / exact.norm())
        checks.append(_scalar_check(f"({sig.p},{sig.q})", worst, 0, ctx.tol(1e-6), "derived",
                                    details={"points": ctx.cfg.samples, "sides": ["left", "right"]}))
    return checks


@register("green-monogenicity", "finite-difference nabla+ of G from both sides")
def _exp_green(ctx: RunContext) -> list[Check]:
    rng = ctx.rng
    checks = []
    cases = [(s, "real-pq") for s in _sig_list(ctx.cfg, [(1, 1), (2, 1), (1, 2)])]
    cases += [(Signature(n, 0), "complex") for n in (2, 3)] if ctx.cfg.signatures is None else []
    for sig, space in cases:
        f = _green_field(sig, np.zeros(sig.n + 1), space)
        worst = 0.0
        count = 0
        while count < ctx.cfg.samples:
            x = random_point(sig, rng, 0.7, 1.5)
            if space == "complex":
                z = x + 1j * 0.3 * random_point(sig, rng, 0.0, 1.0)
                N = np.sum(z * z)
                if N.real < 0.5:
                    continue
                P = Paravector(sig, z, "complex")
            else:
                if np.sum(sig.coordinate_signs() * x * x) < 0.5:
                    continue
                P = Paravector(sig, x)
            count += 1
            for side in ("left", "right"):
                worst = max(worst, dirac(f, P, "nabla_plus", side, h=1e-4).norm())
        label = f"({sig.p},{sig.q})" if space == "real-pq" else f"complex(n={sig.n})"
        checks.append(_scalar_check(label, worst, 0, ctx.tol(1e-8), "theorem",
                                    details={"points": ctx.cfg.samples, "sides": ["left", "right"]}))
    return checks


# ----- integral formulas ------------------------------------------------------


@register("c-constant", "eps -> 0+ limit of the C_{p,q} integral vs its closed form", validate=_need_q)
def _exp_c_constant(ctx: RunContext) -> list[Check]:
    sig = ctx.cfg.sig
    sched = ctx.cfg.eps.to_schedule()
    lim, err, series = c_constant(sig, sched, ctx.grid)
    exact = c_constant_closed_form(sig)
    rows = [{"eps": float(e), "value": _components(np.array([v]), ["value"])} for e, v in zip(sched.values(), series)]
    dev = abs(lim - exact) / abs(exact)
    return [Check(f"C({sig.p},{sig.q})", np.array([lim]), np.array([exact]), "derived", dev, ctx.tol(5e-3),
                  ["value"], err, rows, eps="0+" if sched.sign > 0 else "0-")]


def _x0(ctx: RunContext) -> np.ndarray:
    return np.zeros(ctx.cfg.sig.n + 1) if ctx.cfg.x0 is None else np.array(ctx.cfg.x0, dtype=float)


def _expected(fields, sig, x0, b: Boundary, factor: float = 1.0):
    """``factor * omega_n * f(X_0)`` inside, 0 outside; plus the comparison scale."""
    om = sphere_volume(sig.n)
    X0 = Paravector(sig, x0)
    inside = b.contains(x0)
    out = []
    for f in fields:
        fx = f.evaluate(X0).coeffs
        exp = factor * om * fx if inside else np.zeros(sig.dim, dtype=complex)
        nf = float(np.linalg.norm(fx))
        scale = om * (nf if (inside and nf > 0) else 1.0)
        out.append((exp, scale))
    return out, inside


def _second_checks(ctx: RunContext, cfg: ExperimentConfig, fields, b, x0, tol) -> tuple[list[Check], list]:
    sig = cfg.sig
    sched = cfg.eps.to_schedule()
    ests = cauchy_second(fields, x0, b, ctx.grid, sched, cfg.side)
    ctx.nodes += ests[0].grid["nodes"]
    ctx.meta["second_grid"] = ests[0].grid
    sign = (-1) ** sig.q if sched.sign < 0 else 1
    exps, inside = _expected(fields, sig, x0, b, sign)
    names = blade_names(sig)
    checks = []
    for sel, est, (exp, scale) in zip(cfg.fields, ests, exps):
        rows = [{"eps": float(e), "value": _components(v.coeffs, names),
                 "extrapolant": _components(d.coeffs, names)}
                for e, v, d in zip(est.eps, est.series, est.extrapolants)]
        checks.append(_mv_check(sel, est.limit.coeffs, exp, scale, tol, sig, "real-pq", "theorem",
                                error_estimate=est.error, series=rows,
                                eps="0+" if sched.sign > 0 else "0-",
                                details={"inside": inside, "scale": scale, "side": cfg.side,
                                         "extrapolated": est.grid.get("extrapolated")}))
    return checks, ests


def _second_validate(cfg):
    _need_surface(cfg)
    e = cfg.eps_values
    if any(v == 0 or abs(v) >= 1 for v in e):
        raise ValueError("eps_values: must satisfy 0 < |eps| < 1")
    if any((v < 0) != (e[0] < 0) for v in e):
        raise ValueError("eps_values: must all have the same sign")


@register("second-formula", "regularized kernel on the real boundary, eps -> 0 limit",
          validate=_second_validate, uses_fields=True)
def _exp_second(ctx: RunContext) -> list[Check]:
    cfg = ctx.cfg
    sig = cfg.sig
    fields = [make_field(s, sig) for s in cfg.fields]
    b = cfg.boundary.build(sig)
    checks, _ = _second_checks(ctx, cfg, fields, b, _x0(ctx), ctx.tol(1e-2))
    return checks


FIRST_TOL = {"constant": 1e-4, "fueter": 1e-3, "translated-green": 1e-3}


def _first_checks(ctx: RunContext, cfg: ExperimentConfig, fields_r, b, x0) -> tuple[list[Check], list]:
    sig = cfg.sig
    fields_c = [make_field(s, sig, "complex") for s in cfg.fields]
    eps_values = list(cfg.eps_values)
    grid = ctx.grid
    vals = cauchy_first(fields_c, x0, b, grid, eps_values, cfg.side)
    plan = plan_boundary(b, sig, grid, x0, min(abs(e) for e in eps_values))
    ctx.nodes += plan.nodes
    # a coarser grid measures the quadrature error of this one
    coarse = GridModel(**dict(cfg.grid.model_dump(), inner_nodes=max(4, (3 * grid.inner_nodes) // 4),
                              outer_nodes=_scale_nodes(cfg.grid.outer_nodes, 0.75))).to_grid(ctx.threads)
    cvals = cauchy_first(fields_c, x0, b, coarse, eps_values, cfg.side)
    sign = (-1) ** sig.q if eps_values[0] < 0 else 1
    exps, inside = _expected(fields_r, sig, x0, b, sign)
    names = blade_names(sig)
    checks, firsts = [], []
    for j, (sel, (exp, scale)) in enumerate(zip(cfg.fields, exps)):
        tol = ctx.tol(FIRST_TOL[sel.partition(":")[0]] if inside else FIRST_TOL["constant"])
        per_eps = [iota_inverse(vals[i][j]).coeffs for i in range(len(eps_values))]
        grid_tol = max(max(float(np.linalg.norm(iota_inverse(vals[i][j] - cvals[i][j]).coeffs))
                           for i in range(len(eps_values))), 1e-12 * scale)
        rows = [{"eps": e, "value": _components(v, names)} for e, v in zip(eps_values, per_eps)]
        for e, v in zip(eps_values, per_eps):
            checks.append(_mv_check(f"{sel}@eps={e}", v, exp, scale, tol, sig, "real-pq", "theorem",
                                    error_estimate=grid_tol, eps=e,
                                    details={"inside": inside, "scale": scale, "side": cfg.side}))
        firsts.append(per_eps[0])
        spread = max(float(np.linalg.norm(v - per_eps[0])) for v in per_eps)
        checks.append(Check(f"{sel}@plateau", per_eps[-1], per_eps[0], "derived", spread, 10 * grid_tol,
                            names, grid_tol, rows, eps="plateau",
                            details={"eps_values": eps_values, "grid_tolerance": grid_tol}))
    return checks, firsts


def _scale_nodes(o, factor):
    if isinstance(o, list):
        return [max(4, int(round(k * factor))) for k in o]
    return max(4, int(round(o * factor)))


@register("first-formula", "complex kernel on the h_eps-deformed contour at fixed eps",
          validate=_second_validate, uses_fields=True)
def _exp_first(ctx: RunContext) -> list[Check]:
    cfg = ctx.cfg
    sig = cfg.sig
    fields = [make_field(s, sig) for s in cfg.fields]
    return _first_checks(ctx, cfg, fields, cfg.boundary.build(sig), _x0(ctx))[0]


def _classical_validate(cfg):
    _need_surface(cfg, q0=True)


@register("classical", "definite-signature Cauchy formula (q = 0)", validate=_classical_validate,
          uses_fields=True)
def _exp_classical(ctx: RunContext) -> list[Check]:
    cfg = ctx.cfg
    sig = cfg.sig
    fields = [make_field(s, sig) for s in cfg.fields]
    b = cfg.boundary.build(sig)
    x0 = _x0(ctx)
    plan = plan_boundary(b, sig, ctx.grid, x0)
    ctx.nodes += plan.nodes
    vals = cauchy_classical(fields, x0, b, ctx.grid, cfg.side, plan)
    exps, inside = _expected(fields, sig, x0, b)
    return [_mv_check(sel, v.coeffs, exp, scale, ctx.tol(1e-6), sig, "real-pq", "theorem",
                      details={"inside": inside, "scale": scale, "side": cfg.side})
            for sel, v, (exp, scale) in zip(cfg.fields, vals, exps)]


def _stokes_validate(cfg):
    if cfg.boundary.kind != "box":
        raise ValueError("boundary.kind: stokes integrates over a box boundary (boundary.kind = 'box')")


@register("stokes", "boundary integral of g (D x) f vs the volume integral of its differential",
          validate=_stokes_validate)
def _exp_stokes(ctx: RunContext) -> list[Check]:
    cfg = ctx.cfg
    sig = cfg.sig
    b = cfg.boundary.build(sig)
    rng = ctx.rng
    one = PolynomialField.constant(Multivector.scalar(1.0, sig), sig, "real-pq")
    x0e0 = PolynomialField.coordinate(0, sig, "real-pq")
    cases = [("g=e0,f=fueter:1", one, fueter_basis(sig, "real-pq")[0]),
             ("g=e0,f=x0e0", one, x0e0)]
    for k in range(3):
        cases.append((f"random-deg2-{k}", PolynomialField.random(sig, "real-pq", 2, rng),
                      PolynomialField.random(sig, "real-pq", 2, rng)))
    checks = []
    grid = ctx.grid
    for label, g, f in cases:
        res = stokes_check(f, g, b, grid)
        checks.append(_scalar_check(label, res, 0, ctx.tol(1e-6), "derived"))
    plan = plan_boundary(b, sig, grid)
    ctx.nodes += plan.nodes + grid.volume_nodes ** (sig.n + 1)
    return checks


@register("cross-method", "first (deformed contour) vs second (regularized) formula on one scenario",
          validate=_second_validate, uses_fields=True)
def _exp_cross(ctx: RunContext) -> list[Check]:
    cfg = ctx.cfg
    sig = cfg.sig
    fields = [make_field(s, sig) for s in cfg.fields]
    b = cfg.boundary.build(sig)
    x0 = _x0(ctx)
    second, ests = _second_checks(ctx, cfg, fields, b, x0, ctx.tol(1e-2))
    first, firsts = _first_checks(ctx, cfg, fields, b, x0)
    exps, _ = _expected(fields, sig, x0, b)
    checks = []
    for sel, est, fv, (_, scale) in zip(cfg.fields, ests, firsts, exps):
        combined = ctx.tol(1e-2) + ctx.tol(FIRST_TOL[sel.partition(":")[0]])
        checks.append(_mv_check(f"{sel}:first-vs-second", fv, est.limit.coeffs, scale,
                                combined, sig, "real-pq", "derived", error_estimate=est.error,
                                eps=cfg.eps_values[0], details={"scale": scale}))
    return checks + second + first


# ---------------------------------------------------------------------------
# suites


class SuiteModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "suite"
    description: Optional[str] = None
    defaults: dict = Field(default_factory=dict)
    experiments: list[dict] = Field(default_factory=list)


@dataclass
class SuiteResult:
    name: str
    reports: list[Report]
    wall_time: float
    out_dir: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def summary_rows(self) -> list[dict]:
        return [{"name": r.config.run_name, "experiment": r.config.experiment,
                 "signature": list(r.config.signature), "pass": r.passed, "wall_time_s": r.wall_time,
                 "checks": len(r.checks), "failed_checks": [c.label for c in r.checks if not c.passed],
                 "error": r.error} for r in self.reports]

    def summary_table(self) -> str:
        lines = [f"{'status':6}  {'name':44} {'experiment':20} {'sig':6} {'time/s':>8}"]
        for row in self.summary_rows():
            st = "PASS" if row["pass"] else "FAIL"
            sig = "({},{})".format(*row["signature"])
            lines.append(f"{st:6}  {row['name']:44} {row['experiment']:20} {sig:6} {row['wall_time_s']:8.2f}")
            for lab in row["failed_checks"]:
                lines.append(f"{'':8}failed check: {lab}")
            if row["error"]:
                lines.append(f"{'':8}error: {row['error']}")
        lines.append(f"{len(self.reports)} experiments, "
                     f"{sum(not r.passed for r in self.reports)} failed, {self.wall_time:.1f} s")
        return "\n".join(lines)


def bundled_suites() -> list[str]:
    d = resources.files("pqclifford") / "suites"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def suite_path(name_or_path: str | Path) -> Path:
    """A suite file path; bare names resolve to the bundled suites."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in bundled_suites():
        return Path(str(resources.files("pqclifford") / "suites" / f"{stem}.json"))
    raise ConfigError([f"no such suite file or bundled suite: {name_or_path}"])


def load_suite(path: str | Path) -> tuple[SuiteModel, list[ExperimentConfig]]:
    p = suite_path(path)
    data = read_json(p)
    try:
        suite = SuiteModel.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation(e), str(p)) from None
    cfgs, errors = [], []
    for i, exp in enumerate(suite.experiments):
        merged = _merge(suite.defaults, exp)
        try:
            cfgs.append(ExperimentConfig.model_validate(merged))
        except ValidationError as e:
            errors += [f"experiments[{i}] ({exp.get('name', exp.get('experiment', '?'))}).{m}"
                       for m in _format_validation(e)]
    if errors:
        raise ConfigError(errors, str(p))
    names = [c.run_name for c in cfgs]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError([f"duplicate experiment names: {', '.join(dup)}"], str(p))
    return suite, cfgs


def _merge(defaults: dict, exp: dict) -> dict:
    out = dict(defaults)
    for k, v in exp.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def run_suite(path: str | Path, out_dir: Optional[str | Path] = None, threads: int = 1, jobs: int = 1,
              tolerance_scale: float = 1.0, seed: Optional[int] = None,
              progress: Optional[Callable[[Report], None]] = None) -> SuiteResult:
    """Run every experiment of a suite and write reports plus a summary."""
    suite, cfgs = load_suite(path)
    out = resolve_out_dir(str(out_dir) if out_dir else None)
    t0 = time.perf_counter()

    def one(cfg):
        r = run_experiment(cfg, threads, tolerance_scale, seed)
        write_report(r, out)
        if progress is not None:
            progress(r)
        return r

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            reports = list(ex.map(one, cfgs))
    else:
        reports = [one(c) for c in cfgs]
    res = SuiteResult(suite.name, reports, time.perf_counter() - t0, out)
    summary = {"suite": suite.name, "pass": res.passed, "wall_time_s": res.wall_time,
               "experiments": res.summary_rows()}
    atomic_write(out / f"{_safe(suite.name)}-summary.json", json.dumps(_jsonable(summary), indent=2) + "\n")
    atomic_write(out / f"{_safe(suite.name)}-summary.csv",
                 csv_text([row for r in reports for row in r.csv_rows()]))
    return res
