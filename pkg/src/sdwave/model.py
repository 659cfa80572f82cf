"""Nonlinear source f, damping sigma, forcing g and their pointwise tools.

Built-in families are polynomials, so the antiderivatives
F(s) = int_0^s f, Sigma(s) = int_0^s sigma and Sigma_hat(s) = int_0^s u sigma(u) du
are carried in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .spectral import (
    BasisSpec,
    GridField,
    SpectralField,
    coeffs_to_grid,
    first_eigenvalue,
    grid_integral,
    grid_to_coeffs,
)

ScalarFn = Callable[[np.ndarray], np.ndarray]

# family name -> accepted parameters
SOURCE_FAMILIES = {"cubic": ("a",), "quintic": ("a",), "odd-polynomial": ("coeffs",), "zero": ()}
DAMPING_FAMILIES = {"quartic": ("b",), "even-polynomial": ("coeffs",), "constant": ("c",), "zero": ()}
FORCING_PRESETS = ("zero", "mode1", "constant")


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Source term f with antiderivative F and derivative f'."""

    family: str
    params: dict
    f: ScalarFn
    F: ScalarFn
    df: ScalarFn | None = None
    degree: int | None = None

    @classmethod
    def from_polynomial(cls, family: str, params: dict, coef: Sequence[float]) -> "SourceSpec":
        p = Polynomial(np.asarray(coef, dtype=float))
        P, dp = p.integ(), p.deriv()
        return cls(family, dict(params), _vec(p), _vec(P), _vec(dp), _degree(p))

    @classmethod
    def custom(cls, f: ScalarFn, F: ScalarFn, df: ScalarFn | None = None) -> "SourceSpec":
        return cls("custom", {}, f, F, df, None)


@dataclass(frozen=True, eq=False)
class DampingSpec:
    """Damping coefficient sigma >= 0 with Sigma and Sigma_hat."""

    family: str
    params: dict
    sigma: ScalarFn
    Sigma: ScalarFn
    Sigma_hat: ScalarFn
    degree: int | None = None

    @classmethod
    def from_polynomial(cls, family: str, params: dict, coef: Sequence[float]) -> "DampingSpec":
        p = Polynomial(np.asarray(coef, dtype=float))
        return cls(family, dict(params), _vec(p), _vec(p.integ()),
                   _vec((Polynomial([0.0, 1.0]) * p).integ()), _degree(p))

    @classmethod
    def custom(cls, sigma: ScalarFn, Sigma: ScalarFn, Sigma_hat: ScalarFn) -> "DampingSpec":
        return cls("custom", {}, sigma, Sigma, Sigma_hat, None)


def _vec(p: Polynomial) -> ScalarFn:
    # trimmed coefficients; Polynomial.__call__ is Horner but slow on tiny arrays
    coef = np.trim_zeros(np.asarray(p.coef, dtype=float), "b")
    if coef.size == 0:
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    low = int(np.argmax(coef != 0))
    rev = coef[low:][::-1]

    def fn(s):
        s = np.asarray(s, dtype=float)
        if rev.size == 1:
            out = rev[0] * np.ones_like(s) if low == 0 else rev[0] * s**low
            return out
        out = rev[0] * s + rev[1]
        for c in rev[2:]:
            out = out * s + c
        return out * s**low if low else out

    return fn


def _degree(p: Polynomial) -> int:
    coef = np.trim_zeros(np.asarray(p.coef, dtype=float), "b")
    return max(coef.size - 1, 0)


def make_source(family: str, **params) -> SourceSpec:
    """Build a source family by name.

    ``cubic``: s^3 - a s; ``quintic``: |s|^4 s - a s; ``odd-polynomial``:
    sum_i coeffs[i] s^(2i+1); ``zero``: f = 0.
    """
    if family == "cubic":
        a = float(params.get("a", 0.0))
        if a < 0:
            raise ValueError("cubic source needs a >= 0")
        return SourceSpec.from_polynomial(family, {"a": a}, [0.0, -a, 0.0, 1.0])
    if family == "quintic":
        a = float(params.get("a", 0.0))
        if a < 0:
            raise ValueError("quintic source needs a >= 0")
        return SourceSpec.from_polynomial(family, {"a": a}, [0.0, -a, 0.0, 0.0, 0.0, 1.0])
    if family == "odd-polynomial":
        odd = [float(c) for c in params.get("coeffs", [])]
        coef = np.zeros(2 * len(odd) + 1)
        coef[1::2] = odd
        return SourceSpec.from_polynomial(family, {"coeffs": odd}, coef)
    if family == "zero":
        return SourceSpec.from_polynomial(family, {}, [0.0])
    raise ValueError(f"unknown source family {family!r}; available: {', '.join(SOURCE_FAMILIES)}")


def make_damping(family: str, **params) -> DampingSpec:
    """Build a damping family by name.

    ``quartic``: b s^4; ``even-polynomial``: sum_i coeffs[i] s^(2i);
    ``constant``: c; ``zero``: sigma = 0.
    """
    if family == "quartic":
        b = float(params.get("b", 1.0))
        if b < 0:
            raise ValueError("quartic damping needs b >= 0")
        return DampingSpec.from_polynomial(family, {"b": b}, [0.0, 0.0, 0.0, 0.0, b])
    if family == "even-polynomial":
        even = [float(c) for c in params.get("coeffs", [])]
        coef = np.zeros(max(2 * len(even) - 1, 1))
        coef[0::2] = even if even else [0.0]
        return DampingSpec.from_polynomial(family, {"coeffs": even}, coef)
    if family == "constant":
        c = float(params.get("c", 0.0))
        if c < 0:
            raise ValueError("constant damping needs c >= 0")
        return DampingSpec.from_polynomial(family, {"c": c}, [c])
    if family == "zero":
        return DampingSpec.from_polynomial(family, {}, [0.0])
    raise ValueError(f"unknown damping family {family!r}; available: {', '.join(DAMPING_FAMILIES)}")


def make_forcing(basis: BasisSpec, preset: str = "zero", amplitude: float = 0.0,
                 coeffs: Sequence[float] | None = None) -> SpectralField:
    """Forcing g as a preset or an explicit coefficient list.

    ``mode1``: amplitude * prod sin(x_i) (unnormalized); ``constant``: the
    Galerkin projection of the constant function ``amplitude``.
    """
    if coeffs is not None:
        return SpectralField(basis, np.asarray(coeffs, dtype=float))
    if preset == "zero":
        return basis.zeros()
    if preset == "mode1":
        return basis.sine_product((1,) * basis.dimension, amplitude)
    if preset == "constant":
        k = np.arange(1, basis.modes + 1)
        axis = math.sqrt(2.0 / math.pi) * (1.0 - (-1.0) ** k) / k
        c = np.ones(())
        for _ in range(basis.dimension):
            c = np.multiply.outer(c, axis)
        return SpectralField(basis, amplitude * c)
    raise ValueError(f"unknown forcing preset {preset!r}; available: {', '.join(FORCING_PRESETS)}")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    basis: BasisSpec
    source: SourceSpec
    damping: DampingSpec
    forcing: SpectralField = None

    def __post_init__(self):
        g = self.forcing if self.forcing is not None else self.basis.zeros()
        if g.basis != self.basis:
            raise ValueError("forcing lives on a different basis")
        if not np.isfinite(np.sum(g.coeffs**2)):
            raise ValueError("forcing must have finite L2 norm")
        object.__setattr__(self, "forcing", g)

    def with_forcing(self, g: SpectralField) -> "ModelSpec":
        return ModelSpec(self.basis, self.source, self.damping, g)


def default_model(basis: BasisSpec | None = None, forcing: float = 2.0) -> ModelSpec:
    """Cubic source s^3, quartic damping s^4, constant forcing.

    A reference pair satisfying the growth and sign conditions with room
    to spare; nothing singles it out beyond that.
    """
    basis = basis or BasisSpec(1, 16)
    return ModelSpec(basis, make_source("cubic", a=0.0), make_damping("quartic", b=1.0),
                     make_forcing(basis, "constant", forcing))


def pitchfork_model(basis: BasisSpec | None = None, a: float = 1.3) -> ModelSpec:
    """f(s) = s^3 - a s with quartic damping and g = 0."""
    basis = basis or BasisSpec(1, 1)
    return ModelSpec(basis, make_source("cubic", a=a), make_damping("quartic", b=1.0))


# -- pointwise operators -------------------------------------------------------

def nemytskii(phi: ScalarFn, f: SpectralField) -> SpectralField:
    """Dealiased projection of phi(f) computed on the oversampled grid."""
    grid = coeffs_to_grid(f.basis, f.coeffs)
    vals = np.asarray(phi(grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite values in pointwise composition")
    return SpectralField(f.basis, grid_to_coeffs(f.basis, vals))


def truncate_source(spec: SourceSpec, k: int) -> ScalarFn:
    """f_k(s) = f(clip(s, -k, k))."""
    if k < 1:
        raise ValueError("truncation level must be >= 1")
    f = spec.f
    return lambda s: f(np.clip(s, -k, k))


def truncate_damping(spec: DampingSpec, k: int) -> ScalarFn:
    if k < 1:
        raise ValueError("truncation level must be >= 1")
    sigma = spec.sigma
    return lambda s: sigma(np.clip(s, -k, k))


def cutoff_values(values: np.ndarray, m: float) -> np.ndarray:
    """sign(w) * max(|w| - m, 0), pointwise."""
    if m <= 0:
        raise ValueError("cutoff level must be positive")
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.maximum(np.abs(values) - m, 0.0)


def cutoff(f: SpectralField, m: float) -> SpectralField:
    """Soft threshold of the grid values, re-projected onto the basis.

    Projection does not commute with thresholding; invariants of the
    three-branch definition hold for :func:`cutoff_values` on the grid.
    """
    return SpectralField(f.basis, grid_to_coeffs(f.basis, cutoff_values(coeffs_to_grid(f.basis, f.coeffs), m)))


def functional_integral(anti: ScalarFn, f: SpectralField | GridField) -> float:
    """Equal-weight grid quadrature of anti(w(x)) over the box."""
    if isinstance(f, GridField):
        grid = f.values
    else:
        grid = coeffs_to_grid(f.basis, f.coeffs)
    vals = np.asarray(anti(grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite integrand")
    return grid_integral(f.basis, vals)


# -- growth conditions ----------------------------------------------------------

@dataclass
class ValidationReport:
    passed: bool
    lipschitz_constant: float
    damping_constant: float
    dissipativity_min_ratio: float
    window: tuple[float, float]
    tail_threshold: float
    margin: float
    violations: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lipschitz_constant": self.lipschitz_constant,
            "damping_constant": self.damping_constant,
            "dissipativity_min_ratio": self.dissipativity_min_ratio,
            "window": list(self.window),
            "tail_threshold": self.tail_threshold,
            "margin": self.margin,
            "violations": self.violations,
            "warnings": list(self.warnings),
        }


class ConditionViolation(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        names = ", ".join(sorted(report.violations))
        super().__init__(f"growth/sign conditions violated: {names}")


def _lipschitz_ratio(f: ScalarFn, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    keep = s != t
    s, t = s[keep], t[keep]
    return np.abs(f(s) - f(t)) / ((1.0 + s**4 + t**4) * np.abs(s - t))


def validate_conditions(model: ModelSpec, sample_count: int = 1000, s_max: float = 10.0,
                        margin: float = 0.0, tail_threshold: float | None = None,
                        growth_factor: float = 1.5, seed: int = 0,
                        raise_on_failure: bool = False) -> ValidationReport:
    """Sample the Lipschitz-growth, dissipativity and damping conditions.

    The growth bounds are judged on the window [-s_max, s_max] and again on
    twice that window: a constant that keeps growing (by more than
    ``growth_factor``) means the nonlinearity outgrows the admissible power.
    The liminf condition is checked for |s| >= tail_threshold (default
    s_max / 2).
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    rng = np.random.default_rng(seed)
    f, sigma = model.source.f, model.damping.sigma
    lam1 = first_eigenvalue(model.basis)
    tail = s_max / 2.0 if tail_threshold is None else float(tail_threshold)
    violations: dict = {}
    warnings: list = []

    constants = []
    for S in (s_max, 2.0 * s_max):
        s = np.concatenate([np.linspace(-S, S, sample_count), rng.uniform(-S, S, sample_count)])
        t = np.concatenate([np.linspace(S, -S, sample_count), rng.uniform(-S, S, sample_count)])
        constants.append(float(np.max(_lipschitz_ratio(f, s, t))))
    c_lip = constants[0]
    if constants[1] > growth_factor * max(constants[0], 1e-300):
        worst = np.linspace(s_max, 2 * s_max, 5)
        violations["lipschitz_growth"] = {
            "constant_on_window": constants[0],
            "constant_on_doubled_window": constants[1],
            "witnesses": [[float(x), float(np.max(_lipschitz_ratio(f, np.array([x]), np.array([0.0]))))]
                          for x in worst],
        }

    s = np.linspace(-2 * s_max, 2 * s_max, 2 * sample_count + 1)
    sig = np.asarray(sigma(s), dtype=float)
    neg = s[sig < 0]
    if neg.size:
        violations["damping_nonnegative"] = {"witnesses": [[float(x), float(sigma(np.array(x)))] for x in neg[:10]]}
    inner = np.abs(s) <= s_max
    bound = sig / (1.0 + s**4)
    c_sig = float(np.max(np.abs(bound[inner])))
    c_sig2 = float(np.max(np.abs(bound)))
    if c_sig2 > growth_factor * max(c_sig, 1e-300) and c_sig2 > 1e-12:
        violations["damping_growth"] = {
            "constant_on_window": c_sig,
            "constant_on_doubled_window": c_sig2,
            "witnesses": [[float(x), float(y)] for x, y in zip(s[-3:], sig[-3:])],
        }

    st = np.linspace(-s_max, s_max, sample_count)
    st = st[np.abs(st) >= tail]
    ratio = f(st) / st
    min_ratio = float(np.min(ratio)) if st.size else math.inf
    bad = st[ratio <= -lam1 + margin]
    if bad.size:
        violations["dissipativity"] = {
            "lambda_1": lam1,
            "witnesses": [[float(x), float(f(np.array(x)) / x)] for x in bad[:10]],
        }

    degrees = [d for d in (model.source.degree,
                           None if model.damping.degree is None else model.damping.degree + 1)
               if d is not None]
    if degrees:
        p = max(degrees)
        if model.basis.oversampling < (p + 1) / 2:
            warnings.append(
                f"oversampling {float(model.basis.oversampling):g} < {(p + 1) / 2:g}: products of "
                f"degree {p} alias on the collocation grid")

    report = ValidationReport(not violations, c_lip, c_sig, min_ratio, (-s_max, s_max), tail, margin,
                              violations, warnings)
    if raise_on_failure and violations:
        raise ConditionViolation(report)
    return report
