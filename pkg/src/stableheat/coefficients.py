"""Closed registry of coefficient families and initial conditions.

Coefficients are declarative (family name plus parameters), never
arbitrary user code: that keeps configs serializable, lets the Lipschitz
/ growth / monotonicity metadata be derived analytically, and makes
every audit reproducible.  The registered families:

==================  ====================================================
zero                0
constant            c
affine              a + b*u
clipped_linear      clip(slope*u, -cap, cap)
sine_modulated      amplitude * sin(mode*pi*x/length) * (1 + u_slope*u)
shifted             base(t, x, u) + delta
==================  ====================================================

Each constructor fills in tight declared bounds; audits re-check the
declarations by randomized finite differences plus the family's
analytic extreme points, and any failure carries a concrete witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import HypothesisError, ParameterError

__all__ = [
    "CoefficientSpec",
    "InitialCondition",
    "AuditReport",
    "zero",
    "constant",
    "affine",
    "clipped_linear",
    "sine_modulated",
    "shifted",
    "validate_hypothesis",
    "dominates",
    "ic_zero",
    "ic_constant",
    "ic_sine_mode",
    "ic_bump",
    "ic_tabulated",
]

_COEF_FAMILIES = (
    "zero",
    "constant",
    "affine",
    "clipped_linear",
    "sine_modulated",
    "shifted",
)


@dataclass(frozen=True)
class CoefficientSpec:
    """One registered coefficient with machine-checkable metadata."""

    family: str
    params: Mapping[str, Any]
    lipschitz_bound: float
    growth_bound: float
    monotone_in_u: bool

    def __post_init__(self):
        if self.family not in _COEF_FAMILIES:
            raise ParameterError(f"unknown coefficient family {self.family!r}")
        if self.lipschitz_bound < 0.0 or self.growth_bound < 0.0:
            raise ParameterError("declared bounds must be non-negative")

    def evaluate(self, t, x, u):
        """Pure pointwise evaluation; arguments broadcast together."""
        p = self.params
        tb = np.asarray(t, float)
        xb = np.asarray(x, float)
        ub = np.asarray(u, float)
        shape = np.broadcast_shapes(tb.shape, xb.shape, ub.shape)
        if self.family == "zero":
            out = np.zeros(shape)
        elif self.family == "constant":
            out = np.full(shape, p["value"])
        elif self.family == "affine":
            out = p["a"] + p["b"] * ub
        elif self.family == "clipped_linear":
            out = np.clip(p["slope"] * ub, -p["cap"], p["cap"])
        elif self.family == "sine_modulated":
            wave = np.sin(p["mode"] * math.pi * xb / p["length"])
            out = p["amplitude"] * wave * (1.0 + p["u_slope"] * ub)
        else:  # shifted
            out = np.asarray(p["base"].evaluate(tb, xb, ub)) + p["delta"]
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out if out.ndim else float(out)

    def vanishes_at_zero_state(self) -> bool:
        """True when the family gives f(t, x, 0) = 0 identically (analytic)."""
        p = self.params
        if self.family == "zero":
            return True
        if self.family == "constant":
            return p["value"] == 0.0
        if self.family == "affine":
            return p["a"] == 0.0
        if self.family == "clipped_linear":
            return True
        if self.family == "sine_modulated":
            return p["amplitude"] == 0.0
        return p["base"].vanishes_at_zero_state() and p["delta"] == 0.0

    def canonical(self) -> dict:
        """JSON-friendly canonical form (used in config echo and hashing)."""
        p = dict(self.params)
        if self.family == "shifted":
            p["base"] = p["base"].canonical()
        return {
            "family": self.family,
            "params": p,
            "lipschitz_bound": self.lipschitz_bound,
            "growth_bound": self.growth_bound,
            "monotone_in_u": self.monotone_in_u,
        }


def zero() -> CoefficientSpec:
    return CoefficientSpec("zero", {}, 0.0, 0.0, True)


def constant(value: float) -> CoefficientSpec:
    return CoefficientSpec("constant", {"value": float(value)}, 0.0, abs(value), True)


def affine(a: float, b: float) -> CoefficientSpec:
    return CoefficientSpec(
        "affine",
        {"a": float(a), "b": float(b)},
        abs(b),
        max(abs(a), abs(b)),
        b >= 0.0,
    )


def clipped_linear(slope: float, cap: float) -> CoefficientSpec:
    if cap <= 0.0:
        raise ParameterError("cap must be positive")
    return CoefficientSpec(
        "clipped_linear",
        {"slope": float(slope), "cap": float(cap)},
        abs(slope),
        min(abs(slope), cap),
        slope >= 0.0,
    )


def sine_modulated(
    amplitude: float, mode: int, u_slope: float, length: float = 1.0
) -> CoefficientSpec:
    if mode < 1 or length <= 0.0:
        raise ParameterError("mode must be >= 1 and length positive")
    monotone = mode == 1 and amplitude * u_slope >= 0.0
    return CoefficientSpec(
        "sine_modulated",
        {
            "amplitude": float(amplitude),
            "mode": int(mode),
            "u_slope": float(u_slope),
            "length": float(length),
        },
        abs(amplitude * u_slope),
        abs(amplitude) * max(1.0, abs(u_slope)),
        monotone,
    )


def shifted(base: CoefficientSpec, delta: float) -> CoefficientSpec:
    return CoefficientSpec(
        "shifted",
        {"base": base, "delta": float(delta)},
        base.lipschitz_bound,
        base.growth_bound + abs(delta),
        base.monotone_in_u,
    )


# -- audits -------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Outcome of a randomized coefficient audit."""

    passed: bool
    n_samples: int
    checked: tuple[str, ...]
    witness: tuple | None = None
    message: str = ""


def _sample_points(rng, n, t_range, x_range, u_range):
    t = rng.uniform(*t_range, size=n)
    x = rng.uniform(*x_range, size=n)
    u = rng.uniform(*u_range, size=n)
    v = rng.uniform(*u_range, size=n)
    return t, x, u, v


def _u_extremes(spec: CoefficientSpec, u_range) -> np.ndarray:
    pts = [u_range[0], u_range[1], 0.0]
    if spec.family == "clipped_linear" and spec.params["slope"] != 0.0:
        edge = spec.params["cap"] / abs(spec.params["slope"])
        pts += [edge, -edge]
    return np.asarray(pts)


def validate_hypothesis(
    spec: CoefficientSpec,
    require_monotone: bool = False,
    *,
    n_samples: int = 10000,
    seed: int = 0,
    t_range=(0.0, 1.0),
    x_range=(0.0, 1.0),
    u_range=(-50.0, 50.0),
) -> AuditReport:
    """Randomized audit of the declared Lipschitz/growth/monotone metadata.

    Raises :class:`HypothesisError` with a witness tuple on the first
    violation; the audit samples random (t, x, u, v) quadruples plus the
    family's analytic extreme u-values, so a pass is backed by at least
    ``n_samples`` points.
    """
    rng = np.random.default_rng(seed)
    slack = 1e-9 * (1.0 + spec.lipschitz_bound + spec.growth_bound)
    t, x, u, v = _sample_points(rng, n_samples, t_range, x_range, u_range)
    extremes = _u_extremes(spec, u_range)
    te = np.full(extremes.size, t_range[0])
    xe = np.linspace(*x_range, extremes.size)
    t_all = np.concatenate([t, te])
    x_all = np.concatenate([x, xe])
    u_all = np.concatenate([u, extremes])
    v_all = np.concatenate([v, np.flip(extremes)])

    fu = np.asarray(spec.evaluate(t_all, x_all, u_all))
    fv = np.asarray(spec.evaluate(t_all, x_all, v_all))

    lip_lhs = np.abs(fu - fv)
    lip_rhs = spec.lipschitz_bound * np.abs(u_all - v_all) + slack
    bad = np.flatnonzero(lip_lhs > lip_rhs)
    if bad.size:
        i = int(bad[0])
        witness = (float(t_all[i]), float(x_all[i]), float(u_all[i]), float(v_all[i]))
        raise HypothesisError(
            f"Lipschitz bound {spec.lipschitz_bound} violated at "
            f"(t,x,u,v)={witness}: |f(u)-f(v)|={lip_lhs[i]:.6g}",
            witness=witness,
        )

    growth_bad = np.flatnonzero(
        np.abs(fu) > spec.growth_bound * (1.0 + np.abs(u_all)) + slack
    )
    if growth_bad.size:
        i = int(growth_bad[0])
        witness = (float(t_all[i]), float(x_all[i]), float(u_all[i]))
        raise HypothesisError(
            f"growth bound {spec.growth_bound} violated at (t,x,u)={witness}",
            witness=witness,
        )

    checked = ["lipschitz", "growth"]
    if require_monotone:
        if not spec.monotone_in_u:
            raise HypothesisError(
                f"family {spec.family!r} with params {dict(spec.params)} is not "
                "declared monotone in u",
                witness=None,
            )
        lo = np.minimum(u_all, v_all)
        hi = np.maximum(u_all, v_all)
        flo = np.asarray(spec.evaluate(t_all, x_all, lo))
        fhi = np.asarray(spec.evaluate(t_all, x_all, hi))
        mono_bad = np.flatnonzero(flo > fhi + slack)
        if mono_bad.size:
            i = int(mono_bad[0])
            witness = (float(t_all[i]), float(x_all[i]), float(lo[i]), float(hi[i]))
            raise HypothesisError(
                f"monotonicity violated at (t,x,u,v)={witness}", witness=witness
            )
        checked.append("monotone")

    return AuditReport(
        passed=True,
        n_samples=int(t_all.size),
        checked=tuple(checked),
    )


def dominates(
    spec_f: CoefficientSpec,
    spec_g: CoefficientSpec,
    samples: int = 10000,
    *,
    seed: int = 0,
    t_range=(0.0, 1.0),
    x_range=(0.0, 1.0),
    u_range=(-50.0, 50.0),
) -> AuditReport:
    """Randomized check that f <= g on the sampled set (ordering gate)."""
    rng = np.random.default_rng(seed)
    t, x, u, _ = _sample_points(rng, samples, t_range, x_range, u_range)
    u = np.concatenate([u, _u_extremes(spec_f, u_range), _u_extremes(spec_g, u_range)])
    t = np.concatenate([t, np.full(u.size - t.size, t_range[0])])
    x = np.concatenate([x, np.linspace(*x_range, u.size - x.size)])
    fv = np.asarray(spec_f.evaluate(t, x, u))
    gv = np.asarray(spec_g.evaluate(t, x, u))
    slack = 1e-12 * (1.0 + np.abs(gv))
    bad = np.flatnonzero(fv > gv + slack)
    if bad.size:
        i = int(bad[0])
        witness = (float(t[i]), float(x[i]), float(u[i]))
        raise HypothesisError(
            f"ordering f <= g violated at (t,x,u)={witness}: "
            f"f={fv[i]:.6g} > g={gv[i]:.6g}",
            witness=witness,
        )
    return AuditReport(passed=True, n_samples=int(u.size), checked=("ordering",))


# -- initial conditions ---------------------------------------------------

_IC_FAMILIES = ("zero", "constant", "sine_mode", "bump", "tabulated")


@dataclass(frozen=True)
class InitialCondition:
    """Initial profile on [0, L], declarative like the coefficients."""

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _IC_FAMILIES:
            raise ParameterError(f"unknown initial-condition family {self.family!r}")

    def values(self, x) -> np.ndarray:
        xa = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "zero":
            return np.zeros_like(xa)
        if self.family == "constant":
            return np.full_like(xa, p["value"])
        if self.family == "sine_mode":
            return p["amplitude"] * np.sin(p["mode"] * math.pi * xa / p["length"])
        if self.family == "bump":
            half = 0.5 * p["width"]
            s = (xa - p["center"]) / half
            out = np.zeros_like(xa)
            inside = np.abs(s) < 1.0
            out[inside] = p["amplitude"] * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            return out
        xs = np.asarray(p["xs"], dtype=float)
        vals = np.asarray(p["values"], dtype=float)
        return np.interp(xa, xs, vals)

    def validate_dirichlet(self, length_L: float, n_check: int = 512) -> None:
        """Finiteness plus exact vanishing at both endpoints."""
        xs = np.linspace(0.0, length_L, n_check)
        v = self.values(xs)
        if not np.all(np.isfinite(v)):
            raise ParameterError("initial condition is non-finite on [0, L]")
        if abs(float(self.values(0.0))) > 1e-14 or abs(
            float(self.values(length_L))
        ) > 1e-12 * (1.0 + float(np.max(np.abs(v)))):
            raise ParameterError(
                "initial condition must vanish at x=0 and x=L for the "
                "absorbing boundary"
            )

    def is_nonnegative(self, length_L: float, n_check: int = 2048) -> bool:
        xs = np.linspace(0.0, length_L, n_check)
        return bool(np.all(self.values(xs) >= 0.0))

    def canonical(self) -> dict:
        p = {
            k: (list(v) if isinstance(v, (np.ndarray, list, tuple)) else v)
            for k, v in self.params.items()
        }
        return {"family": self.family, "params": p}


def ic_zero() -> InitialCondition:
    return InitialCondition("zero", {})


def ic_constant(value: float) -> InitialCondition:
    return InitialCondition("constant", {"value": float(value)})


def ic_sine_mode(mode: int, amplitude: float, length: float) -> InitialCondition:
    if mode < 1 or length <= 0.0:
        raise ParameterError("mode must be >= 1 and length positive")
    return InitialCondition(
        "sine_mode",
        {"mode": int(mode), "amplitude": float(amplitude), "length": float(length)},
    )


def ic_bump(amplitude: float, center: float, width: float) -> InitialCondition:
    if width <= 0.0:
        raise ParameterError("width must be positive")
    return InitialCondition(
        "bump",
        {"amplitude": float(amplitude), "center": float(center), "width": float(width)},
    )


def ic_tabulated(xs, values) -> InitialCondition:
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
        raise ParameterError("tabulated initial condition needs matching 1-d tables")
    return InitialCondition(
        "tabulated", {"xs": tuple(xs.tolist()), "values": tuple(values.tolist())}
    )
