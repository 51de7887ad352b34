"""Closed-form damage-onset stresses for the bulk and the interface.

Bulk onset in the (tr+ sigma, |dev sigma|) plane, modified form (default)::

    (1 + mu/Kp (1 - GcI/GcII)) (tr+ s)^2 + 2 Kp/mu GcI/GcII |dev s|^2 = 3 Kp GcI / (eps Phi'(1))

and the original form, obtained from the damage flow rule at the intact state::

    (tr+ s)^2 / (8 Kp GcI) + |dev s|^2 / (4 mu GcII) = 3 / (8 eps Phi'(1)).

Interface onset in the (p_n, p_s) plane::

    p_n^2/(2 kn) + p_s^2/(2 ks) = (GciI + D^i) / phi'(1).

Both loci are homogeneous along rays from the origin (the mode-mixity term of
the interface depends only on the ray direction), so every ray has a
closed-form radius; rays without intersection are reported as nan.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .materials import BulkMaterial, InterfaceLaw, gamma_inverse, interface_degradation_eval

__all__ = ["OnsetCurve", "RatioRow", "bulk_onset", "bulk_onset_coefficients", "interface_onset", "onset_ratio_table"]


@dataclass(frozen=True)
class OnsetCurve:
    """Sampled onset locus (Pa) with scalar landmarks.

    ``points[:, 0]`` is tr+ sigma (bulk) or p_n (interface), ``points[:, 1]``
    is |dev sigma| or p_s.  Rays without a root hold nan.
    """

    kind: str
    points: np.ndarray
    angles: np.ndarray
    landmarks: dict = field(default_factory=dict)
    equation: Callable | None = field(default=None, repr=False, compare=False)

    def residual(self, points=None) -> np.ndarray:
        """Relative residual of the defining equation (samples by default)."""
        return self.equation(self.points if points is None else np.asarray(points, dtype=float))


def bulk_onset_coefficients(mat: BulkMaterial, form: str = "modified"):
    """Return ``(a, b, C)`` with a (tr+ s)^2 + b |dev s|^2 = C (Pa^2)."""
    if not mat.damageable:
        raise ValueError("material has no fracture energies")
    dphi = mat.degradation.slope_at_intact()
    if not dphi > 0:
        raise ValueError("Phi'(1) must be positive")
    r = mat.GcI / mat.GcII
    if form == "modified":
        return 1.0 + mat.mu / mat.Kp * (1.0 - r), 2.0 * mat.Kp / mat.mu * r, 3.0 * mat.Kp * mat.GcI / (mat.eps * dphi)
    if form == "original":
        # multiply the original relation through by 8 Kp GcI
        return 1.0, 2.0 * mat.Kp / mat.mu * r, 3.0 * mat.Kp * mat.GcI / (mat.eps * dphi)
    raise ValueError(f"unknown onset form {form!r}")


def bulk_onset(mat: BulkMaterial, form: str = "modified", n: int = 256) -> OnsetCurve:
    """Bulk onset locus sampled on ``n`` rays over angles [0, pi].

    Landmarks: ``trace_crit`` (locus at zero deviator), ``trace_crit_approx``
    (sqrt(3 GcI/(eps Phi'(1)) Kp^2/(Kp+mu)), the large-GcII value),
    ``dev_crit`` (locus at zero tensile trace).
    """
    a, b, C = bulk_onset_coefficients(mat, form)
    th = np.linspace(0.0, np.pi, n)
    ct, st = np.cos(th), np.sin(th)
    den = a * np.maximum(ct, 0.0) ** 2 + b * st**2
    with np.errstate(divide="ignore"):
        r = np.where(den > 0, np.sqrt(C / np.where(den > 0, den, 1.0)), np.nan)
    pts = np.column_stack([r * ct, r * st])
    dphi = mat.degradation.slope_at_intact()
    marks = {
        "trace_crit": float(np.sqrt(C / a)),
        "trace_crit_approx": float(np.sqrt(3.0 * mat.GcI / (mat.eps * dphi) * mat.Kp**2 / (mat.Kp + mat.mu))),
        "dev_crit": float(np.sqrt(C / b)) if b > 0 else float("inf"),
        "a": a,
        "b": b,
        "C": C,
    }

    def resid(p):
        t = np.maximum(p[:, 0], 0.0)
        return (a * t * t + b * p[:, 1] ** 2) / C - 1.0

    return OnsetCurve("bulk-" + form, pts, th, marks, resid)


def _mixity_factor(law: InterfaceLaw):
    ratio = law.GciII / law.GciI
    return 1.0 if np.isinf(ratio) else (2.0 / np.pi) * np.arctan(np.sqrt(ratio - 1.0))


def interface_onset(law: InterfaceLaw, n: int = 256) -> OnsetCurve:
    """Interface onset locus on ``n`` rays over angles [-pi/2, pi/2] in (p_n, p_s).

    Landmarks: ``pn_onset`` = sqrt(2 kn GciI / phi'(1)) (damage triggering in
    pure opening), ``pn_peak`` (numerical maximum over zeta of the opening
    traction at which damage can grow) and, for the exponential family,
    ``sigma_crit`` = sqrt(exp(G1 - 2) kn GciI / beta) with G1 = gamma^-1(beta + delta).
    """
    dphi = float(interface_degradation_eval(law.degradation, 1.0)[1])
    if not dphi > 0:
        raise ValueError("phi'(1) must be positive")
    k = _mixity_factor(law)
    th = np.linspace(-0.5 * np.pi, 0.5 * np.pi, n)
    ct, st = np.cos(th), np.sin(th)
    ang = np.abs(np.arctan2(st / law.ks, ct / law.kn))
    with np.errstate(over="ignore", invalid="ignore"):
        tan2 = np.tan(k * ang) ** 2
        tan2 = np.where(k * ang >= 0.5 * np.pi * (1 - 1e-15), np.inf, tan2)
        rhs = law.GciI * (1.0 + tan2) / dphi
        den = ct**2 / (2 * law.kn) + st**2 / (2 * law.ks)
        r = np.sqrt(rhs / den)
    r = np.where(np.isfinite(r), r, np.nan)
    pts = np.column_stack([r * ct, r * st])
    marks = {"pn_onset": float(np.sqrt(2.0 * law.kn * law.GciI / dphi)), "dphi1": dphi}
    marks["pn_peak"] = _peak_opening_traction(law)
    deg = law.degradation
    if deg.family == "exponential":
        g1 = float(gamma_inverse(deg.beta + deg.delta))
        marks["sigma_crit"] = float(np.sqrt(np.exp(g1 - 2.0) * law.kn * law.GciI / deg.beta))

    def resid(p):
        ang = np.abs(np.arctan2(p[:, 1] / law.ks, p[:, 0] / law.kn))
        lhs = p[:, 0] ** 2 / (2 * law.kn) + p[:, 1] ** 2 / (2 * law.ks)
        return lhs / (law.GciI * (1.0 + np.tan(k * ang) ** 2) / dphi) - 1.0

    return OnsetCurve("interface", pts, th, marks, resid)


def _peak_opening_traction(law: InterfaceLaw) -> float:
    """max over zeta of phi(zeta) sqrt(2 kn GciI / phi'(zeta)) in pure opening."""

    def neg(z):
        f, d1, _ = interface_degradation_eval(law.degradation, z)
        return -float(f * np.sqrt(2.0 * law.kn * law.GciI / d1))

    grid = np.linspace(1e-3, 1.0, 400)
    vals = np.array([neg(z) for z in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi - lo <= 0:
        return -float(vals[i])
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return -float(min(res.fun, vals[i]))


@dataclass(frozen=True)
class RatioRow:
    """Normalized bulk locus (tr+ s)^2 + dev_coef |dev s|^2 = rhs (rhs in MPa^2)."""

    ratio: float
    trace_coef: float
    dev_coef: float
    rhs_mpa2: float


def onset_ratio_table(mat: BulkMaterial, ratios) -> list:
    """Modified-form locus coefficients for several GcII/GcI ratios.

    The coefficients depend on Kp/mu.  Published tables for this locus are
    consistent with E = 30 GPa, nu = 0.2 (Kp = 20.83 GPa, mu = 12.5 GPa) rather
    than with the quoted Kp = 22.0 GPa, mu = 12.3 GPa; under the quoted pair the
    deviatoric coefficient at GcII/GcI = 25 comes out about 11% larger.
    """
    rows = []
    for r in ratios:
        if r < 1:
            raise ValueError("ratios must be >= 1")
        m = BulkMaterial(mat.Kp, mat.mu, mat.GcI, mat.GcI * r, mat.eps, mat.degradation)
        a, b, C = bulk_onset_coefficients(m, "modified")
        rows.append(RatioRow(float(r), 1.0, b / a, C / a / 1e12))
    return rows
