"""Constitutive catalog for the bulk phase field and the adhesive interface.

Damage convention: 1 means intact, 0 means fully broken.  All evaluators are
vectorized over numpy arrays and return plain arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BulkDegradation",
    "InterfaceDegradation",
    "BulkMaterial",
    "InterfaceLaw",
    "StrainSplit",
    "bulk_degradation_eval",
    "interface_degradation_eval",
    "gamma",
    "gamma_inverse",
    "strain_split",
    "split_invariants",
    "bulk_energy_density",
    "bulk_mode_dissipation",
    "bulk_mode_dissipation_from_invariants",
    "interface_mode_dissipation",
]

_ZERO_STRAIN = 1e-30


@dataclass(frozen=True)
class BulkDegradation:
    """Degradation of the bulk stiffness, Phi(alpha).

    ``quadratic``: alpha**2 + delta_reg.
    ``rational``: alpha**2 / (alpha**2 + beta*(1 - alpha)) + delta_reg.
    """

    family: str = "quadratic"
    delta_reg: float = 1e-6
    beta: float = 1.0

    def __post_init__(self):
        if self.family not in ("quadratic", "rational"):
            raise ValueError(f"unknown bulk degradation family {self.family!r}")
        if self.delta_reg < 0:
            raise ValueError("delta_reg must be non-negative")
        if self.family == "rational" and not self.beta > 0:
            raise ValueError("rational degradation needs beta > 0")

    def slope_at_intact(self) -> float:
        """Phi'(1), the quantity entering the onset criteria."""
        return 2.0 if self.family == "quadratic" else float(self.beta)


@dataclass(frozen=True)
class InterfaceDegradation:
    """Degradation of the adhesive stiffness, phi(zeta), with phi(0)=0, phi(1)=1.

    ``rational``: beta*z / (1 + beta - z).
    ``exponential``: (exp(-G(z)) - f0) / (f1 - f0) with G(z) = gamma^-1(beta*z + delta),
    gamma(z) = exp(-z) (1 + z + z**2/2), f0 = exp(-G(0)), f1 = exp(-G(1)).
    """

    family: str = "rational"
    beta: float = 0.1
    delta: float = 0.0

    def __post_init__(self):
        if self.family not in ("rational", "exponential"):
            raise ValueError(f"unknown interface degradation family {self.family!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.family == "exponential":
            if not (self.delta > 0 and self.beta + self.delta < 1):
                raise ValueError("exponential degradation needs delta > 0 and beta + delta < 1")

    def slope_at_intact(self) -> float:
        """phi'(1)."""
        return float(interface_degradation_eval(self, 1.0)[1])


@dataclass(frozen=True)
class BulkMaterial:
    """Isotropic plane-strain bulk material.

    ``GcI = None`` marks an undamageable subdomain (elastic inhomogeneity).
    ``GcII`` may be ``math.inf``.
    """

    Kp: float
    mu: float
    GcI: float | None = None
    GcII: float | None = None
    eps: float | None = None
    degradation: BulkDegradation = field(default_factory=BulkDegradation)

    def __post_init__(self):
        if not (self.Kp > 0 and self.mu > 0):
            raise ValueError("Kp and mu must be positive")
        if self.GcI is None:
            return
        if not self.GcI > 0:
            raise ValueError("GcI must be positive")
        if self.GcII is None:
            object.__setattr__(self, "GcII", float(self.GcI))
        if self.GcII < self.GcI:
            raise ValueError(f"GcII ({self.GcII}) must not be smaller than GcI ({self.GcI})")
        if self.eps is None or not self.eps > 0:
            raise ValueError("a damageable material needs a positive length scale eps")

    @property
    def damageable(self) -> bool:
        return self.GcI is not None


@dataclass(frozen=True)
class InterfaceLaw:
    """Adhesive layer law (stiffnesses per unit area, energies per unit length)."""

    kn: float
    ks: float
    kG: float
    GciI: float
    GciII: float | None = None
    eps_i: float = 0.0
    degradation: InterfaceDegradation = field(default_factory=InterfaceDegradation)

    def __post_init__(self):
        if not (self.kn > 0 and self.ks > 0 and self.kG > 0):
            raise ValueError("kn, ks and kG must be positive")
        if not self.GciI > 0:
            raise ValueError("GciI must be positive")
        if self.GciII is None:
            object.__setattr__(self, "GciII", float(self.GciI))
        if self.GciII < self.GciI:
            raise ValueError(f"GciII ({self.GciII}) must not be smaller than GciI ({self.GciI})")
        if self.eps_i < 0:
            raise ValueError("eps_i must be non-negative")


def _check_unit_interval(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


def bulk_degradation_eval(deg: BulkDegradation, a):
    """Return ``(Phi, Phi', Phi'')`` at damage values ``a`` in [0, 1]."""
    a = _check_unit_interval(a, "alpha")
    if deg.family == "quadratic":
        return a * a + deg.delta_reg, 2.0 * a, np.full_like(a, 2.0)
    b = deg.beta
    h = a * a + b * (1.0 - a)
    dh = 2.0 * a - b
    num = b * a * (2.0 - a)
    d1 = num / h**2
    d2 = (b * (2.0 - 2.0 * a) * h - 2.0 * num * dh) / h**3
    return a * a / h + deg.delta_reg, d1, d2


def gamma(z):
    """gamma(z) = exp(-z) (1 + z + z**2/2); strictly decreasing from 1 on z >= 0."""
    z = np.asarray(z, dtype=float)
    return np.exp(-z) * (1.0 + z + 0.5 * z * z)


def gamma_inverse(y, tol=1e-12):
    """Invert gamma on z >= 0 for y in (0, 1].

    Bisection on the log form h(z) = -z + log(1 + z + z**2/2) - log(y), which is
    monotone and well scaled, followed by Newton polishing.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0.0)) or np.any(y > 1.0):
        raise ValueError("gamma inverse argument must lie in (0, 1]")
    logy = np.log(y)

    def h(z):
        return -z + np.log1p(z + 0.5 * z * z) - logy

    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    while np.any(h(hi) > 0.0):
        hi = np.where(h(hi) > 0.0, 2.0 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        pos = h(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    z = 0.5 * (lo + hi)
    for _ in range(4):
        # h'(z) = -z**2 / (2 (1 + z + z**2/2))
        dh = -0.5 * z * z / (1.0 + z + 0.5 * z * z)
        ok = np.abs(dh) > 1e-300
        step = np.where(ok, h(z) / np.where(ok, dh, 1.0), 0.0)
        z_new = np.clip(z - step, lo, hi)
        if np.all(np.abs(z_new - z) <= tol * np.maximum(1.0, np.abs(z))):
            z = z_new
            break
        z = z_new
    return z


def interface_degradation_eval(deg: InterfaceDegradation, z):
    """Return ``(phi, phi', phi'')`` at interface damage values ``z`` in [0, 1]."""
    z = _check_unit_interval(z, "zeta")
    b = deg.beta
    if deg.family == "rational":
        d = 1.0 + b - z
        return b * z / d, b * (1.0 + b) / d**2, 2.0 * b * (1.0 + b) / d**3
    g0, g1 = gamma_inverse(np.array([deg.delta, b + deg.delta]))
    f0, f1 = math.exp(-g0), math.exp(-g1)
    scale = f1 - f0
    G = gamma_inverse(b * z + deg.delta)
    val = (np.exp(-G) - f0) / scale
    d1 = 2.0 * b / (G * G) / scale
    d2 = 8.0 * b * b * np.exp(G) / G**5 / scale
    return val, d1, d2


@dataclass(frozen=True)
class StrainSplit:
    """Orthogonal split e = sph_plus + sph_minus + dev (2D, sph e = tr e / 2 * I)."""

    sph_plus: np.ndarray
    sph_minus: np.ndarray
    dev: np.ndarray
    trace: float


def strain_split(e) -> StrainSplit:
    e = np.asarray(e, dtype=float)
    if e.shape != (2, 2):
        raise ValueError("strain must be a 2x2 tensor")
    if abs(e[0, 1] - e[1, 0]) > 1e-12 * max(1.0, np.abs(e).max()):
        raise ValueError("strain must be symmetric")
    tr = float(e[0, 0] + e[1, 1])
    sph = 0.5 * tr * np.eye(2)
    plus = sph if tr > 0 else np.zeros((2, 2))
    return StrainSplit(plus, sph - plus, e - sph, tr)


def split_invariants(e):
    """Return ``(tr e, |dev e|**2)`` for strains given as 2x2 tensors (..., 2, 2)."""
    e = np.asarray(e, dtype=float)
    tr = e[..., 0, 0] + e[..., 1, 1]
    dxx = 0.5 * (e[..., 0, 0] - e[..., 1, 1])
    exy = 0.5 * (e[..., 0, 1] + e[..., 1, 0])
    return tr, 2.0 * dxx * dxx + 2.0 * exy * exy


def bulk_energy_density(mat: BulkMaterial, tr, dev2, phi=1.0):
    """Stored elastic energy density Phi*(Kp|sph+ e|^2 + mu|dev e|^2) + Kp|sph- e|^2."""
    tr = np.asarray(tr, dtype=float)
    tp = np.maximum(tr, 0.0)
    tm = np.minimum(tr, 0.0)
    return phi * (0.5 * mat.Kp * tp * tp + mat.mu * dev2) + 0.5 * mat.Kp * tm * tm


def bulk_mode_dissipation_from_invariants(mat: BulkMaterial, tr, dev2):
    """Vectorized D^eta from ``tr e`` and ``|dev e|**2``."""
    tp = np.maximum(np.asarray(tr, dtype=float), 0.0)
    s = 0.5 * mat.Kp * tp * tp
    d = mat.mu * np.asarray(dev2, dtype=float)
    GcI, GcII = mat.GcI, mat.GcII
    den = s / GcI + (d / GcII if np.isfinite(GcII) else 0.0 * d)
    zero = (s < _ZERO_STRAIN) & (d < _ZERO_STRAIN)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, (s + d) / np.where(den > 0, den, 1.0), np.inf) - GcI
    out = np.where(d == 0.0, 0.0, out)
    out = np.where((s == 0.0) & (d > 0.0), GcII - GcI, out)
    out = np.where(zero, 0.0, out)
    return np.clip(out, 0.0, GcII - GcI)


def bulk_mode_dissipation(mat: BulkMaterial, e) -> float:
    """D^eta(e); zero in pure opening, GcII - GcI in pure shear."""
    if not mat.damageable:
        raise ValueError("material has no fracture energies")
    tr, dev2 = split_invariants(e)
    return float(bulk_mode_dissipation_from_invariants(mat, tr, dev2))


def interface_mode_dissipation(law: InterfaceLaw, jump):
    """D^i for a jump given in local (n, s) components, shape (2,) or (..., 2)."""
    w = np.asarray(jump, dtype=float)
    wn = np.maximum(w[..., 0], 0.0)
    ws = w[..., 1]
    ratio = law.GciII / law.GciI
    if np.isinf(ratio):
        k = 1.0
    else:
        k = (2.0 / np.pi) * np.arctan(np.sqrt(ratio - 1.0))
    ang = np.abs(np.arctan2(ws, wn))
    out = law.GciI * np.tan(k * ang) ** 2
    out = np.where(ws == 0.0, 0.0, out)
    # tan^2 of the pure-shear angle equals the ratio minus one analytically
    out = np.where((wn == 0.0) & (ws != 0.0), law.GciII - law.GciI, out)
    out = np.minimum(out, law.GciII - law.GciI)
    return out if out.ndim else float(out)
