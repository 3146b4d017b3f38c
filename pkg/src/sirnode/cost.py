"""Running costs of control and the weighted least-squares weight calibration.

Four unit-weight bases are provided::

    c1(u) = -ln(1 - u^2)        |u| < 1
    c2(u) = -u ln(1 - u)        u < 1
    c3(u) = -u - ln(1 - u)      u < 1
    c4(u) = u^2                 any u

The first three blow up as ``u -> 1-``. Each basis is scaled by a weight so
that it is close to ``c3`` in a least-squares sense weighted by
``sqrt(1 - z^2)``; see :func:`calibrate_weight`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CostDomainError, InvalidArgumentError, NumericalError


class CostKind(str, enum.Enum):
    C1 = "c1"
    C2 = "c2"
    C3 = "c3"
    C4 = "c4"

    @property
    def is_barrier(self) -> bool:
        return self is not CostKind.C4


def _c1(u):
    return -np.log1p(-u * u)


def _c1_d1(u):
    return 2.0 * u / (1.0 - u * u)


def _c1_d2(u):
    return 2.0 * (1.0 + u * u) / (1.0 - u * u) ** 2


def _c2(u):
    return -u * np.log1p(-u)


def _c2_d1(u):
    return -np.log1p(-u) + u / (1.0 - u)


def _c2_d2(u):
    return (2.0 - u) / (1.0 - u) ** 2


def _c3(u):
    return -u - np.log1p(-u)


def _c3_d1(u):
    return u / (1.0 - u)


def _c3_d2(u):
    return 1.0 / (1.0 - u) ** 2


def _c4(u):
    return u * u


def _c4_d1(u):
    return 2.0 * u


def _c4_d2(u):
    return np.full_like(u, 2.0)


_BASES = {
    CostKind.C1: (_c1, _c1_d1, _c1_d2),
    CostKind.C2: (_c2, _c2_d1, _c2_d2),
    CostKind.C3: (_c3, _c3_d1, _c3_d2),
    CostKind.C4: (_c4, _c4_d1, _c4_d2),
}

#: reference weights, rounded to six decimals
REFERENCE_WEIGHTS = {
    CostKind.C1: 0.830071,
    CostKind.C2: 0.672850,
    CostKind.C3: 1.0,
    CostKind.C4: 1.424546,
}


def base_cost(kind) -> Callable:
    """Unit-weight cost function for ``kind``."""
    return _BASES[CostKind(kind)][0]


def in_domain(kind, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    kind = CostKind(kind)
    if kind is CostKind.C1:
        return np.abs(u) < 1.0
    if kind is CostKind.C4:
        return np.isfinite(u)
    return u < 1.0


@dataclass(frozen=True)
class CostSpec:
    """A cost basis with its calibration weight and regularization ``lam``."""

    kind: CostKind
    lam: float
    weight: float = None

    def __post_init__(self):
        kind = CostKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.weight is None:
            object.__setattr__(self, "weight", REFERENCE_WEIGHTS[kind])
        if not (np.isfinite(self.weight) and self.weight > 0):
            raise InvalidArgumentError(f"weight must be positive, got {self.weight!r}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam!r}")

    @classmethod
    def calibrated(cls, kind, lam: float) -> "CostSpec":
        """Weight computed by :func:`calibrate_weight` instead of the table value."""
        kind = CostKind(kind)
        if kind is CostKind.C3:
            return cls(kind, lam, 1.0)
        return cls(kind, lam, calibrate_weight(base_cost(kind)))

    def _apply(self, which, u, times=None):
        arr = np.asarray(u, dtype=float)
        ok = in_domain(self.kind, arr)
        if not np.all(ok):
            bad = np.flatnonzero(~np.atleast_1d(ok))[0]
            t = None if times is None else np.atleast_1d(times)[bad]
            raise CostDomainError(np.atleast_1d(arr)[bad], t, self.kind.value)
        out = self.weight * _BASES[self.kind][which](arr)
        return float(out) if np.ndim(u) == 0 else out

    def value(self, u, times=None):
        return self._apply(0, u, times)

    def d1(self, u, times=None):
        return self._apply(1, u, times)

    def d2(self, u, times=None):
        return self._apply(2, u, times)


def cost(spec: CostSpec, u, times=None):
    """``weight * base(u)``; raises :class:`CostDomainError` outside the domain."""
    return spec.value(u, times)


def cost_d1(spec: CostSpec, u, times=None):
    return spec.d1(u, times)


def cost_d2(spec: CostSpec, u, times=None):
    return spec.d2(u, times)


def weighted_integral(g: Callable, order: int = 24, depth: int = 20) -> float:
    """``int_0^1 sqrt(1 - z^2) g(z) dz`` for ``g`` with a log singularity at 1.

    With ``z = cos(psi)`` the integrand becomes ``sin(psi)^2 g(cos(psi))`` on
    ``[0, pi/2]``, smooth except for an integrable log factor at ``psi = 0``.
    Gauss-Legendre panels are refined geometrically toward ``psi = 0``; the
    neglected piece ``[0, 2^-depth pi/2]`` is ``O(eps^3 log(eps)^2)``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = (np.pi / 2) * 0.5 ** np.arange(depth + 1)
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for hi, lo in zip(edges[:-1], edges[1:]):
            psi = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            vals = np.sin(psi) ** 2 * g(np.cos(psi))
            if not np.all(np.isfinite(vals)):
                raise NumericalError("non-finite integrand in weighted quadrature")
            total += 0.5 * (hi - lo) * np.dot(w, vals)
    return float(total)


def calibrate_weight(
    base: Callable,
    reference: Callable = _c3,
    method: str = "grid",
    points: int = 100,
    upper: float = 0.99,
    tol: float = 1e-7,
) -> float:
    """Least-squares weight ``a`` minimizing ``sum w |a base - reference|^2``.

    The minimizer is ``<base, ref>_w / <base, base>_w`` with weight
    ``w(z) = sqrt(1 - z^2)``. ``method="grid"`` (default) takes the inner
    products as equal-weight sums over ``points`` uniform nodes on
    ``[0, upper]``; this reproduces the reference six-digit weights.
    ``method="quadrature"`` integrates over the whole of ``[0, 1)`` instead.
    """
    if method == "grid":
        z = np.linspace(0.0, upper, points)
        w = np.sqrt(1.0 - z * z)
        b = base(z)
        den = float(np.sum(w * b * b))
        if den <= 0:
            raise NumericalError("base cost has zero weighted norm")
        return float(np.sum(w * b * reference(z))) / den
    if method != "quadrature":
        raise InvalidArgumentError(f"unknown calibration method {method!r}")

    def ratio(order, depth):
        num = weighted_integral(lambda z: base(z) * reference(z), order, depth)
        den = weighted_integral(lambda z: base(z) ** 2, order, depth)
        if den <= 0:
            raise NumericalError("base cost has zero weighted norm")
        return num / den

    coarse = ratio(16, 16)
    fine = ratio(24, 24)
    if abs(fine - coarse) > tol:
        raise NumericalError(f"weight quadrature did not converge ({coarse!r} vs {fine!r})")
    return fine
