"""Closed-form results for free wavepackets under Poisson localization noise.

The localization events add three corrections to the free-particle moment
set, all proportional to alpha * lambda * hbar**2:

    <q^2>  gains  alpha*lam*hbar^2 * t^3 / (6 m^2)
    <p^2>  gains  alpha*lam*hbar^2 * t   / 2
    <qp>s  gains  alpha*lam*hbar^2 * t^2 / (4 m)

while the first moments are untouched.  Feeding those into the free-spread
law gives the width formula with its classical, quantum and collapse terms,
and the ratio of the collapse to the quantum term defines the
collapse-to-quantum ratio used by the parameter scanner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import (CollapseParams, FormulaDomainError, NumericalCheckError,
                   WavepacketParams, effective_rate)

_VARIANCE_SLACK = 1e-9  # relative tolerance for statistical variance checks


@dataclass(frozen=True)
class MomentSet:
    """First and second moments of position/momentum at one time."""

    mean_q: float
    mean_q2: float
    mean_p: float
    mean_p2: float
    mean_qp_sym: float   # symmetrized <(qp + pq)/2>
    time: float

    def __post_init__(self):
        scale_q = max(abs(self.mean_q2), self.mean_q * self.mean_q, 1e-300)
        if self.var_q < -_VARIANCE_SLACK * scale_q:
            raise ValueError("position variance is negative")
        scale_p = max(abs(self.mean_p2), self.mean_p * self.mean_p, 1e-300)
        if self.var_p < -_VARIANCE_SLACK * scale_p:
            raise ValueError("momentum variance is negative")

    @property
    def var_q(self) -> float:
        return self.mean_q2 - self.mean_q * self.mean_q

    @property
    def var_p(self) -> float:
        return self.mean_p2 - self.mean_p * self.mean_p

    @property
    def cov_qp(self) -> float:
        return self.mean_qp_sym - self.mean_q * self.mean_p


def schrodinger_moments(wp: WavepacketParams, t: float,
                        hbar: float = 1.0) -> MomentSet:
    """Moment set of a freely evolving minimum-uncertainty Gaussian packet."""
    if t < 0:
        raise ValueError("t must be >= 0")
    m = wp.mass
    var_q0 = wp.dq0 * wp.dq0
    var_p = hbar * hbar / (4.0 * var_q0)      # constant for free motion
    mean_q = wp.q0 + wp.p0 * t / m
    cov = var_p * t / m                        # zero initial correlation
    var_q = var_q0 + var_p * t * t / (m * m)
    return MomentSet(mean_q=mean_q,
                     mean_q2=var_q + mean_q * mean_q,
                     mean_p=wp.p0,
                     mean_p2=var_p + wp.p0 * wp.p0,
                     mean_qp_sym=cov + mean_q * wp.p0,
                     time=t)


def grw_moments(wp: WavepacketParams, cp: CollapseParams,
                schrodinger: MomentSet, t: float | None = None,
                hbar: float = 1.0) -> MomentSet:
    """Add the localization-noise corrections to a standard moment set.

    ``schrodinger`` must hold the no-collapse values at time ``t``; the
    corrections are purely additive and leave the first moments unchanged.
    """
    if t is None:
        t = schrodinger.time
    if t < 0:
        raise ValueError("t must be >= 0")
    if not math.isclose(t, schrodinger.time, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(
            f"moment set is for t={schrodinger.time!r}, requested t={t!r}")
    lam = effective_rate(wp, cp)
    base = cp.alpha() * lam * hbar * hbar
    m = wp.mass
    return MomentSet(
        mean_q=schrodinger.mean_q,
        mean_q2=schrodinger.mean_q2 + base * t ** 3 / (6.0 * m * m),
        mean_p=schrodinger.mean_p,
        mean_p2=schrodinger.mean_p2 + base * t / 2.0,
        mean_qp_sym=schrodinger.mean_qp_sym + base * t * t / (4.0 * m),
        time=t)


@dataclass(frozen=True)
class SpreadTerms:
    """Contributions under the square root of the width formula, in m^2."""

    initial: float
    correlation: float
    quantum: float
    collapse: float

    def total(self) -> float:
        return self.initial + self.correlation + self.quantum + self.collapse


@dataclass(frozen=True)
class SpreadSample:
    time: float
    width: float
    terms: SpreadTerms


@dataclass(frozen=True)
class SpreadCurve:
    """Width-versus-time table with the per-term breakdown columns."""

    times: np.ndarray
    widths: np.ndarray
    initial: np.ndarray
    correlation: np.ndarray
    quantum: np.ndarray
    collapse: np.ndarray


def _spread_terms(wp: WavepacketParams, t: float, lam_alpha_h2: float,
                  initial_correlation: float, gaussian: bool,
                  dp0: float | None, hbar: float) -> SpreadTerms:
    m = wp.mass
    if gaussian:
        corr = 0.0
        dp0_val = hbar / (2.0 * wp.dq0)
    else:
        # correlation input is the symmetrized covariance <qp> - <q><p>;
        # the variance growth rate is 2*cov/m.
        corr = 2.0 * initial_correlation * t / m
        dp0_val = dp0 if dp0 is not None else hbar / (2.0 * wp.dq0)
    quantum = (dp0_val * t / m) ** 2
    collapse = lam_alpha_h2 * t ** 3 / (6.0 * m * m)
    return SpreadTerms(initial=wp.dq0 * wp.dq0, correlation=corr,
                       quantum=quantum, collapse=collapse)


def schrodinger_width(wp: WavepacketParams, t: float, *,
                      initial_correlation: float = 0.0,
                      gaussian: bool = True, dp0: float | None = None,
                      hbar: float = 1.0) -> float:
    """Free-spreading width sqrt(dq0^2 + (2 cov0/m) t + (dp0 t/m)^2).

    The default Gaussian mode zeroes the correlation term and saturates the
    uncertainty relation (dp0 = hbar / 2 dq0); the non-Gaussian entry point
    accepts a real user-supplied covariance and momentum spread.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    terms = _spread_terms(wp, t, 0.0, initial_correlation, gaussian, dp0, hbar)
    radicand = terms.total()
    if radicand < 0:
        raise FormulaDomainError(
            f"width radicand is negative ({radicand:.3e}); the correlation "
            f"term {terms.correlation:.3e} overwhelms the positive terms")
    return math.sqrt(radicand)


def grw_width(wp: WavepacketParams, cp: CollapseParams, t: float, *,
              initial_correlation: float = 0.0, gaussian: bool = True,
              dp0: float | None = None, hbar: float = 1.0) -> SpreadSample:
    """Width including the cubic collapse term, with per-term breakdown.

    Gaussian mode evaluates
    sqrt(dq0^2 + hbar^2 t^2/(4 m^2 dq0^2) + alpha lam hbar^2 t^3/(6 m^2)).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lam_alpha_h2 = cp.alpha() * effective_rate(wp, cp) * hbar * hbar
    terms = _spread_terms(wp, t, lam_alpha_h2, initial_correlation, gaussian,
                          dp0, hbar)
    radicand = terms.total()
    if radicand < 0:
        raise FormulaDomainError(
            f"width radicand is negative ({radicand:.3e}); the correlation "
            f"term {terms.correlation:.3e} overwhelms the positive terms")
    return SpreadSample(time=t, width=math.sqrt(radicand), terms=terms)


def spread_curve(wp: WavepacketParams, cp: CollapseParams,
                 times: np.ndarray, *, initial_correlation: float = 0.0,
                 gaussian: bool = True, dp0: float | None = None,
                 hbar: float = 1.0) -> SpreadCurve:
    """Tabulate grw_width over an ascending time grid."""
    times = np.asarray(times, dtype=float)
    samples = [grw_width(wp, cp, float(t), initial_correlation=initial_correlation,
                         gaussian=gaussian, dp0=dp0, hbar=hbar) for t in times]
    return SpreadCurve(
        times=times,
        widths=np.array([s.width for s in samples]),
        initial=np.array([s.terms.initial for s in samples]),
        correlation=np.array([s.terms.correlation for s in samples]),
        quantum=np.array([s.terms.quantum for s in samples]),
        collapse=np.array([s.terms.collapse for s in samples]))


# --- ensemble reduction factor ---------------------------------------------

def _kernel_time_integral_erf(alpha: float, k: float, q: float, t: float,
                              mass: float) -> float:
    """Closed form of int_0^t exp(-(alpha/4)(q - k tau/m)^2) d tau."""
    if k == 0.0:
        return t * math.exp(-0.25 * alpha * q * q)
    root = math.sqrt(alpha) / 2.0
    u0 = root * q
    u1 = root * (q - k * t / mass)
    # Same-sign arguments cancel in the erf difference (both values near
    # +-1); the erfc form keeps full relative precision there.  Opposite
    # signs add constructively and the plain difference is fine.
    if u0 >= 0.0 and u1 >= 0.0:
        diff = special.erfc(u1) - special.erfc(u0)
    elif u0 <= 0.0 and u1 <= 0.0:
        diff = special.erfc(-u0) - special.erfc(-u1)
    else:
        diff = special.erf(u0) - special.erf(u1)
    return (mass / k) * (math.sqrt(math.pi) / (2.0 * root)) * diff


def _kernel_time_integral_quad(alpha: float, k: float, q: float, t: float,
                               mass: float) -> tuple[float, float]:
    """Adaptive-quadrature evaluation of the same integral; returns
    (value, reported absolute error)."""
    def integrand(tau: float) -> float:
        d = q - k * tau / mass
        return math.exp(-0.25 * alpha * d * d)

    points = None
    if k != 0.0:
        # integrand is a Gaussian bump centered at tau_star with width w
        tau_star = q * mass / k
        w = (mass / abs(k)) * math.sqrt(2.0 / alpha)
        candidates = [tau_star + s * w for s in (-4.0, -1.0, 0.0, 1.0, 4.0)]
        points = sorted(p for p in candidates if 0.0 < p < t) or None
    value, err = integrate.quad(integrand, 0.0, t, epsabs=1e-15,
                                epsrel=1e-13, limit=400, points=points)
    return value, err


def reduction_factor(cp: CollapseParams, k: float, q: float, t: float,
                     mass: float, *, rtol: float = 1e-10) -> float:
    """Ensemble suppression factor exp(-lam*t*(1 - time-avg of kernel)).

    The inner time average of exp(-(alpha/4)(q - k tau/m)^2) is evaluated
    both in closed form (error function) and by adaptive quadrature; the two
    must agree to ``rtol`` or a NumericalCheckError is raised.  Lies in
    (0, 1]; equals 1 exactly at t = 0 and for lam = 0.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0 or cp.lam == 0.0:
        return 1.0
    alpha = cp.alpha()
    exact = _kernel_time_integral_erf(alpha, k, q, t, mass)
    quad_val, quad_err = _kernel_time_integral_quad(alpha, k, q, t, mass)
    scale = max(abs(exact), abs(quad_val))
    # Absolute floor: below quadrature's epsabs both routes just report ~0.
    disagreement = abs(exact - quad_val)
    if disagreement > rtol * scale + 1e-13 * t:
        raise NumericalCheckError(
            "kernel time-integral cross-check failed: closed form "
            f"{exact!r} vs quadrature {quad_val!r}",
            achieved=disagreement / scale if scale > 0 else math.inf)
    avg = min(exact / t, 1.0)   # roundoff can push the average past 1
    return math.exp(-cp.lam * t * (1.0 - avg))


# --- collapse-to-quantum ratio and coexistence curve ------------------------

def collapse_quantum_ratio(wp: WavepacketParams, cp: CollapseParams,
                           t: float) -> float:
    """Ratio of the collapse spreading term to the quantum spreading term.

    Equals (2 lam dq0^2 / 3 r_c^2) t, linear in both t and lam; hbar cancels.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = effective_rate(wp, cp)
    return 2.0 * lam * wp.dq0 * wp.dq0 * t / (3.0 * cp.r_c * cp.r_c)


def coexistence_rate(r_c: float, dq0_sq: float, t: float) -> float:
    """Collapse rate putting the ratio at exactly 1: 3 r_c^2 / (2 dq0^2 t)."""
    if not (r_c > 0 and dq0_sq > 0 and t > 0):
        raise ValueError("r_c, dq0_sq and t must all be positive")
    return 3.0 * r_c * r_c / (2.0 * dq0_sq * t)
