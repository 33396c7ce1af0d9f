"""Capillary pressure, mobilities and the pressure transforms for both media.

The default laws are

    P_c(s)      = a * (s**-0.5 - 1)
    lambda_w(s) = s**ew,  lambda_n(s) = (1-s)**en   (ew = en = 2)

which give a total mobility bounded below by L0 = 1/2 and a capillary
entry pressure that diverges at s -> 0+.  Alternative laws can be plugged
in through :class:`LawCurves`.
"""

import numpy as np
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import DomainError

_DEFAULT_TABLE_NODES = 1024


@dataclass(frozen=True)
class LawCurves:
    """Required curve evaluations for a saturation law.

    All callables must accept numpy arrays.  ``pc_inv`` is optional; when
    absent the inverse is computed by bisection.
    """

    pc: Callable
    dpc: Callable
    lam_w: Callable
    lam_n: Callable
    pc_inv: Optional[Callable] = None
    name: str = "custom"


def power_law(a, exp_w=2.0, exp_n=2.0):
    """Default law bundle: pc = a*(s^-1/2 - 1), quadratic Corey mobilities."""
    return LawCurves(
        pc=lambda s: a * (np.asarray(s, dtype=float) ** -0.5 - 1.0),
        dpc=lambda s: -0.5 * a * np.asarray(s, dtype=float) ** -1.5,
        lam_w=lambda s: np.asarray(s, dtype=float) ** exp_w,
        lam_n=lambda s: (1.0 - np.asarray(s, dtype=float)) ** exp_n,
        pc_inv=lambda p: (np.asarray(p, dtype=float) / a + 1.0) ** -2.0,
        name="power",
    )


class RockParams:
    """Per-medium rock data: porosity, permeability and saturation law."""

    def __init__(self, medium, phi, k, a, law=None, exp_w=2.0, exp_n=2.0):
        if medium not in ("fracture", "matrix"):
            raise DomainError(f"medium must be 'fracture' or 'matrix', got {medium!r}")
        if not (0.0 < phi < 1.0):
            raise DomainError(f"porosity must lie in (0,1), got {phi}")
        if k <= 0.0:
            raise DomainError(f"permeability must be positive, got {k}")
        if a <= 0.0:
            raise DomainError(f"capillary coefficient must be positive, got {a}")
        self.medium = medium
        self.phi = float(phi)
        self.k = float(k)
        self.a = float(a)
        self.law = law if law is not None else power_law(self.a, exp_w, exp_n)

    def __repr__(self):
        return f"RockParams({self.medium}, phi={self.phi}, k={self.k}, a={self.a})"

    @cached_property
    def mobility_floor(self):
        """Empirical lower bound L0 of the total mobility on [0,1]."""
        s = np.linspace(0.0, 1.0, 4097)
        lam = self.law.lam_w(s) + self.law.lam_n(s)
        return float(lam.min())

    @cached_property
    def kirchhoff(self):
        return KirchhoffTable.build(self)


@dataclass(frozen=True)
class TwoRockSystem:
    fracture: RockParams
    matrix: RockParams

    def __post_init__(self):
        if self.fracture.medium != "fracture" or self.matrix.medium != "matrix":
            raise DomainError("TwoRockSystem requires a fracture rock and a matrix rock")


class KirchhoffTable:
    """Monotone table of the saturation integral beta on [0,1].

    beta(s) = int_0^s alpha, sampled at Chebyshev-spaced nodes and
    interpolated with a monotone cubic.  The inverse is evaluated by
    bisection with a Newton polish.
    """

    def __init__(self, medium, s_nodes, beta_vals):
        if beta_vals[0] != 0.0:
            raise DomainError("beta table must start at 0")
        # increments near the s = 1 endpoint can round to zero in the
        # cumulative sum (alpha vanishes quadratically there)
        if np.any(np.diff(beta_vals) < 0.0):
            raise DomainError("beta table must be nondecreasing")
        self.medium = medium
        self.s_nodes = s_nodes
        self.beta_vals = beta_vals
        self.theta_star = float(beta_vals[-1])
        self._interp = PchipInterpolator(s_nodes, beta_vals)
        self._dinterp = self._interp.derivative()

    @classmethod
    def build(cls, rock, n_nodes=_DEFAULT_TABLE_NODES):
        i = np.arange(n_nodes)
        s = 0.5 * (1.0 - np.cos(np.pi * i / (n_nodes - 1)))
        s[0], s[-1] = 0.0, 1.0
        # 16-point Gauss-Legendre on each subinterval, accumulated; the
        # Chebyshev clustering keeps the sqrt(s) endpoint behavior harmless.
        gx, gw = np.polynomial.legendre.leggauss(16)
        lo, hi = s[:-1], s[1:]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * gx[None, :]
        vals = alpha(rock, pts.ravel()).reshape(pts.shape)
        increments = half * (vals @ gw)
        beta_vals = np.concatenate(([0.0], np.cumsum(increments)))
        return cls(rock.medium, s, beta_vals)

    def forward(self, s):
        return self._interp(s)

    def dforward(self, s):
        return self._dinterp(s)

    def inverse(self, theta, atol_frac=1e-8, n_bisect=60, n_newton=3):
        theta = np.asarray(theta, dtype=float)
        tol = atol_frac * self.theta_star
        if np.any(theta < -tol) or np.any(theta > self.theta_star + tol):
            raise DomainError("theta outside [0, theta_star]")
        th = np.clip(theta, 0.0, self.theta_star)
        lo = np.zeros_like(th)
        hi = np.ones_like(th)
        for _ in range(n_bisect):
            mid = 0.5 * (lo + hi)
            below = self._interp(mid) < th
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        s = 0.5 * (lo + hi)
        for _ in range(n_newton):
            d = self._dinterp(s)
            step = np.where(d > 0.0, (self._interp(s) - th) / np.where(d > 0, d, 1.0), 0.0)
            s = np.clip(s - step, lo, hi)
        return s if s.ndim else float(s)


def _check_saturation(s, lo_open=False):
    s = np.asarray(s, dtype=float)
    lo_bad = np.any(s <= 0.0) if lo_open else np.any(s < 0.0)
    if lo_bad or np.any(s > 1.0):
        raise DomainError(f"saturation out of range: {s}")
    return s


def pc(rock, s):
    """Capillary pressure P_c(s) on (0,1]; decreasing, P_c(1) = 0."""
    s = _check_saturation(s, lo_open=True)
    return rock.law.pc(s)


def dpc(rock, s):
    s = _check_saturation(s, lo_open=True)
    return rock.law.dpc(s)


def pc_inverse(rock, p):
    """Saturation with capillary pressure p >= 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0):
        raise DomainError(f"capillary pressure must be nonnegative: {p}")
    if rock.law.pc_inv is not None:
        return rock.law.pc_inv(p)
    scalar = p.ndim == 0
    pf = np.atleast_1d(p)
    lo = np.full_like(pf, 1e-14)
    hi = np.ones_like(pf)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        too_low_s = rock.law.pc(mid) > pf  # pc decreasing
        lo = np.where(too_low_s, mid, lo)
        hi = np.where(too_low_s, hi, mid)
    s = 0.5 * (lo + hi)
    return float(s[0]) if scalar else s


def mobilities(rock, s):
    """(lambda_w, lambda_n, lambda_total) at saturation s in [0,1]."""
    s = _check_saturation(s)
    lw = rock.law.lam_w(s)
    ln = rock.law.lam_n(s)
    return lw, ln, lw + ln


def matching_P(system, s):
    """Matrix saturation with the same capillary pressure as fracture s."""
    s = _check_saturation(s)
    scalar = s.ndim == 0
    sf = np.atleast_1d(s).astype(float)
    out = np.empty_like(sf)
    interior = sf > 0.0
    out[~interior] = 0.0
    if np.any(interior):
        out[interior] = np.asarray(
            pc_inverse(system.matrix, system.fracture.law.pc(sf[interior]))
        )
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def matching_P_deriv(system, s):
    """Chain-rule derivative of the saturation matching function."""
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    sf = np.clip(np.atleast_1d(s).astype(float), 1e-12, 1.0)
    sm = np.atleast_1d(matching_P(system, sf))
    sm = np.clip(sm, 1e-12, 1.0)
    d = system.fracture.law.dpc(sf) / system.matrix.law.dpc(sm)
    return float(d[0]) if scalar else d


def alpha(rock, s):
    """Capillary diffusivity lambda_w*lambda_n*|P_c'| / lambda_total.

    At the endpoints the continuous-extension limit is used; the default
    law gives 0 at both ends.
    """
    s = _check_saturation(s)
    scalar = s.ndim == 0
    sa = np.atleast_1d(s).astype(float)
    # evaluate the limit at s=0 by sampling just inside the domain
    sa_eval = np.where(sa == 0.0, 1e-20, sa)
    lw = rock.law.lam_w(sa_eval)
    ln = rock.law.lam_n(sa_eval)
    out = lw * ln * np.abs(rock.law.dpc(sa_eval)) / (lw + ln)
    out = np.where(np.isfinite(out), out, 0.0)
    return float(out[0]) if scalar else out


def beta(rock, s):
    """Complementary pressure beta(s) = int_0^s alpha."""
    s = _check_saturation(s)
    out = rock.kirchhoff.forward(s)
    return float(out) if np.ndim(s) == 0 else out


def dbeta(rock, s):
    s = _check_saturation(s)
    out = rock.kirchhoff.dforward(s)
    return float(out) if np.ndim(s) == 0 else out


def theta_star(rock):
    """beta(1), the upper end of the complementary-pressure range."""
    return rock.kirchhoff.theta_star


def beta_inverse(rock, theta):
    """Saturation with beta(rock, s) = theta, for theta in [0, beta(1)]."""
    return rock.kirchhoff.inverse(theta)


def global_pressure_split(rock, s, p_global):
    """Phase pressures (P_w, P_n) from saturation and global pressure.

    The corrections are fractional-flow weighted integrals of P_c',
    evaluated by adaptive quadrature; by construction P_n - P_w = P_c(s).
    """
    s = float(np.asarray(s, dtype=float))
    if not (0.0 < s <= 1.0):
        raise DomainError(f"saturation out of range: {s}")

    def corr_w(xi):
        lw, ln, lam = mobilities(rock, xi)
        return ln / lam * rock.law.dpc(xi)

    def corr_n(xi):
        lw, ln, lam = mobilities(rock, xi)
        return lw / lam * rock.law.dpc(xi)

    if s == 1.0:
        return float(p_global), float(p_global)
    iw, _ = integrate.quad(corr_w, s, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    i_n, _ = integrate.quad(corr_n, s, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    # P_c' < 0, so iw, i_n <= 0: the wetting pressure sits below the global
    # pressure and the non-wetting pressure above it.
    p_w = p_global + iw
    p_n = p_global - i_n
    return p_w, p_n
