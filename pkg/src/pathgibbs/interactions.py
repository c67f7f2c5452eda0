"""Pair interactions H(t, x) = rho(t) V(x) for Gibbs measures on Brownian paths.

The time correlation ``rho`` and the radial potential ``V`` are small immutable
objects.  Every potential carries a compiled representation ``(code, par, tab)``
that the numba kernels in :mod:`pathgibbs._numeric` understand, so the same
object drives NumPy evaluation, Hamiltonian quadrature and the MCMC sampler.

Admissibility is checked when an :class:`InteractionKernel` is built.  The four
classes are

* ``LongRangeBounded``: rho(t) <= A (1 + |t|)^-theta with theta > 2 (or faster
  decay), V bounded;
* ``CompactSingular``: compactly supported rho, Coulomb-type V = |x|^-p with
  d >= 3 and p < d / 2;
* ``Delta1D``: compactly supported rho, d = 1 and a mollified delta;
* ``MollifierProduct``: rho = psi * psi and V = phi * phi for compactly supported
  mollifiers psi, phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from . import _numeric as nm

LONG_RANGE_BOUNDED = "LongRangeBounded"
COMPACT_SINGULAR = "CompactSingular"
DELTA_1D = "Delta1D"
MOLLIFIER_PRODUCT = "MollifierProduct"
CLASSES = (LONG_RANGE_BOUNDED, COMPACT_SINGULAR, DELTA_1D, MOLLIFIER_PRODUCT)

# integral of exp(-1 / (1 - x^2)) over [-1, 1]
BUMP_MASS_1D = 0.44399381616807937
# sup over r > 0 of r^{3/2} (1/r - 1/sqrt(r^2 + 1)), attained near r = 0.3933
COULOMB_SPLIT_B = 0.39759856843450286

TABLE_NODES = 4096


class RejectedParameters(ValueError):
    """Raised when a parameter set falls outside every admissibility class."""

    def __init__(self, inequality: str, detail: str = ""):
        self.inequality = inequality
        msg = f"violated: {inequality}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def bump(x):
    """Unnormalised C-infinity bump exp(-1/(1-x^2)) on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_radial_mass(d: int) -> float:
    """Integral of exp(-1/(1-|x|^2)) over the unit ball of R^d."""
    if d == 1:
        return BUMP_MASS_1D
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    x, w = np.polynomial.legendre.leggauss(200)
    r = 0.5 * (x + 1.0)
    return float(area * 0.5 * np.sum(w * r ** (d - 1) * bump(r)))


# ---------------------------------------------------------------------------
# time correlations


@dataclass(frozen=True, kw_only=True)
class TimeCorrelation:
    amplitude: float = 1.0

    kind = "abstract"

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return self._profile(t)

    def _profile(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def support(self) -> float:
        return math.inf

    @property
    def compact(self) -> bool:
        return math.isfinite(self.support)

    def breakpoints(self) -> tuple:
        """Nonnegative times where rho or one of its derivatives jumps."""
        return (0.0,)

    def envelope_theta(self) -> float:
        """Largest theta with rho(t) <= amplitude (1+|t|)^-theta (inf for fast decay)."""
        return math.inf

    def integral(self) -> float:
        return self.amplitude * 2.0 * self.support


@dataclass(frozen=True)
class CompactBox(TimeCorrelation):
    half_width: float = 0.5

    kind = "CompactBox"

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def _profile(self, t):
        return np.where(t <= self.half_width, self.amplitude, 0.0)

    @property
    def support(self):
        return self.half_width

    def breakpoints(self):
        return (0.0, self.half_width)


@dataclass(frozen=True)
class PolynomialDecay(TimeCorrelation):
    theta: float = 2.5

    kind = "PolynomialDecay"

    def _profile(self, t):
        return self.amplitude * (1.0 + t) ** (-self.theta)

    def envelope_theta(self):
        return self.theta

    def integral(self):
        if self.theta <= 1:
            return math.inf
        return 2.0 * self.amplitude / (self.theta - 1.0)


@dataclass(frozen=True)
class Exponential(TimeCorrelation):
    rate: float = 1.0

    kind = "Exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def _profile(self, t):
        return self.amplitude * np.exp(-self.rate * t)

    def integral(self):
        return 2.0 * self.amplitude / self.rate


@dataclass(frozen=True, eq=False)
class SelfConvolvedTime(TimeCorrelation):
    """Tabulated even profile rho(t) = amplitude / s * table(|t| / s).

    ``table`` holds values on the nodes ``k * h`` and vanishes beyond the last node.
    ``scale`` implements the parabolic rescaling t -> t / eps^2 with ``scale = eps^2``.
    """

    table: np.ndarray = None
    h: float = 1.0
    scale: float = 1.0
    mass: float = 1.0

    kind = "SelfConvolvedMollifier"

    def _profile(self, t):
        t = np.atleast_1d(t)
        out = nm.lookup_many(t.ravel() / self.scale, self.table, self.h)
        return (self.amplitude / self.scale) * out.reshape(t.shape)

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        out = self._profile(np.abs(arr))
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    @property
    def support(self):
        return (self.table.shape[0] - 1) * self.h * self.scale

    def breakpoints(self):
        return (0.0, self.support)

    def integral(self):
        return self.amplitude * self.mass

    def scaled(self, eps: float) -> "SelfConvolvedTime":
        return SelfConvolvedTime(amplitude=self.amplitude, table=self.table, h=self.h,
                                 scale=self.scale * eps ** 2, mass=self.mass)


# ---------------------------------------------------------------------------
# spatial potentials


@dataclass(frozen=True)
class SpatialPotential:
    d: int = 3

    kind = "abstract"
    code = -1

    def params(self) -> np.ndarray:
        raise NotImplementedError

    def table(self) -> np.ndarray:
        return np.zeros(1)

    def compiled(self):
        return self.code, self.params(), self.table()

    @property
    def sup(self) -> float:
        return self.radial(np.zeros(1))[0]

    @property
    def singular(self) -> bool:
        return not math.isfinite(self.sup)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.ascontiguousarray((r * r).ravel())
        code, par, tab = self.compiled()
        out = nm.v_many(flat, 0, nm.POTENTIALS[code], par, tab, np.zeros(1))
        return out.reshape(r.shape)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise ValueError(f"expected points with last axis {self.d}, got shape {x.shape}")
        return self.radial(np.sqrt(np.sum(x * x, axis=-1)))


@dataclass(frozen=True)
class Bounded(SpatialPotential):
    """Constant (``shape='constant'``) or Gaussian (``shape='gaussian'``) potential."""

    shape: str = "constant"
    height: float = 1.0
    width: float = 1.0

    kind = "Bounded"

    def __post_init__(self):
        if self.shape not in ("constant", "gaussian"):
            raise ValueError(f"unknown bounded shape {self.shape!r}")
        if self.height < 0:
            raise ValueError("height must be nonnegative")

    @property
    def code(self):
        return nm.CONST if self.shape == "constant" else nm.GAUSS

    def params(self):
        return np.array([self.height, self.width], dtype=float)

    @property
    def sup(self):
        return float(self.height)


@dataclass(frozen=True)
class CoulombPower(SpatialPotential):
    """V(x) = (|x|^2 + eta^2)^(-p/2)."""

    p: float = 1.0
    eta: float = 0.0

    kind = "CoulombPower"
    code = nm.COULOMB

    def __post_init__(self):
        if self.p <= 0 or self.eta < 0:
            raise ValueError("need p > 0 and eta >= 0")

    def params(self):
        return np.array([self.p, self.eta], dtype=float)

    @property
    def sup(self):
        return math.inf if self.eta == 0 else float(self.eta ** (-self.p))


@dataclass(frozen=True)
class MollifiedDelta(SpatialPotential):
    """Normalised bump of half-width ``kappa`` on the line."""

    d: int = 1
    kappa: float = 0.1

    kind = "MollifiedDelta"
    code = nm.MOLLDELTA

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.d != 1:
            raise RejectedParameters("d = 1", "mollified delta is one-dimensional")

    def params(self):
        return np.array([self.kappa, 1.0 / BUMP_MASS_1D], dtype=float)


@dataclass(frozen=True, eq=False)
class SelfConvolvedSpace(SpatialPotential):
    """Tabulated radial profile V(x) = amplitude / l^d * table(|x| / l)."""

    tab: np.ndarray = None
    h: float = 1.0
    scale: float = 1.0
    amplitude: float = 1.0

    kind = "SelfConvolvedMollifier"
    code = nm.TABULATED

    def params(self):
        cut = ((self.tab.shape[0] - 1) * self.h * self.scale) ** 2
        return np.array([self.h, self.scale, self.amplitude / self.scale ** self.d, cut], dtype=float)

    def table(self):
        return self.tab

    @property
    def sup(self):
        return float(self.amplitude / self.scale ** self.d * np.max(self.tab))

    @property
    def radius(self):
        return (self.tab.shape[0] - 1) * self.h * self.scale

    def scaled(self, eps: float) -> "SelfConvolvedSpace":
        return SelfConvolvedSpace(self.d, self.tab, self.h, self.scale * eps, self.amplitude)


# ---------------------------------------------------------------------------
# mollifiers and their self-convolutions


@lru_cache(maxsize=16)
def _time_table(half_width: float, nodes: int):
    # psi(t) = bump(t/a) / (a m1); psi*psi on [0, 2a] by the trapezoid rule
    a = half_width
    h = 2.0 * a / nodes
    k = np.arange(-(nodes // 2), nodes // 2 + 1)
    psi = bump(k * h / a) / (a * BUMP_MASS_1D)
    conv = np.convolve(psi, psi) * h
    mid = conv.shape[0] // 2
    tab = conv[mid:mid + nodes + 1].copy()
    tab[-1] = 0.0
    tab.setflags(write=False)
    return tab, h


def _cumulative_g(phi_fn, grid):
    # G(x) = int_0^x u phi(u) du at every grid node, Gauss-Legendre per cell
    x, w = np.polynomial.legendre.leggauss(12)
    lo, hi = grid[:-1], grid[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    u = mid[:, None] + half[:, None] * x[None, :]
    cell = half * np.sum(w * u * phi_fn(u), axis=1)
    return np.concatenate([[0.0], np.cumsum(cell)])


@lru_cache(maxsize=16)
def _space_table(radius: float, d: int, nodes: int):
    R = radius
    h = 2.0 * R / nodes
    r = np.arange(nodes + 1) * h
    norm = 1.0 / (R ** d * bump_radial_mass(d))

    def phi(u):
        return norm * bump(u / R)

    if d == 3:
        half = nodes // 2
        s = r[:half + 1]
        weight = s * phi(s)
        weight[0] *= 0.5  # even integrand, trapezoid from the origin
        g = _cumulative_g(phi, np.arange(2 * nodes + 2) * h)
        tab = np.empty(nodes + 1)
        j = np.arange(half + 1)
        for k in range(1, nodes + 1):
            tab[k] = 2.0 * math.pi / r[k] * h * np.sum(weight * (g[k + j] - g[np.abs(k - j)]))
        tab[0] = 4.0 * math.pi * h * np.sum(s ** 2 * phi(s) ** 2)
    else:
        # angular integral with Gauss-Jacobi weights (1 - c^2)^((d-3)/2)
        area = 2.0 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)
        c, wc = special.roots_jacobi(400, (d - 3) / 2, (d - 3) / 2)
        half = nodes // 2
        s = r[:half + 1]
        ws = np.full(s.shape, h)
        ws[0] *= 0.5
        tab = np.empty(nodes + 1)
        for k in range(nodes + 1):
            dist = np.sqrt(np.maximum(r[k] ** 2 + s[:, None] ** 2 - 2 * r[k] * s[:, None] * c[None, :], 0))
            inner = np.sum(wc * phi(dist), axis=1)
            tab[k] = area * np.sum(ws * s ** (d - 1) * phi(s) * inner)
    tab[-1] = 0.0
    tab = np.maximum(tab, 0.0)
    tab.setflags(write=False)
    return tab, h


def time_mollifier(half_width: float = 0.5):
    """Even bump psi on [-a, a] with unit mass, returned as a callable."""
    a = half_width

    def psi(t):
        return bump(np.asarray(t, dtype=float) / a) / (a * BUMP_MASS_1D)

    return psi


def space_mollifier(radius: float = 1.0, d: int = 3):
    """Radial bump phi on the ball of given radius with unit mass (callable on |x|)."""
    norm = 1.0 / (radius ** d * bump_radial_mass(d))

    def phi(r):
        return norm * bump(np.asarray(r, dtype=float) / radius)

    return phi


def self_convolved_time(half_width: float = 0.5, nodes: int = TABLE_NODES, amplitude: float = 1.0):
    tab, h = _time_table(float(half_width), int(nodes))
    return SelfConvolvedTime(amplitude=amplitude, table=tab, h=h, scale=1.0, mass=1.0)


def self_convolved_space(radius: float = 1.0, d: int = 3, nodes: int = TABLE_NODES,
                         amplitude: float = 1.0):
    tab, h = _space_table(float(radius), int(d), int(nodes))
    return SelfConvolvedSpace(d=d, tab=tab, h=h, scale=1.0, amplitude=amplitude)


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class InteractionKernel:
    """H(t, x) = rho(t) V(x) at coupling ``beta``.

    ``joint='massless'`` replaces the product by 1 / (|x|^2 + (1+|t|)^theta) with
    ``theta = rho.theta``; rho and V then only serve as envelopes.
    """

    rho: TimeCorrelation
    v: SpatialPotential
    beta: float = 1.0
    joint: str | None = None
    check: bool = True
    admissibility_class: str | None = field(default=None, init=False)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.joint not in (None, "massless"):
            raise ValueError(f"unknown joint kernel {self.joint!r}")
        if self.check:
            object.__setattr__(self, "admissibility_class", validate_admissibility(self))

    @property
    def d(self) -> int:
        return self.v.d

    @property
    def time_range(self) -> float:
        return self.rho.support

    def with_beta(self, beta: float) -> "InteractionKernel":
        return InteractionKernel(self.rho, self.v, beta, self.joint, self.check)

    def __call__(self, t, x):
        return eval_h(self, t, x)


def eval_rho(rho: TimeCorrelation, t):
    return rho(t)


def eval_v(v: SpatialPotential, x):
    return v(x)


def eval_h(kernel: InteractionKernel, t, x):
    """Joint kernel value at time lag ``t`` and displacement ``x`` (last axis d)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != kernel.d:
        raise ValueError(f"expected points with last axis {kernel.d}")
    if kernel.joint == "massless":
        r2 = np.sum(x * x, axis=-1)
        return 1.0 / (r2 + (1.0 + np.abs(t)) ** kernel.rho.theta)
    return kernel.rho(t) * kernel.v(x)


def validate_admissibility(kernel: InteractionKernel) -> str:
    rho, v = kernel.rho, kernel.v
    if isinstance(rho, SelfConvolvedTime) and isinstance(v, SelfConvolvedSpace):
        return MOLLIFIER_PRODUCT
    if isinstance(v, MollifiedDelta):
        if not rho.compact:
            raise RejectedParameters("supp rho compact", "delta interaction needs compact rho")
        return DELTA_1D
    if isinstance(v, CoulombPower) and (rho.compact or v.eta == 0):
        if not rho.compact:
            raise RejectedParameters("supp rho compact", "singular V with unbounded rho support")
        if v.d < 3:
            raise RejectedParameters("d >= 3", f"d = {v.d}")
        if not v.p < v.d / 2:
            raise RejectedParameters("p < d/2", f"p = {v.p}, d = {v.d}")
        return COMPACT_SINGULAR
    if not math.isfinite(v.sup):
        raise RejectedParameters("sup V < inf")
    if isinstance(rho, PolynomialDecay) and not rho.theta > 2:
        raise RejectedParameters("theta > 2", f"theta = {rho.theta}")
    return LONG_RANGE_BOUNDED


def coulomb_split(x, eta: float):
    """Split 1/|x| into the regular part (|x|^2+eta^2)^-1/2 and the nonnegative remainder.

    The remainder obeys ``remainder <= COULOMB_SPLIT_B * sqrt(eta) * |x|^-3/2``.
    """
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1)) if x.ndim else abs(float(x))
    if np.any(np.asarray(r) == 0):
        raise ValueError("coulomb_split is undefined at x = 0")
    regular = 1.0 / np.sqrt(r * r + eta * eta)
    # 1/r - 1/sqrt(r^2+eta^2) written without cancellation
    remainder = eta * eta / (r * np.sqrt(r * r + eta * eta) * (r + np.sqrt(r * r + eta * eta)))
    return regular, remainder


# ---------------------------------------------------------------------------
# presets

PRESET_DEFAULTS = {
    "massless_nelson": {"theta": 2.5, "beta": 1.0, "d": 3},
    "polaron": {"omega0": 1.0, "eta": 0.0, "beta": 1.0, "d": 3},
    "poly_bounded": {"theta": 2.5, "height": 1.0, "width": 1.0, "beta": 1.0, "d": 3},
    "compact_coulomb": {"half_width": 0.5, "p": 1.0, "eta": 0.0, "beta": 1.0, "d": 3},
    "delta_1d": {"half_width": 0.5, "kappa": 0.1, "beta": 1.0},
    "mollifier_product": {"time_half_width": 0.5, "radius": 0.4, "beta": 1.0, "d": 3},
}


def preset(name: str, check: bool = True, **params) -> InteractionKernel:
    """Build a named kernel.

    ``mollifier_product`` treats ``beta`` as the noise strength of the heat equation,
    so the kernel coupling is beta^2 / 2.  ``polaron`` with the default ``eta = 0``
    is outside every admissibility class and needs ``check=False``.
    """
    if name not in PRESET_DEFAULTS:
        raise KeyError(f"unknown kernel preset {name!r}")
    unknown = set(params) - set(PRESET_DEFAULTS[name])
    if unknown:
        raise KeyError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    p = {**PRESET_DEFAULTS[name], **params}
    beta = float(p["beta"])
    if name == "massless_nelson":
        return InteractionKernel(PolynomialDecay(theta=float(p["theta"])), Bounded(d=int(p["d"])),
                                 beta, joint="massless", check=check)
    if name == "polaron":
        return InteractionKernel(Exponential(rate=float(p["omega0"])),
                                 CoulombPower(d=int(p["d"]), p=1.0, eta=float(p["eta"])), beta, check=check)
    if name == "poly_bounded":
        return InteractionKernel(PolynomialDecay(theta=float(p["theta"])),
                                 Bounded(d=int(p["d"]), shape="gaussian", height=float(p["height"]),
                                         width=float(p["width"])), beta, check=check)
    if name == "compact_coulomb":
        return InteractionKernel(CompactBox(half_width=float(p["half_width"])),
                                 CoulombPower(d=int(p["d"]), p=float(p["p"]), eta=float(p["eta"])),
                                 beta, check=check)
    if name == "delta_1d":
        return InteractionKernel(CompactBox(half_width=float(p["half_width"])),
                                 MollifiedDelta(kappa=float(p["kappa"])), beta, check=check)
    rho = self_convolved_time(float(p["time_half_width"]))
    v = self_convolved_space(float(p["radius"]), int(p["d"]))
    return InteractionKernel(rho, v, 0.5 * beta ** 2, check=check)
