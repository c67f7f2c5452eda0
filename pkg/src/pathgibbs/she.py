"""Annealed Feynman-Kac computations for the mollified stochastic heat equation.

With space-time white noise smeared by chi_eps(t, x) = psi_eps(t) phi_eps(x),
the noise average of the Feynman-Kac weight is Gaussian,

    E exp{beta eps^{(d-2)/2} M_eps(W)} = exp{beta^2/2 eps^{d-2} int int
                                          (psi_eps*psi_eps)(r - s) (phi_eps*phi_eps)(W_r - W_s)},

and Brownian scaling maps the right side to the unit-scale kernel on the horizon
t / eps^2.  The noise is therefore integrated out analytically; it is only
simulated on a lattice as an oracle for that identity.

Time mollifiers are normalised on the whole line, so int psi*psi = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import transfer
from .gibbs_mcmc import (MIN_EFFECTIVE_SAMPLES, GibbsConfig, McmcSettings, batch_means_se,
                         collect_endpoints)
from .interactions import (TABLE_NODES, InteractionKernel, SelfConvolvedSpace, SelfConvolvedTime,
                           self_convolved_space, self_convolved_time, space_mollifier, time_mollifier)
from .paths import DiscretePath, PathGrid, diffusive_rescale, hamiltonian, sample_increments, seed_stream


class InsufficientSamples(RuntimeError):
    """The effective sample size of an estimate fell below the floor."""


# ---------------------------------------------------------------------------
# mollifiers


@dataclass(frozen=True, eq=False)
class MollifierPair:
    """Bump mollifiers psi on [-a, a] and phi on the ball of radius R in R^d."""

    time_half_width: float = 0.5
    radius: float = 0.4
    d: int = 3
    nodes: int = TABLE_NODES

    def __post_init__(self):
        if not (self.time_half_width > 0 and self.radius > 0):
            raise ValueError("mollifier widths must be positive")
        if self.d < 1:
            raise ValueError("dimension must be positive")

    def psi(self, t):
        return time_mollifier(self.time_half_width)(t)

    def phi(self, r):
        """phi as a function of |x|."""
        return space_mollifier(self.radius, self.d)(r)

    @property
    def rho(self) -> SelfConvolvedTime:
        return self_convolved_time(self.time_half_width, self.nodes)

    @property
    def v(self) -> SelfConvolvedSpace:
        return self_convolved_space(self.radius, self.d, self.nodes)

    def psi_mass(self) -> float:
        a = self.time_half_width
        x, w = np.polynomial.legendre.leggauss(400)
        return float(a * np.sum(w * self.psi(a * x)))

    def phi_mass(self) -> float:
        area = 2.0 * math.pi ** (self.d / 2) / math.gamma(self.d / 2)
        x, w = np.polynomial.legendre.leggauss(400)
        r = 0.5 * self.radius * (x + 1.0)
        return float(area * 0.5 * self.radius * np.sum(w * r ** (self.d - 1) * self.phi(r)))

    def phi_square_integral(self) -> float:
        """int phi^2 by radial Gauss-Legendre, i.e. (phi*phi)(0) computed directly."""
        area = 2.0 * math.pi ** (self.d / 2) / math.gamma(self.d / 2)
        x, w = np.polynomial.legendre.leggauss(400)
        r = 0.5 * self.radius * (x + 1.0)
        return float(area * 0.5 * self.radius * np.sum(w * r ** (self.d - 1) * self.phi(r) ** 2))

    def validate(self, tol: float = 1e-9) -> None:
        for name, value in (("psi", self.psi_mass()), ("phi", self.phi_mass())):
            if abs(value - 1.0) > tol:
                raise ValueError(f"{name} has mass {value!r}, expected 1")


def effective_kernel(pair: MollifierPair, beta: float) -> InteractionKernel:
    """rho = psi*psi, V = phi*phi with coupling beta^2 / 2 (beta is the noise strength)."""
    return InteractionKernel(pair.rho, pair.v, 0.5 * beta * beta)


# ---------------------------------------------------------------------------
# Gaussian identity


_GL = {n: np.polynomial.legendre.leggauss(n) for n in (24, 48, 96)}


def _gl_nodes(breaks, n=48, sub=4):
    """Composite Gauss-Legendre nodes and weights on sorted break points."""
    x, w = _GL[n]
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        edges = np.linspace(lo, hi, sub + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (a + b) + 0.5 * (b - a) * x)
            ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def cell_profile(s, dt: float, psi, half_width: float) -> np.ndarray:
    """Psi(s) = int_0^dt psi(r - s) dr for mollifier ``psi`` supported in [-h, h]."""
    s = np.asarray(s, dtype=float)
    x, w = _GL[48]
    lo = np.clip(s - half_width, 0.0, dt)
    hi = np.clip(s + half_width, 0.0, dt)
    r = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
    return 0.5 * (hi - lo) * np.sum(w * psi(r - s[:, None]), axis=1)


def time_overlaps(pair: MollifierPair, eps: float, dt: float, n_lags: int) -> np.ndarray:
    """T(m) = int Psi_0(s) Psi_m(s) ds: the psi_eps*psi_eps mass of a cell pair at lag m."""
    h = pair.time_half_width * eps * eps

    def psi(t):
        return pair.psi(t / (eps * eps)) / (eps * eps)

    out = np.zeros(n_lags)
    for m in range(n_lags):
        lo, hi = m * dt - h, dt + h
        if hi <= lo:
            break
        pts = {lo, hi}
        for c in (-h, h, dt - h, dt + h):
            for q in (c, c + m * dt):
                if lo < q < hi:
                    pts.add(q)
        s, ws = _gl_nodes(sorted(pts))
        out[m] = np.sum(ws * cell_profile(s, dt, psi, h) * cell_profile(s - m * dt, dt, psi, h))
    return out


def space_overlap(r, pair: MollifierPair, eps: float = 1.0, n: int = 48) -> np.ndarray:
    """(phi_eps*phi_eps)(z) for |z| = r by Gauss-Legendre in cylindrical coordinates.

    With u along z and rho orthogonal to it the integrand is
    |S^{d-2}| rho^{d-2} phi(|(u, rho)|) phi(|(u - r, rho)|).
    """
    d = pair.d
    if d < 2:
        raise ValueError("cylindrical quadrature needs d >= 2")
    R = pair.radius
    r = np.atleast_1d(np.asarray(r, dtype=float)) / eps
    area = 2.0 * math.pi ** ((d - 1) / 2) / math.gamma((d - 1) / 2)
    x, w = _GL[n]
    out = np.zeros(r.shape)
    for i, ri in enumerate(r):
        if ri >= 2 * R:
            continue
        total = 0.0
        for lo, hi in ((ri - R, 0.5 * ri), (0.5 * ri, R)):
            u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            top = np.sqrt(np.maximum(R * R - np.maximum(u * u, (u - ri) ** 2), 0.0))
            rho = 0.5 * top[:, None] * (x[None, :] + 1.0)
            f = rho ** (d - 2) * pair.phi(np.hypot(u[:, None], rho)) * pair.phi(np.hypot(u[:, None] - ri, rho))
            inner = 0.5 * top * np.sum(w * f, axis=1)
            total += 0.5 * (hi - lo) * np.sum(w * inner)
        out[i] = area * total
    return out / eps ** d


def conditional_variance(path: DiscretePath, pair: MollifierPair, eps: float) -> float:
    """Var(M_eps(W) | W) for the cell-midpoint path by direct overlap quadrature."""
    g = path.grid
    reach = 2.0 * pair.time_half_width * eps * eps
    n_lags = min(g.n_steps, int(math.floor(reach / g.dt)) + 2)
    tm = time_overlaps(pair, eps, g.dt, n_lags)
    wbar = path.midpoints
    total = 0.0
    for m in range(n_lags):
        if tm[m] == 0.0:
            continue
        dist = np.linalg.norm(wbar[m:] - wbar[: g.n_steps - m], axis=1)
        s = np.sum(space_overlap(dist, pair, eps))
        total += tm[m] * s * (1.0 if m == 0 else 2.0)
    return float(total)


@dataclass
class IdentityCheck:
    eps: float
    lhs: float
    middle: float
    rhs: float
    discrepancy: float


def gaussian_identity_check(path: DiscretePath, pair: MollifierPair, beta: float, eps: float) -> IdentityCheck:
    """Compare the three members of the Gaussian identity on a frozen path.

    lhs: exp of half the conditional variance of beta eps^{(d-2)/2} M, by overlap quadrature;
    middle: the eps-scale kernel on the original path;
    rhs: the unit kernel on the Brownian rescaling of the path to horizon t / eps^2.
    """
    if path.grid.d != pair.d:
        raise ValueError("path and mollifier dimensions differ")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    d = pair.d
    if beta == 0:
        return IdentityCheck(eps, 1.0, 1.0, 1.0, 0.0)
    var = conditional_variance(path, pair, eps)
    lhs = math.exp(0.5 * beta * beta * eps ** (d - 2) * var)
    k_eps = InteractionKernel(pair.rho.scaled(eps), pair.v.scaled(eps), 0.5 * beta * beta)
    middle = math.exp(k_eps.beta * eps ** (d - 2) * hamiltonian(path, k_eps))
    k1 = effective_kernel(pair, beta)
    rhs = math.exp(k1.beta * hamiltonian(diffusive_rescale(path, 1.0 / eps), k1))
    disc = max(abs(lhs - rhs), abs(middle - rhs), abs(lhs - middle)) / rhs
    return IdentityCheck(eps, lhs, middle, rhs, disc)


@dataclass
class NoiseOracle:
    mean: float
    stderr: float
    exact: float
    lattice_variance: float
    variance: float
    draws: int

    @property
    def z_score(self) -> float:
        return (self.mean - self.exact) / self.stderr


def noise_oracle(path: DiscretePath, pair: MollifierPair, beta: float, eps: float = 1.0,
                 draws: int = 100_000, seed: int = 0, lattice: tuple = (4, 4),
                 chunk: int = 2000) -> NoiseOracle:
    """Monte Carlo of E exp{beta eps^{(d-2)/2} M} with white noise simulated on a lattice.

    ``lattice = (nt, nx)`` gives the number of cells per mollifier half width in time
    and space.  M is the lattice sum of the smeared path kernel against iid N(0, cell volume)
    noise; ``exact`` is the Gaussian closed form from the continuum variance.
    """
    g = path.grid
    d = pair.d
    ht = pair.time_half_width * eps * eps
    R = pair.radius * eps
    dt_s = ht / lattice[0]
    dx = R / lattice[1]

    def psi(t):
        return pair.psi(t / (eps * eps)) / (eps * eps)

    ts = np.arange(-ht + 0.5 * dt_s, g.horizon + ht, dt_s)
    wbar = path.midpoints
    lo = wbar.min(axis=0) - R
    hi = wbar.max(axis=0) + R
    axes = [np.arange(lo[c] + 0.5 * dx, hi[c], dx) for c in range(d)]
    ys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    # K(s, y) = sum_a Psi_a(s) phi_eps(Wbar_a - y)
    prof = np.stack([cell_profile(ts - a * g.dt, g.dt, psi, ht) for a in range(g.n_steps)])
    sp = np.stack([pair.phi(np.linalg.norm(ys - wbar[a], axis=1) / eps) / eps ** d
                   for a in range(g.n_steps)])
    K = (prof.T @ sp).ravel() * math.sqrt(dt_s * dx ** d)
    K = K[K != 0.0]
    scale = beta * eps ** ((d - 2) / 2)
    rng = seed_stream(seed, 11)
    total = 0.0
    total2 = 0.0
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        m = rng.standard_normal((b, K.shape[0])) @ K
        e = np.exp(scale * m)
        total += e.sum()
        total2 += (e * e).sum()
        done += b
    mean = total / draws
    var = max(total2 / draws - mean * mean, 0.0)
    cont = conditional_variance(path, pair, eps)
    return NoiseOracle(float(mean), math.sqrt(var / draws), math.exp(0.5 * scale ** 2 * cont),
                       float(K @ K), cont, draws)


# ---------------------------------------------------------------------------
# initial conditions and the homogenized solution

U0_KINDS = ("constant", "cosine", "gaussian", "quadratic")


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """u0 from a closed-form family, centred at ``center``.

    constant: A; cosine: A cos(k.(y - c)); gaussian: A exp(-|y - c|^2 / (2 w^2));
    quadratic: A min(|y - c|^2, cutoff).
    """

    kind: str = "cosine"
    d: int = 3
    amplitude: float = 1.0
    wavevector: tuple = None
    center: tuple = None
    width: float = 1.0
    cutoff: float = 4.0

    def __post_init__(self):
        if self.kind not in U0_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        k = np.zeros(self.d) if self.wavevector is None else np.asarray(self.wavevector, float)
        if self.wavevector is None and self.d:
            k[0] = 1.0
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, float)
        if k.shape != (self.d,) or c.shape != (self.d,):
            raise ValueError("wavevector and center must have length d")
        object.__setattr__(self, "wavevector", tuple(float(v) for v in k))
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float) - np.asarray(self.center)
        if self.kind == "constant":
            return np.full(y.shape[:-1], self.amplitude)
        if self.kind == "cosine":
            return self.amplitude * np.cos(y @ np.asarray(self.wavevector))
        r2 = np.sum(y * y, axis=-1)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * r2 / self.width ** 2)
        return self.amplitude * np.minimum(r2, self.cutoff)

    def shifted(self, shift) -> "InitialCondition":
        c = np.asarray(self.center) + np.asarray(shift, float)
        return InitialCondition(self.kind, self.d, self.amplitude, self.wavevector, tuple(c),
                                self.width, self.cutoff)

    def heat(self, t: float, x, diffusivity: float = 1.0) -> float:
        """Closed form of E u0(x + sqrt(diffusivity t) Z) (quadratic only without cutoff)."""
        s2 = diffusivity * t
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "cosine":
            k = np.asarray(self.wavevector)
            return float(self.amplitude * math.exp(-0.5 * s2 * (k @ k)) * math.cos(k @ y))
        if self.kind == "gaussian":
            w2 = self.width ** 2
            return float(self.amplitude * (w2 / (w2 + s2)) ** (self.d / 2)
                         * math.exp(-0.5 * (y @ y) / (w2 + s2)))
        if math.isfinite(self.cutoff):
            raise ValueError("no closed form for the truncated quadratic")
        return float(self.amplitude * (y @ y + self.d * s2))


def homogenized_reference(t: float, x, u0: InitialCondition, sigma2: float, nodes: int = 40) -> float:
    """u-bar(t, x) = E u0(x + sqrt(sigma2 t) Z) by tensor Gauss-Hermite quadrature."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    z, w = special.roots_hermitenorm(nodes)
    w = w / w.sum()
    grids = np.meshgrid(*([z] * d), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, d)
    wt = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wt = wt * g.ravel()
    vals = u0(x + math.sqrt(sigma2 * t) * pts)
    return float(np.sum(wt * vals))


# ---------------------------------------------------------------------------
# annealed estimator


@dataclass(frozen=True, eq=False)
class SheConfig:
    beta: float = 1.0
    t: float = 1.0
    x: tuple = None
    eps: float = 0.5
    u0: InitialCondition = None
    d: int = 3
    dt: float = 1 / 16
    samples: int = 10_000
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    pair: MollifierPair = None
    seed: int = 0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the heat-equation setting needs d >= 3")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.beta < 0 or not self.t > 0:
            raise ValueError("need beta >= 0 and t > 0")
        x = np.zeros(self.d) if self.x is None else np.asarray(self.x, float)
        if x.shape != (self.d,):
            raise ValueError("x must have length d")
        object.__setattr__(self, "x", tuple(float(v) for v in x))
        if self.u0 is None:
            object.__setattr__(self, "u0", InitialCondition("cosine", self.d))
        if self.pair is None:
            object.__setattr__(self, "pair", MollifierPair(d=self.d))
        if self.u0.d != self.d or self.pair.d != self.d:
            raise ValueError("dimension mismatch between config, u0 and mollifiers")
        PathGrid(self.horizon, self.dt, self.d)

    @property
    def horizon(self) -> float:
        return self.t / self.eps ** 2

    @property
    def kernel(self) -> InteractionKernel:
        return effective_kernel(self.pair, self.beta)

    def gibbs(self) -> GibbsConfig:
        m = self.mcmc
        thin = m.thin
        sweeps = m.burn_in + self.samples * thin // m.chains
        settings = McmcSettings(block_length=min(m.block_length, int(round(self.horizon / self.dt))),
                                proposals_per_sweep=m.proposals_per_sweep, sweeps=sweeps,
                                burn_in=m.burn_in, thin=thin, free_fraction=m.free_fraction,
                                chains=m.chains, init=m.init)
        return GibbsConfig(self.kernel, PathGrid(self.horizon, self.dt, self.d), settings, self.seed)

    def replace(self, **changes) -> "SheConfig":
        fields = {k: getattr(self, k) for k in ("beta", "t", "x", "eps", "u0", "d", "dt", "samples",
                                                 "mcmc", "pair", "seed")}
        fields.update(changes)
        return SheConfig(**fields)


@dataclass
class RatioEstimate:
    value: float
    stderr: float
    n_eff: float
    horizon: float
    method: str


def _ratio_mcmc(config: SheConfig) -> RatioEstimate:
    ends, _, _, _ = collect_endpoints(config.gibbs())
    # ends = W_T / sqrt(T), so eps W_T = sqrt(t) ends
    vals = config.u0(np.asarray(config.x) + math.sqrt(config.t) * ends)
    mean, se = batch_means_se(vals)
    sd = vals.std(ddof=1)
    n_eff = float(vals.shape[0] * (sd / math.sqrt(vals.shape[0]) / se) ** 2) if se > 0 else float(vals.shape[0])
    return RatioEstimate(mean, se, n_eff, config.horizon, "mcmc")


def _ratio_importance(config: SheConfig) -> RatioEstimate:
    grid = PathGrid(config.horizon, config.dt, config.d)
    inc = sample_increments(grid, config.samples, config.seed)
    from .paths import hamiltonian_batch

    k = config.kernel
    lw = k.beta * hamiltonian_batch(inc, k, config.dt)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    vals = config.u0(np.asarray(config.x) + config.eps * inc.sum(axis=1))
    r = float(w @ vals)
    se = float(math.sqrt(np.sum(w * w * (vals - r) ** 2)))
    return RatioEstimate(r, se, float(1.0 / np.sum(w * w)), config.horizon, "importance")


def _ratio_transfer(config: SheConfig, L: float, N: int) -> RatioEstimate:
    u0 = config.u0
    if u0.kind != "cosine":
        raise ValueError("the transfer route needs a cosine initial condition")
    n_blocks = int(round(config.horizon / L))
    if abs(n_blocks * L - config.horizon) > 1e-9 * config.horizon:
        raise ValueError(f"horizon {config.horizon} is not a multiple of the block length {L}")
    ens = transfer.sample_block_measure(config.kernel, L, config.dt, N, config.seed)
    op = transfer.build_operator(ens)
    k = np.asarray(u0.wavevector)
    phase = math.cos(k @ (np.asarray(config.x) - np.asarray(u0.center)))
    # the block chain is reflection symmetric, so E cos(k.(y + eps W)) = cos(k.y) E cos(eps k.W)
    val = u0.amplitude * phase * transfer.chain_characteristic(ens, op, n_blocks, config.eps * k)
    return RatioEstimate(val, math.nan, ens.ess, config.horizon, "transfer")


def annealed_ratio(config: SheConfig, method: str = "mcmc", floor: float = MIN_EFFECTIVE_SAMPLES,
                   L: float = 1.0, N: int = 2000) -> RatioEstimate:
    """E[u-hat_eps(t, x)] / Z = E_Q[u0(x + eps W_{t/eps^2})] under the effective Gibbs measure.

    ``method``: 'mcmc' (endpoint samples of the path sampler), 'importance' (prior
    paths reweighted by exp(beta^2/2 H)) or 'transfer' (cosine u0 only: the
    characteristic function of the Markovianized block chain with blocks of length L).
    """
    if config.u0.kind == "constant":
        return RatioEstimate(config.u0.amplitude, 0.0, math.inf, config.horizon, method)
    if method == "mcmc":
        est = _ratio_mcmc(config)
    elif method == "importance":
        est = _ratio_importance(config)
    elif method == "transfer":
        return _ratio_transfer(config, L, N)
    else:
        raise ValueError(f"unknown method {method!r}")
    if est.stderr > 0 and est.n_eff < floor:
        raise InsufficientSamples(f"effective sample size {est.n_eff:.0f} below {floor}")
    return est


# ---------------------------------------------------------------------------
# homogenization and partition growth


@dataclass
class HomogenizationReport:
    d: int
    beta: float
    t: float
    x: tuple
    eps: float
    ratio: float
    ratio_se: float
    reference: float
    reference_sigma: float
    sigma2: float
    rel_err: float
    theta0: float
    theta1: float
    seed: int

    @staticmethod
    def columns(d: int) -> tuple:
        return ("d", "beta", "t", *(f"x{i}" for i in range(d)), "eps", "ratio", "ratio_se", "reference",
                "sigma2", "rel_err", "theta0", "theta1", "seed")

    def row(self) -> dict:
        out = {"d": self.d, "beta": self.beta, "t": self.t}
        for i, v in enumerate(self.x):
            out[f"x{i}"] = v
        out.update(eps=self.eps, ratio=self.ratio, ratio_se=self.ratio_se, reference=self.reference,
                   sigma2=self.sigma2, rel_err=self.rel_err, theta0=self.theta0, theta1=self.theta1,
                   seed=self.seed)
        return out

    @property
    def error(self) -> float:
        return abs(self.ratio - self.reference)


def transfer_sigma2(pair: MollifierPair, beta: float, L: float = 1.0, dt: float = 1 / 16,
                    N: int = 2000, seed: int = 0) -> float:
    """Classical-route CLT variance of the effective kernel."""
    res = transfer.transfer_clt(effective_kernel(pair, beta), L, dt, N, seed)
    return float(res.variance.classical.value)


def homogenization_sweep(config: SheConfig, eps_list, sigma2: float, method: str = "mcmc",
                         growth: "PartitionGrowth | None" = None) -> list[HomogenizationReport]:
    """Annealed ratio against the homogenized solution for each eps."""
    out = []
    th0 = growth.theta0 if growth else math.nan
    th1 = growth.theta1 if growth else math.nan
    for eps in eps_list:
        cfg = config.replace(eps=float(eps))
        est = annealed_ratio(cfg, method)
        ref = homogenized_reference(cfg.t, cfg.x, cfg.u0, sigma2)
        alt = homogenized_reference(cfg.t, cfg.x, cfg.u0, math.sqrt(sigma2))
        rel = abs(est.value - ref) / abs(ref) if ref != 0 else math.inf
        out.append(HomogenizationReport(cfg.d, cfg.beta, cfg.t, cfg.x, cfg.eps, est.value, est.stderr,
                                        ref, alt, sigma2, rel, th0, th1, cfg.seed))
    return out


@dataclass
class PartitionGrowth:
    horizons: np.ndarray
    log_z: np.ndarray
    log_z_se: np.ndarray
    theta0: float
    theta0_se: float
    theta1: float
    r_squared: float
    residual: float
    log_lambda_rate: float
    free_energy_rate: float
    flagged: bool


def log_partition_blocks(ens: transfer.TransferEnsemble, op: transfer.TransferOperator,
                         spec: transfer.SpectralResult, T: float, particles: int = 20000,
                         replicas: int = 8, seed: int = 0) -> tuple[float, float]:
    """log Z_T of the block chain: T/L block normalisers plus the coupled chain by SMC."""
    n_blocks = int(round(T / ens.L))
    if n_blocks < 1 or abs(n_blocks * ens.L - T) > 1e-9 * T:
        raise ValueError(f"horizon {T} is not a multiple of the block length {ens.L}")
    base = n_blocks * ens.log_z
    var = (n_blocks * ens.log_z_se) ** 2
    if n_blocks > 1:
        fe = transfer.free_energy_check(ens, op, spec, n_blocks - 1, particles, replicas, seed)
        base += (n_blocks - 1) * fe.estimate
        var += ((n_blocks - 1) * fe.stderr) ** 2
    return float(base), float(math.sqrt(var))


def partition_growth(config: SheConfig, eps_list, L: float = 1.0, N: int = 2000,
                     particles: int = 20000, replicas: int = 8, min_r2: float = 0.99) -> PartitionGrowth:
    """Linear fit of log Z_{beta, eps, t} against t / eps^2."""
    eps = np.asarray(eps_list, dtype=float)
    if eps.shape[0] < 3:
        raise ValueError("need at least three values of eps")
    ens = transfer.sample_block_measure(config.kernel, L, config.dt, N, config.seed)
    op = transfer.build_operator(ens)
    spec = transfer.perron_eigenpair(op)
    T = config.t / eps ** 2
    logs = np.empty_like(T)
    ses = np.empty_like(T)
    for i, h in enumerate(T):
        logs[i], ses[i] = log_partition_blocks(ens, op, spec, float(h), particles, replicas, config.seed)
    if np.ptp(logs) == 0.0:
        slope, icpt, r2, slope_se, resid = 0.0, float(logs[0]), 1.0, 0.0, 0.0
    else:
        fit = stats.linregress(T, logs)
        slope, icpt, r2, slope_se = fit.slope, fit.intercept, fit.rvalue ** 2, fit.stderr
        resid = float(np.sqrt(np.mean((logs - icpt - slope * T) ** 2)))
    rate = spec.log_lambda0 / L
    return PartitionGrowth(T, logs, ses, float(slope), float(slope_se), float(icpt), float(r2), resid,
                           float(rate), float(rate + ens.log_z / L), bool(r2 < min_r2))
