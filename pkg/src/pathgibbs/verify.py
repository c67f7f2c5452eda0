"""Numerical checks of the supporting lemmas.

Each check evaluates both sides of a final inequality (or identity) and returns a
``LemmaReport``.  For inequalities the margin is ``rhs - lhs`` (nonnegative when
the check passes); for identities it is the relative discrepancy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .interactions import InteractionKernel, MollifiedDelta, SpatialPotential
from .paths import DiscretePath, PathGrid, lambda_field, seed_stream
from .transfer import TransferEnsemble, coupling_matrix


@dataclass
class LemmaReport:
    lemma: str
    params: dict
    lhs: float
    rhs: float
    margin: float
    passed: bool
    seed: int | None = None
    details: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"lemma": self.lemma, "params": dict(self.params), "lhs": float(self.lhs),
                "rhs": float(self.rhs), "margin": float(self.margin), "pass": bool(self.passed),
                "seed": self.seed, "details": dict(self.details)}


# ---------------------------------------------------------------------------
# Khas'minskii


@dataclass(frozen=True)
class RadialPower:
    """V(y) = c (|y|^2 + eta^2)^(-p/2); ``p = 0`` is the constant potential.

    With eta = 0 a time-discretised occupation integral has a polynomial upper tail
    (a grid node close to the origin contributes c r^-p dt), so its exponential
    moment is infinite; Monte Carlo checks use eta > 0, for which V_eta <= V.
    """

    c: float
    p: float = 1.5
    eta: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.p == 0:
            return self.c * np.ones_like(r)
        with np.errstate(divide="ignore"):
            return self.c * (r * r + self.eta * self.eta) ** (-0.5 * self.p)

    def regularized(self, eta: float) -> "RadialPower":
        return RadialPower(self.c, self.p, eta)


def _g1(u):
    # int_0^1 (2 pi s)^(-1/2) exp(-u^2 / 2s) ds
    u = np.abs(u)
    return math.sqrt(2 / math.pi) * np.exp(-0.5 * u * u) - u * special.erfc(u / math.sqrt(2))


def occupation_mean(v, x: float = 0.0, d: int = 3) -> float:
    """E_x int_0^1 V(W_s) ds for a radial V, by the time-integrated transition density."""
    a = abs(float(x))
    quad = lambda f, lo, hi, **kw: integrate.quad(f, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12, **kw)[0]
    if d == 1:
        f = lambda y: float(v(abs(y))) * _g1(y - a)
        return quad(f, -np.inf, 0.0) + quad(f, 0.0, np.inf)
    if d != 3:
        raise ValueError("radial transition integrals are implemented for d = 1 and d = 3")
    if a < 1e-6:
        # the start is the origin up to O(a^2); int_0^1 p_s(r) ds = erfc(r / sqrt 2) / (2 pi r) in three dimensions
        f = lambda r: 2.0 * r * float(v(r)) * special.erfc(r / math.sqrt(2))
        return quad(f, 0.0, 1.0) + quad(f, 1.0, np.inf)
    f = lambda r: float(v(r)) * r / a * (_g1(r - a) - _g1(r + a))
    return quad(f, 0.0, a) + quad(f, a, a + 10.0) + quad(f, a + 10.0, np.inf)


def power_gamma(c: float, p: float = 1.5, d: int = 3) -> float:
    """Closed form of E_0 int_0^1 c |W_s|^(-p) ds = c E|Z|^(-p) int_0^1 s^(-p/2) ds."""
    if not p < min(2.0, d):
        raise ValueError("need p < min(2, d)")
    moment = 2 ** (-p / 2) * special.gamma((d - p) / 2) / special.gamma(d / 2)
    return c * moment / (1 - p / 2)


def khasminskii_check(v, d: int = 3, x_grid=None, n_steps: int = 256, draws: int = 20000,
                      seed: int = 0, tol: float = 0.0, chunk: int = 2000, eta: float = 0.01) -> LemmaReport:
    """gamma = sup_x E_x int V, its location, and a Monte Carlo of E_0 exp(int_0^1 V(W_s) ds).

    The path is sampled on the quadratic grid t_k = (k/n)^2 with the right-endpoint
    rule, which resolves the start at the origin.  A singular ``RadialPower`` is
    replaced by its regularisation at ``eta`` (gamma is then that of the simulated
    potential and never exceeds the singular one, reported as ``gamma_singular``).
    The check is E exp(int V) <= 1 / (1 - gamma); the form gamma / (1 - gamma) is
    reported alongside.
    """
    extra = {}
    if isinstance(v, RadialPower) and v.p > 0 and v.eta < eta:
        extra = {"gamma_singular": occupation_mean(v, 0.0, d), "eta": eta}
        v = v.regularized(eta)
    x_grid = np.linspace(0.0, 2.0, 9) if x_grid is None else np.asarray(x_grid, float)
    profile = np.array([occupation_mean(v, x, d) for x in x_grid])
    g0 = occupation_mean(v, 0.0, d)
    gamma = max(g0, float(profile.max()))
    params = {"d": d, "n_steps": n_steps, "draws": draws, "tol": tol, "eta": getattr(v, "eta", 0.0)}
    details = {"gamma": gamma, "gamma_at_zero": g0, "sup_at_zero": bool(g0 >= profile.max() - 1e-9 * abs(g0)),
               "profile": profile.tolist(), **extra}
    if gamma >= 1.0:
        details["hypothesis"] = "gamma >= 1: the lemma does not apply at this scaling"
        return LemmaReport("khasminskii", params, math.nan, math.inf, math.inf, False, seed, details)
    t = (np.arange(n_steps + 1) / n_steps) ** 2
    dt = np.diff(t)
    rng = seed_stream(seed, 11)
    vals = []
    for start in range(0, draws, chunk):
        k = min(chunk, draws - start)
        w = np.cumsum(rng.standard_normal((k, n_steps, d)) * np.sqrt(dt)[None, :, None], axis=1)
        r = np.sqrt(np.sum(w * w, axis=2))
        vals.append(np.exp(v(r) @ dt))
    vals = np.concatenate(vals)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    bound = 1.0 / (1.0 - gamma)
    stated = gamma / (1.0 - gamma)
    details.update({"stderr": se, "stated_bound": stated, "stated_holds": bool(mean <= stated * (1 + tol))})
    return LemmaReport("khasminskii", params, mean, bound * (1 + tol), bound * (1 + tol) - mean,
                       bool(mean <= bound * (1 + tol) and details["sup_at_zero"]), seed, details)


# ---------------------------------------------------------------------------
# Garsia-Rodemich-Rumsey


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / special.gamma(d / 2 + 1)


def _cap_volume(r: float, u: float, c: float, d: int) -> float:
    """|B_r(0) cap B_u(c e_1)| by slices along the axis."""
    lo, hi = max(-r, c - u), min(r, c + u)
    if hi <= lo:
        return 0.0
    if d == 1:
        return hi - lo
    w = _unit_ball_volume(d - 1)

    def slice_(z):
        s = min(r * r - z * z, u * u - (z - c) ** 2)
        return w * max(s, 0.0) ** ((d - 1) / 2)

    pts = [p for p in ((r * r - u * u + c * c) / (2 * c),) if lo < p < hi] if c > 0 else []
    return integrate.quad(slice_, lo, hi, points=pts or None, limit=200)[0]


def grr_gamma(d: int, n: int = 64) -> float:
    """inf over x in B_1, u in (0, 2] of |B_u(x) cap B_1| / u^d (attained with x on the boundary)."""
    u = np.linspace(2.0 / n, 2.0, n)
    return float(min(_cap_volume(1.0, ui, 1.0, d) / ui ** d for ui in u))


@dataclass(frozen=True)
class LinearField:
    slope: float = 1.0

    def __call__(self, x):
        return self.slope * np.asarray(x, float)[..., 0]


@dataclass(frozen=True)
class ConstantField:
    value: float = 1.0

    def __call__(self, x):
        return np.full(np.asarray(x).shape[0], self.value, dtype=float)


class OccupationField:
    """x -> int_0^1 V(W_s - x) ds for a fixed path."""

    def __init__(self, path: DiscretePath, v: SpatialPotential):
        self.path, self.v = path, v

    def __call__(self, x):
        return lambda_field(self.path, self.v, x)


def _ball_points(center, radius: float, n: int, rng) -> np.ndarray:
    d = center.shape[0]
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return center + radius * g * rng.random(n)[:, None] ** (1.0 / d)


def grr_bound_check(f, center, radius: float, delta: float, eps: float, alpha: float = 1.0,
                    n_points: int = 200, seed: int = 0, n_nodes: int = 400) -> LemmaReport:
    """Domination of observed increments of ``f`` by the GRR modulus on a ball.

    Psi(u) = exp(alpha u^rho) - 1 and q(u) = u^a with a = 1 - 2 eps, rho = 1/(1 - eps).
    M is the Monte Carlo value of the double integral over the ball from ``n_points``
    uniform points.  The bound at separation s is
    8 int_0^{(2s)^a} Psi^{-1}(M / (gamma v^{2d/a})) dv.
    """
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    a, rho = 1.0 - 2.0 * eps, 1.0 / (1.0 - eps)
    rng = seed_stream(seed, 13)
    x = _ball_points(center, radius, n_points, rng)
    fx = np.asarray(f(x), dtype=float)
    iu = np.triu_indices(n_points, 1)
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)[iu]
    diff = np.abs(fx[:, None] - fx[None, :])[iu]
    vol = _unit_ball_volume(d) * radius ** d
    ratio = diff / dist ** a
    halvings = 0
    while True:
        with np.errstate(over="ignore"):
            M = vol * vol * float(np.mean(np.expm1(alpha * ratio ** rho)))
        if math.isfinite(M) or halvings > 60:
            break
        alpha *= 0.5
        halvings += 1
    # |B_u cap B_r| / u^d only depends on u / r, so the unit-ball constant applies
    gamma_d = grr_gamma(d)
    close = dist <= delta
    if not np.any(close):
        raise ValueError("no sampled pair within delta")
    vmax = (2.0 * dist[close]) ** a
    grid = np.concatenate([[0.0], np.geomspace(vmax.min() * 1e-6, vmax.max(), n_nodes)])

    def inv_psi(v):
        # log(1 + M / (gamma v^{2d/a})) without overflow at small v
        arg = np.logaddexp(0.0, math.log(M / gamma_d) - (2 * d / a) * math.log(v)) if v > 0 else math.inf
        return (arg / alpha) ** (1.0 / rho)

    pieces = [0.0]
    for lo, hi in zip(grid[:-1], grid[1:]):
        if M == 0.0:
            pieces.append(0.0)
            continue
        pieces.append(integrate.quad(inv_psi, lo, hi, limit=200)[0])
    cum = 8.0 * np.cumsum(pieces)
    # floor to the grid node below each pair: the bound is increasing in s
    idx = np.searchsorted(grid, vmax, side="right") - 1
    bound = cum[idx]
    slack = bound - diff[close]
    worst = int(np.argmin(slack))
    params = {"center": center.tolist(), "radius": radius, "delta": delta, "eps": eps,
              "n_points": n_points, "alpha_initial": alpha * 2 ** halvings}
    details = {"alpha": alpha, "halvings": halvings, "M": float(M), "gamma_d": gamma_d, "pairs": int(close.sum()),
               "fraction_dominated": float(np.mean(slack >= -1e-12)), "max_increment": float(diff[close].max())}
    return LemmaReport("grr", params, float(diff[close][worst]), float(bound[worst]), float(slack[worst]),
                       bool(np.all(slack >= -1e-12)), seed, details)


def coulomb_grr_sweep(n_paths: int = 20, dt: float = 1 / 512, delta: float = 0.25, eps: float = 0.4,
                      p: float = 1.0, radius: float = 0.5, n_points: int = 120, seed: int = 0):
    """GRR domination for Coulomb occupation fields of independent three-dimensional paths."""
    from .interactions import CoulombPower

    v = CoulombPower(d=3, p=p)
    grid = PathGrid(1.0, dt, 3)
    reports = []
    for i in range(n_paths):
        rng = seed_stream(seed, 17, i)
        path = DiscretePath(grid, rng.standard_normal((grid.n_steps, 3)) * math.sqrt(dt), seed=seed)
        center = path.positions[grid.n_steps // 2]
        reports.append(grr_bound_check(OccupationField(path, v), center, radius, delta, eps,
                                       n_points=n_points, seed=seed * 1000 + i))
    return reports


# ---------------------------------------------------------------------------
# delta interactions in one dimension


def _gl(lo, hi, n, breaks=()):
    cuts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    x, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _green_1d(w, tau):
    # int_0^tau p_u(w) du
    w = np.abs(w)
    tau = np.maximum(tau, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2.0 * np.sqrt(tau / (2 * np.pi)) * np.exp(-w * w / (2 * np.maximum(tau, 1e-300))) \
            - w * special.erfc(w / np.sqrt(2 * np.maximum(tau, 1e-300)))
    return np.where(tau > 0, out, 0.0)


def delta_second_moment(x1: float, x2: float, kappa: float, n_nodes: int = 24) -> float:
    """E_0[(int_0^1 V(W_s) ds)^2] for V = delta_kappa(. - x1) - delta_kappa(. - x2).

    Uses E[V(W_s) V(W_t)] = int int V(y) V(z) p_s(y) p_{t-s}(z - y) and integrates
    t out in closed form; the remaining time integral is adaptive.
    """
    if x1 == x2:
        return 0.0
    bump = MollifiedDelta(kappa=kappa)
    ys, wy = [], []
    for xi, si in ((x1, 1.0), (x2, -1.0)):
        y, w = _gl(xi - kappa, xi + kappa, n_nodes, breaks=(0.0,))
        ys.append(y), wy.append(w * si * bump((y - xi)[:, None]))
    y = np.concatenate(ys)
    wyv = np.concatenate(wy)
    zz, wz = [], []
    for yi in y:
        zs, ws = [], []
        for xj, sj in ((x1, 1.0), (x2, -1.0)):
            z, w = _gl(xj - kappa, xj + kappa, n_nodes, breaks=(yi,))
            zs.append(z), ws.append(w * sj * bump((z - xj)[:, None]))
        zz.append(np.concatenate(zs)), wz.append(np.concatenate(ws))
    Z = np.array(zz)
    WZ = np.array(wz)
    Y = y[:, None]

    def integrand(s):
        p = np.exp(-Y * Y / (2 * s)) / math.sqrt(2 * math.pi * s)
        return float(np.sum(wyv[:, None] * WZ * p * _green_1d(Z - Y, 1.0 - s)))

    lo = max(1e-14, min(abs(x1), abs(x2)) ** 2 * 1e-3)
    val = integrate.quad(integrand, 0.0, 1.0, points=[lo, 0.01, 0.1], limit=400, epsrel=1e-10)[0]
    return 2.0 * val


def _delta_samples(x1, x2, kappa, n, draws, dt, seed, chunk=500):
    v = MollifiedDelta(kappa=kappa)
    steps = int(round(1.0 / dt))
    rng = seed_stream(seed, 19)
    out = []
    for start in range(0, draws, chunk):
        k = min(chunk, draws - start)
        dw = rng.standard_normal((k, steps)) * math.sqrt(dt)
        mid = np.cumsum(dw, axis=1) - 0.5 * dw
        occ = dt * (v((mid - x1)[..., None]) - v((mid - x2)[..., None])).sum(axis=1)
        out.append(np.abs(occ) ** (2 * n))
    return np.concatenate(out)


def simplex_value(a: float, n: int) -> float:
    return float(special.gamma(1 - a) ** n / special.gamma(1 + n * (1 - a)))


def delta_moment_check(x1: float, x2: float, kappa: float = 0.05, n: int = 1, eps: float = 0.3,
                       draws: int = 20000, dt: float = 1 / 4096, seed: int = 0, h_grid=None,
                       slope_kappa: float = 0.01) -> LemmaReport:
    """Moments of int_0^1 (delta(W - x1) - delta(W - x2)) ds with mollified deltas.

    n = 1: Monte Carlo at bump width ``kappa`` against the transition-density oracle,
    and the h-scaling slope of the oracle at width ``slope_kappa``.  n = 2: Monte Carlo
    only, slope from Monte Carlo at width ``kappa``.  The slope uses pairs
    ``mid -/+ h`` about the midpoint of (x1, x2); pairs straddling the start of the
    path saturate before h = 1/2 and give a flatter fit.
    The implied constant of (2n)! C^n h^{2na} Gamma(1-a)^n / Gamma(1+n(1-a)) is reported.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    a = 1.0 - 2.0 * eps
    h = abs(x1 - x2) / 2
    h_grid = np.geomspace(0.05, 0.5, 6) if h_grid is None else np.asarray(h_grid, float)
    width = slope_kappa if n == 1 else kappa
    flagged = bool(width > np.min(h_grid) / 4 or (h > 0 and kappa > h / 2))
    params = {"x1": x1, "x2": x2, "kappa": kappa, "n": n, "eps": eps, "draws": draws, "dt": dt,
              "slope_kappa": slope_kappa}
    samples = _delta_samples(x1, x2, kappa, n, draws, dt, seed)
    mc = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(draws))
    mid = 0.5 * (x1 + x2)

    def moment_at(hh):
        if n == 1:
            return delta_second_moment(mid - hh, mid + hh, slope_kappa)
        return float(_delta_samples(mid - hh, mid + hh, kappa, n, draws, dt, seed + 1).mean())

    vals = np.array([moment_at(hh) for hh in h_grid])
    slope = float(stats.linregress(np.log(h_grid), np.log(vals)).slope)
    const = (vals / (math.factorial(2 * n) * h_grid ** (2 * n * a) * simplex_value(a, n))) ** (1.0 / n)
    details = {"h": h, "stderr": se, "slope": slope, "slope_floor": 2 * a - 0.1, "h_grid": h_grid.tolist(),
               "moments": vals.tolist(), "implied_constant": float(const.max()), "flagged": flagged}
    slope_ok = slope >= 2 * a - 0.1
    if n == 1:
        oracle = delta_second_moment(x1, x2, kappa)
        z = abs(mc - oracle) / se if se > 0 else (0.0 if mc == oracle else math.inf)
        details.update({"oracle": oracle, "z": z})
        return LemmaReport("delta_moment", params, mc, oracle, abs(mc - oracle), bool(z <= 3.0 and slope_ok),
                           seed, details)
    return LemmaReport("delta_moment", params, mc, mc, 0.0, bool(slope_ok), seed, details)


# ---------------------------------------------------------------------------
# simplex identity


def _nested_simplex(a: float, n: int, t: float = 1.0) -> float:
    # F_n(t) = int_0^t F_{n-1}(s) (t - s)^(-a) ds,  F_0 = 1
    if n == 0:
        return 1.0
    f = (lambda s: 1.0) if n == 1 else (lambda s: _nested_simplex(a, n - 1, s))
    return integrate.quad(f, 0.0, t, weight="alg", wvar=(0.0, -a), epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def beta_inner_integral(a: float) -> tuple[float, float]:
    """int_0^1 [l^-a + (1-l)^-a] l^-1/2 (1-l)^-1/2 dl by quadrature and as 2 B(1/2 - a, 1/2)."""
    q1 = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(-a - 0.5, -0.5), epsabs=1e-14)[0]
    q2 = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(-0.5, -a - 0.5), epsabs=1e-14)[0]
    return q1 + q2, 2.0 * float(special.beta(0.5 - a, 0.5))


def simplex_identity_check(a: float, n: int, rtol: float = 1e-4) -> LemmaReport:
    """Ordered-simplex integral of prod (s_{2j+2} - s_{2j})^-a against the Gamma formula."""
    if not 0 < a < 0.5:
        raise ValueError("need 0 < a < 1/2")
    lhs = _nested_simplex(a, n)
    rhs = simplex_value(a, n)
    b_quad, b_closed = beta_inner_integral(a)
    rel = abs(lhs - rhs) / abs(rhs)
    details = {"beta_quadrature": b_quad, "beta_closed": b_closed,
               "beta_discrepancy": abs(b_quad - b_closed) / b_closed, "unweighted_limit": 1 / math.factorial(n)}
    ok = rel <= rtol and details["beta_discrepancy"] <= rtol
    return LemmaReport("simplex", {"a": a, "n": n, "rtol": rtol}, lhs, rhs, rel, bool(ok), None, details)


# ---------------------------------------------------------------------------
# sup / inf of the row mass


def row_mass(kernel: InteractionKernel, ensemble: TransferEnsemble, blocks: np.ndarray):
    """m(xi) = sum_j e^{k(xi, xi_j)} w_j and its standard error, for each row of ``blocks``."""
    k = coupling_matrix(kernel, ensemble.dt, blocks, ensemble.increments)
    e = np.exp(k)
    w = ensemble.weights
    m = e @ w
    se = np.sqrt(((e - m[:, None]) ** 2) @ (w * w))
    return m, se


def supinf_maximizer_check(kernel: InteractionKernel, ensemble: TransferEnsemble,
                           ratio_cap: float = 1e3) -> LemmaReport:
    """The row mass is largest at the identically zero block; sup / inf is finite."""
    m, se = row_mass(kernel, ensemble, ensemble.increments)
    m0, se0 = row_mass(kernel, ensemble, np.zeros((1,) + ensemble.increments.shape[1:]))
    m0, se0 = float(m0[0]), float(se0[0])
    # rounding of the weighted sums is allowed for
    slack = m0 - (m - 3.0 * se) + 1e-12 * m0
    worst = int(np.argmin(slack))
    top = max(m0, float(m.max()))
    ratio = top / float(m.min())
    details = {"m_zero": m0, "m_zero_se": se0, "m_max": float(m.max()), "m_min": float(m.min()),
               "ratio": ratio, "ratio_cap": ratio_cap, "violations": int(np.sum(slack < 0)),
               "inf_at_least_one": bool(m.min() >= 1.0 - 1e-12)}
    ok = bool(np.all(slack >= 0) and ratio <= ratio_cap)
    return LemmaReport("supinf", {"N": ensemble.n, "L": ensemble.L, "dt": ensemble.dt, "beta": kernel.beta,
                                  "ratio_cap": ratio_cap},
                       float(m[worst] - 3.0 * se[worst]), m0, float(slack[worst]), ok, ensemble.seed, details)


# ---------------------------------------------------------------------------
# Pinsker


@dataclass
class PinskerResult:
    tv: float
    entropy: float
    bound: float
    tolerance: float
    holds: bool


SMOOTHING = 0.5


def pinsker_tv(a, b, bins=20, smoothing: float = SMOOTHING) -> PinskerResult:
    """Binned TV(A, B) and binned H(A | B) with ``smoothing`` pseudo-counts per bin.

    ``bins`` is a count (edges at pooled quantiles) or an edge array.  The tolerance
    is the TV distance moved by smoothing, so TV <= sqrt(H / 2) + tolerance is exact
    up to rounding.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if np.ndim(bins) == 0:
        edges = np.quantile(np.concatenate([a, b]), np.linspace(0, 1, int(bins) + 1))
        edges[0], edges[-1] = -np.inf, np.inf
    else:
        edges = np.asarray(bins, dtype=float)
    ca = np.histogram(a, bins=edges)[0].astype(float)
    cb = np.histogram(b, bins=edges)[0].astype(float)
    p, q = ca / ca.sum(), cb / cb.sum()
    ps = (ca + smoothing) / (ca.sum() + smoothing * ca.size)
    qs = (cb + smoothing) / (cb.sum() + smoothing * cb.size)
    tv = 0.5 * float(np.abs(p - q).sum())
    h = float(np.sum(ps * np.log(ps / qs)))
    tol = 0.5 * float(np.abs(p - ps).sum() + np.abs(q - qs).sum()) + 1e-12
    bound = math.sqrt(max(h, 0.0) / 2)
    return PinskerResult(tv, h, bound, tol, bool(tv <= bound + tol))


def gaussian_tv(shift: float) -> float:
    """TV between N(0, 1) and N(shift, 1)."""
    return float(2 * stats.norm.cdf(abs(shift) / 2) - 1)


def pinsker_report(a, b, bins=20, seed=None, label: str = "pinsker") -> LemmaReport:
    r = pinsker_tv(a, b, bins)
    return LemmaReport(label, {"bins": bins if np.ndim(bins) == 0 else len(bins) - 1, "smoothing": SMOOTHING},
                       r.tv, r.bound + r.tolerance, r.bound + r.tolerance - r.tv, r.holds, seed,
                       {"entropy": r.entropy, "tolerance": r.tolerance})
