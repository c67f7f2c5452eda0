"""Block Markovianization of the path Gibbs measure and its Nystrom transfer operator.

The horizon is cut into blocks of length L.  When rho vanishes beyond L (in
cells: every lag weight beyond L/dt is zero) the discrete Hamiltonian splits
exactly into per-block self energies and a coupling between neighbouring blocks,

    beta H = sum_j beta D(xi_j) + sum_j k(xi_{j-1}, xi_j).

The block law pi ~ exp(beta D) dP is represented by N weighted reference blocks,
which turns the transfer operator (L u)(xi) = int e^{k(xi, xi')} u(xi') pi(dxi')
into the weighted matrix K_ij w_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.sparse.linalg import LinearOperator, eigs

from . import _numeric as nm
from .gibbs_mcmc import GibbsConfig, McmcSettings
from .interactions import InteractionKernel
from .paths import PathGrid, cell_kernel, seed_stream

# ---------------------------------------------------------------------------
# blocks


@dataclass(frozen=True, eq=False)
class BlockIncrement:
    """Increments of one block, anchored at the block start."""

    increments: np.ndarray
    dt: float

    @property
    def length(self) -> float:
        return self.increments.shape[0] * self.dt

    @property
    def displacements(self) -> np.ndarray:
        """omega(t) - omega(block start) at the inner nodes, including the start."""
        m, d = self.increments.shape
        out = np.zeros((m + 1, d))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def __neg__(self):
        return BlockIncrement(-self.increments, self.dt)


def block_geometry(increments: np.ndarray):
    """Backward (midpoint to block end) and forward (start to midpoint) displacements."""
    inc = np.asarray(increments, dtype=float)
    cum = np.cumsum(inc, axis=-2) - inc
    fwd = cum + 0.5 * inc
    end = inc.sum(axis=-2, keepdims=True)
    back = end - fwd
    return np.ascontiguousarray(back), np.ascontiguousarray(fwd)


def _block_cells(L: float, dt: float) -> int:
    m = int(round(L / dt))
    if m < 1 or abs(m * dt - L) > 1e-9 * L:
        raise ValueError("block length must be a multiple of dt")
    return m


def _pair_kernel(kernel: InteractionKernel, dt: float, m: int):
    # lags up to 2m - 1 cover every pair of neighbouring blocks
    return cell_kernel(kernel, dt, 2 * m)


def neighbour_exact(kernel: InteractionKernel, L: float, dt: float) -> bool:
    """True when only neighbouring blocks interact on this grid."""
    m = _block_cells(L, dt)
    ck = cell_kernel(kernel, dt, 3 * m)
    return ck.n_lags <= m + 1


def coupling_k(xi: BlockIncrement, xi_next: BlockIncrement, kernel: InteractionKernel) -> float:
    """k(xi, xi') = 2 beta sum over cell pairs of the two neighbouring blocks."""
    if xi.increments.shape != xi_next.increments.shape or xi.dt != xi_next.dt:
        raise ValueError("blocks must share length and grid")
    m = xi.increments.shape[0]
    ck = _pair_kernel(kernel, xi.dt, m)
    back, _ = block_geometry(xi.increments[None])
    _, fwd = block_geometry(xi_next.increments[None])
    w, vf, par, tab, lagpar, _ = ck.args()
    val = nm.coupling_pairs(back, fwd, w, m, vf, par, tab, lagpar)[0]
    return float(2.0 * kernel.beta * val)


def coupling_matrix(kernel: InteractionKernel, dt: float, inc_a: np.ndarray, inc_b: np.ndarray) -> np.ndarray:
    """k(a_i, b_j) for all pairs of two block arrays of shape ``(N, m, d)``."""
    m = inc_a.shape[1]
    ck = _pair_kernel(kernel, dt, m)
    back, _ = block_geometry(inc_a)
    _, fwd = block_geometry(inc_b)
    w, vf, par, tab, lagpar, _ = ck.args()
    return 2.0 * kernel.beta * nm.coupling_matrix(back, fwd, w, m, vf, par, tab, lagpar)


def self_energies(kernel: InteractionKernel, dt: float, inc: np.ndarray) -> np.ndarray:
    """Within-block Hamiltonian D(xi) for every block (no beta factor)."""
    m = inc.shape[1]
    ck = _pair_kernel(kernel, dt, m)
    return nm.block_energies(np.ascontiguousarray(inc), *ck.args())


def _levy_bridges(draws: np.ndarray, m: int, dt: float) -> np.ndarray:
    """Brownian bridges pinned at 0 on m cells (m a power of two), dyadic level order.

    ``draws`` has shape ``(n, m - 1, d)``; level l uses the next 2^(l-1) rows, so the
    bridge on 2m cells refines the one on m cells built from the same draws.
    """
    n, _, d = draws.shape
    pos = np.zeros((n, m + 1, d))
    used = 0
    h = m
    while h > 1:
        mids = np.arange(h // 2, m, h)
        sd = 0.5 * math.sqrt(h * dt)
        pos[:, mids] = 0.5 * (pos[:, mids - h // 2] + pos[:, mids + h // 2]) \
            + sd * draws[:, used:used + mids.shape[0]]
        used += mids.shape[0]
        h //= 2
    return np.diff(pos, axis=1)


def prior_blocks(n: int, m: int, d: int, dt: float, seed: int, whiten: bool = True) -> np.ndarray:
    """Wiener blocks as bridge plus endpoint, in symmetric groups.

    Every base block appears with all cyclic permutations of its coordinates and
    their reflections, so the block chain is driftless and isotropic across axes.
    Each group has its own random stream, which nests ensembles in n, and when m
    is a power of two the bridge is built level by level, which nests them under
    dt -> dt / 2.  Whitened endpoints have empirical covariance L I.  Only whole
    groups are returned, so n is rounded down to a multiple of 2d.
    """
    L = m * dt
    group = 2 * d
    base = n // group
    if base < 1:
        raise ValueError(f"need at least {group} blocks in dimension {d}")
    dyadic = m & (m - 1) == 0
    s = np.empty((base, d))
    raw = np.empty((base, m - 1 if dyadic else m, d))
    for i in range(base):
        rng = seed_stream(seed, 0, i)
        s[i] = rng.standard_normal(d)
        raw[i] = rng.standard_normal(raw.shape[1:])
    if dyadic:
        bridge = _levy_bridges(raw, m, dt)
    else:
        z = raw * math.sqrt(dt)
        bridge = z - z.mean(axis=1, keepdims=True)
    if whiten and base >= 2 * d:
        c = s.T @ s / base
        s = s @ linalg.inv(linalg.sqrtm(c).real) * math.sqrt(L)
    else:
        s = s * math.sqrt(L)
    blocks = bridge + s[:, None, :] / m
    out = np.empty((base, group, m, d))
    for r in range(d):
        rolled = np.roll(blocks, r, axis=-1)
        out[:, 2 * r] = rolled
        out[:, 2 * r + 1] = -rolled
    return out.reshape(base * group, m, d)


# ---------------------------------------------------------------------------
# ensemble


@dataclass(eq=False)
class TransferEnsemble:
    kernel: InteractionKernel
    L: float
    dt: float
    increments: np.ndarray
    weights: np.ndarray
    self_energy: np.ndarray
    log_z: float
    log_z_se: float
    ess: float
    mode: str
    seed: int
    flagged: bool = False

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.increments.shape[1]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    @property
    def z_hat(self) -> float:
        return math.exp(self.log_z)

    @property
    def displacement(self) -> np.ndarray:
        return self.increments.sum(axis=1)

    def block(self, i: int) -> BlockIncrement:
        return BlockIncrement(self.increments[i], self.dt)


def _importance(beta: float, energy: np.ndarray):
    a = beta * energy
    top = a.max()
    e = np.exp(a - top)
    w = e / e.sum()
    mean = e.mean()
    log_z = top + math.log(mean)
    se = e.std(ddof=1) / math.sqrt(e.shape[0]) / mean if e.shape[0] > 1 else 0.0
    ess = 1.0 / np.sum(w * w)
    return w, log_z, se, ess


def sample_block_measure(kernel: InteractionKernel, L: float, dt: float, N: int, seed: int,
                         mode: str = "importance", ess_floor: float = 0.1,
                         mcmc: McmcSettings | None = None) -> TransferEnsemble:
    """N reference blocks for pi ~ exp(beta D) dP.

    ``mode='importance'``: prior blocks with self-normalised weights exp(beta D).
    ``mode='mcmc'``: unit weights from a block-level Metropolis chain; Z is then
    estimated from an independent prior sample of the same size.
    The returned ``log_z_se`` is the relative standard error of Z-hat.
    """
    if N < 2:
        raise ValueError("need at least two blocks")
    m = _block_cells(L, dt)
    d = kernel.d
    prior = prior_blocks(N, m, d, dt, seed)
    energy = self_energies(kernel, dt, prior)
    w, log_z, se, ess = _importance(kernel.beta, energy)
    if mode == "importance":
        inc = prior
    elif mode == "mcmc":
        settings = mcmc or McmcSettings(block_length=max(1, m // 2), sweeps=20 * N + 200,
                                        burn_in=200, thin=20)
        cfg = GibbsConfig(kernel, PathGrid(L, dt, d), settings, seed)
        inc = _mcmc_blocks(cfg, N)
        energy = self_energies(kernel, dt, inc)
        w = np.full(N, 1.0 / N)
        ess = float(N)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    flagged = ess < ess_floor * N
    return TransferEnsemble(kernel, L, dt, np.ascontiguousarray(inc), w, energy, log_z, se, float(ess),
                            mode, seed, flagged)


def _mcmc_blocks(cfg: GibbsConfig, N: int) -> np.ndarray:
    from .gibbs_mcmc import _advance, initial_state

    rng = seed_stream(cfg.seed, 1)
    state = initial_state(cfg, rng)
    _advance(state, cfg, rng, cfg.mcmc.burn_in)
    out = np.empty((N,) + state.dw.shape)
    for i in range(N):
        _advance(state, cfg, rng, cfg.mcmc.thin)
        out[i] = state.dw
    return out


# ---------------------------------------------------------------------------
# operator and spectrum


@dataclass(eq=False)
class TransferOperator:
    """Nystrom transfer operator: k matrix, weights and the log-space shift."""

    k: np.ndarray
    weights: np.ndarray
    shift: float

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def scaled(self) -> np.ndarray:
        """exp(k - shift); the true kernel is ``exp(shift) * scaled``."""
        return np.exp(self.k - self.shift)

    @property
    def K(self) -> np.ndarray:
        return np.exp(self.k)

    def apply(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self.shift) * (self.scaled @ (self.weights * u))

    def hilbert_schmidt(self) -> float:
        """sum_ij w_i w_j K_ij^2 (squared HS norm of the Nystrom operator)."""
        log = 2.0 * self.k + np.log(self.weights)[:, None] + np.log(self.weights)[None, :]
        top = log.max()
        return float(math.exp(top) * np.exp(log - top).sum())

    def log_hilbert_schmidt(self) -> float:
        log = 2.0 * self.k + np.log(self.weights)[:, None] + np.log(self.weights)[None, :]
        top = log.max()
        return float(top + math.log(np.exp(log - top).sum()))

    def row_mass(self) -> np.ndarray:
        return self.K @ self.weights


def build_operator(ensemble: TransferEnsemble) -> TransferOperator:
    inc = ensemble.increments
    k = coupling_matrix(ensemble.kernel, ensemble.dt, inc, inc)
    if not np.all(np.isfinite(k)):
        raise FloatingPointError("non-finite coupling (singular potential at coincident points)")
    shift = float(k.max()) if k.size else 0.0
    return TransferOperator(k, ensemble.weights.copy(), shift)


@dataclass
class SpectralResult:
    lambda0: float
    log_lambda0: float
    psi: np.ndarray
    phi: np.ndarray
    delta: float
    residual: float
    lambda1_abs: float
    iterations: int
    shift: float

    @property
    def gap(self) -> float:
        return 1.0 - self.lambda1_abs / self.lambda0


def _power(A: np.ndarray, tol: float, max_iter: int):
    v = np.ones(A.shape[0])
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = A @ v
        top = y.max()
        y /= top
        if np.max(np.abs(y - v)) < tol:
            v = y
            lam = top
            break
        v = y
        lam = top
    else:
        raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")
    return lam, v, it


def perron_eigenpair(op: TransferOperator, tol: float = 1e-14, max_iter: int = 10000) -> SpectralResult:
    """Power iteration from the constant vector on A = exp(k - shift) diag(w)."""
    A = op.scaled * op.weights[None, :]
    lam, psi, it = _power(A, tol, max_iter)
    lam_left, phi, _ = _power(A.T.copy(), tol, max_iter)
    res = float(np.max(np.abs(A @ psi - lam * psi)) / lam)
    # second eigenvalue magnitude of the deflated operator
    lam1 = 0.0
    if op.n > 3:
        left = phi * 1.0
        norm = left @ psi
        mv = LinearOperator(A.shape, matvec=lambda x: A @ x - lam * psi * (left @ x) / norm, dtype=float)
        try:
            vals = eigs(mv, k=1, which="LM", return_eigenvectors=False, tol=1e-10,
                        v0=np.linspace(1.0, 2.0, op.n), maxiter=5000)
            lam1 = float(np.abs(vals[0]))
        except Exception:  # noqa: BLE001 - fall back to a dense solve
            lam1 = float(np.sort(np.abs(linalg.eigvals(A)))[-2])
    scale = math.exp(op.shift)
    log_l0 = math.log(lam) + op.shift
    return SpectralResult(lam * scale, log_l0, psi, phi / phi.max(), float(psi.min() / psi.max()), res,
                          lam1 * scale, it, op.shift)


def spectral_radius_bound(op: TransferOperator) -> float:
    """sqrt of the Hilbert-Schmidt estimate, an upper bound for lambda0."""
    return math.sqrt(op.hilbert_schmidt())


# ---------------------------------------------------------------------------
# tilted chain


@dataclass
class TiltedChain:
    P: np.ndarray
    pi_star: np.ndarray
    weights: np.ndarray
    row_defect: float
    stationarity_defect: float


def tilted_chain(spec: SpectralResult, op: TransferOperator, tol: float = 1e-6) -> TiltedChain:
    """P_ij = K_ij psi_j w_j / (lambda0 psi_i) and its stationary law pi* ~ phi psi w."""
    lam_scaled = spec.lambda0 / math.exp(op.shift)
    P = op.scaled * (spec.psi * op.weights)[None, :] / (lam_scaled * spec.psi[:, None])
    defect = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    if defect > tol:
        raise RuntimeError(f"row-sum defect {defect:.3g} above tolerance")
    pi = spec.phi * spec.psi * op.weights
    pi /= pi.sum()
    # polish by left power iteration
    for _ in range(200):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < 1e-15:
            pi = nxt
            break
        pi = nxt
    stat = float(0.5 * np.abs(pi @ P - pi).sum())
    return TiltedChain(P, pi, op.weights.copy(), defect, stat)


@dataclass
class ContractionCurve:
    n: np.ndarray
    spread: np.ndarray
    rate: float
    rate_low: float
    rate_high: float
    doeblin_factor: float


def tv_contraction(chain: TiltedChain, n_max: int = 8, floor: float = 1e-12,
                   spec: SpectralResult | None = None) -> ContractionCurve:
    """Row spread sum_j (max_i P^n_ij - min_i P^n_ij) for n = 1..n_max.

    The geometric rate is the negative slope of log spread against n over the
    points above ``floor``, with a 95% t-interval.
    """
    Pn = chain.P.copy()
    spreads = []
    for n in range(1, n_max + 1):
        if n > 1:
            Pn = Pn @ chain.P
        spreads.append(float(np.sum(Pn.max(axis=0) - Pn.min(axis=0))))
    spreads = np.array(spreads)
    ns = np.arange(1, n_max + 1)
    keep = spreads > floor
    rate = lo = hi = math.nan
    if keep.sum() >= 3:
        fit = stats.linregress(ns[keep], np.log(spreads[keep]))
        t = stats.t.ppf(0.975, keep.sum() - 2)
        rate = -fit.slope
        lo, hi = rate - t * fit.stderr, rate + t * fit.stderr
    elif keep.sum() == 2:
        rate = -math.log(spreads[keep][1] / spreads[keep][0]) / float(np.diff(ns[keep])[0])
    dfac = math.nan
    if spec is not None:
        dfac = 1.0 - spec.delta / spec.lambda0
    return ContractionCurve(ns, spreads, rate, lo, hi, dfac)


# ---------------------------------------------------------------------------
# Poisson equation and variance


@dataclass
class PoissonSolution:
    u: np.ndarray
    f_centered: np.ndarray
    mean: np.ndarray
    residual: float
    method: str
    terms: int = 0


def solve_poisson(chain: TiltedChain, f: np.ndarray, method: str = "direct",
                  tol: float = 1e-13, max_terms: int = 100000) -> PoissonSolution:
    """Solve (I - P) u = f - pi*(f) with pi*(u) = 0; ``f`` may have several columns."""
    f = np.asarray(f, dtype=float)
    vec = f.ndim == 1
    F = f[:, None] if vec else f
    mean = chain.pi_star @ F
    fc = F - mean
    P = chain.P
    n = P.shape[0]
    terms = 0
    if method == "direct":
        A = np.eye(n) - P + np.outer(np.ones(n), chain.pi_star)
        u = linalg.solve(A, fc)
    elif method == "neumann":
        u = fc.copy()
        term = fc.copy()
        for terms in range(1, max_terms + 1):
            term = P @ term
            term -= chain.pi_star @ term
            u += term
            if np.max(np.abs(term)) < tol * max(1.0, np.max(np.abs(u))):
                break
        else:
            raise RuntimeError("Neumann series did not reach the requested tolerance")
    else:
        raise ValueError(f"unknown method {method!r}")
    u -= chain.pi_star @ u
    res = float(np.max(np.abs(u - P @ u - fc)))
    if vec:
        return PoissonSolution(u[:, 0], fc[:, 0], mean[0], res, method, terms)
    return PoissonSolution(u, fc, mean, res, method, terms)


@dataclass
class VarianceEstimate:
    value: float
    route: str
    error: float


@dataclass
class VarianceRoutes:
    dirichlet_form: VarianceEstimate
    classical: VarianceEstimate
    autocovariance: VarianceEstimate
    per_coordinate: dict
    flagged: bool


def dirichlet_variance(chain: TiltedChain, solution: PoissonSolution, block_length: float,
                       max_lag: int = 10000, rel_tol: float = 1e-3) -> VarianceRoutes:
    """The three variance expressions, per unit block time and averaged over coordinates."""
    pi = chain.pi_star
    P = chain.P
    u = solution.u if solution.u.ndim == 2 else solution.u[:, None]
    fc = solution.f_centered if solution.f_centered.ndim == 2 else solution.f_centered[:, None]
    Pu = P @ u
    dirichlet = pi @ ((u - Pu) * u)
    classical = pi @ (u * u) - pi @ (Pu * Pu)
    auto = pi @ (fc * fc)
    term = fc.copy()
    for _ in range(max_lag):
        term = P @ term
        c = pi @ (fc * term)
        auto = auto + 2.0 * c
        if np.max(np.abs(c)) < 1e-16 * max(1.0, np.max(np.abs(auto))):
            break
    scale = 1.0 / block_length
    vals = {"dirichlet_form": dirichlet * scale, "classical": classical * scale,
            "autocovariance": auto * scale}
    means = {k: float(np.mean(v)) for k, v in vals.items()}
    err = solution.residual
    flagged = abs(means["classical"] - means["autocovariance"]) > rel_tol * abs(means["classical"])
    return VarianceRoutes(VarianceEstimate(means["dirichlet_form"], "dirichlet_form", err),
                          VarianceEstimate(means["classical"], "classical", err),
                          VarianceEstimate(means["autocovariance"], "autocovariance_sum", err),
                          {k: v.tolist() for k, v in vals.items()}, flagged)


@dataclass
class CltResult:
    ensemble: TransferEnsemble
    operator: TransferOperator
    spectral: SpectralResult
    chain: TiltedChain
    poisson: PoissonSolution
    variance: VarianceRoutes

    def record(self) -> dict:
        e, s, v = self.ensemble, self.spectral, self.variance
        return {"beta": e.kernel.beta, "L": e.L, "dt": e.dt, "N": e.n, "lambda0": s.lambda0,
                "log_lambda0_shift": s.shift, "delta": s.delta, "gap": s.gap,
                "sigma2_dirichlet": v.dirichlet_form.value, "sigma2_classical": v.classical.value,
                "sigma2_autocov": v.autocovariance.value, "residual": s.residual, "seed": e.seed}


def transfer_clt(kernel: InteractionKernel, L: float = 1.0, dt: float = 1 / 16, N: int = 2000,
                 seed: int = 0, mode: str = "importance") -> CltResult:
    """Full pipeline: ensemble, operator, Perron pair, tilted chain, Poisson solve, variances."""
    ens = sample_block_measure(kernel, L, dt, N, seed, mode=mode)
    op = build_operator(ens)
    spec = perron_eigenpair(op)
    chain = tilted_chain(spec, op)
    sol = solve_poisson(chain, ens.displacement)
    var = dirichlet_variance(chain, sol, L)
    return CltResult(ens, op, spec, chain, sol, var)


def free_energy_rate(result: CltResult) -> float:
    """log Z_T / T per unit time in the block representation: (log Z + log lambda0) / L."""
    return (result.ensemble.log_z + result.spectral.log_lambda0) / result.ensemble.L


# ---------------------------------------------------------------------------
# free energy along the chain


@dataclass
class FreeEnergyCheck:
    n: int
    estimate: float
    stderr: float
    log_lambda0: float
    exact: float

    @property
    def gap(self) -> float:
        return abs(self.estimate - self.log_lambda0)


def chain_partition_exact(op: TransferOperator, n: int) -> float:
    """(1/n) log sum over node paths of w_0 ... w_n prod K, by matrix contraction."""
    A = op.scaled * op.weights[None, :]
    v = np.ones(op.n)
    log = 0.0
    for _ in range(n):
        v = A @ v
        top = v.max()
        v /= top
        log += math.log(top)
    log += math.log(op.weights @ v)
    return (log + n * op.shift) / n


def free_energy_check(ensemble: TransferEnsemble, op: TransferOperator, spec: SpectralResult, n: int,
                      particles: int = 20000, replicas: int = 8, seed: int = 0) -> FreeEnergyCheck:
    """Sequential importance sampling of (1/n) log int e^{sum k} pi(dxi_0) ... pi(dxi_n).

    Blocks are drawn from the weighted ensemble; each step multiplies the particle
    weight by e^{k(previous, new)} and resamples multinomially.
    """
    ests = []
    for r in range(replicas):
        rng = seed_stream(seed, 7, r, n)
        cur = rng.choice(ensemble.n, size=particles, p=ensemble.weights)
        log_z = 0.0
        for _ in range(n):
            new = rng.choice(ensemble.n, size=particles, p=ensemble.weights)
            lw = op.k[cur, new]
            top = lw.max()
            e = np.exp(lw - top)
            log_z += top + math.log(e.mean())
            idx = rng.choice(particles, size=particles, p=e / e.sum())
            cur = new[idx]
        ests.append(log_z / n)
    ests = np.array(ests)
    se = float(ests.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    return FreeEnergyCheck(n, float(ests.mean()), se, spec.log_lambda0, chain_partition_exact(op, n))


def chain_characteristic(ensemble: TransferEnsemble, op: TransferOperator, n_blocks: int, q) -> float:
    """E[cos(q . W_T)] under the n-block chain, T = n L, by weighted matrix products.

    The chain law is prod_j w(xi_j) prod_j e^{k(xi_{j-1}, xi_j)}; the displacement
    of every block enters through the phase e^{i q . Delta}.
    """
    if n_blocks < 1:
        raise ValueError("need at least one block")
    q = np.asarray(q, dtype=float)
    phase = np.exp(1j * (ensemble.displacement @ q))
    E = op.scaled
    a = op.weights * phase
    b = op.weights.copy()
    for _ in range(n_blocks - 1):
        a = (a @ E) * op.weights * phase
        b = (b @ E) * op.weights
        top = b.sum()
        a /= top
        b /= top
    return float((a.sum() / b.sum()).real)


# ---------------------------------------------------------------------------
# comparison with the Gibbs measure


def _binned_tv(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass
class MarginalComparison:
    n: int
    tv: float
    noise_floor: float
    flagged: bool


def marginal_vs_gibbs(chain: TiltedChain, ensemble: TransferEnsemble, n: int, gibbs_blocks: np.ndarray,
                      bins: int = 12, start: int | None = None) -> MarginalComparison:
    """Binned TV between the chain's n-step block law and Gibbs block samples.

    The statistic is the first coordinate of the block displacement.  The chain
    starts from ``start`` (default: the node with the smallest eigenfunction
    value).  The noise floor is the expected binned TV between two independent
    samples of the Gibbs size.
    """
    gib = np.asarray(gibbs_blocks, dtype=float)
    stat_g = gib.sum(axis=1)[:, 0] if gib.ndim == 3 else gib.ravel()
    stat_c = ensemble.displacement[:, 0]
    edges = np.quantile(stat_g, np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    row = np.zeros(chain.P.shape[0])
    row[int(np.argmin(chain.pi_star / np.maximum(ensemble.weights, 1e-300))) if start is None else start] = 1.0
    for _ in range(n):
        row = row @ chain.P
    pc = np.histogram(stat_c, bins=edges, weights=row)[0]
    pg = np.histogram(stat_g, bins=edges)[0].astype(float)
    tv = _binned_tv(pc, pg)
    floor = 0.5 * bins * math.sqrt(2.0 / (math.pi * stat_g.shape[0] * bins))
    m1 = np.histogram(stat_g[: stat_g.shape[0] // 2], bins=edges)[0].astype(float)
    m2 = np.histogram(stat_g[stat_g.shape[0] // 2:], bins=edges)[0].astype(float)
    flagged = abs(_binned_tv(m1, m2) - floor * math.sqrt(2)) > 3 * floor
    return MarginalComparison(n, tv, floor, bool(flagged))


def gibbs_block_samples(kernel: InteractionKernel, L: float, dt: float, n_blocks: int, block_index: int,
                        settings: McmcSettings, seed: int) -> np.ndarray:
    """MCMC samples of the increments of one block of a path made of ``n_blocks`` blocks."""
    m = _block_cells(L, dt)
    cfg = GibbsConfig(kernel, PathGrid(n_blocks * L, dt, kernel.d), settings, seed)
    from .gibbs_mcmc import _advance, initial_state

    rng = seed_stream(seed, 2)
    state = initial_state(cfg, rng)
    _advance(state, cfg, rng, settings.burn_in)
    n_out = (settings.sweeps - settings.burn_in) // settings.thin
    out = np.empty((n_out, m, kernel.d))
    for i in range(n_out):
        _advance(state, cfg, rng, settings.thin)
        out[i] = state.dw[block_index * m:(block_index + 1) * m]
    return out


# ---------------------------------------------------------------------------
# block approximation for long-range rho


def block_labels(n_cells: int, dt: float, L: float) -> np.ndarray:
    """Block index of every cell; the last block may be shorter than L."""
    t = (np.arange(n_cells) + 0.5) * dt
    return np.floor(t / L + 1e-12).astype(np.int64)


def neglected_envelope(kernel: InteractionKernel, T: float, L: float, dt: float) -> float:
    """beta sup V times the lag weights of cell pairs in blocks at least two apart."""
    n = int(round(T / dt))
    ck = cell_kernel(kernel, dt, n)
    lab = block_labels(n, dt, L)
    total = 0.0
    w = ck.weights
    for a in range(n):
        hi = min(n, a + w.shape[0])
        far = np.abs(lab[a + 1:hi] - lab[a]) >= 2
        total += 2.0 * np.sum(w[1:hi - a][far])
    return float(kernel.beta * kernel.v.sup * total)


@dataclass
class EntropyGap:
    T: float
    L: float
    estimate: float
    stderr: float
    envelope: float
    tv_bound: float
    asymptotic_envelope: float


def block_entropy_gap(kernel: InteractionKernel, T: float, L: float | None = None, dt: float = 0.25,
                      settings: McmcSettings | None = None, seed: int = 0) -> EntropyGap:
    """Relative-entropy bound beta E_Q[neglected energy] for the L-block approximation.

    ``L`` defaults to T / log T.  Returns the MCMC estimate, the analytic envelope on
    the same cell-pair set, and the Pinsker bound sqrt(H / 2) built from the estimate.
    """
    if L is None:
        L = T / math.log(T)
    n = int(round(T / dt))
    settings = settings or McmcSettings(block_length=min(8, n), sweeps=4000, burn_in=400)
    cfg = GibbsConfig(kernel, PathGrid(T, dt, kernel.d), settings, seed)
    lab = block_labels(n, dt, L)
    env = neglected_envelope(kernel, T, L, dt)
    if lab.max() < 2:
        return EntropyGap(T, L, 0.0, 0.0, env, 0.0, _asymptotic(kernel, T, L))
    ck = cell_kernel(kernel, dt, n)
    from .gibbs_mcmc import _advance, batch_means_se, initial_state

    rng = seed_stream(seed, 3)
    state = initial_state(cfg, rng)
    _advance(state, cfg, rng, settings.burn_in)
    vals = []
    for _ in range((settings.sweeps - settings.burn_in) // settings.thin):
        _advance(state, cfg, rng, settings.thin)
        w, vf, par, tab, lagpar, _ = ck.args()
        vals.append(nm.pair_energy_masked(state.wbar, w, vf, par, tab, lagpar, lab))
    mean, se = batch_means_se(kernel.beta * np.array(vals))
    return EntropyGap(T, L, mean, se, env, math.sqrt(max(mean, 0.0) / 2.0), _asymptotic(kernel, T, L))


def _asymptotic(kernel: InteractionKernel, T: float, L: float) -> float:
    # sup V T^2 / L^theta, the order of the bound with theta = 2 + epsilon
    theta = kernel.rho.envelope_theta()
    if not math.isfinite(theta):
        return 0.0
    return float(kernel.beta * kernel.v.sup * kernel.rho.amplitude * T ** 2 / L ** theta)
