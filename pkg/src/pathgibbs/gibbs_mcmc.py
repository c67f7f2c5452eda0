"""Metropolis sampling of the path measure exp{beta H_T(W)} dP(W) / Z_T.

Proposals regenerate the increments of a random block of cells from the Wiener
prior, either conditioned on the block sum (a Brownian bridge, endpoint kept) or
freely (the rest of the path is translated).  Both proposals are reversible for
the prior, so the acceptance probability is min(1, exp(beta dH)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _numeric as nm
from .interactions import InteractionKernel
from .paths import PathGrid, cell_kernel, seed_stream

MIN_EFFECTIVE_SAMPLES = 200


@dataclass(frozen=True)
class McmcSettings:
    block_length: int = 16
    proposals_per_sweep: int | None = None
    sweeps: int = 2000
    burn_in: int = 200
    thin: int = 1
    free_fraction: float = 0.5
    chains: int = 1
    init: str = "prior"

    def __post_init__(self):
        if self.burn_in >= self.sweeps:
            raise ValueError("burn_in must be smaller than sweeps")
        if self.block_length < 1 or self.thin < 1 or self.chains < 1:
            raise ValueError("block_length, thin and chains must be positive")
        if not 0.0 <= self.free_fraction <= 1.0:
            raise ValueError("free_fraction must lie in [0, 1]")
        if self.init not in ("prior", "zero"):
            raise ValueError("init must be 'prior' or 'zero'")


@dataclass(frozen=True, eq=False)
class GibbsConfig:
    kernel: InteractionKernel
    grid: PathGrid
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    seed: int = 0

    def __post_init__(self):
        if self.grid.d != self.kernel.d:
            raise ValueError("grid and kernel dimensions differ")
        if self.mcmc.block_length > self.grid.n_steps:
            raise ValueError("block length exceeds the number of steps")

    @property
    def block(self) -> int:
        return self.mcmc.block_length

    @property
    def proposals(self) -> int:
        if self.mcmc.proposals_per_sweep:
            return self.mcmc.proposals_per_sweep
        return max(1, 2 * self.grid.n_steps // self.block)

    def with_beta(self, beta: float) -> "GibbsConfig":
        return GibbsConfig(self.kernel.with_beta(beta), self.grid, self.mcmc, self.seed)


class GibbsState:
    """Mutable chain state: increments and cell midpoints."""

    def __init__(self, increments: np.ndarray):
        self.dw = np.ascontiguousarray(increments, dtype=float).copy()
        self.wbar = nm.midpoints(self.dw)

    @property
    def endpoint(self) -> np.ndarray:
        return self.dw.sum(axis=0)


def initial_state(config: GibbsConfig, rng: np.random.Generator) -> GibbsState:
    g = config.grid
    if config.mcmc.init == "zero":
        return GibbsState(np.zeros((g.n_steps, g.d)))
    return GibbsState(rng.standard_normal((g.n_steps, g.d)) * math.sqrt(g.dt))


def _draws(config: GibbsConfig, rng: np.random.Generator, n_prop: int):
    g = config.grid
    B = config.block
    starts = rng.integers(0, g.n_steps - B + 1, size=n_prop).astype(np.int64)
    free = rng.random(n_prop) < config.mcmc.free_fraction
    z = rng.standard_normal((n_prop, B, g.d)) * math.sqrt(g.dt)
    u = rng.random(n_prop)
    return starts, free, z, u


def _advance(state, config, rng, n_sweeps, record_every_sweeps=0, energies=False):
    ck = cell_kernel(config.kernel, config.grid.dt, config.grid.n_steps)
    P = config.proposals
    n_rec = n_sweeps // record_every_sweeps if record_every_sweeps else 0
    out_end = np.zeros((n_rec, config.grid.d))
    out_energy = np.zeros(n_rec if energies else 0)
    acc = bad = rec = 0
    chunk = max(1, 20000 // (P * config.block))
    if record_every_sweeps:
        chunk = max(record_every_sweeps, chunk - chunk % record_every_sweeps)
    done = 0
    while done < n_sweeps:
        ns = min(chunk, n_sweeps - done)
        starts, free, z, u = _draws(config, rng, ns * P)
        every = P * record_every_sweeps if record_every_sweeps else 0
        a, b, r = nm.run_sweeps(state.dw, state.wbar, config.kernel.beta, *ck.args(),
                                starts, free, z, u, config.block, every,
                                out_end[rec:], out_energy[rec:] if energies else out_energy)
        acc, bad, rec = acc + a, bad + b, rec + r
        done += ns
    return acc, bad, out_end[:rec], out_energy[:rec] if energies else out_energy


def mcmc_sweep(state: GibbsState, config: GibbsConfig, rng: np.random.Generator) -> GibbsState:
    """One sweep of block proposals, in place; returns the state."""
    acc, bad, _, _ = _advance(state, config, rng, 1)
    state.last_accepted, state.last_nonfinite = acc, bad
    return state


def delta_energy(state: GibbsState, config: GibbsConfig, c0: int, new_increments) -> float:
    """Hamiltonian change if cells ``[c0, c0 + len(new))`` took the given increments."""
    ck = cell_kernel(config.kernel, config.grid.dt, config.grid.n_steps)
    new = np.ascontiguousarray(new_increments, dtype=float).reshape(-1, config.grid.d)
    n, d = state.dw.shape
    de, _ = nm.block_delta(state.dw, state.wbar, *ck.args(), int(c0), new,
                           np.empty((n, d)), np.empty((n, d)))
    return float(de)


def acceptance_probability(state, config, c0, new_increments) -> float:
    de = delta_energy(state, config, c0, new_increments)
    if not math.isfinite(de):
        return 0.0
    x = config.kernel.beta * de
    return 1.0 if x >= 0 else math.exp(x)


def single_proposal(state: GibbsState, config: GibbsConfig, rng: np.random.Generator) -> int:
    """Apply one proposal; returns 1 if accepted, 0 if rejected, -1 if non-finite."""
    ck = cell_kernel(config.kernel, config.grid.dt, config.grid.n_steps)
    starts, free, z, u = _draws(config, rng, 1)
    n, d = state.dw.shape
    return int(nm.metropolis_step(state.dw, state.wbar, config.kernel.beta, *ck.args(),
                                  starts[0], config.block, free[0], z[0], u[0],
                                  np.empty((n, d)), np.empty((n, d))))


@dataclass
class ChainOutput:
    endpoints: np.ndarray
    energies: np.ndarray
    accepted: int
    nonfinite: int
    proposals: int


def run_chain(config: GibbsConfig, chain: int = 0, energies: bool = False) -> ChainOutput:
    rng = seed_stream(config.seed, chain)
    state = initial_state(config, rng)
    m = config.mcmc
    _advance(state, config, rng, m.burn_in)
    n = m.sweeps - m.burn_in
    acc, bad, ends, ens = _advance(state, config, rng, n - n % m.thin, m.thin, energies)
    return ChainOutput(ends, ens, acc, bad, (n - n % m.thin) * config.proposals)


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> tuple[float, float]:
    """Mean of a correlated series and its batch-means standard error."""
    x = np.asarray(x, dtype=float)
    n_batches = max(2, min(n_batches, x.shape[0] // 2))
    size = x.shape[0] // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class EndpointStats:
    samples: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    pooled_variance: float
    pooled_stderr: float
    covariance: np.ndarray
    covariance_stderr: np.ndarray
    ks_stat: float
    ks_pvalue: float
    n_eff: float
    acceptance: float
    nonfinite: int
    flagged: bool

    def rows(self, beta, T, dt, seed):
        out = []
        for c in range(self.samples.shape[1]):
            out.append({"beta": beta, "T": T, "dt": dt, "coordinate": c,
                        "variance": float(self.variance[c]), "stderr": float(self.stderr[c]),
                        "ks_stat": self.ks_stat, "n_eff": self.n_eff, "seed": seed})
        return out


def endpoint_statistics(samples: np.ndarray, n_batches: int = 50, acceptance: float = 1.0,
                        nonfinite: int = 0) -> EndpointStats:
    x = np.asarray(samples, dtype=float)
    n, d = x.shape
    var = np.empty(d)
    se = np.empty(d)
    for c in range(d):
        var[c], se[c] = batch_means_se(x[:, c] ** 2, n_batches)
    pooled, pooled_se = batch_means_se(np.mean(x ** 2, axis=1), n_batches)
    cov = x.T @ x / n
    cov_se = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            cov_se[i, j] = batch_means_se(x[:, i] * x[:, j], n_batches)[1]
    iid_se = np.std(np.mean(x ** 2, axis=1), ddof=1) / math.sqrt(n)
    n_eff = float(n * (iid_se / pooled_se) ** 2) if pooled_se > 0 else float(n)
    ks, p, _ = ks_gaussian(x.ravel()) if n * d >= 100 else (math.nan, math.nan, False)
    return EndpointStats(x, var, se, pooled, pooled_se, cov, cov_se, ks, p, n_eff,
                         acceptance, nonfinite, n_eff < MIN_EFFECTIVE_SAMPLES)


def collect_endpoints(config: GibbsConfig, energies: bool = False):
    outs = [run_chain(config, c, energies) for c in range(config.mcmc.chains)]
    T = config.grid.horizon
    ends = np.concatenate([o.endpoints for o in outs]) / math.sqrt(T)
    ens = np.concatenate([o.energies for o in outs])
    acc = sum(o.accepted for o in outs) / max(1, sum(o.proposals for o in outs))
    bad = sum(o.nonfinite for o in outs)
    return ends, ens, acc, bad


def estimate_endpoint(config: GibbsConfig) -> EndpointStats:
    """Endpoint variance per coordinate of W_T / sqrt(T) under the Gibbs measure."""
    ends, _, acc, bad = collect_endpoints(config)
    return endpoint_statistics(ends, acceptance=acc, nonfinite=bad)


def ks_gaussian(samples, level: float = 0.05):
    """KS distance to N(0, s^2) with s^2 the (uncentred) sample variance."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.shape[0] < 100:
        raise ValueError("need at least 100 samples")
    s = math.sqrt(np.mean(x * x))
    if s == 0.0 or np.ptp(x) == 0.0:
        return 1.0, 0.0, False
    res = stats.kstest(x / s, "norm")
    return float(res.statistic), float(res.pvalue), bool(res.pvalue > level)


@dataclass
class LogPartition:
    betas: np.ndarray
    log_z: np.ndarray
    stderr: np.ndarray
    mean_energy: np.ndarray
    energy_stderr: np.ndarray


def log_partition(config: GibbsConfig, beta_grid, se_cap: float = math.inf) -> LogPartition:
    """Thermodynamic integration of d log Z / d beta = E_beta[H] (trapezoid in beta)."""
    betas = np.asarray(beta_grid, dtype=float)
    if betas[0] != 0.0 or np.any(np.diff(betas) <= 0):
        raise ValueError("beta grid must start at 0 and increase")
    mean = np.empty_like(betas)
    se = np.empty_like(betas)
    for i, b in enumerate(betas):
        _, ens, _, _ = collect_endpoints(config.with_beta(float(b)), energies=True)
        mean[i], se[i] = batch_means_se(ens)
    h = np.diff(betas)
    log_z = np.concatenate([[0.0], np.cumsum(0.5 * h * (mean[1:] + mean[:-1]))])
    # node weights of the trapezoid rule, errors treated as independent across nodes
    var = np.zeros_like(betas)
    for k in range(1, betas.shape[0]):
        w = np.zeros(k + 1)
        w[:-1] += 0.5 * h[:k]
        w[1:] += 0.5 * h[:k]
        var[k] = np.sum((w * se[: k + 1]) ** 2)
    out = LogPartition(betas, log_z, np.sqrt(var), mean, se)
    if np.any(out.stderr > se_cap):
        raise RuntimeError(f"log-partition standard error {out.stderr.max():.3g} exceeds cap {se_cap}")
    return out
