"""Gridded Brownian paths, Hamiltonian quadrature and occupation functionals.

A path is stored as its increments over the cells ``[a dt, (a+1) dt)``.  All
space-time double integrals use cell-midpoint positions

    Wbar_a = W(a dt) + dw_a / 2,

and product integration in time:

    H_dt(W) = sum_{a,b} R(|a-b|) V(Wbar_a - Wbar_b),
    R(m)    = int_{-dt}^{dt} (dt - |u|) rho(m dt + u) du,

which is the exact integral of rho over the cell pair ``(a, b)``.  Diagonal
cells use V(0) when it is finite and V(|dw_a|/2), the value at the separation
of the two half-cell midpoints, otherwise.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _numeric as nm
from .interactions import InteractionKernel, MollifiedDelta, SpatialPotential


@dataclass(frozen=True)
class PathGrid:
    horizon: float
    dt: float
    d: int = 1

    def __post_init__(self):
        if not (self.horizon > 0 and self.dt > 0):
            raise ValueError("horizon and dt must be positive")
        n = round(self.horizon / self.dt)
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(f"horizon {self.horizon} is not a multiple of dt {self.dt}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True, eq=False)
class DiscretePath:
    grid: PathGrid
    increments: np.ndarray
    origin: np.ndarray = None
    seed: int = -1

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=float)
        if inc.shape != (self.grid.n_steps, self.grid.d):
            raise ValueError(f"increments shape {inc.shape} does not match grid")
        object.__setattr__(self, "increments", inc)
        origin = np.zeros(self.grid.d) if self.origin is None else np.asarray(self.origin, float)
        object.__setattr__(self, "origin", origin)

    @property
    def positions(self) -> np.ndarray:
        """Positions at the grid nodes 0, dt, ..., T (shape ``(n+1, d)``)."""
        pos = np.zeros((self.grid.n_steps + 1, self.grid.d))
        np.cumsum(self.increments, axis=0, out=pos[1:])
        return pos + self.origin

    @property
    def midpoints(self) -> np.ndarray:
        return nm.midpoints(self.increments) + self.origin

    @property
    def endpoint(self) -> np.ndarray:
        return self.origin + self.increments.sum(axis=0)

    def time_reversed(self) -> "DiscretePath":
        return DiscretePath(self.grid, -self.increments[::-1], self.origin, self.seed)

    def translated(self, shift) -> "DiscretePath":
        return DiscretePath(self.grid, self.increments, self.origin + np.asarray(shift, float), self.seed)


def seed_stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for replica ``index`` of a run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def sample_path(grid: PathGrid, seed: int) -> DiscretePath:
    rng = seed_stream(seed)
    inc = rng.standard_normal((grid.n_steps, grid.d)) * math.sqrt(grid.dt)
    return DiscretePath(grid, inc, seed=seed)


def sample_increments(grid: PathGrid, n_paths: int, seed: int) -> np.ndarray:
    """Array ``(n_paths, n_steps, d)`` of Wiener increments."""
    rng = seed_stream(seed)
    return rng.standard_normal((n_paths, grid.n_steps, grid.d)) * math.sqrt(grid.dt)


def refine(path: DiscretePath, rng: np.random.Generator) -> DiscretePath:
    """Halve dt by inserting Brownian-bridge midpoints (Levy construction)."""
    g = path.grid
    dw = path.increments
    first = 0.5 * dw + 0.5 * math.sqrt(g.dt) * rng.standard_normal(dw.shape)
    fine = np.empty((2 * g.n_steps, g.d))
    fine[0::2] = first
    fine[1::2] = dw - first
    return DiscretePath(PathGrid(g.horizon, g.dt / 2, g.d), fine, path.origin, path.seed)


def diffusive_rescale(path: DiscretePath, eps: float) -> DiscretePath:
    """The path t -> eps W(t / eps^2) on the grid with step eps^2 dt."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = path.grid
    grid = PathGrid(g.horizon * eps ** 2, g.dt * eps ** 2, g.d)
    return DiscretePath(grid, eps * path.increments, eps * path.origin, path.seed)


# ---------------------------------------------------------------------------
# quadrature weights

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _lag_weight(rho, m: int, dt: float) -> float:
    cuts = {-dt, 0.0, dt}
    for b in rho.breakpoints():
        for u in (b - m * dt, -b - m * dt):
            if -dt < u < dt:
                cuts.add(u)
    cuts = sorted(cuts)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GL_X
        total += 0.5 * (hi - lo) * np.sum(_GL_W * (dt - np.abs(u)) * rho(m * dt + u))
    return float(total)


@dataclass(frozen=True, eq=False)
class CellKernel:
    """Compiled kernel on a time grid: lag weights plus the potential encoding."""

    dt: float
    weights: np.ndarray
    code: int
    par: np.ndarray
    tab: np.ndarray
    lagpar: np.ndarray
    refined: bool
    d: int

    @property
    def n_lags(self) -> int:
        return self.weights.shape[0]

    def args(self):
        return self.weights, nm.POTENTIALS[self.code], self.par, self.tab, self.lagpar, self.refined


@lru_cache(maxsize=64)
def _cell_kernel(kernel: InteractionKernel, dt: float, n_cells: int) -> CellKernel:
    rho = kernel.rho
    if kernel.joint == "massless":
        nl = n_cells
        lags = np.arange(nl) * dt
        weights = np.full(nl, dt * dt)
        lagpar = (1.0 + lags) ** rho.theta
        code, par, tab = nm.MASSLESS, np.zeros(1), np.zeros(1)
        refined = False
    else:
        if rho.compact:
            nl = min(n_cells, int(math.floor(rho.support / dt)) + 2)
        else:
            nl = n_cells
        weights = np.array([_lag_weight(rho, m, dt) for m in range(nl)])
        code, par, tab = kernel.v.compiled()
        lagpar = np.zeros(1)
        refined = not math.isfinite(kernel.v.sup)
    while nl > 1 and weights[nl - 1] == 0.0:
        nl -= 1
    weights = weights[:nl].copy()
    return CellKernel(dt, weights, int(code), np.asarray(par, float), np.asarray(tab, float),
                      np.asarray(lagpar, float), refined, kernel.d)


def cell_kernel(kernel: InteractionKernel, dt: float, n_cells: int) -> CellKernel:
    return _cell_kernel(kernel, float(dt), int(n_cells))


# ---------------------------------------------------------------------------
# functionals


def hamiltonian(path: DiscretePath, kernel: InteractionKernel) -> float:
    """Double time integral of H(t - s, W_t - W_s) over [0, T]^2 (no beta factor)."""
    if kernel.d != path.grid.d:
        raise ValueError("kernel and path dimensions differ")
    ck = cell_kernel(kernel, path.grid.dt, path.grid.n_steps)
    dw = path.increments
    e = nm.energy(dw, nm.midpoints(dw), *ck.args())
    if not math.isfinite(e):
        raise FloatingPointError("non-finite Hamiltonian (singular potential without regularisation)")
    return float(e)


def hamiltonian_batch(increments: np.ndarray, kernel: InteractionKernel, dt: float) -> np.ndarray:
    ck = cell_kernel(kernel, dt, increments.shape[1])
    return nm.block_energies(np.ascontiguousarray(increments), *ck.args())


def lambda_field(path: DiscretePath, v: SpatialPotential, x) -> np.ndarray:
    """Occupation functional int_0^1 V(W_s - x) ds at the query points ``x``."""
    if abs(path.grid.horizon - 1.0) > 1e-12:
        raise ValueError("lambda_field expects a path on [0, 1]")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != v.d or v.d != path.grid.d:
        raise ValueError("dimension mismatch")
    code, par, tab = v.compiled()
    return nm.occupation(path.midpoints, path.grid.dt, np.ascontiguousarray(x), nm.POTENTIALS[code], par, tab,
                         np.zeros(1))


def local_time(path: DiscretePath, x, kappa: float) -> np.ndarray:
    """Mollified local time of a one-dimensional path on [0, 1]."""
    if path.grid.d != 1:
        raise ValueError("local time needs d = 1")
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    return lambda_field(path, MollifiedDelta(kappa=kappa), x)


# ---------------------------------------------------------------------------
# serialisation

_MAGIC = b"PGPATH01"
_HEADER = struct.Struct("<8sddqq")


def save_path(path: DiscretePath, filename) -> None:
    """Write header (T, dt, d, seed) and row-major increments (``.csv`` or binary)."""
    filename = Path(filename)
    g = path.grid
    if filename.suffix == ".csv":
        lines = [f"# T={g.horizon!r},dt={g.dt!r},d={g.d},seed={path.seed}"]
        lines += [",".join(repr(float(v)) for v in row) for row in path.increments]
        filename.write_text("\n".join(lines) + "\n")
    else:
        with open(filename, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, g.horizon, g.dt, g.d, path.seed))
            fh.write(path.increments.astype("<f8").tobytes(order="C"))


def load_path(filename) -> DiscretePath:
    filename = Path(filename)
    if filename.suffix == ".csv":
        text = filename.read_text().splitlines()
        head = dict(item.split("=") for item in text[0].lstrip("# ").split(","))
        grid = PathGrid(float(head["T"]), float(head["dt"]), int(head["d"]))
        inc = np.array([[float(v) for v in row.split(",")] for row in text[1:] if row])
        return DiscretePath(grid, inc.reshape(grid.n_steps, grid.d), seed=int(head["seed"]))
    raw = filename.read_bytes()
    magic, T, dt, d, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a path file")
    grid = PathGrid(T, dt, d)
    inc = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.n_steps, d)
    return DiscretePath(grid, inc.copy(), seed=seed)
