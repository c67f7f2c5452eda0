"""Command line: ``pathgibbs {clt,spectrum,she,verify} [lemma] --config F --seed N --out DIR``.

A run reads one TOML file, applies flag overrides, executes the pipeline, writes
CSV/JSON results plus ``manifest.json`` and exits 0 iff every asserted check passes.

Config layout::

    seed = 0
    kernel = "mollifier_product"        # or a [kernel] table with kind = ... and parameters
    [grid]   L, dt, N, T
    [mcmc]   samples, block_length, thin, burn_in, chains, free_fraction, init
    [sweep]  beta, eps, L  (lists)
    [she]    t, x, u0, method, tolerance
    [verify] lemma and lemma parameters
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, emit, she, transfer, verify
from .gibbs_mcmc import GibbsConfig, McmcSettings, estimate_endpoint
from .interactions import PRESET_DEFAULTS, RejectedParameters, preset
from .paths import PathGrid

SUBCOMMANDS = ("clt", "spectrum", "she", "verify")
LEMMAS = ("simplex", "khasminskii", "grr", "delta_moment", "supinf", "pinsker")
DETERMINISTIC_LEMMAS = ("simplex",)

TABLE_KEYS = {
    "grid": {"L", "dt", "N", "T"},
    "mcmc": {"samples", "block_length", "thin", "burn_in", "chains", "free_fraction", "init"},
    "sweep": {"beta", "eps", "L"},
    "she": {"t", "x", "u0", "method", "tolerance"},
}
VERIFY_KEYS = {
    "simplex": {"a", "n", "rtol"},
    "khasminskii": {"c", "p", "eta", "d", "n_steps", "draws"},
    "grr": {"field", "n_paths", "dt", "delta", "eps", "radius", "n_points"},
    "delta_moment": {"x1", "x2", "kappa", "n", "eps", "draws", "dt"},
    "supinf": {"ratio_cap"},
    "pinsker": {"shift", "samples", "bins"},
}
TOP_KEYS = {"subcommand", "seed", "kernel", "out", "threads", "verify", *TABLE_KEYS}
DEFAULTS = {
    "grid": {"L": 1.0, "dt": 1 / 16, "N": 2000, "T": 16.0},
    "mcmc": {"samples": 0, "block_length": 16, "thin": 4, "burn_in": 200, "chains": 1,
             "free_fraction": 0.5, "init": "prior"},
    "she": {"t": 1.0, "x": None, "u0": "cosine", "method": "transfer", "tolerance": 0.1},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str
    kernel: str | None
    kernel_params: dict
    grid: dict
    mcmc: dict
    sweep: dict
    she: dict
    verify: dict
    seed: int | None
    out: str = "results"
    threads: int = 1
    raw: dict = field(default_factory=dict)

    def build_kernel(self, **overrides):
        return preset(self.kernel, **{**self.kernel_params, **overrides})

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, "kernel": self.kernel, "kernel_params": self.kernel_params,
                "grid": self.grid, "mcmc": self.mcmc, "sweep": self.sweep, "she": self.she,
                "verify": self.verify, "seed": self.seed, "threads": self.threads}


# ---------------------------------------------------------------------------
# parsing

_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]\s*(#.*)?$")
_ASSIGN = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")


def _key_lines(text: str) -> dict:
    """(table, key) -> line number; raises on a key assigned twice in one table."""
    seen = {}
    table = ""
    depth = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        if depth == 0:
            m = _HEADER.match(line)
            if m:
                table = m.group(1)
                if ("", table) in seen or (table, None) in seen:
                    raise ConfigError(f"line {lineno}: duplicate table [{table}]")
                seen[(table, None)] = lineno
                continue
            m = _ASSIGN.match(line)
            if m:
                key = m.group(1).strip('"')
                if (table, key) in seen:
                    where = f"[{table}]" if table else "top level"
                    raise ConfigError(f"line {lineno}: duplicate key {key!r} in {where} "
                                      f"(first set on line {seen[(table, key)]})")
                seen[(table, key)] = lineno
        # multi-line arrays: skip assignments inside brackets
        stripped = re.sub(r"\"[^\"]*\"", "", line.split("#")[0])
        depth += stripped.count("[") - stripped.count("]") if not _HEADER.match(line) else 0
        depth = max(depth, 0)
    return seen


def _where(lines: dict, table: str, key: str) -> str:
    n = lines.get((table, key))
    return f"line {n}: " if n else ""


def _check_keys(data: dict, allowed: set, table: str, lines: dict):
    for key in data:
        if key not in allowed:
            where = f"[{table}]" if table else "top level"
            raise ConfigError(f"{_where(lines, table, key)}unknown key {key!r} in {where}")


def parse_config(text: str, subcommand: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Validated config from TOML text; the first problem found raises ``ConfigError``.

    Inadmissible kernels surface as ``RejectedParameters`` naming the violated inequality.
    """
    lines = _key_lines(text)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from None
    overrides = overrides or {}
    _check_keys(data, TOP_KEYS, "", lines)
    sub = subcommand or data.get("subcommand")
    if sub is None:
        raise ConfigError("missing required key 'subcommand'")
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"{_where(lines, '', 'subcommand')}unknown subcommand {sub!r}")

    tables = {}
    for name, allowed in TABLE_KEYS.items():
        tab = data.get(name, {})
        if not isinstance(tab, dict):
            raise ConfigError(f"{_where(lines, '', name)}{name!r} must be a table")
        _check_keys(tab, allowed, name, lines)
        tables[name] = {**DEFAULTS.get(name, {}), **tab}
    for key, vals in tables["sweep"].items():
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{_where(lines, 'sweep', key)}sweep {key!r} must be a nonempty list")

    kernel, kparams = None, {}
    spec = data.get("kernel")
    if isinstance(spec, str):
        kernel = spec
    elif isinstance(spec, dict):
        if "kind" not in spec:
            raise ConfigError(f"{_where(lines, 'kernel', None)}missing required key 'kind' in [kernel]")
        kernel = spec["kind"]
        kparams = {k: v for k, v in spec.items() if k != "kind"}
    elif spec is not None:
        raise ConfigError(f"{_where(lines, '', 'kernel')}kernel must be a preset name or a table")
    if kernel is not None:
        if kernel not in PRESET_DEFAULTS:
            raise ConfigError(f"{_where(lines, '', 'kernel') or _where(lines, 'kernel', 'kind')}"
                              f"unknown kernel preset {kernel!r}")
        _check_keys(kparams, set(PRESET_DEFAULTS[kernel]), "kernel", lines)
        preset(kernel, **kparams)  # raises RejectedParameters for inadmissible parameters

    vcfg = dict(data.get("verify", {}))
    vcfg.update({k: v for k, v in overrides.pop("verify", {}).items() if v is not None})
    if sub == "verify":
        lemma = vcfg.get("lemma")
        if lemma is None:
            raise ConfigError("missing required key 'lemma' for verify")
        if lemma not in LEMMAS:
            raise ConfigError(f"{_where(lines, 'verify', 'lemma')}unknown lemma {lemma!r}")
        _check_keys({k: v for k, v in vcfg.items() if k != "lemma"}, VERIFY_KEYS[lemma], "verify", lines)
        if lemma == "supinf" and kernel is None:
            raise ConfigError("missing required key 'kernel' for verify supinf")
    elif kernel is None:
        raise ConfigError("missing required key 'kernel'")

    seed = overrides.get("seed")
    if seed is None:
        seed = data.get("seed")
    if seed is None and not (sub == "verify" and vcfg.get("lemma") in DETERMINISTIC_LEMMAS):
        raise ConfigError("missing required key 'seed' (no default seed is used)")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError(f"{_where(lines, '', 'seed')}seed must be a nonnegative integer")
    threads = overrides.get("threads") or data.get("threads", 1)
    out = overrides.get("out") or data.get("out", "results")
    return ExperimentConfig(sub, kernel, kparams, tables["grid"], tables["mcmc"], tables["sweep"],
                            tables["she"], vcfg, seed, str(out), int(threads), data)


# ---------------------------------------------------------------------------
# pipelines


def _settings(mc: dict, n_steps: int) -> McmcSettings:
    samples = max(int(mc["samples"]), 1)
    burn = int(mc["burn_in"])
    chains = int(mc["chains"])
    return McmcSettings(block_length=min(int(mc["block_length"]), n_steps),
                        sweeps=burn + max(1, samples * int(mc["thin"]) // chains), burn_in=burn, thin=int(mc["thin"]), free_fraction=float(mc["free_fraction"]),
                        chains=chains, init=str(mc["init"]))


def _betas(cfg: ExperimentConfig) -> list:
    return [float(b) for b in cfg.sweep.get("beta", [cfg.build_kernel().beta])]


def run_clt(cfg: ExperimentConfig):
    g = cfg.grid
    rows, ends, checks = [], [], {}
    for beta in _betas(cfg):
        kernel = cfg.build_kernel(beta=beta)
        res = transfer.transfer_clt(kernel, float(g["L"]), float(g["dt"]), int(g["N"]), cfg.seed)
        row = res.record()
        row["kernel_beta"] = row.pop("beta")
        row["beta"] = beta
        checks[f"beta={beta}:row_stochastic"] = bool(res.chain.row_defect <= 1e-6)
        if int(cfg.mcmc["samples"]) > 0:
            grid = PathGrid(float(g["T"]), float(g["dt"]), kernel.d)
            stats = estimate_endpoint(GibbsConfig(kernel, grid, _settings(cfg.mcmc, grid.n_steps), cfg.seed))
            v, se = stats.pooled_variance, stats.pooled_stderr
            row.update(T=grid.horizon, mcmc_variance=v, mcmc_stderr=se, n_eff=stats.n_eff)
            if kernel.beta == 0:
                checks[f"beta={beta}:variance_one"] = bool(abs(v - 1.0) <= 3 * se)
            else:
                checks[f"beta={beta}:variance_in_unit_interval"] = bool(v + 3 * se > 0 and v - 3 * se < 1)
            for i, x in enumerate(stats.samples):
                ends.append({"beta": beta, "index": i, **{f"w{c}": float(x[c]) for c in range(x.shape[0])}})
        rows.append(row)
    files = {"clt.csv": (rows, None), "clt.json": {"runs": rows}}
    if ends:
        files["endpoints.csv"] = (ends, ["beta", "index"] + [f"w{c}" for c in range(len(ends[0]) - 2)])
    return files, checks


def run_spectrum(cfg: ExperimentConfig):
    g = cfg.grid
    rows, checks = [], {}
    for beta in _betas(cfg):
        kernel = cfg.build_kernel(beta=beta)
        for L in cfg.sweep.get("L", [g["L"]]):
            ens = transfer.sample_block_measure(kernel, float(L), float(g["dt"]), int(g["N"]), cfg.seed)
            op = transfer.build_operator(ens)
            spec = transfer.perron_eigenpair(op)
            chain = transfer.tilted_chain(spec, op)
            rows.append({"beta": beta, "L": float(L), "dt": float(g["dt"]), "N": ens.n, "lambda0": spec.lambda0,
                         "log_lambda0": spec.log_lambda0, "delta": spec.delta, "gap": spec.gap,
                         "residual": spec.residual, "row_defect": chain.row_defect, "log_z": ens.log_z,
                         "ess": ens.ess, "free_energy_rate": (ens.log_z + spec.log_lambda0) / float(L),
                         "seed": cfg.seed})
            key = f"beta={beta},L={L}"
            checks[f"{key}:row_stochastic"] = bool(chain.row_defect <= 1e-6)
            if kernel.beta == 0:
                checks[f"{key}:lambda0_one"] = bool(abs(spec.lambda0 - 1.0) <= 1e-10)
    return {"spectrum.csv": (rows, None), "spectrum.json": {"runs": rows}}, checks


def run_she(cfg: ExperimentConfig):
    g, s = cfg.grid, cfg.she
    kernel_params = {**PRESET_DEFAULTS["mollifier_product"], **cfg.kernel_params}
    if cfg.kernel != "mollifier_product":
        raise ConfigError("the she subcommand needs kernel = 'mollifier_product'")
    d = int(kernel_params["d"])
    pair = she.MollifierPair(time_half_width=float(kernel_params["time_half_width"]),
                             radius=float(kernel_params["radius"]), d=d)
    beta = float(kernel_params["beta"])
    dt, L, N = float(g["dt"]), float(g["L"]), int(g["N"])
    x = s["x"] if s["x"] is not None else [0.0] * d
    u0 = she.InitialCondition(str(s["u0"]), d)
    mc = cfg.mcmc
    base = she.SheConfig(beta=beta, t=float(s["t"]), x=tuple(x), eps=1.0, u0=u0, d=d, dt=dt,
                         samples=max(int(mc["samples"]), 1), mcmc=_settings(mc, 10 ** 9), pair=pair,
                         seed=cfg.seed)
    sigma2 = 1.0 if beta == 0 else she.transfer_sigma2(pair, beta, L, dt, N, cfg.seed)
    rows, checks = [], {}
    for eps in cfg.sweep.get("eps", [0.5]):
        c = base.replace(eps=float(eps))
        est = she.annealed_ratio(c, str(s["method"]), L=L, N=N)
        ref = she.homogenized_reference(c.t, c.x, u0, sigma2)
        rel = abs(est.value - ref) / abs(ref) if ref != 0 else math.inf
        rows.append(she.HomogenizationReport(d, beta, c.t, c.x, c.eps, est.value, est.stderr, ref,
                                             she.homogenized_reference(c.t, c.x, u0, math.sqrt(sigma2)),
                                             sigma2, rel, math.nan, math.nan, cfg.seed).row())
    smallest = min(rows, key=lambda r: r["eps"])
    checks["relative_error_at_smallest_eps"] = bool(smallest["rel_err"] <= float(s["tolerance"]))
    cols = list(she.HomogenizationReport.columns(d))
    return {"she.csv": (rows, cols), "she.json": {"sigma2": sigma2, "runs": rows}}, checks


def _verify_reports(cfg: ExperimentConfig) -> list:
    v = cfg.verify
    lemma = v["lemma"]
    seed = cfg.seed
    if lemma == "simplex":
        return [verify.simplex_identity_check(float(v.get("a", 0.25)), int(v.get("n", 1)),
                                              float(v.get("rtol", 1e-4)))]
    if lemma == "khasminskii":
        pot = verify.RadialPower(float(v.get("c", 0.15)), float(v.get("p", 1.5)))
        return [verify.khasminskii_check(pot, int(v.get("d", 3)), n_steps=int(v.get("n_steps", 256)),
                                         draws=int(v.get("draws", 20000)), seed=seed,
                                         eta=float(v.get("eta", 0.01)))]
    if lemma == "grr":
        kind = v.get("field", "coulomb")
        eps, delta = float(v.get("eps", 0.4)), float(v.get("delta", 0.25))
        if kind == "coulomb":
            return verify.coulomb_grr_sweep(int(v.get("n_paths", 20)), float(v.get("dt", 1 / 512)), delta, eps,
                                            radius=float(v.get("radius", 0.5)),
                                            n_points=int(v.get("n_points", 120)), seed=seed)
        f = {"linear": verify.LinearField(), "constant": verify.ConstantField()}.get(kind)
        if f is None:
            raise ConfigError(f"unknown grr field {kind!r}")
        return [verify.grr_bound_check(f, np.zeros(3), float(v.get("radius", 1.0)), delta, eps,
                                       n_points=int(v.get("n_points", 200)), seed=seed)]
    if lemma == "delta_moment":
        return [verify.delta_moment_check(float(v.get("x1", 0.25)), float(v.get("x2", 0.75)),
                                          float(v.get("kappa", 0.05)), int(v.get("n", 1)),
                                          float(v.get("eps", 0.3)), int(v.get("draws", 20000)),
                                          float(v.get("dt", 1 / 4096)), seed)]
    if lemma == "supinf":
        kernel = cfg.build_kernel()
        ens = transfer.sample_block_measure(kernel, float(cfg.grid["L"]), float(cfg.grid["dt"]),
                                            int(cfg.grid["N"]), seed)
        return [verify.supinf_maximizer_check(kernel, ens, float(v.get("ratio_cap", 1e3)))]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    n = int(v.get("samples", 100000))
    shift = float(v.get("shift", 0.5))
    a, b = rng.standard_normal(n), rng.standard_normal(n) + shift
    rep = verify.pinsker_report(a, b, int(v.get("bins", 40)), seed)
    rep.details["closed_form_tv"] = verify.gaussian_tv(shift)
    return [rep]


def run_verify(cfg: ExperimentConfig):
    reports = _verify_reports(cfg)
    recs = [r.record() for r in reports]
    checks = {f"{cfg.verify['lemma']}[{i}]": bool(r.passed) for i, r in enumerate(reports)}
    name = f"verify_{cfg.verify['lemma']}.json"
    return {name: recs[0] if len(recs) == 1 else {"reports": recs}}, checks


PIPELINES = {"clt": run_clt, "spectrum": run_spectrum, "she": run_she, "verify": run_verify}


def run(cfg: ExperimentConfig) -> tuple[int, list]:
    """Execute the pipeline, write outputs and the manifest; status 0 iff all checks pass."""
    _set_threads(cfg.threads)
    outputs, checks = PIPELINES[cfg.subcommand](cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(outputs):
        payload = outputs[name]
        if name.endswith(".csv"):
            rows, cols = payload
            written.append(emit.write_csv(out / name, rows, cols))
        else:
            written.append(emit.write_json(out / name, payload))
    ok = all(checks.values())
    manifest = {"artifact": "pathgibbs", "version": __version__, "config": cfg.echo(), "seed": cfg.seed,
                "outputs": sorted(p.name for p in written), "checks": checks, "pass": ok}
    written.append(emit.write_json(out / "manifest.json", manifest))
    return (0 if ok else 1), written


def _set_threads(n: int):
    import warnings

    import numba

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathgibbs", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("lemma", nargs="?", choices=LEMMAS, help="lemma for the verify subcommand")
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--seed", type=int, help="master seed (required unless set in the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="numba worker threads")
    p.add_argument("--a", type=float, help="exponent a for verify simplex")
    p.add_argument("--n", type=int, help="order n for verify simplex / delta_moment")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = args.config.read_text() if args.config else ""
    if args.subcommand != "verify" and args.lemma:
        print("error: a lemma is only accepted by verify", file=sys.stderr)
        return 2
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads,
                 "verify": {"lemma": args.lemma, "a": args.a, "n": args.n}}
    if args.subcommand != "verify":
        overrides.pop("verify")
    try:
        cfg = parse_config(text, args.subcommand, overrides)
        status, _ = run(cfg)
    except (ConfigError, RejectedParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
