"""Experiment configuration and the phase / crossover / verify runs behind the CLI."""

from __future__ import annotations

import copy
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adiabatic import CrossoverSetup
from .errors import ConfigError
from .geophase import abelian_phase, closed_limit_phase, gauge_transform, wrap
from .models import CHANNELS, SpinHalfModel, coherence_track_index
from .path import sample_family, track_blocks
from .spectral import JordanBlockBasis, JordanDecomposition, decompose, verify

FORMATS = ("csv", "json", "svg")

DEFAULTS = {
    "model": {"B": 1.0, "theta": math.pi / 3, "mu": 1.0},
    "n_grid": 1024,
    "cluster_tol": None,
    "phase": {
        "channels": ["dephasing", "spontaneous-emission", "bit-flip"],
        "betas": [0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
    },
    "crossover": {
        "channel": "dephasing",
        "beta": 0.1,
        "B_values": [1.0, 2.0],
        "T_grid": [float(t) for t in np.linspace(5.0, 100.0, 20)],
    },
    "verify": {
        "n_grid": 256,
        "beta": 0.1,
        "channels": ["dephasing", "spontaneous-emission", "bit-flip"],
        "inject_perturbation": False,
    },
    "out": "results",
    "formats": ["csv", "json", "svg"],
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_config(base: dict, extra: dict, where: str = "") -> dict:
    for key, value in extra.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {name!r} must be an object")
            merge_config(base[key], value, name + ".")
        else:
            base[key] = value
    return base


def set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def _number(v, name, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{name} must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{name} must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{name} must be nonnegative")
    return v


def _numbers(v, name, **kw) -> list:
    if not isinstance(v, list) or len(v) == 0:
        raise ConfigError(f"{name} must be a nonempty list")
    return [_number(x, f"{name}[{i}]", **kw) for i, x in enumerate(v)]


def _grid(v, name) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 16:
        raise ConfigError(f"{name} must be an integer >= 16, got {v!r}")
    return v


def _channels(v, name) -> list:
    if not isinstance(v, list) or len(v) == 0:
        raise ConfigError(f"{name} must be a nonempty list")
    for c in v:
        if c not in CHANNELS:
            raise ConfigError(f"{name}: unknown channel {c!r}")
    return list(v)


@dataclass(frozen=True)
class ExperimentConfig:
    B: float
    theta: float
    mu: float
    n_grid: int
    cluster_tol: float | None
    channels: tuple
    betas: tuple
    crossover_channel: str
    crossover_beta: float
    B_values: tuple
    T_grid: tuple
    verify_n_grid: int
    verify_beta: float
    verify_channels: tuple
    inject_perturbation: bool
    out: str
    formats: tuple

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg = merge_config(default_config(), raw)
        m, ph, cx, vf = cfg["model"], cfg["phase"], cfg["crossover"], cfg["verify"]
        theta = _number(m["theta"], "model.theta")
        if not 0 < theta < math.pi:
            raise ConfigError("model.theta must lie in (0, pi)")
        tol = cfg["cluster_tol"]
        if tol is not None:
            tol = _number(tol, "cluster_tol", nonneg=True)
        formats = cfg["formats"]
        if isinstance(formats, str):
            formats = [f for f in formats.split(",") if f]
        if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
            raise ConfigError(f"formats must be a nonempty subset of {FORMATS}")
        if cx["channel"] not in CHANNELS:
            raise ConfigError(f"crossover.channel: unknown channel {cx['channel']!r}")
        if not isinstance(vf["inject_perturbation"], bool):
            raise ConfigError("verify.inject_perturbation must be true or false")
        if not isinstance(cfg["out"], str) or not cfg["out"]:
            raise ConfigError("out must be a nonempty path")
        return cls(
            B=_number(m["B"], "model.B", positive=True),
            theta=theta,
            mu=_number(m["mu"], "model.mu", positive=True),
            n_grid=_grid(cfg["n_grid"], "n_grid"),
            cluster_tol=tol,
            channels=tuple(_channels(ph["channels"], "phase.channels")),
            betas=tuple(_numbers(ph["betas"], "phase.betas", nonneg=True)),
            crossover_channel=cx["channel"],
            crossover_beta=_number(cx["beta"], "crossover.beta", nonneg=True),
            B_values=tuple(_numbers(cx["B_values"], "crossover.B_values", positive=True)),
            T_grid=tuple(_numbers(cx["T_grid"], "crossover.T_grid", positive=True)),
            verify_n_grid=_grid(vf["n_grid"], "verify.n_grid"),
            verify_beta=_number(vf["beta"], "verify.beta", nonneg=True),
            verify_channels=tuple(_channels(vf["channels"], "verify.channels")),
            inject_perturbation=vf["inject_perturbation"],
            out=cfg["out"],
            formats=tuple(formats),
        )

    def model(self, **kw) -> SpinHalfModel:
        base = SpinHalfModel(B=self.B, theta=self.theta, mu=self.mu)
        return base.with_(**kw)


def thread_count() -> int:
    raw = os.environ.get("HOLOQ_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"HOLOQ_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"HOLOQ_THREADS must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Ordered map, run on up to ``threads`` worker threads."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# --- phase sweep ----------------------------------------------------------------

def phase_point(model: SpinHalfModel, n_grid: int, cluster_tol=None) -> list:
    """Geometric phases of both coherence blocks for one model."""
    tracks = track_blocks(sample_family(model.path(n_grid), model), cluster_tol)
    rows = []
    for block_id, upper in (("-+", True), ("+-", False)):
        track = tracks[coherence_track_index(tracks, upper)]
        ph = abelian_phase(track)
        rows.append({
            "channel": model.channel,
            "beta": float(model.beta),
            "block_id": block_id,
            "re_gamma": ph.real,
            "im_gamma": ph.imag,
            "re_gamma_mod_2pi": ph.mod_2pi,
            "n_grid": n_grid,
            "cluster_tol": float(track.cluster_tol),
        })
    return rows


def run_phase(cfg: ExperimentConfig, threads=None) -> list:
    jobs = [cfg.model(channel=c, beta=b) for c in cfg.channels for b in cfg.betas]
    chunks = parallel_map(lambda m: phase_point(m, cfg.n_grid, cfg.cluster_tol), jobs, threads)
    return [row for chunk in chunks for row in chunk]


# --- crossover sweep ------------------------------------------------------------

def run_crossover(cfg: ExperimentConfig, threads=None) -> list:
    """One report per field magnitude, each evaluated on the whole T grid."""
    models = [cfg.model(B=b, channel=cfg.crossover_channel, beta=cfg.crossover_beta)
              for b in cfg.B_values]
    setups = parallel_map(
        lambda m: CrossoverSetup(m, m.path(cfg.n_grid), cluster_tol=cfg.cluster_tol),
        models, threads)
    reports = []
    for m, setup in zip(models, setups):
        meta = {"B": m.B, "theta": m.theta, "channel": m.channel, "beta": m.beta,
                "n_grid": cfg.n_grid}
        reports.append(setup.report(cfg.T_grid, meta))
    return reports


# --- verify suite -----------------------------------------------------------------

def _check(name, channel, value, threshold, expect="below"):
    if expect == "below":
        passed = bool(value <= threshold)
    else:
        passed = bool(value > threshold)
    return {"name": name, "channel": channel, "value": float(value),
            "threshold": float(threshold), "expect": expect, "passed": passed}


def verify_channel(cfg: ExperimentConfig, channel: str) -> list:
    model = cfg.model(channel=channel, beta=cfg.verify_beta)
    path = model.path(cfg.verify_n_grid)
    rng = np.random.default_rng(12345)
    biorth = chain = complete = comm = 0.0
    for s in path.grid[:-1]:
        r = path.at(s)
        L = model(r).matrix
        dec = decompose(L, cfg.cluster_tol)
        if cfg.inject_perturbation:
            # corrupt the right basis after decomposition: residuals must notice
            blocks = tuple(
                JordanBlockBasis(b.eigenvalue,
                                 b.right + 1e-6 * rng.normal(size=b.right.shape), b.left)
                for b in dec.blocks)
            dec = JordanDecomposition(blocks, dec.dim, dec.cluster_tol, dec.clusters)
        res = verify(dec, L)
        biorth = max(biorth, res.biorthonormality)
        chain = max(chain, res.chain)
        complete = max(complete, res.completeness)
        ham, diss = model.parts(r)
        comm = max(comm, float(np.max(np.abs(ham.matrix @ diss.matrix
                                             - diss.matrix @ ham.matrix))))
    checks = [
        _check("biorthonormality", channel, biorth, 1e-10),
        _check("completeness", channel, complete, 1e-8),
        _check("chain_relations", channel, chain, 1e-8),
    ]
    if channel == "bit-flip" and cfg.verify_beta > 0:
        checks.append(_check("commutator_H_R", channel, comm, 1e-10, expect="nonzero"))
    else:
        checks.append(_check("commutator_H_R", channel, comm, 1e-10))

    tracks = track_blocks(sample_family(path, model), cfg.cluster_tol)
    track = tracks[coherence_track_index(tracks)]
    base = abelian_phase(track).gamma
    s = track.s
    chi = np.exp(0.3 * np.sin(2 * np.pi * s + rng.uniform(0, 2 * np.pi)))
    nu = 1.7 * np.cos(2 * np.pi * s + rng.uniform(0, 2 * np.pi))
    scaled = gauge_transform([track], chi * np.exp(1j * nu))[0]
    moved = abelian_phase(scaled).gamma
    checks.append(_check("scalar_gauge_invariance", channel, abs(moved - base), 1e-8))
    return checks


def verify_closed_limit(cfg: ExperimentConfig) -> dict:
    model = cfg.model(channel="none", beta=0.0)
    n = max(cfg.verify_n_grid, 256)
    path = model.path(n)
    tracks = track_blocks(sample_family(path, model), cfg.cluster_tol)
    open_phase = abelian_phase(tracks[coherence_track_index(tracks)]).real
    closed = closed_limit_phase(model.hamiltonian, path)
    diff = closed.difference(0, 1)
    return _check("closed_limit", "none", abs(wrap(open_phase - diff)), 1e-6)


def run_verify(cfg: ExperimentConfig, threads=None) -> dict:
    chunks = parallel_map(lambda c: verify_channel(cfg, c), cfg.verify_channels, threads)
    checks = [c for chunk in chunks for c in chunk]
    checks.append(verify_closed_limit(cfg))
    return {"checks": checks, "all_passed": all(c["passed"] for c in checks)}
