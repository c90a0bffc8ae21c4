"""Declarative run configuration for the command-line tools.

A config is one JSON object. Missing keys take the values in
:data:`DEFAULTS`; command-line flags override the file. Mode references are
one-based integers or mode names.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bayes import GibbsConfig, PriorSpec
from .mle import MleConfig

__all__ = ["ConfigError", "DEFAULTS", "load_config", "merge", "resolve_modes",
           "identity_flags", "build_prior", "build_gibbs", "build_mle", "covariance_from_spec"]


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


DEFAULTS: dict[str, Any] = {
    "seed": None,
    "simulate": {
        "dims": [4, 3, 2, 50],
        "modes": None,
        "labels": {},
        "covariances": None,
        "mean": {"type": "zero"},
        "missing_fraction": 0.0,
        "encoding": "text",
    },
    "model": {"identity_modes": [], "dependent_last_mode": False},
    "prior": {"kappa0": 1.0, "nu0": None, "sigma0": "scaled-identity", "gamma": "empirical"},
    "sampler": {"iters": 5000, "burn_in": 1000, "thin": 4, "chains": 1},
    "mle": {"max_iters": 1000, "rel_tol": 1e-8, "init": "identity",
            "scale_norm": "trace-per-mode", "ridge": False},
    "ppc": {"draws": 1000, "modes": None, "level": 0.95},
}


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict) and key != "labels":
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return merge(DEFAULTS, raw)


def resolve_modes(refs: Sequence, names: Sequence[str]) -> list[int]:
    """One-based indices or names to zero-based indices."""
    out = []
    for r in refs:
        if isinstance(r, str):
            if r not in names:
                raise ConfigError(f"unknown mode {r!r}; modes are {list(names)}")
            out.append(list(names).index(r))
        elif isinstance(r, int) and not isinstance(r, bool):
            if not 1 <= r <= len(names):
                raise ConfigError(f"mode {r} out of range 1..{len(names)}")
            out.append(r - 1)
        else:
            raise ConfigError(f"bad mode reference {r!r}")
    if len(set(out)) != len(out):
        raise ConfigError("duplicate mode reference")
    return out


def identity_flags(cfg: dict, names: Sequence[str]) -> tuple[bool, ...]:
    """One flag per data mode; the replication mode is last."""
    K = len(names)
    idm = resolve_modes(cfg["model"]["identity_modes"], names)
    dep = bool(cfg["model"]["dependent_last_mode"])
    if dep and K - 1 in idm:
        raise ConfigError("the replication mode cannot be both dependent and identity")
    flags = [k in idm for k in range(K)]
    if not dep:
        flags[-1] = True
    if all(flags):
        raise ConfigError("at least one mode must carry an estimated covariance")
    return tuple(flags)


def _positive(name: str, x) -> float:
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if not x > 0:
        raise ConfigError(f"{name} must be positive")
    return x


def build_prior(cfg: dict, dims: Sequence[int], names: Sequence[str]) -> PriorSpec:
    flags = identity_flags(cfg, names)
    p = cfg["prior"]
    K = len(dims)
    kappa0 = _positive("prior.kappa0", p["kappa0"])
    if p["nu0"] is None:
        nu0 = [m + 2.0 for m in dims]
    elif isinstance(p["nu0"], (int, float)):
        nu0 = [m + 1.0 + _positive("prior.nu0", p["nu0"]) for m in dims]
    elif isinstance(p["nu0"], list) and len(p["nu0"]) == K:
        nu0 = [float(v) for v in p["nu0"]]
    else:
        raise ConfigError("prior.nu0 must be null, a number (excess over m_k + 1) or one value per mode")
    if p["sigma0"] == "scaled-identity":
        sigma0 = [np.eye(m) / m for m in dims]
    elif isinstance(p["sigma0"], list) and len(p["sigma0"]) == K:
        sigma0 = [np.eye(m) / m if S is None else np.asarray(S, dtype=float) for S, m in zip(p["sigma0"], dims)]
        for k, (S, m) in enumerate(zip(sigma0, dims)):
            if S.shape != (m, m):
                raise ConfigError(f"prior.sigma0 for mode {k + 1} must be {m} x {m}")
    else:
        raise ConfigError("prior.sigma0 must be 'scaled-identity' or one matrix (or null) per mode")
    g = p["gamma"]
    gamma = gamma_prior = None
    if g == "empirical":
        pass
    elif isinstance(g, (int, float)) and not isinstance(g, bool):
        gamma = _positive("prior.gamma", g)
    elif isinstance(g, dict) and set(g) == {"a", "b"}:
        gamma_prior = (_positive("prior.gamma.a", g["a"]), _positive("prior.gamma.b", g["b"]))
    else:
        raise ConfigError("prior.gamma must be 'empirical', a positive number or {'a': .., 'b': ..}")
    try:
        return PriorSpec(M0=np.zeros(tuple(dims[:-1])), Sigma0=tuple(sigma0), nu0=tuple(nu0),
                         identity_flags=flags, kappa0=kappa0, gamma=gamma, gamma_prior=gamma_prior)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"invalid prior: {exc}") from exc


def build_gibbs(cfg: dict) -> GibbsConfig:
    s = cfg["sampler"]
    try:
        return GibbsConfig(n_iters=int(s["iters"]), burn_in=int(s["burn_in"]), thin=int(s["thin"]),
                           seed=int(cfg["seed"]),
                           dependent_last_mode=bool(cfg["model"]["dependent_last_mode"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sampler settings: {exc}") from exc


def build_mle(cfg: dict) -> MleConfig:
    m = cfg["mle"]
    try:
        return MleConfig(max_iters=int(m["max_iters"]), rel_tol=float(m["rel_tol"]),
                         init=m["init"], scale_norm=m["scale_norm"], ridge=bool(m["ridge"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid mle settings: {exc}") from exc


def covariance_from_spec(spec: dict | None, m: int, rng: np.random.Generator) -> np.ndarray:
    """Truth covariance for simulation.

    ``identity``; ``ar1`` with ``rho``; ``exchangeable`` with ``rho``;
    ``random`` (Wishart draw with ``m + 5`` degrees of freedom, scaled to
    mean identity); ``matrix`` with explicit ``values``. Every type accepts a
    ``scale`` multiplier.
    """
    spec = spec or {"type": "identity"}
    kind = spec.get("type", "identity")
    scale = _positive("covariance scale", spec.get("scale", 1.0))
    i = np.arange(m)
    if kind == "identity":
        S = np.eye(m)
    elif kind == "ar1":
        rho = float(spec.get("rho", 0.5))
        if not -1 < rho < 1:
            raise ConfigError("ar1 rho must lie in (-1, 1)")
        S = rho ** np.abs(i[:, None] - i[None, :])
    elif kind == "exchangeable":
        rho = float(spec.get("rho", 0.5))
        if not -1 / max(m - 1, 1) < rho < 1:
            raise ConfigError("exchangeable rho out of range")
        S = (1 - rho) * np.eye(m) + rho
    elif kind == "random":
        df = m + 5
        A = rng.standard_normal((m, df))
        S = A @ A.T / df
    elif kind == "matrix":
        S = np.asarray(spec.get("values"), dtype=float)
        if S.shape != (m, m):
            raise ConfigError(f"covariance matrix must be {m} x {m}")
    else:
        raise ConfigError(f"unknown covariance type {kind!r}")
    return scale * S
