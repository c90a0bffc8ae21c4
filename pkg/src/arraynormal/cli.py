"""Command-line front end: ``arraynormal <command> [options]``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Every command writes into the ``--out`` directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import Chain, SamplerError, run_gibbs
from .config import (ConfigError, build_gibbs, build_mle, build_prior, covariance_from_spec,
                     identity_flags, load_config, resolve_modes)
from .diagnostics import correlation_summary, ess, ppc
from .distribution import ArrayNormal, SeparableCovariance, sample
from .io import (DataError, TensorFile, config_hash, load_chain, read_tensor, save_chain,
                 write_csv, write_json, write_npz, write_tensor)
from .linalg import RNG_ALGORITHM, SpdMatrix, make_rng, spawn_rngs
from .mle import fit_mle

logger = logging.getLogger("arraynormal")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# --------------------------------------------------------------------------
# shared plumbing

def _effective_config(args) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    for flag, key in (("iters", "iters"), ("burn_in", "burn_in"), ("thin", "thin"),
                      ("chains", "chains")):
        val = getattr(args, flag)
        if val is not None:
            cfg["sampler"][key] = val
    return cfg


def _require_seed(cfg: dict) -> int:
    seed = cfg.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return seed


def _metadata(command: str, cfg: dict, **extra) -> dict:
    meta = {"command": command, "version": __version__, "seed": cfg.get("seed"),
            "rng": RNG_ALGORITHM, "config_hash": config_hash(cfg), "config": cfg}
    meta.update(extra)
    return meta


def _out_dir(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_data(args) -> TensorFile:
    if args.data is None:
        raise ConfigError("--data is required")
    try:
        tf = read_tensor(args.data)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from exc
    if len(tf.dims) < 2:
        raise DataError("data need at least one mode plus a trailing replication mode")
    return tf


def _matrix_rows(labels, A):
    return ([lab] + [float(x) for x in row] for lab, row in zip(labels, np.asarray(A)))


def _write_matrix(path: Path, labels, A) -> None:
    write_csv(path, [""] + list(labels), _matrix_rows(labels, A))


# --------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    seed = _require_seed(cfg)
    out = _out_dir(args)
    sim = cfg["simulate"]
    dims = [int(d) for d in sim["dims"]]
    if len(dims) < 2 or min(dims) < 1:
        raise ConfigError("simulate.dims needs at least two positive entries")
    names = sim["modes"] or [f"mode{k + 1}" for k in range(len(dims))]
    if len(names) != len(dims):
        raise ConfigError("simulate.modes must name every mode")
    specs = sim["covariances"] or [None] * len(dims)
    if len(specs) != len(dims):
        raise ConfigError("simulate.covariances needs one entry per mode")
    frac = float(sim["missing_fraction"])
    if not 0 <= frac < 1:
        raise ConfigError("simulate.missing_fraction must lie in [0, 1)")

    rng = make_rng(seed)
    comps = [covariance_from_spec(s, m, rng) for s, m in zip(specs, dims)]
    try:
        cov = SeparableCovariance(tuple(SpdMatrix(S) for S in comps))
    except np.linalg.LinAlgError as exc:
        raise ConfigError(f"truth covariance is not positive definite: {exc}") from exc
    mdims = tuple(dims[:-1])
    mean_spec = sim["mean"] or {"type": "zero"}
    kind = mean_spec.get("type", "zero")
    if kind == "zero":
        M = np.zeros(mdims)
    elif kind == "normal":
        M = float(mean_spec.get("scale", 1.0)) * rng.standard_normal(int(np.prod(mdims))).reshape(mdims, order="F")
    elif kind == "prior":
        kappa0 = float(mean_spec.get("kappa0", 1.0))
        M = sample(ArrayNormal(np.zeros(mdims), SeparableCovariance(
            tuple(SpdMatrix(S / kappa0 ** (1 / len(mdims))) for S in comps[:-1]))), rng)
    else:
        raise ConfigError(f"unknown simulate.mean type {kind!r}")
    Y = sample(ArrayNormal(np.repeat(M[..., None], dims[-1], axis=-1), cov), rng)
    mask = np.zeros(Y.shape, dtype=bool)
    n_miss = int(round(frac * Y.size))
    if n_miss:
        cells = rng.choice(Y.size, size=n_miss, replace=False)
        flat = mask.reshape(-1, order="F")
        flat[cells] = True
        mask = flat.reshape(Y.shape, order="F")
    try:
        tf = TensorFile(Y, mask, list(names), dict(sim["labels"] or {}))
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    write_tensor(out / "data.tensor", tf, encoding=sim["encoding"])
    truth = {"M": M, "seed": np.array(seed)}
    for k, S in enumerate(comps):
        truth[f"Sigma_{k}"] = S
    write_npz(out / "truth.npz", truth, {"modes": list(names), "dims": dims})
    write_json(out / "metadata.json", _metadata("simulate", cfg, n_missing=n_miss))
    print(f"wrote {out / 'data.tensor'} dims={tuple(dims)} missing={n_miss}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fit-mle

def cmd_fit_mle(args) -> int:
    cfg = _effective_config(args)
    out = _out_dir(args)
    tf = _read_data(args)
    if tf.n_missing:
        raise DataError(f"maximum likelihood needs complete data; {tf.n_missing} cells are missing")
    if cfg["model"]["dependent_last_mode"]:
        raise ConfigError("fit-mle treats the last mode as i.i.d. replicates; "
                          "set model.dependent_last_mode to false")
    flags = identity_flags(cfg, tf.modes)
    data_modes = tf.modes[:-1]
    mcfg = build_mle(cfg)
    idm = [k for k, f in enumerate(flags[:-1]) if f]
    m = int(np.prod(tf.dims[:-1]))
    for k in range(len(data_modes)):
        if not flags[k] and tf.dims[-1] * m // tf.dims[k] <= tf.dims[k]:
            raise DataError(f"mode {k + 1} ({data_modes[k]}): too few replicates for an "
                            f"estimable {tf.dims[k]} x {tf.dims[k]} covariance")
    res = fit_mle(tf.values, mcfg, identity_modes=idm)
    comps = {name: res.cov_hat.comps[k].values for k, name in enumerate(data_modes) if not flags[k]}
    corrs = {name: res.cov_hat.comps[k].correlation() for k, name in enumerate(data_modes)
             if not flags[k]}
    report = {"dims": list(tf.dims), "modes": tf.modes, "converged": res.converged,
              "iters": res.iters, "loglik": res.loglik, "loglik_trace": res.loglik_trace,
              "identity_modes": [data_modes[k] for k in idm], "covariances": comps,
              "correlations": corrs}
    write_json(out / "report.json", report)
    write_csv(out / "loglik_trace.csv", ["sweep", "loglik"], enumerate(res.loglik_trace))
    write_tensor(out / "mean.tensor", TensorFile(res.mean_hat, None, data_modes,
                 {k: v for k, v in tf.labels.items() if k in data_modes}))
    for k, name in enumerate(data_modes):
        if not flags[k]:
            _write_matrix(out / f"cov_{name}.csv", tf.level_labels(k), comps[name])
    write_json(out / "metadata.json", _metadata("fit-mle", cfg))
    status = "converged" if res.converged else "NOT converged"
    print(f"flip-flop {status} after {res.iters} sweeps, loglik {res.loglik:.6f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fit-bayes

def _run_chain(task):
    Y, mask, prior, gcfg, rng = task
    return run_gibbs(Y, prior, gcfg, mask=mask, rng=rng)


def _ess_rows(chain: Chain, names):
    rows = []
    series = [("gamma0", chain.gamma0)]
    series += [(f"gamma_{names[k]}", chain.gamma_k[:, k]) for k in sorted(chain.Sigma)]
    series += [("loglik", chain.loglik)]
    if chain.meta.get("gamma_sampled"):
        series.insert(0, ("gamma", chain.gamma))
    for label, x in series:
        try:
            val = ess(x)
        except ValueError:
            val = float("nan")
        rows.append((label, val))
    return rows


def _write_chain_artifacts(out: Path, chain: Chain, tf: TensorFile, meta: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_chain(out / "chain.npz", chain, {"modes": tf.modes, "labels": tf.labels,
                                          "config_hash": meta["config_hash"]})
    est = sorted(chain.Sigma)
    header = ["iter"]
    if chain.meta.get("gamma_sampled"):
        header.append("gamma")
    header += ["gamma0"] + [f"gamma_{tf.modes[k]}" for k in est] + ["loglik"]

    def rows():
        for s, it in enumerate(chain.meta["saved_iters"]):
            r = [it]
            if chain.meta.get("gamma_sampled"):
                r.append(float(chain.gamma[s]))
            r += [float(chain.gamma0[s])] + [float(chain.gamma_k[s, k]) for k in est]
            yield r + [float(chain.loglik[s])]

    write_csv(out / "trace.csv", header, rows())
    write_csv(out / "ess.csv", ["quantity", "ess"], _ess_rows(chain, tf.modes))
    write_json(out / "metadata.json", meta)


def cmd_fit_bayes(args) -> int:
    cfg = _effective_config(args)
    seed = _require_seed(cfg)
    out = _out_dir(args)
    tf = _read_data(args)
    prior = build_prior(cfg, tf.dims, tf.modes)
    gcfg = build_gibbs(cfg)
    if gcfg.n_saved < 1:
        raise ConfigError("no states would be saved; raise iters or lower burn_in/thin")
    n_chains = int(cfg["sampler"]["chains"])
    if n_chains < 1:
        raise ConfigError("chains must be at least 1")
    mask = tf.mask if tf.n_missing else None
    rngs = [make_rng(seed)] if n_chains == 1 else spawn_rngs(seed, n_chains)
    tasks = [(tf.values, mask, prior, gcfg, r) for r in rngs]
    if n_chains == 1:
        chains = [_run_chain(tasks[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(n_chains, 8)) as pool:
            chains = list(pool.map(_run_chain, tasks))
    base = _metadata("fit-bayes", cfg, chains=n_chains)
    for i, chain in enumerate(chains):
        chain.meta["gamma_sampled"] = prior.gamma_prior is not None
        target = out if n_chains == 1 else out / f"chain_{i + 1}"
        meta = dict(base, chain=i + 1, n_saved=len(chain),
                    estimated_modes=[tf.modes[k] for k in sorted(chain.Sigma)])
        _write_chain_artifacts(target, chain, tf, meta)
        print(f"chain {i + 1}: {len(chain)} saved states -> {target}")
    return EXIT_OK


# --------------------------------------------------------------------------
# ppc

def cmd_ppc(args) -> int:
    cfg = _effective_config(args)
    seed = _require_seed(cfg)
    out = _out_dir(args)
    tf = _read_data(args)
    if args.chain is None:
        raise ConfigError("--chain is required")
    chain = load_chain(args.chain)
    if tuple(chain.dims) != tuple(tf.dims):
        raise DataError(f"chain dims {chain.dims} do not match data dims {tf.dims}")
    p = cfg["ppc"]
    modes = (resolve_modes(p["modes"], tf.modes) if p["modes"] is not None
             else list(range(len(tf.dims) - 1)))
    draws = int(p["draws"])
    if draws < 1:
        raise ConfigError("ppc.draws must be at least 1")
    reports = ppc(tf.values, chain, modes, draws, make_rng(seed),
                  mask=tf.mask if tf.n_missing else None, level=float(p["level"]))
    names = [tf.modes[r.mode] for r in reports]
    write_csv(out / "ppc_summary.csv",
              ["mode", "statistic", "observed", "tail_probability", "upper_tail",
               "interval_lo", "interval_hi"],
              ([nm, f"t_{nm}", r.observed, r.tail_probability, r.upper_tail, *r.interval]
               for nm, r in zip(names, reports)))
    write_csv(out / "ppc_predictive.csv", ["draw"] + [f"t_{nm}" for nm in names],
              ([i] + [float(r.predictive[i]) for r in reports] for i in range(draws)))
    write_csv(out / "ppc_observed.csv", ["statistic", "observed"],
              ([f"t_{nm}", r.observed] for nm, r in zip(names, reports)))
    write_json(out / "metadata.json", _metadata("ppc", cfg, chain_config_hash=chain.meta.get("config_hash")))
    for nm, r in zip(names, reports):
        print(f"t_{nm}: observed {r.observed:.4f}, tail probability {r.tail_probability:.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# summarize

def cmd_summarize(args) -> int:
    out = _out_dir(args)
    if args.chain is None:
        raise ConfigError("--chain is required")
    chain = load_chain(args.chain)
    names = chain.meta.get("modes") or [f"mode{k + 1}" for k in range(len(chain.dims))]
    labels = chain.meta.get("labels") or {}
    summary = {}
    for k in sorted(chain.Sigma):
        name = names[k]
        labs = labels.get(name) or [f"{name}_{i + 1}" for i in range(chain.dims[k])]
        R, w, V = correlation_summary(chain.Sigma[k])
        _write_matrix(out / f"corr_{name}.csv", labs, R)
        write_csv(out / f"eigenvalues_{name}.csv", ["index", "eigenvalue"],
                  ((i + 1, float(x)) for i, x in enumerate(w)))
        write_csv(out / f"eigenvectors_{name}.csv",
                  ["label"] + [f"v{j + 1}" for j in range(V.shape[1])], _matrix_rows(labs, V))
        summary[name] = {"labels": labs, "eigenvalues": w}
    write_json(out / "summary.json", summary)
    print(f"summarized modes: {', '.join(summary)}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="input tensor file")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    common.add_argument("--iters", type=int, help="total Gibbs iterations")
    common.add_argument("--burn-in", type=int, dest="burn_in", help="iterations discarded")
    common.add_argument("--thin", type=int, help="keep every THIN-th state")
    common.add_argument("--chains", type=int, help="independent chains run in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="arraynormal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="draw a dataset from an array normal model")
    sub.add_parser("fit-mle", parents=[common], help="flip-flop maximum likelihood")
    sub.add_parser("fit-bayes", parents=[common], help="Gibbs sampler")
    p = sub.add_parser("ppc", parents=[common], help="posterior predictive checks")
    p.add_argument("--chain", help="chain directory or chain.npz")
    s = sub.add_parser("summarize", parents=[common], help="correlation and eigen summaries")
    s.add_argument("--chain", help="chain directory or chain.npz")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit-mle": cmd_fit_mle, "fit-bayes": cmd_fit_bayes,
            "ppc": cmd_ppc, "summarize": cmd_summarize}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"numeric failure at {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
