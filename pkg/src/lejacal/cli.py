"""Command line driver: configured calibration runs, plot-ready CSVs.

The interface is deliberately file-centric: a single TOML config
describes the experiment, every run writes CSV tables plus a summary,
and every output carries the tool version, a hash of the resolved
configuration, and the seeds, so a run can be reproduced byte for
byte from its own artifacts.  Unknown config keys are rejected
outright; silent typos in numeric experiments are the main
reproducibility hazard.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from . import testmodels as tm
from .calibrate import (CalibrationSettings, ConvergenceCriterion,
                        posterior_change, run_calibration, write_run_log)
from .diagnostics import (ConvergenceCurve, fit_rate, kl_divergence,
                          lebesgue_constant, lebesgue_curve,
                          lebesgue_table_csv)
from .errors import ConfigError, LejacalError
from .nodes import (GenerationSettings, NodalSequence, clenshaw_curtis,
                    generate_sequence)
from .sampling import (SamplerSettings, chain_csv, propagate,
                       propagation_report, run_mcmc)
from .statmodel import (Prior, beta_likelihood, gaussian_likelihood,
                        normalize, peak_normalized, posterior)
from .surrogate import audit_grid, build, sup_error

_TAGS = ("gauss", "runge", "sinc", "burgers", "custom")
_FAMILIES = ("weighted-leja", "leja", "clenshaw-curtis")
_RECIPES = ("output-noise", "parameter-noise")
_FIT_FLOOR = 1e-13   # rate fits stop at the roundoff plateau

# key -> (default, kind, help); None defaults are resolved per tag
_SCHEMA = {
    "experiment": {
        "tag": ("gauss", "str", "problem: " + ", ".join(_TAGS)),
        "dimension": (1, "int", "parameter dimension (sinc, burgers: 1)"),
    },
    "prior": {
        "kind": ("uniform", "str", "uniform, normal, or beta"),
        "box": (None, "box", "per-dimension [lo, hi]; default: model box"),
        "mean": (None, "floats", "normal prior mean"),
        "std": (None, "floats", "normal prior standard deviations"),
        "alpha": (4.0, "float", "beta prior shape a"),
        "beta": (4.0, "float", "beta prior shape b"),
    },
    "likelihood": {
        "kind": ("gaussian", "str", "gaussian or beta"),
        "sigma": (None, "float", "noise std; default 0.1 (burgers: 0.05)"),
        "truth": (None, "floats",
                  "data-generating parameter; default: quarter point of "
                  "the box (burgers: midpoint)"),
        "n_data": (20, "int", "number of observations"),
        "data_seed": (0, "int", "seed of the synthetic data draw"),
        "recipe": (None, "str",
                   "output-noise or parameter-noise; default output-noise "
                   "(burgers: parameter-noise)"),
    },
    "nodes": {
        "family": ("weighted-leja", "str", ", ".join(_FAMILIES)),
        "families": (None, "strs", "families for the compare verb; "
                                   "default: all three"),
        "budget": (30, "int", "node / model evaluation budget"),
        "zeta": (1e-3, "float", "floor added to |P'| in the adaptive "
                                "weight; must be positive"),
        "schedule": (False, "bool", "adapt zeta between iterations"),
        "k": (2.0, "float", "zeta schedule factor (> 1)"),
        "seed": (0, "int", "node generation and audit grid seed"),
        "n_candidates": (20000, "int", "candidate pool size for d >= 2"),
    },
    "diagnostics": {
        "lebesgue": (False, "bool", "emit a Lebesgue constant table"),
        "kl_vs_truth": (True, "bool", "divergence of each surrogate "
                                      "posterior from the true-model one"),
        "rate_fit": (True, "bool", "append fitted decay rates"),
        "mcmc": (False, "bool", "sample the final surrogate posterior"),
        "kl_threshold": (1e-7, "float", "nodes-to-threshold target"),
        "grid_per_dim": (200, "int", "quadrature resolution per dimension"),
    },
    "mcmc": {
        "n_samples": (10000, "int", "retained samples"),
        "burn_in": (None, "int", "discarded prefix; default: a fifth of "
                                 "n_samples"),
        "proposal_scale": (None, "scale", "random-walk step std (scalar or "
                                          "per-dim); default: auto-tuned"),
        "seed": (0, "int", "chain seed"),
        "thinning": (1, "int", "keep every k-th state"),
    },
    "output": {
        "directory": (".", "str", "artifact directory"),
    },
}


@dataclass
class RunConfig:
    """Resolved, validated experiment configuration."""

    tag: str
    dimension: int
    prior: dict
    likelihood: dict
    nodes: dict
    diagnostics: dict
    mcmc: dict
    out_dir: str

    def resolved(self) -> dict:
        """Everything that shapes the numbers; the artifact directory
        is deliberately left out so relocated reruns hash alike."""
        return {"schema": 1, "experiment":
                {"tag": self.tag, "dimension": self.dimension},
                "prior": self.prior, "likelihood": self.likelihood,
                "nodes": self.nodes, "diagnostics": self.diagnostics,
                "mcmc": self.mcmc}


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.resolved(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _header(cfg: RunConfig) -> list:
    return [f"lejacal {__version__}",
            f"config-hash {config_hash(cfg)}",
            f"seeds data={cfg.likelihood['data_seed']} "
            f"nodes={cfg.nodes['seed']} mcmc={cfg.mcmc['seed']}"]


# -- strict config parsing.

def _line_of(text: str, key: str) -> str:
    for i, ln in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*=", ln):
            return f" (line {i})"
    return ""


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(sec: str, key: str, value, kind: str, text: str):
    where = f"{sec}.{key}{_line_of(text, key)}"
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if kind == "float":
        if not _is_number(value):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if kind == "floats":
        if _is_number(value):
            return [float(value)]
        if (isinstance(value, list) and value
                and all(_is_number(v) for v in value)):
            return [float(v) for v in value]
        raise ConfigError(f"{where}: expected a number or list of numbers")
    if kind == "box":
        ok = (isinstance(value, list) and value
              and all(isinstance(r, list) and len(r) == 2
                      and all(_is_number(v) for v in r) for r in value))
        if not ok:
            raise ConfigError(f"{where}: expected a list of [lo, hi] pairs")
        return [[float(r[0]), float(r[1])] for r in value]
    if kind == "strs":
        if not (isinstance(value, list) and value
                and all(isinstance(v, str) for v in value)):
            raise ConfigError(f"{where}: expected a list of strings")
        return list(value)
    # "scale": scalar or per-dimension list
    if _is_number(value):
        return float(value)
    if (isinstance(value, list) and value
            and all(_is_number(v) for v in value)):
        return [float(v) for v in value]
    raise ConfigError(f"{where}: expected a number or list of numbers")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _validate(cfg: RunConfig) -> None:
    _require(cfg.tag in _TAGS, f"experiment.tag must be one of {_TAGS}")
    _require(cfg.dimension >= 1, "experiment.dimension must be >= 1")
    if cfg.tag in ("sinc", "burgers"):
        _require(cfg.dimension == 1, f"{cfg.tag} is univariate")
    p, lk, nd_, dg, mc = (cfg.prior, cfg.likelihood, cfg.nodes,
                          cfg.diagnostics, cfg.mcmc)
    _require(p["kind"] in ("uniform", "normal", "beta"),
             "prior.kind must be uniform, normal, or beta")
    _require(p["alpha"] > 0 and p["beta"] > 0,
             "beta prior shapes must be positive")
    _require(lk["kind"] in ("gaussian", "beta"),
             "likelihood.kind must be gaussian or beta")
    if lk["sigma"] is not None:
        _require(lk["sigma"] > 0, "likelihood.sigma must be positive")
    _require(lk["n_data"] >= 1, "likelihood.n_data must be >= 1")
    if lk["recipe"] is not None:
        _require(lk["recipe"] in _RECIPES,
                 f"likelihood.recipe must be one of {_RECIPES}")
    _require(nd_["family"] in _FAMILIES,
             f"nodes.family must be one of {_FAMILIES}")
    if nd_["families"] is not None:
        for f in nd_["families"]:
            _require(f in _FAMILIES, f"unknown family {f!r} in "
                                     "nodes.families")
    _require(nd_["budget"] >= 1, "nodes.budget must be >= 1")
    _require(nd_["zeta"] > 0.0, "nodes.zeta must be positive; the floor "
                                "keeps the adaptive weight integrable")
    _require(nd_["k"] > 1.0, "nodes.k must exceed 1")
    _require(nd_["n_candidates"] >= 10, "nodes.n_candidates must be >= 10")
    _require(dg["kl_threshold"] > 0, "diagnostics.kl_threshold must be "
                                     "positive")
    _require(dg["grid_per_dim"] >= 10, "diagnostics.grid_per_dim must be "
                                       ">= 10")
    _require(mc["n_samples"] >= 1, "mcmc.n_samples must be >= 1")
    _require(mc["thinning"] >= 1, "mcmc.thinning must be >= 1")
    if mc["burn_in"] is not None:
        _require(mc["burn_in"] >= 0, "mcmc.burn_in must be >= 0")
    if mc["proposal_scale"] is not None:
        vals = np.atleast_1d(mc["proposal_scale"])
        _require(bool(np.all(vals > 0) and np.all(np.isfinite(vals))),
                 "mcmc.proposal_scale must be positive finite")


def parse_config(path) -> RunConfig:
    """Strict-schema TOML parse; unknown keys fail with their location."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    version = raw.pop("schema", 1)
    if version != 1:
        raise ConfigError(f"unsupported schema version {version!r}; "
                          "this tool reads schema = 1")
    for sec in raw:
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown config section "
                              f"[{sec}]{_line_of(text, sec)}")
        if not isinstance(raw[sec], dict):
            raise ConfigError(f"{sec} must be a [section]{_line_of(text, sec)}")

    out = {}
    for sec, keys in _SCHEMA.items():
        got = raw.get(sec, {})
        for key in got:
            if key not in keys:
                raise ConfigError(f"unknown config key "
                                  f"{sec}.{key}{_line_of(text, key)}")
        out[sec] = {}
        for key, (default, kind, _) in keys.items():
            if key in got:
                out[sec][key] = _coerce(sec, key, got[key], kind, text)
            else:
                out[sec][key] = default

    tag = out["experiment"]["tag"]
    lk = out["likelihood"]
    if lk["sigma"] is None:
        lk["sigma"] = 0.05 if tag == "burgers" else 0.1
    if lk["recipe"] is None:
        lk["recipe"] = ("parameter-noise" if tag == "burgers"
                        else "output-noise")
    cfg = RunConfig(tag, out["experiment"]["dimension"], out["prior"],
                    lk, out["nodes"], out["diagnostics"], out["mcmc"],
                    out["output"]["directory"])
    _validate(cfg)
    return cfg


# -- problem construction.

def _base_model(cfg: RunConfig, model=None):
    if cfg.tag == "custom":
        if model is None:
            raise ConfigError("the custom tag needs a model passed through "
                              "the library API; the CLI cannot build one")
        if cfg.prior["box"] is None:
            raise ConfigError("custom experiments must set prior.box")
        if isinstance(model, tm.ForwardModel):
            return model
        return tm.ForwardModel(model, cfg.dimension,
                               np.asarray(cfg.prior["box"], dtype=float),
                               "custom", "custom")
    if model is not None:
        raise ConfigError("a model override is only valid with the "
                          "custom tag")
    if cfg.tag == "gauss":
        return tm.gauss_model(cfg.dimension)
    if cfg.tag == "runge":
        return tm.runge_model(cfg.dimension)
    if cfg.tag == "sinc":
        return tm.sinc_model()
    return tm.burgers_model()


def _make_prior(cfg: RunConfig, model) -> Prior:
    p = cfg.prior
    if p["box"] is None and model is None:
        raise ConfigError("prior.box is required when no model supplies "
                          "a parameter box")
    box = p["box"] if p["box"] is not None else model.box
    if p["kind"] == "uniform":
        return Prior.uniform(box)
    if p["kind"] == "normal":
        if p["mean"] is None or p["std"] is None:
            raise ConfigError("a normal prior needs prior.mean and "
                              "prior.std")
        return Prior.normal(p["mean"], p["std"])
    return Prior.beta(p["alpha"], p["beta"], box)


def _resolve_truth(cfg: RunConfig, box: np.ndarray) -> list:
    t = cfg.likelihood["truth"]
    if t is not None:
        if len(t) != box.shape[0]:
            raise ConfigError(f"likelihood.truth has {len(t)} entries for "
                              f"a {box.shape[0]}-dimensional problem")
        return t
    frac = 0.5 if cfg.tag == "burgers" else 0.25
    return [float(lo + frac * (hi - lo)) for lo, hi in box]


def _problem(cfg: RunConfig, model=None):
    base = _base_model(cfg, model)
    prior = _make_prior(cfg, base)
    if prior.dim != cfg.dimension:
        raise ConfigError(f"prior dimension {prior.dim} does not match "
                          f"experiment.dimension {cfg.dimension}")
    truth = _resolve_truth(cfg, prior.box())
    lk = cfg.likelihood
    data = tm.generate_data(base, truth, lk["sigma"], lk["n_data"],
                            seed=lk["data_seed"], recipe=lk["recipe"])
    if lk["kind"] == "gaussian":
        lik = gaussian_likelihood(data, sigma=lk["sigma"])
    else:
        lik = beta_likelihood(data)
    return base, prior, lik, truth


def _memoized(model):
    """Batch wrapper around a model, one evaluation per distinct point."""
    cache = {}

    def wrapped(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(pts.shape[0])
        for i, p in enumerate(pts):
            key = p.tobytes()
            if key not in cache:
                cache[key] = float(np.asarray(model(p[None, :])).ravel()[0])
            out[i] = cache[key]
        return out

    wrapped.cache = cache
    return wrapped


# -- family sweeps: one surrogate per recorded N.

def _surrogate_sweep(cfg: RunConfig, model, prior: Prior, lik):
    """(n, surrogate) list over the budget, plus run bookkeeping.

    weighted-leja runs the adaptive loop to the full budget so the
    whole error curve is recorded; leja and clenshaw-curtis sweep the
    prior-weight families.  Model evaluations are never repeated for
    a node that appeared before.
    """
    nd_ = cfg.nodes
    fam, budget = nd_["family"], nd_["budget"]
    box = prior.box()
    if fam == "weighted-leja":
        cal = CalibrationSettings(
            zeta0=nd_["zeta"], schedule=nd_["schedule"], k=nd_["k"],
            budget=max(budget, 2), seed=nd_["seed"],
            n_candidates=nd_["n_candidates"],
            criterion=ConvergenceCriterion(tolerance=1e-300))
        state = run_calibration(model, prior, lik, cal)
        vals = np.array([rec.value for rec in state.history])
        pairs = [(n, build(NodalSequence(state.nodes.points[:n],
                                         state.nodes.kind,
                                         state.nodes.rng_seed),
                           vals[:n], box=box))
                 for n in range(1, len(vals) + 1)]
        return pairs, state, len(state.history)
    if fam == "leja":
        seq = generate_sequence(prior.weight, budget,
                                GenerationSettings(nd_["n_candidates"],
                                                   nd_["seed"]))
        memo = _memoized(model)
        vals = memo(seq.points)
        pairs = [(n, build(NodalSequence(seq.points[:n], seq.kind,
                                         seq.rng_seed), vals[:n], box=box))
                 for n in range(1, budget + 1)]
        return pairs, None, len(memo.cache)
    if prior.dim != 1:
        raise ConfigError("clenshaw-curtis nodes are univariate; "
                          f"dimension is {prior.dim}")
    memo = _memoized(model)
    pairs = []
    for n in range(1, budget + 1):
        seq = clenshaw_curtis(n, box)
        pairs.append((n, build(seq, memo(seq.points), box=box)))
    return pairs, None, len(memo.cache)


def _convergence_rows(cfg: RunConfig, pairs, ref_model, prior: Prior, lik):
    """Per-N errors against the (memoized) true model."""
    grid = audit_grid(prior.box(), cfg.nodes["seed"])
    lik_n = peak_normalized(lik)
    p_true = posterior(prior, lik_n, ref_model)
    want_kl = cfg.diagnostics["kl_vs_truth"]
    res = cfg.diagnostics["grid_per_dim"]
    rows = []
    for n, s in pairs:
        p_n = posterior(prior, lik_n, s)
        row = {"n": n,
               "model-error": sup_error(s, ref_model, None, grid),
               "posterior-error": posterior_change(p_true, p_n, grid)}
        if want_kl:
            row["kl-vs-truth"] = kl_divergence(p_true, p_n, res)
        rows.append(row)
    return rows


def _prefloor_fit(rows, key) -> ConvergenceCurve:
    """Exponential fit over the leading segment above the roundoff floor."""
    pts = []
    for r in rows:
        if not r[key] > _FIT_FLOOR:
            break
        pts.append((r["n"], r[key]))
    if len(pts) < 4:
        return None
    curve = ConvergenceCurve(pts)
    fit_rate(curve)
    return curve


def _nodes_to_threshold(rows, threshold):
    for r in rows:
        if "kl-vs-truth" in r and r["kl-vs-truth"] < threshold:
            return r["n"]
    return None


# -- artifact writers.

def _write_lines(path, lines) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_convergence(path, cfg, rows, fits) -> None:
    lines = [f"# {h}" for h in _header(cfg)]
    cols = ["N", "model-error", "posterior-error"]
    if rows and "kl-vs-truth" in rows[0]:
        cols.append("kl-vs-truth")
    lines.append(",".join(cols))
    for r in rows:
        lines.append(",".join([str(r["n"])]
                              + [f"{r[c]:.17g}" for c in cols[1:]]))
    for name, curve in fits:
        if curve is None:
            lines.append(f"# rate-fit,quantity={name},skipped=fewer than 4 "
                         "points above the floor")
        else:
            lines.append(f"# rate-fit,quantity={name},model={curve.model},"
                         f"rate={curve.rate:.12g},"
                         f"residual={curve.residual:.6g}")
    _write_lines(path, lines)


def _write_nodes(path, cfg, pairs, state) -> None:
    lines = [f"# {h}" for h in _header(cfg)]
    points = (state.nodes.points if state is not None
              else pairs[-1][1].nodes.points)
    cols = ["k"] + [f"x_{j + 1}" for j in range(points.shape[1])]
    if state is not None:
        cols.append("zeta")
    lines.append(",".join(cols))
    for k, row in enumerate(points):
        cells = [str(k + 1)] + [f"{v:.17g}" for v in row]
        if state is not None:
            cells.append(f"{state.history[k].zeta:.17g}")
        lines.append(",".join(cells))
    _write_lines(path, lines)


def _write_posterior_grid(path, cfg, prior, lik, surrogate) -> None:
    lines = [f"# {h}" for h in _header(cfg)]
    d = prior.dim
    if d > 2:
        lines.append("# skipped: plotting grids are written through d = 2")
        _write_lines(path, lines)
        return
    box = prior.box()
    p_n = posterior(prior, peak_normalized(lik), surrogate)
    normalize(p_n, cfg.diagnostics["grid_per_dim"])
    if d == 1:
        xs = np.linspace(box[0, 0], box[0, 1], 401)[:, None]
    else:
        g = [np.linspace(lo, hi, 61) for lo, hi in box]
        xx, yy = np.meshgrid(g[0], g[1], indexing="ij")
        xs = np.column_stack([xx.ravel(), yy.ravel()])
    dens = p_n.normalized_density(xs)
    lines.append(",".join([f"x_{j + 1}" for j in range(d)] + ["density"]))
    for row, v in zip(xs, dens):
        lines.append(",".join([f"{c:.17g}" for c in row] + [f"{v:.17g}"]))
    _write_lines(path, lines)


def _write_static_log(path, cfg, pairs) -> None:
    lines = [f"# {h}" for h in _header(cfg)]
    lines.append(f"# family={cfg.nodes['family']} fixed sweep, no schedule")
    n_max, s_final = pairs[-1]
    for k, row in enumerate(s_final.nodes.points):
        coords = ",".join(f"{v:.17g}" for v in np.atleast_1d(row))
        lines.append(f"N={k + 1} node=({coords}) "
                     f"value={s_final.values[k]:.17g}")
    _write_lines(path, lines)


def _run_mcmc_outputs(out: Path, cfg, prior, lik, surrogate) -> dict:
    pe = posterior(prior, peak_normalized(lik), surrogate)
    mc = cfg.mcmc
    ss = SamplerSettings(n_samples=mc["n_samples"], burn_in=mc["burn_in"],
                         proposal_scale=mc["proposal_scale"],
                         seed=mc["seed"], thinning=mc["thinning"])
    ch = run_mcmc(pe, ss)
    chain_csv(out / "chain.csv", ch, comments=_header(cfg))
    summary = propagate(ch, surrogate)
    (out / "pushforward.txt").write_text(
        propagation_report(summary, comments=_header(cfg)))
    summary["acceptance"] = ch.acceptance_rate
    return summary


# -- verbs.

def _experiment_core(cfg: RunConfig, model=None) -> dict:
    """Shared pipeline behind the calibrate and compare verbs."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base, prior, lik, truth = _problem(cfg, model)
    ref = _memoized(base)
    pairs, state, n_evals = _surrogate_sweep(cfg, base, prior, lik)
    rows = _convergence_rows(cfg, pairs, ref, prior, lik)

    fits = []
    if cfg.diagnostics["rate_fit"]:
        fits.append(("model-error", _prefloor_fit(rows, "model-error")))
        if "kl-vs-truth" in rows[0]:
            fits.append(("kl-vs-truth", _prefloor_fit(rows, "kl-vs-truth")))
    _write_convergence(out / "convergence.csv", cfg, rows, fits)
    _write_nodes(out / "nodes.csv", cfg, pairs, state)
    _write_posterior_grid(out / "posterior_grid.csv", cfg, prior, lik,
                          pairs[-1][1])
    if state is not None:
        write_run_log(state, out / "run.log", comments=_header(cfg))
    else:
        _write_static_log(out / "run.log", cfg, pairs)
    if cfg.diagnostics["lebesgue"] and prior.dim == 1:
        seq = (state.nodes if state is not None else pairs[-1][1].nodes)
        if len(seq) >= 2:
            est = lebesgue_curve(seq, prior.weight)
            lebesgue_table_csv(out / "lebesgue.csv", est,
                               comments=_header(cfg))

    mcmc_summary = None
    if cfg.diagnostics["mcmc"]:
        mcmc_summary = _run_mcmc_outputs(out, cfg, prior, lik, pairs[-1][1])

    thr = cfg.diagnostics["kl_threshold"]
    hit = (_nodes_to_threshold(rows, thr)
           if "kl-vs-truth" in rows[0] else None)
    summary_lines = [f"# {h}" for h in _header(cfg)]
    summary_lines += [
        f"experiment: tag={cfg.tag} dimension={cfg.dimension} "
        f"family={cfg.nodes['family']}",
        f"data: n={cfg.likelihood['n_data']} "
        f"sigma={cfg.likelihood['sigma']:g} "
        f"recipe={cfg.likelihood['recipe']} "
        f"truth=({','.join(f'{v:g}' for v in truth)})",
        f"nodes: budget={cfg.nodes['budget']} "
        f"evaluations={n_evals} zeta={cfg.nodes['zeta']:g} "
        f"schedule={'on' if cfg.nodes['schedule'] else 'off'}",
        f"final: N={rows[-1]['n']} "
        + " ".join(f"{k}={rows[-1][k]:.6g}" for k in rows[-1] if k != "n"),
    ]
    summary_lines.append(
        f"nodes-to-threshold: kl<{thr:g} at N={hit}" if hit is not None
        else f"nodes-to-threshold: kl<{thr:g} not reached")
    for name, curve in fits:
        summary_lines.append(
            f"rate-fit: {name} " + (
                f"rate={curve.rate:.6g} residual={curve.residual:.3g}"
                if curve is not None else "skipped (too few points "
                "above the floor)"))
    if mcmc_summary is not None:
        summary_lines.append(
            f"mcmc: acceptance={mcmc_summary['acceptance']:.4g} "
            f"mean={mcmc_summary['mean']:.6g} "
            f"std={mcmc_summary['std']:.6g}")
    _write_lines(out / "summary.txt", summary_lines)
    return {"rows": rows, "hit": hit, "out": out}


def run_experiment(cfg: RunConfig, model=None) -> int:
    """Full pipeline for one nodal family; 0 on success."""
    res = _experiment_core(cfg, model)
    print(f"wrote {res['out']}")
    return 0


def compare_families(cfg: RunConfig, model=None) -> int:
    """The same problem and data seed once per nodal family."""
    fams = cfg.nodes["families"] or list(_FAMILIES)
    if len(fams) < 2:
        raise ConfigError("compare needs at least two families in "
                          "nodes.families")
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    results, failures = {}, {}
    for fam in fams:
        sub = copy.deepcopy(cfg)
        sub.nodes["family"] = fam
        sub.nodes["families"] = None
        sub.out_dir = str(root / fam)
        try:
            results[fam] = _experiment_core(sub, model)
        except LejacalError as exc:
            failures[fam] = str(exc)

    lines = [f"# {h}" for h in _header(cfg)]
    lines.append(f"# shared data seed {cfg.likelihood['data_seed']}; "
                 "families " + ",".join(fams))
    quantities = ["model-error", "posterior-error"]
    if cfg.diagnostics["kl_vs_truth"]:
        quantities.append("kl-vs-truth")
    done = [f for f in fams if f in results]
    cols = ["N"] + [f"{f}:{q}" for f in done for q in quantities]
    lines.append(",".join(cols))
    by_n = {f: {r["n"]: r for r in results[f]["rows"]} for f in done}
    all_n = sorted({n for tbl in by_n.values() for n in tbl})
    for n in all_n:
        cells = [str(n)]
        for f in done:
            r = by_n[f].get(n)
            cells += ["" if r is None else f"{r[q]:.17g}"
                      for q in quantities]
        lines.append(",".join(cells))
    thr = cfg.diagnostics["kl_threshold"]
    if cfg.diagnostics["kl_vs_truth"]:
        hits = ",".join(
            f"{f}={results[f]['hit'] if results[f]['hit'] is not None else 'none'}"
            for f in done)
        lines.append(f"# nodes-to-threshold,kl<{thr:g},{hits}")
    for fam, msg in failures.items():
        lines.append(f"# failed,{fam}={msg}")
    _write_lines(root / "comparison.csv", lines)
    for fam, msg in failures.items():
        print(f"{fam}: {msg}", file=sys.stderr)
    print(f"wrote {root}")
    return 1 if failures else 0


def _cmd_leja(cfg: RunConfig) -> int:
    """Sequence generation only: prior-weight Leja nodes to a CSV."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _base_model(cfg) if cfg.tag != "custom" else None
    if base is None:
        if cfg.prior["box"] is None:
            raise ConfigError("custom experiments must set prior.box")
        prior = _make_prior(cfg, None)
    else:
        prior = _make_prior(cfg, base)
    seq = generate_sequence(prior.weight, cfg.nodes["budget"],
                            GenerationSettings(cfg.nodes["n_candidates"],
                                               cfg.nodes["seed"]))
    lines = [f"# {h}" for h in _header(cfg)]
    lines.append(",".join(["k"] + [f"x_{j + 1}" for j in range(seq.dim)]))
    for k, row in enumerate(seq.points):
        lines.append(",".join([str(k + 1)] + [f"{v:.17g}" for v in row]))
    _write_lines(out / "leja_nodes.csv", lines)
    print(f"wrote {out}")
    return 0


def _cmd_lebesgue(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fam, budget = cfg.nodes["family"], cfg.nodes["budget"]
    if fam == "weighted-leja":
        raise ConfigError("the lebesgue verb needs a data-free family; "
                          "set nodes.family to leja or clenshaw-curtis")
    base = _base_model(cfg) if cfg.tag != "custom" else None
    prior = _make_prior(cfg, base)
    if budget < 2:
        raise ConfigError("lebesgue tables need a budget of at least 2")
    if fam == "leja":
        seq = generate_sequence(prior.weight, budget,
                                GenerationSettings(cfg.nodes["n_candidates"],
                                                   cfg.nodes["seed"]))
        if prior.dim == 1:
            est = lebesgue_curve(seq, prior.weight)
        else:
            est = [lebesgue_constant(seq.points[:n], prior.weight)
                   for n in range(2, budget + 1)]
    else:
        if prior.dim != 1:
            raise ConfigError("clenshaw-curtis nodes are univariate; "
                              f"dimension is {prior.dim}")
        box = prior.box()
        est = [lebesgue_constant(clenshaw_curtis(n, box).points,
                                 prior.weight)
               for n in range(2, budget + 1)]
    lebesgue_table_csv(out / "lebesgue.csv", est, comments=_header(cfg))
    print(f"wrote {out}")
    return 0


def _cmd_mcmc(cfg: RunConfig, model=None) -> int:
    """Calibrate at the full budget, then sample the surrogate posterior."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base, prior, lik, _ = _problem(cfg, model)
    pairs, state, _ = _surrogate_sweep(cfg, base, prior, lik)
    _write_nodes(out / "nodes.csv", cfg, pairs, state)
    summary = _run_mcmc_outputs(out, cfg, prior, lik, pairs[-1][1])
    print(f"wrote {out} (acceptance {summary['acceptance']:.4g})")
    return 0


# -- argument parsing.

def _config_help() -> str:
    lines = ["configuration keys (TOML, `schema = 1` at the top; every key "
             "is optional):"]
    for sec, keys in _SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (default, _, help_) in keys.items():
            shown = "per tag" if default is None and key in (
                "sigma", "truth", "recipe") else repr(default)
            lines.append(f"    {key:<16} default={shown:<16} {help_}")
    lines.append("flags override the file: --seed sets the data, node, and "
                 "chain seeds at once")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lejacal",
        description="Bayesian calibration on adaptively weighted Leja "
                    "nodes: surrogate sweeps, error tables, posterior "
                    "sampling.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="verb", required=True)
    verbs = {
        "calibrate": "run one family and write its error tables",
        "compare": "run several families on the identical problem",
        "leja": "generate a prior-weight Leja sequence only",
        "lebesgue": "tabulate Lebesgue constants for a family",
        "mcmc": "sample the final surrogate posterior",
    }
    for name, help_ in verbs.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True,
                        help="TOML experiment description")
        sp.add_argument("--out", help="artifact directory override")
        sp.add_argument("--seed", type=int,
                        help="override data, node, and chain seeds")
        sp.add_argument("--budget", type=int, help="node budget override")
        sp.add_argument("--family", help="nodal family override")
    return p


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.nodes["seed"] = args.seed
        cfg.likelihood["data_seed"] = args.seed
        cfg.mcmc["seed"] = args.seed
    if args.budget is not None:
        _require(args.budget >= 1, "--budget must be >= 1")
        cfg.nodes["budget"] = args.budget
    if args.family is not None:
        _require(args.family in _FAMILIES,
                 f"--family must be one of {_FAMILIES}")
        cfg.nodes["family"] = args.family
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.verb == "calibrate":
            return run_experiment(cfg)
        if args.verb == "compare":
            return compare_families(cfg)
        if args.verb == "leja":
            return _cmd_leja(cfg)
        if args.verb == "lebesgue":
            return _cmd_lebesgue(cfg)
        return _cmd_mcmc(cfg)
    except (LejacalError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
