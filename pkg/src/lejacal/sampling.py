"""Posterior sampling on a fitted surrogate and pushforward summaries.

Once the interpolant stands in for the forward model, density
evaluations cost microseconds and a plain seeded random-walk
Metropolis chain is the most auditable way to draw from the
posterior.  The pushforward of the chain through the surrogate then
summarizes the predictive distribution of the quantity of interest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ZeroDensityStart
from .statmodel import PosteriorEval
from .surrogate import Surrogate, evaluate

_START_DRAWS = 10_000
_TUNE_BLOCK = 50
_TUNE_FACTOR = 1.4
_ACC_LOW, _ACC_HIGH = 0.2, 0.5
_QUANTILES = (5, 25, 50, 75, 95)


@dataclass
class SamplerSettings:
    """Chain length, burn-in, proposal scale, seed, thinning.

    burn_in None means a fifth of n_samples.  proposal_scale None
    turns on block tuning during burn-in: the per-dimension standard
    deviations start at a tenth of the box widths and are scaled up or
    down by a fixed factor whenever the acceptance fraction of the
    last block leaves [0.2, 0.5].  The scale freezes once sampling
    starts, so the recorded chain is a genuine Metropolis chain.
    """

    n_samples: int = 10_000
    burn_in: int | None = None
    proposal_scale: float | np.ndarray | None = None
    seed: int = 0
    thinning: int = 1


@dataclass
class Chain:
    """Retained states of one random-walk Metropolis run."""

    samples: np.ndarray        # (n_samples, d), post burn-in
    acceptance_rate: float     # accepted / proposed over the retained phase
    proposal_scale: np.ndarray  # per-dimension std devs in force after tuning
    seed: int
    burn_in: int
    thinning: int


def run_mcmc(pe: PosteriorEval, cfg: SamplerSettings = None) -> Chain:
    """Sample the posterior with seeded random-walk Metropolis.

    Proposals are Gaussian steps; anything outside the prior support
    has density zero and is rejected, so every retained sample lies in
    the support.  One normal vector and one uniform are consumed per
    proposal whether or not it is accepted, which makes the chain a
    pure function of the seed.
    """
    cfg = cfg or SamplerSettings()
    if cfg.n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {cfg.n_samples}")
    if cfg.thinning < 1:
        raise ConfigError(f"thinning must be >= 1, got {cfg.thinning}")
    burn_in = cfg.n_samples // 5 if cfg.burn_in is None else cfg.burn_in
    if burn_in < 0:
        raise ConfigError(f"burn_in must be >= 0, got {burn_in}")

    prior = pe.prior
    d = prior.dim
    box = prior.box()
    widths = box[:, 1] - box[:, 0]
    if cfg.proposal_scale is None:
        scale = widths / 10.0
        tune = True
    else:
        scale = np.broadcast_to(
            np.asarray(cfg.proposal_scale, dtype=float), (d,)).copy()
        if np.any(scale <= 0.0) or not np.all(np.isfinite(scale)):
            raise ConfigError("proposal_scale entries must be positive finite")
        tune = False

    rng = np.random.default_rng(cfg.seed)

    def log_d(pt: np.ndarray) -> float:
        return float(np.asarray(pe.log_density(pt[None, :]))[0])

    x = lx = None
    for _ in range(_START_DRAWS):
        cand = prior.sample(1, rng)[0]
        lc = log_d(cand)
        if np.isfinite(lc):
            x, lx = cand, lc
            break
    if x is None:
        raise ZeroDensityStart(
            f"no positive posterior density in {_START_DRAWS} prior draws")

    def step() -> int:
        nonlocal x, lx
        prop = x + scale * rng.standard_normal(d)
        lp = log_d(prop)
        # exp(min(., 0)) is the acceptance probability; lp = -inf gives
        # zero, so a proposal outside the support never passes, even on
        # a zero uniform draw
        if rng.random() < np.exp(min(lp - lx, 0.0)):
            x, lx = prop, lp
            return 1
        return 0

    block = 0
    for k in range(burn_in):
        block += step()
        if tune and (k + 1) % _TUNE_BLOCK == 0:
            frac = block / _TUNE_BLOCK
            if frac > _ACC_HIGH:
                scale = scale * _TUNE_FACTOR
            elif frac < _ACC_LOW:
                scale = scale / _TUNE_FACTOR
            np.clip(scale, 1e-12 * widths, widths, out=scale)
            block = 0

    samples = np.empty((cfg.n_samples, d))
    accepted = 0
    for k in range(cfg.n_samples):
        for _ in range(cfg.thinning):
            accepted += step()
        samples[k] = x
    proposed = cfg.n_samples * cfg.thinning

    return Chain(samples, accepted / proposed, scale,
                 cfg.seed, burn_in, cfg.thinning)


# -- pushforward of the chain through a surrogate.

def propagate(chain: Chain, s: Surrogate) -> dict:
    """Summary of u_N over the chain: mean, std, and percentiles.

    The surrogate values are put in canonical (sorted) order before
    the moments are taken, so the summary is bitwise invariant under
    any reordering of the samples.
    """
    if len(chain.samples) == 0:
        raise ConfigError("cannot propagate an empty chain")
    u = np.sort(np.atleast_1d(evaluate(s, chain.samples)))
    out = {"mean": float(u.mean()), "std": float(u.std())}
    for q, v in zip(_QUANTILES, np.percentile(u, _QUANTILES)):
        out[f"q{q:02d}"] = float(v)
    out["n"] = int(u.size)
    return out


def variance_ratio(chains) -> float:
    """Pooled-to-within variance ratio, worst over dimensions.

    Values near one mean the chains agree; use several seeds of the
    same sampler.  Crude by design: with a cheap surrogate density the
    remedy for a bad ratio is simply a longer chain.
    """
    if len(chains) < 2:
        raise ConfigError("variance_ratio needs at least two chains")
    arrs = [np.asarray(c.samples, dtype=float) for c in chains]
    pooled = np.concatenate(arrs, axis=0).var(axis=0)
    within = np.mean([a.var(axis=0) for a in arrs], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((pooled == 0.0) & (within == 0.0),
                         1.0, pooled / within)
    return float(np.max(ratio))


# -- output.

def chain_csv(path, chain: Chain, comments=()) -> None:
    """Chain as CSV, one sample per row, run metadata as comments."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"# seed={chain.seed} burn_in={chain.burn_in} "
                 f"thinning={chain.thinning} "
                 f"acceptance={chain.acceptance_rate:.17g}")
    scale = ",".join(f"{v:.17g}" for v in chain.proposal_scale)
    lines.append(f"# proposal-scale=({scale})")
    d = chain.samples.shape[1]
    lines.append(",".join(f"theta_{k}" for k in range(d)))
    for row in chain.samples:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def propagation_report(summary: dict, comments=()) -> str:
    """Pushforward summary as a small key=value text block."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"n={summary['n']}")
    for key in ("mean", "std", "q05", "q25", "q50", "q75", "q95"):
        lines.append(f"{key}={summary[key]:.17g}")
    return "\n".join(lines) + "\n"
