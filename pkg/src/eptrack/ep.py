"""Expectation propagation over per-sensor sites with per-target blocks.

The posterior over the joint state is approximated as a product of
independent per-target Gaussians.  Every sensor owns one site factor,
stored in natural parameters as K blocks; the combined approximation is
the prior plus the sum of all sites.  One EP iteration per sensor:

  cavity  = combined - own site          (block subtraction)
  tilted  = Gibbs approximation of cavity x local likelihood
  matched = blockwise first two moments of the tilted mixture
  site    = (1 - damping) * old + damping * (matched - cavity)

The schedule is synchronous: within an iteration every sensor reads the
previous iteration's tables, then the communication scheme distributes the
fresh sites.  Subtractions can leave a cavity block indefinite; the
configured policy either skips that sensor's update for the iteration or
aborts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gaussian import (
    GaussianBelief,
    InvalidCavityError,
    NotPositiveDefiniteError,
    cholesky_inverse,
    symmetrize,
)
from .gibbs import GibbsConfig, TiltedMixture, gibbs_core, _prepare_group
from .network import TableEntry, fresh_tables

__all__ = [
    "NaturalBlocks",
    "SiteApproximation",
    "GlobalApproximation",
    "EPConfig",
    "EPDivergenceError",
    "EPResult",
    "init_sites",
    "cavity",
    "moment_match",
    "site_update",
    "combine_global",
    "run_ep_timestep",
]


class EPDivergenceError(RuntimeError):
    """The combined approximation lost positive definiteness."""


@dataclass
class NaturalBlocks:
    """K independent Gaussian factors in natural form, stored stacked.

    info has shape (K, d); prec has shape (K, d, d).  Blocks may be
    indefinite (site and cavity intermediates); validity is checked where
    a proper distribution is required.
    """

    info: np.ndarray
    prec: np.ndarray

    def __post_init__(self):
        self.info = np.asarray(self.info, dtype=float)
        self.prec = np.asarray(self.prec, dtype=float)

    @classmethod
    def zeros(cls, n_targets: int, dim: int = 4) -> "NaturalBlocks":
        return cls(np.zeros((n_targets, dim)), np.zeros((n_targets, dim, dim)))

    @classmethod
    def from_beliefs(cls, beliefs: list) -> "NaturalBlocks":
        prec = cholesky_inverse(np.stack([b.cov for b in beliefs]))
        means = np.stack([b.mean for b in beliefs])
        return cls(np.einsum("kab,kb->ka", prec, means), prec)

    def to_beliefs(self) -> list:
        try:
            covs = cholesky_inverse(self.prec)
        except NotPositiveDefiniteError as exc:
            raise InvalidCavityError(str(exc)) from exc
        means = np.einsum("kab,kb->ka", covs, self.info)
        return [GaussianBelief(means[k], covs[k]) for k in range(self.n_targets)]

    @property
    def n_targets(self) -> int:
        return self.info.shape[0]

    @property
    def dim(self) -> int:
        return self.info.shape[1]

    @property
    def packed_size(self) -> int:
        # reals per site message with symmetric-matrix packing
        d = self.dim
        return self.n_targets * (d + d * (d + 1) // 2)

    def __add__(self, other: "NaturalBlocks") -> "NaturalBlocks":
        return NaturalBlocks(self.info + other.info, symmetrize(self.prec + other.prec))

    def __sub__(self, other: "NaturalBlocks") -> "NaturalBlocks":
        return NaturalBlocks(self.info - other.info, symmetrize(self.prec - other.prec))

    def scale(self, a: float) -> "NaturalBlocks":
        return NaturalBlocks(a * self.info, a * self.prec)

    def copy(self) -> "NaturalBlocks":
        return NaturalBlocks(self.info.copy(), self.prec.copy())

    def is_zero(self) -> bool:
        return not (self.info.any() or self.prec.any())

    def pd_flags(self) -> np.ndarray:
        """Per-block positive definiteness via factorisation success."""
        flags = np.empty(self.n_targets, dtype=bool)
        for k in range(self.n_targets):
            try:
                np.linalg.cholesky(self.prec[k])
                flags[k] = True
            except np.linalg.LinAlgError:
                flags[k] = False
        return flags

    def max_abs_diff(self, other: "NaturalBlocks") -> float:
        return max(
            float(np.abs(self.info - other.info).max()),
            float(np.abs(self.prec - other.prec).max()),
        )


@dataclass
class SiteApproximation:
    """One sensor's multiplicative factor, with its iteration stamp."""

    sensor: int
    stamp: int
    params: NaturalBlocks


@dataclass
class GlobalApproximation:
    """Combined approximation: prior plus the sum of all known sites."""

    prior: NaturalBlocks
    combined: NaturalBlocks


@dataclass
class EPConfig:
    max_iterations: int = 5
    damping: float = 1.0
    invalid_cavity: str = "skip"  # or "abort"
    schedule: str = "parallel"  # or "sequential" (full exchange only)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")
        if self.invalid_cavity not in ("skip", "abort"):
            raise ValueError(f"unknown invalid-cavity policy: {self.invalid_cavity!r}")
        if self.schedule not in ("parallel", "sequential"):
            raise ValueError(f"unknown schedule: {self.schedule!r}")


@dataclass
class EPResult:
    """Per-node posteriors after one time step of EP."""

    node_beliefs: list  # [node][target] -> GaussianBelief
    ci: int
    n_invalid_cavities: int
    n_fallback_draws: int
    identity_error: float | None
    tables: list


def init_sites(n_targets: int, n_sensors: int, prior: NaturalBlocks):
    """All sites start flat (zero parameters); combined equals the prior."""
    sites = [
        SiteApproximation(sensor=s, stamp=0, params=NaturalBlocks.zeros(n_targets, prior.dim))
        for s in range(n_sensors)
    ]
    return sites, GlobalApproximation(prior=prior.copy(), combined=prior.copy())


def cavity(glob: GlobalApproximation, site: SiteApproximation):
    """Combined approximation with one site removed; flagged per validity."""
    params = glob.combined - site.params
    return params, bool(params.pd_flags().all())


def moment_match(tilted: TiltedMixture) -> list:
    """Blockwise first two moments of the tilted mixture, one per target.

    Equivalent to matching moments of the joint mixture and keeping the
    per-target diagonal blocks (cross-target covariance is discarded).
    """
    means = tilted.means.mean(axis=0)
    dev = tilted.means - means
    covs = tilted.covs.mean(axis=0) + np.einsum("pka,pkb->kab", dev, dev) / tilted.n_components
    covs = symmetrize(covs)
    return [GaussianBelief(means[k], covs[k]) for k in range(tilted.n_targets)]


def site_update(g_new: list, cavity_params: NaturalBlocks, old_site: SiteApproximation,
                damping: float = 1.0) -> SiteApproximation:
    """Damped site refresh: (1 - damping) * old + damping * (new - cavity)."""
    delta = NaturalBlocks.from_beliefs(g_new) - cavity_params
    params = old_site.params.scale(1.0 - damping) + delta.scale(damping)
    return SiteApproximation(sensor=old_site.sensor, stamp=old_site.stamp + 1, params=params)


def combine_global(prior: NaturalBlocks, sites) -> GlobalApproximation:
    """Sum prior and site parameters (ascending sensor id, fixed order).

    sites may be SiteApproximation objects or (sensor_id, NaturalBlocks)
    pairs.  The combined precision must be positive definite per block.
    """
    items = []
    for s in sites:
        if isinstance(s, SiteApproximation):
            items.append((s.sensor, s.params))
        else:
            items.append((int(s[0]), s[1]))
    combined = prior.copy()
    for _, params in sorted(items, key=lambda t: t[0]):
        combined = combined + params
    flags = combined.pd_flags()
    if not flags.all():
        bad = np.flatnonzero(~flags).tolist()
        raise EPDivergenceError(
            f"combined precision not positive definite for target blocks {bad}"
        )
    return GlobalApproximation(prior=prior.copy(), combined=combined)


# ---------------------------------------------------------------------------
# Per-time-step driver


def _node_combined(eta: NaturalBlocks, table: dict) -> NaturalBlocks:
    combined = eta.copy()
    for sid in sorted(table):
        combined = combined + table[sid].payload
    return combined


def _gibbs_rng(seed_key: tuple, iteration: int, sensor: int) -> np.random.Generator:
    entropy = [int(v) for v in seed_key] + [iteration, sensor]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def run_ep_timestep(priors, measurement_sets: list, sensors: list, ep_cfg: EPConfig,
                    gibbs_cfg: GibbsConfig, scheme, adjacency=None, seed=0,
                    step: int = 0, comm_log=None, diagnostics=None,
                    check_identity: bool = False) -> EPResult:
    """One filtering update: EP iterations with communication in between.

    priors is either one per-target belief list shared by all nodes or one
    list per node (decentralised schemes let nodes drift apart across time
    steps).  Returns the per-node posterior beliefs; under full exchange
    all nodes end identical.

    A sensor whose scan is empty has a tilted distribution equal to its
    cavity, so its site shrinks by the damping factor without sampling;
    with all scans empty the posterior is exactly the prior.
    """
    n_nodes = len(sensors)
    if n_nodes == 0:
        raise ValueError("need at least one sensor")
    node_priors = priors if isinstance(priors[0], list) else [priors] * n_nodes
    n_targets = len(node_priors[0])
    etas = [NaturalBlocks.from_beliefs(p) for p in node_priors]
    seed_key = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)

    tables = fresh_tables([NaturalBlocks.zeros(n_targets, etas[0].dim) for _ in range(n_nodes)])
    ci = 0
    n_invalid = 0
    n_fallback = 0
    identity_error = 0.0 if check_identity else None

    sequential = ep_cfg.schedule == "sequential"
    for iteration in range(1, ep_cfg.max_iterations + 1):
        snapshot = [dict(t) for t in tables]
        for s in range(n_nodes):
            view = tables[s] if sequential else snapshot[s]
            combined = _node_combined(etas[s], view)
            own = view[s]
            cav = combined - own.payload
            valid = bool(cav.pd_flags().all())
            new_params = own.payload
            if not valid:
                n_invalid += 1
                if ep_cfg.invalid_cavity == "abort":
                    raise InvalidCavityError(
                        f"cavity of sensor {s} indefinite at iteration {iteration}"
                    )
            else:
                scan = measurement_sets[s]
                if scan is None or len(scan) == 0:
                    # empty scan: tilted equals the cavity, site shrinks
                    fitted = cav
                else:
                    cav_beliefs = cav.to_beliefs()
                    rng = _gibbs_rng(seed_key, iteration, s)
                    tilted = gibbs_core(
                        cav.info.copy(),
                        cav.prec.copy(),
                        np.stack([b.mean for b in cav_beliefs]),
                        [_prepare_group(scan, sensors[s])],
                        gibbs_cfg,
                        rng,
                    )
                    n_fallback += tilted.n_fallback
                    fitted = NaturalBlocks.from_beliefs(moment_match(tilted))
                # damped step towards the new site, halved until this node's
                # combined approximation (cavity + candidate site) stays PD;
                # sampling noise in the matched moments can otherwise leave
                # the sum of sites indefinite
                full_step = (fitted - cav) - own.payload
                step_size = ep_cfg.damping
                for _ in range(7):
                    candidate = own.payload + full_step.scale(step_size)
                    if (cav + candidate).pd_flags().all():
                        new_params = candidate
                        break
                    step_size *= 0.5
                else:
                    n_invalid += 1  # guarded skip: site left unchanged
            tables[s][s] = TableEntry(stamp=iteration, payload=new_params)
            if diagnostics is not None:
                diagnostics.append(
                    {
                        "step": step,
                        "iteration": iteration,
                        "sensor": s,
                        "cavity_valid": valid,
                        "site_info_norm": float(np.linalg.norm(new_params.info)),
                        "site_prec_norm": float(np.linalg.norm(new_params.prec)),
                    }
                )
            if sequential:
                tables = scheme.exchange(adjacency, tables, step, iteration, comm_log)[0]
                ci += 1
        if not sequential:
            tables, rounds = scheme.exchange(adjacency, tables, step, iteration, comm_log)
            ci += rounds
        if check_identity:
            # re-sum in reverse order; must agree with the combine order
            for s in range(n_nodes):
                combined = _node_combined(etas[s], tables[s])
                alt = etas[s].copy()
                for sid in sorted(tables[s], reverse=True):
                    alt = alt + tables[s][sid].payload
                identity_error = max(identity_error, combined.max_abs_diff(alt))

    node_beliefs = []
    for s in range(n_nodes):
        if all(entry.payload.is_zero() for entry in tables[s].values()):
            node_beliefs.append(node_priors[s])
            continue
        glob = combine_global(etas[s], [(sid, e.payload) for sid, e in tables[s].items()])
        node_beliefs.append(glob.combined.to_beliefs())
    return EPResult(
        node_beliefs=node_beliefs,
        ci=ci,
        n_invalid_cavities=n_invalid,
        n_fallback_draws=n_fallback,
        identity_error=identity_error,
        tables=tables,
    )
