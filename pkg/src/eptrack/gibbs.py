"""Rao-Blackwellised Gibbs sampling of the per-sensor tilted distribution.

The sampler alternates two blocked sweeps on the joint (associations,
states) distribution formed by a Gaussian prior (the EP cavity) and the
NHPP likelihood of one or more scans:

* association sweep: every measurement label is drawn from its categorical
  conditional given the current state sample; the draws are mutually
  independent within a sweep and each consumes one pre-drawn uniform
  indexed by its measurement, so processing order cannot matter;
* state sweep: given labels, each target's conditional is Gaussian
  (prior precision plus one rank update per associated measurement); the
  conditional itself (not just a sample) is kept, so the retained sweeps
  form an equally weighted Gaussian mixture with per-target blocks.

Association weights are computed in log space and normalised by the row
maximum to survive clutter rates in the hundreds against tiny densities.

The sweep loop runs as a compiled kernel (the Monte Carlo experiments do
tens of millions of sweeps); ``gibbs_core_reference`` is the plain-numpy
implementation of the identical draw scheme, kept for unit tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .gaussian import (
    GaussianBelief,
    GaussianMixture,
    NotPositiveDefiniteError,
    cholesky_inverse,
    sample_gaussian,
    symmetrize,
)

__all__ = [
    "GibbsConfig",
    "TiltedMixture",
    "sample_association_conditional",
    "sample_state_conditional",
    "run_tilted_gibbs",
    "gibbs_core",
    "gibbs_core_reference",
]


@dataclass
class GibbsConfig:
    """Sweep budget: retained sample count is total_sweeps - burn_in."""

    total_sweeps: int = 60
    burn_in: int = 10
    seed: int | None = None

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.total_sweeps <= self.burn_in:
            raise ValueError("total_sweeps must exceed burn_in")

    @property
    def retained(self) -> int:
        return self.total_sweeps - self.burn_in


@dataclass
class TiltedMixture:
    """Equally weighted Gaussian mixture with independent per-target blocks.

    means has shape (N_p, K, d); covs has shape (N_p, K, d, d).  Component p
    is the product over targets of N(means[p, k], covs[p, k]).
    """

    means: np.ndarray
    covs: np.ndarray
    n_fallback: int = 0

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def n_targets(self) -> int:
        return self.means.shape[1]

    def target_mixture(self, k: int) -> GaussianMixture:
        return GaussianMixture(
            [GaussianBelief(self.means[p, k], self.covs[p, k])
             for p in range(self.n_components)]
        )


# ---------------------------------------------------------------------------
# Sensor-side precomputation


@dataclass
class _Group:
    """One sensor's scan with the per-target constants the sweeps need."""

    points: np.ndarray        # (M, 2)
    H: np.ndarray             # (2, d)
    noise_inv: np.ndarray     # (K, 2, 2)
    log_weight_const: np.ndarray  # (K,)  log rate + Gaussian log normaliser
    log_clutter: float        # log(clutter_rate / volume)
    prior_probs: np.ndarray   # (K+1,) association prior, fallback only
    info_gain: np.ndarray     # (K, d, 2)  H^T R^-1
    prec_gain: np.ndarray     # (K, d, d)  H^T R^-1 H


def _prepare_group(points: np.ndarray, sensor) -> _Group:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    noise = sensor.noise_stack()
    noise_inv = cholesky_inverse(noise)
    chol = np.linalg.cholesky(noise)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    with np.errstate(divide="ignore"):
        log_rates = np.log(sensor.target_rates)
        log_clutter = float(np.log(sensor.clutter_rate / sensor.volume))
    log_weight_const = log_rates - np.log(2.0 * np.pi) - 0.5 * logdet
    rates = np.concatenate([[sensor.clutter_rate], sensor.target_rates])
    total = rates.sum()
    prior_probs = rates / total if total > 0 else rates
    info_gain = np.einsum("ab,kbc->kac", sensor.H.T, noise_inv)
    prec_gain = np.einsum("kab,bc->kac", info_gain, sensor.H)
    return _Group(
        points=points,
        H=sensor.H,
        noise_inv=noise_inv,
        log_weight_const=log_weight_const,
        log_clutter=log_clutter,
        prior_probs=prior_probs,
        info_gain=info_gain,
        prec_gain=prec_gain,
    )


def _association_log_weights(points: np.ndarray, x: np.ndarray, group: _Group) -> np.ndarray:
    """(M, K+1) unnormalised log conditional weights, clutter in column 0."""
    z_pred = x @ group.H.T
    dx = points[:, 0:1] - z_pred[None, :, 0]
    dy = points[:, 1:2] - z_pred[None, :, 1]
    a = group.noise_inv
    maha = a[:, 0, 0] * dx * dx + 2.0 * a[:, 0, 1] * dx * dy + a[:, 1, 1] * dy * dy
    logw = np.empty((points.shape[0], z_pred.shape[0] + 1))
    logw[:, 0] = group.log_clutter
    logw[:, 1:] = group.log_weight_const - 0.5 * maha
    return logw


def _categorical_rows(logw: np.ndarray, u: np.ndarray, prior_probs: np.ndarray | None):
    """Inverse-CDF draws per row; rows whose weights all underflow fall back
    to the association prior (returned count flags how often)."""
    row_max = logw.max(axis=1)
    dead = ~np.isfinite(row_max)
    n_fallback = int(dead.sum())
    with np.errstate(invalid="ignore"):
        probs = np.exp(logw - row_max[:, None])
    if n_fallback:
        if prior_probs is None:
            raise ValueError("all association weights vanished and no prior is available")
        probs[dead] = prior_probs
    cum = np.cumsum(probs, axis=1)
    thresholds = u * cum[:, -1]
    labels = (cum <= thresholds[:, None]).sum(axis=1)
    return np.minimum(labels, logw.shape[1] - 1), n_fallback


def sample_association_conditional(j: int, x: np.ndarray, y: np.ndarray, sensor,
                                   rng: np.random.Generator) -> int:
    """Draw the origin label of measurement j given a joint state sample.

    Weights are clutter_rate/volume for label 0 and rate_k * N(y_j; H x_k,
    R_k) for target k.  If every weight underflows to zero the draw falls
    back to the association prior and a RuntimeWarning is emitted.
    """
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    group = _prepare_group(y[j : j + 1], sensor)
    logw = _association_log_weights(group.points, np.asarray(x, dtype=float), group)
    labels, n_fallback = _categorical_rows(logw, np.array([rng.random()]), group.prior_probs)
    if n_fallback:
        warnings.warn("association weights underflowed; drew from the prior", RuntimeWarning)
    return int(labels[0])


def sample_state_conditional(k: int, theta: np.ndarray, y: np.ndarray,
                             cavity_k: GaussianBelief, sensor,
                             rng: np.random.Generator):
    """Gaussian conditional of target k given labels, plus one sample.

    The measurements labelled k collapse to a single pseudo-measurement
    (their mean, with noise R_k / count) and the conditional is the Kalman
    update of the cavity against it; with no associated measurements the
    conditional is the cavity itself.
    """
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    theta = np.asarray(theta)
    # k is the 0-based target index; origin labels are 0 = clutter, k+1 = target k
    members = np.flatnonzero(theta == k + 1)
    if members.size == 0:
        belief = GaussianBelief(cavity_k.mean.copy(), cavity_k.cov.copy())
        return sample_gaussian(belief, rng), belief
    pseudo = y[members].mean(axis=0)
    noise = sensor.noise_for_target(k) / members.size
    H = sensor.H
    innov_cov = H @ cavity_k.cov @ H.T + noise
    gain = cavity_k.cov @ H.T @ cholesky_inverse(innov_cov)
    mean = cavity_k.mean + gain @ (pseudo - H @ cavity_k.mean)
    cov = symmetrize(cavity_k.cov - gain @ H @ cavity_k.cov)
    belief = GaussianBelief(mean, cov)
    return sample_gaussian(belief, rng), belief


# ---------------------------------------------------------------------------
# Core sweeps (shared by the per-sensor tilted sampler and the pooled
# centralised baseline)


def _draw_randomness(rng: np.random.Generator, total: int, m_total: int,
                     n_targets: int, dim: int):
    """All sweep randomness up front: one uniform per (sweep, measurement),
    one standard normal vector per (sweep, target)."""
    u = rng.random((total, m_total))
    z = rng.standard_normal((total, n_targets, dim))
    return u, z


@numba.njit(cache=True)
def _sweep_kernel(points, offsets, weight_const, a00, a01, a11, log_clutter,
                  prior_probs, h_stack, prec_gain, info_gain, prior_info,
                  prior_prec, init_states, uniforms, normals, burn_in,
                  keep_means, keep_covs):  # pragma: no cover - exercised via gibbs_core
    total, m_total = uniforms.shape
    n_targets, dim = prior_info.shape
    n_groups = offsets.shape[0] - 1

    states = init_states.copy()
    labels = np.empty(m_total, np.int64)
    z_pred = np.empty((n_groups, n_targets, 2))
    weights = np.empty(n_targets + 1)
    counts = np.empty((n_groups, n_targets))
    sums = np.empty((n_groups, n_targets, 2))
    prec = np.empty((dim, dim))
    chol = np.empty((dim, dim))
    chol_inv = np.empty((dim, dim))
    info = np.empty(dim)
    work = np.empty(dim)
    n_fallback = 0

    for sweep in range(total):
        # association sweep
        for g in range(n_groups):
            for k in range(n_targets):
                for r in range(2):
                    acc = 0.0
                    for c in range(dim):
                        acc += h_stack[g, r, c] * states[k, c]
                    z_pred[g, k, r] = acc
        for g in range(n_groups):
            for j in range(offsets[g], offsets[g + 1]):
                best = log_clutter[j]
                weights[0] = best
                for k in range(n_targets):
                    dx = points[j, 0] - z_pred[g, k, 0]
                    dy = points[j, 1] - z_pred[g, k, 1]
                    maha = (a00[j, k] * dx * dx + 2.0 * a01[j, k] * dx * dy
                            + a11[j, k] * dy * dy)
                    v = weight_const[j, k] - 0.5 * maha
                    weights[k + 1] = v
                    if v > best:
                        best = v
                if np.isinf(best) and best < 0:
                    n_fallback += 1
                    cum = 0.0
                    for i in range(n_targets + 1):
                        cum += prior_probs[j, i]
                        weights[i] = cum
                else:
                    cum = 0.0
                    for i in range(n_targets + 1):
                        cum += np.exp(weights[i] - best)
                        weights[i] = cum
                threshold = uniforms[sweep, j] * cum
                label = 0
                for i in range(n_targets + 1):
                    if weights[i] <= threshold:
                        label += 1
                if label > n_targets:
                    label = n_targets
                labels[j] = label

        # state sweep
        for g in range(n_groups):
            for k in range(n_targets):
                counts[g, k] = 0.0
                sums[g, k, 0] = 0.0
                sums[g, k, 1] = 0.0
            for j in range(offsets[g], offsets[g + 1]):
                k = labels[j] - 1
                if k >= 0:
                    counts[g, k] += 1.0
                    sums[g, k, 0] += points[j, 0]
                    sums[g, k, 1] += points[j, 1]
        for k in range(n_targets):
            for a in range(dim):
                info[a] = prior_info[k, a]
                for b in range(dim):
                    prec[a, b] = prior_prec[k, a, b]
            for g in range(n_groups):
                c = counts[g, k]
                if c > 0.0:
                    for a in range(dim):
                        info[a] += (info_gain[g, k, a, 0] * sums[g, k, 0]
                                    + info_gain[g, k, a, 1] * sums[g, k, 1])
                        for b in range(dim):
                            prec[a, b] += c * prec_gain[g, k, a, b]
            # Cholesky factorisation of the conditional precision
            for i in range(dim):
                for j2 in range(i + 1):
                    acc = prec[i, j2]
                    for q in range(j2):
                        acc -= chol[i, q] * chol[j2, q]
                    if i == j2:
                        if acc <= 0.0:
                            return n_fallback, False
                        chol[i, i] = np.sqrt(acc)
                    else:
                        chol[i, j2] = acc / chol[j2, j2]
            # invert the factor by forward substitution on the identity
            for col in range(dim):
                for i in range(dim):
                    acc = 1.0 if i == col else 0.0
                    for q in range(col, i):
                        acc -= chol[i, q] * chol_inv[q, col]
                    chol_inv[i, col] = acc / chol[i, i] if i >= col else 0.0
            # mean via two triangular solves: L w = info, L^T mu = w
            for i in range(dim):
                acc = info[i]
                for q in range(i):
                    acc -= chol[i, q] * work[q]
                work[i] = acc / chol[i, i]
            for i in range(dim - 1, -1, -1):
                acc = work[i]
                for q in range(i + 1, dim):
                    acc -= chol[q, i] * states[k, q]
                states[k, i] = acc / chol[i, i]
            # conditional covariance (L^-T L^-1) for the retained components
            if sweep >= burn_in:
                p = sweep - burn_in
                for a in range(dim):
                    keep_means[p, k, a] = states[k, a]
                    for b in range(a + 1):
                        acc = 0.0
                        for q in range(max(a, b), dim):
                            acc += chol_inv[q, a] * chol_inv[q, b]
                        keep_covs[p, k, a, b] = acc
                        keep_covs[p, k, b, a] = acc
            # sample: x = mean + L^-T z  (solve L^T v = z)
            for i in range(dim - 1, -1, -1):
                acc = normals[sweep, k, i]
                for q in range(i + 1, dim):
                    acc -= chol[q, i] * work[q]
                work[i] = acc / chol[i, i]
            for a in range(dim):
                states[k, a] = states[k, a] + work[a]
    return n_fallback, True


def _pack_groups(groups: list, n_targets: int, dim: int):
    sizes = [g.points.shape[0] for g in groups]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    m_total = int(offsets[-1])
    points = (np.concatenate([g.points for g in groups], axis=0)
              if m_total else np.empty((0, 2)))
    weight_const = np.empty((m_total, n_targets))
    a00 = np.empty((m_total, n_targets))
    a01 = np.empty((m_total, n_targets))
    a11 = np.empty((m_total, n_targets))
    log_clutter = np.empty(m_total)
    prior_probs = np.empty((m_total, n_targets + 1))
    h_stack = np.stack([g.H for g in groups])
    prec_gain = np.stack([g.prec_gain for g in groups])
    info_gain = np.stack([g.info_gain for g in groups])
    for g, group in enumerate(groups):
        lo, hi = offsets[g], offsets[g + 1]
        weight_const[lo:hi] = group.log_weight_const
        a00[lo:hi] = group.noise_inv[:, 0, 0]
        a01[lo:hi] = group.noise_inv[:, 0, 1]
        a11[lo:hi] = group.noise_inv[:, 1, 1]
        log_clutter[lo:hi] = group.log_clutter
        prior_probs[lo:hi] = group.prior_probs
    return points, offsets, weight_const, a00, a01, a11, log_clutter, prior_probs, \
        h_stack, prec_gain, info_gain


def gibbs_core(prior_info: np.ndarray, prior_prec: np.ndarray, init_states: np.ndarray,
               groups: list, cfg: GibbsConfig, rng: np.random.Generator) -> TiltedMixture:
    """Run the blocked sweeps against a Gaussian prior in natural form.

    groups is a list of _Group (one per sensor scan); their measurements are
    treated as one flat vector for labelling, so a single-group call is
    bit-identical to pooling that group alone.
    """
    n_targets, dim = prior_info.shape
    packed = _pack_groups(groups, n_targets, dim)
    m_total = packed[0].shape[0]
    uniforms, normals = _draw_randomness(rng, cfg.total_sweeps, m_total, n_targets, dim)
    keep_means = np.empty((cfg.retained, n_targets, dim))
    keep_covs = np.empty((cfg.retained, n_targets, dim, dim))
    n_fallback, ok = _sweep_kernel(
        *packed, prior_info, prior_prec, init_states.astype(float), uniforms, normals,
        cfg.burn_in, keep_means, keep_covs,
    )
    if not ok:
        raise NotPositiveDefiniteError("conditional precision lost positive definiteness")
    return TiltedMixture(means=keep_means, covs=symmetrize(keep_covs),
                         n_fallback=int(n_fallback))


def gibbs_core_reference(prior_info: np.ndarray, prior_prec: np.ndarray,
                         init_states: np.ndarray, groups: list, cfg: GibbsConfig,
                         rng: np.random.Generator) -> TiltedMixture:
    """Plain-numpy implementation of the identical sweep scheme.

    Consumes the generator exactly like :func:`gibbs_core`; results agree
    with the kernel up to floating-point reassociation.
    """
    n_targets, dim = prior_info.shape
    sizes = [g.points.shape[0] for g in groups]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    m_total = int(offsets[-1])
    eye = np.broadcast_to(np.eye(dim), (n_targets, dim, dim)).copy()
    uniforms, normals = _draw_randomness(rng, cfg.total_sweeps, m_total, n_targets, dim)

    states = init_states.copy()
    labels = np.empty(m_total, dtype=np.int64)
    keep_means = np.empty((cfg.retained, n_targets, dim))
    keep_covs = np.empty((cfg.retained, n_targets, dim, dim))
    n_fallback = 0

    for sweep in range(cfg.total_sweeps):
        for g, group in enumerate(groups):
            lo, hi = offsets[g], offsets[g + 1]
            if lo == hi:
                continue
            logw = _association_log_weights(group.points, states, group)
            labels[lo:hi], dead = _categorical_rows(
                logw, uniforms[sweep, lo:hi], group.prior_probs
            )
            n_fallback += dead

        prec = prior_prec.copy()
        info = prior_info.copy()
        for g, group in enumerate(groups):
            lo, hi = offsets[g], offsets[g + 1]
            if lo == hi:
                continue
            lbl = labels[lo:hi]
            cnt = np.bincount(lbl, minlength=n_targets + 1)[1:].astype(float)
            if not cnt.any():
                continue
            pts = group.points
            sums = np.stack(
                [
                    np.bincount(lbl, weights=pts[:, 0], minlength=n_targets + 1)[1:],
                    np.bincount(lbl, weights=pts[:, 1], minlength=n_targets + 1)[1:],
                ],
                axis=1,
            )
            prec += cnt[:, None, None] * group.prec_gain
            info += np.einsum("kab,kb->ka", group.info_gain, sums)

        chol = np.linalg.cholesky(prec)
        chol_inv = np.linalg.solve(chol, eye)
        covs = symmetrize(np.swapaxes(chol_inv, -1, -2) @ chol_inv)
        means = np.einsum("kab,kb->ka", covs, info)
        states = means + np.einsum("kba,kb->ka", chol_inv, normals[sweep])

        if sweep >= cfg.burn_in:
            keep_means[sweep - cfg.burn_in] = means
            keep_covs[sweep - cfg.burn_in] = covs

    return TiltedMixture(means=keep_means, covs=keep_covs, n_fallback=n_fallback)


def run_tilted_gibbs(cavity: list, y: np.ndarray, sensor, cfg: GibbsConfig,
                     rng: np.random.Generator | None = None) -> TiltedMixture:
    """Approximate one sensor's tilted distribution as a Gaussian mixture.

    cavity is the per-target prior (one GaussianBelief per target); y is the
    sensor's scan, (M, 2).  The state sample is initialised at the cavity
    means; the sweep order within each iteration is labels first, then
    states.  Deterministic given the generator state.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    prior_prec = cholesky_inverse(np.stack([b.cov for b in cavity]))
    means = np.stack([b.mean for b in cavity])
    prior_info = np.einsum("kab,kb->ka", prior_prec, means)
    group = _prepare_group(y, sensor)
    return gibbs_core(prior_info, prior_prec, means, [group], cfg, rng)
