"""Gaussian algebra in moment and information (natural-parameter) form.

Beliefs live in moment form (mean, covariance); multiplicative message
updates happen in natural coordinates, where combining Gaussians is plain
addition of parameters: precision ``prec = cov^-1`` and information vector
``info = cov^-1 @ mean``.

All matrix inversions go through a Cholesky factorisation, which doubles
as the positive-definiteness check, and every matrix-valued result is
re-symmetrised to suppress floating-point drift across repeated updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianBelief",
    "NaturalParams",
    "GaussianMixture",
    "NotPositiveDefiniteError",
    "InvalidCavityError",
    "symmetrize",
    "cholesky_inverse",
    "is_positive_definite",
    "to_natural",
    "to_moment",
    "natural_add",
    "natural_sub",
    "mixture_moments",
    "sample_gaussian",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A matrix required to be positive definite failed its factorisation."""


class InvalidCavityError(ValueError):
    """Natural parameters with an indefinite precision cannot be normalised.

    Raised by :func:`to_moment`; the caller decides the recovery policy.
    """


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + A^T)/2 over the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def cholesky_inverse(a: np.ndarray) -> np.ndarray:
    """Invert symmetric positive definite matrices (optionally batched).

    Uses the Cholesky factor, so failure to factorise is the PD check;
    raises :class:`NotPositiveDefiniteError` if any matrix in the stack
    is not positive definite.
    """
    a = np.asarray(a, dtype=float)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape).copy()
    chol_inv = np.linalg.solve(chol, eye)
    return symmetrize(np.swapaxes(chol_inv, -1, -2) @ chol_inv)


def is_positive_definite(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(np.asarray(a, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass
class GaussianBelief:
    """A Gaussian state belief in moment form.

    mean has shape (n,), cov shape (n, n); cov must be symmetric positive
    definite for the belief to be valid.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"cov shape {self.cov.shape} does not match mean dimension {n}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class NaturalParams:
    """A Gaussian in natural (information) coordinates.

    info = cov^-1 @ mean, prec = cov^-1.  For a valid belief prec is
    positive definite; cavity-style intermediates may be indefinite, which
    is legal here and only rejected on conversion back to moment form.
    """

    info: np.ndarray
    prec: np.ndarray

    def __post_init__(self):
        self.info = np.asarray(self.info, dtype=float).reshape(-1)
        self.prec = np.asarray(self.prec, dtype=float)
        n = self.info.shape[0]
        if self.prec.shape != (n, n):
            raise ValueError(f"prec shape {self.prec.shape} does not match info dimension {n}")

    @property
    def dim(self) -> int:
        return self.info.shape[0]

    def is_valid(self) -> bool:
        return is_positive_definite(self.prec)


@dataclass
class GaussianMixture:
    """Equally weighted Gaussian mixture (weights 1/N implied)."""

    components: list

    def __post_init__(self):
        if len(self.components) == 0:
            raise ValueError("mixture needs at least one component")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim


def to_natural(b: GaussianBelief) -> NaturalParams:
    """Moment form -> natural form: prec = cov^-1, info = prec @ mean."""
    prec = cholesky_inverse(b.cov)
    return NaturalParams(info=prec @ b.mean, prec=prec)


def to_moment(n: NaturalParams) -> GaussianBelief:
    """Natural form -> moment form: cov = prec^-1, mean = cov @ info.

    Raises :class:`InvalidCavityError` when prec is not positive definite.
    """
    try:
        cov = cholesky_inverse(n.prec)
    except NotPositiveDefiniteError as exc:
        raise InvalidCavityError("precision matrix is not positive definite") from exc
    return GaussianBelief(mean=cov @ n.info, cov=cov)


def _check_dims(a: NaturalParams, b: NaturalParams):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def natural_add(a: NaturalParams, b: NaturalParams) -> NaturalParams:
    """Componentwise sum, i.e. the product of the two Gaussian factors."""
    _check_dims(a, b)
    return NaturalParams(info=a.info + b.info, prec=symmetrize(a.prec + b.prec))


def natural_sub(a: NaturalParams, b: NaturalParams) -> NaturalParams:
    """Componentwise difference, i.e. dividing out a Gaussian factor."""
    _check_dims(a, b)
    return NaturalParams(info=a.info - b.info, prec=symmetrize(a.prec - b.prec))


def mixture_moments(m: GaussianMixture) -> GaussianBelief:
    """First two moments of an equally weighted Gaussian mixture.

    mean is the average of component means; cov follows the law of total
    variance: average component covariance plus the spread of the means.
    """
    means = np.stack([c.mean for c in m.components])
    covs = np.stack([c.cov for c in m.components])
    mean = means.mean(axis=0)
    dev = means - mean
    cov = covs.mean(axis=0) + (dev[:, :, None] * dev[:, None, :]).mean(axis=0)
    return GaussianBelief(mean=mean, cov=symmetrize(cov))


def sample_gaussian(b: GaussianBelief, rng: np.random.Generator) -> np.ndarray:
    """Draw one sample, mean + L z with L the Cholesky factor of cov."""
    try:
        chol = np.linalg.cholesky(b.cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    return b.mean + chol @ rng.standard_normal(b.dim)
