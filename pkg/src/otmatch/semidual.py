"""Semi-dual objective for entropic transport and its calculus.

The dual problem over two potentials collapses to an unconstrained concave
program in a single potential ``phi`` living on the second marginal's
support: the partner potential is recovered by a soft-max transform.  This
module provides that transform and its reverse, the objective ``J``, its
first variation (a signed mass vector), and the coupling induced by a
potential.  All reductions run in stabilized log domain with a fixed
summation order, so traces are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .logops import logsumexp
from .measures import Instance

__all__ = [
    "Coupling",
    "plus_transform",
    "minus_transform",
    "semidual_value",
    "log_marginal_y",
    "marginal_y",
    "first_variation",
    "coupling",
    "log_reference",
    "primal_value",
]

COUPLING_MASS_TOL = 1e-12


def _check_finite(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite everywhere")
    return v


@dataclass(frozen=True)
class Coupling:
    """Joint mass matrix over the product of the two supports.

    Masses are carried in log domain (geometric interpolation and Gibbs
    reweighting are exact there); ``masses`` materializes them.  Total
    mass must be 1 within 1e-12.
    """

    log_masses: np.ndarray
    total_mass: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lm = np.asarray(self.log_masses, dtype=np.float64)
        if lm.ndim != 2:
            raise ValueError(f"log_masses must be a matrix, got shape {lm.shape}")
        if np.any(np.isnan(lm)) or np.any(lm == np.inf):
            raise ValueError("log_masses must be < inf and not NaN")
        total = float(np.exp(logsumexp(lm.reshape(-1))))
        if abs(total - 1.0) > COUPLING_MASS_TOL:
            raise ValueError(f"coupling mass is {total!r}, expected 1 within {COUPLING_MASS_TOL}")
        lm = lm.copy()
        lm.setflags(write=False)
        object.__setattr__(self, "log_masses", lm)
        object.__setattr__(self, "total_mass", total)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_masses.shape

    def marginal_x(self) -> np.ndarray:
        return np.exp(logsumexp(self.log_masses, axis=1))

    def marginal_y(self) -> np.ndarray:
        return np.exp(logsumexp(self.log_masses, axis=0))


# ---------------------------------------------------------------------------
# Potential transforms
# ---------------------------------------------------------------------------

def plus_transform(phi: np.ndarray, inst: Instance) -> np.ndarray:
    """Soft-max transform sending a Y-potential to an X-potential.

    Component i is ``logsumexp_j(log b_j + phi_j - C_ij / eps)``.  This is
    the partial maximizer of the two-potential dual objective in its first
    argument, which is what makes the semi-dual a function of phi alone.
    """
    phi = _check_finite(phi, "phi")
    return logsumexp(inst.log_b[None, :] + phi[None, :] - inst.cost_over_eps, axis=1)


def minus_transform(psi: np.ndarray, inst: Instance) -> np.ndarray:
    """Reverse transform: component j is ``-logsumexp_i(log a_i + psi_i + C_ij / eps)``."""
    psi = _check_finite(psi, "psi")
    return -logsumexp(inst.log_a[:, None] + psi[:, None] + inst.cost_over_eps, axis=0)


# ---------------------------------------------------------------------------
# Objective, marginal, first variation
# ---------------------------------------------------------------------------

def semidual_value(phi: np.ndarray, inst: Instance) -> float:
    """Semi-dual objective J(phi) = <b, phi> - <a, phi_plus>.

    Concave, and invariant to adding a constant to phi (the transform
    absorbs the shift).
    """
    phi = _check_finite(phi, "phi")
    return float(inst.b @ phi - inst.a @ plus_transform(phi, inst))


def log_marginal_y(phi: np.ndarray, inst: Instance, phi_plus: np.ndarray | None = None) -> np.ndarray:
    """Log of the Y-marginal of the coupling induced by phi.

    log p_j = log b_j + phi_j + logsumexp_i(log a_i - phi_plus_i - C_ij/eps).
    The result is a probability vector within 1e-12 because each row of the
    induced coupling is normalized against the same transform.
    """
    phi = _check_finite(phi, "phi")
    if phi_plus is None:
        phi_plus = plus_transform(phi, inst)
    col = logsumexp(inst.log_a[:, None] - phi_plus[:, None] - inst.cost_over_eps, axis=0)
    return inst.log_b + phi + col


def marginal_y(phi: np.ndarray, inst: Instance, phi_plus: np.ndarray | None = None) -> np.ndarray:
    """Y-marginal mass vector of the coupling induced by phi."""
    return np.exp(log_marginal_y(phi, inst, phi_plus))


def first_variation(phi: np.ndarray, inst: Instance, phi_plus: np.ndarray | None = None) -> np.ndarray:
    """First variation of J at phi, as a signed mass vector: b - marginal.

    Entries sum to zero (both terms are probability vectors), vanishes
    exactly at an optimal potential, and one representation serves the
    plain, kernel-smoothed, and matching-style updates alike.
    """
    return inst.b - marginal_y(phi, inst, phi_plus)


def coupling(phi: np.ndarray, inst: Instance) -> Coupling:
    """Coupling induced by phi: pi_ij = exp(phi_j - phi_plus_i - C_ij/eps) a_i b_j.

    Row sums equal the first marginal's weights by construction: the
    transform in the exponent is exactly the row log-normalizer.
    """
    phi = _check_finite(phi, "phi")
    phi_plus = plus_transform(phi, inst)
    lm = (
        inst.log_a[:, None]
        + inst.log_b[None, :]
        + phi[None, :]
        - phi_plus[:, None]
        - inst.cost_over_eps
    )
    return Coupling(log_masses=lm)


# ---------------------------------------------------------------------------
# Primal side
# ---------------------------------------------------------------------------

def log_reference(inst: Instance) -> np.ndarray:
    """Log masses of the normalized Gibbs reference exp(-C/eps) * (a x b) / Z."""
    lr = inst.log_a[:, None] + inst.log_b[None, :] - inst.cost_over_eps
    z = logsumexp(lr.reshape(-1))
    return lr - z


def primal_value(pi: Coupling, inst: Instance) -> float:
    """KL divergence of a coupling from the normalized Gibbs reference.

    Returns ``inf`` when ``pi`` places mass outside the reference's
    support.  Zero masses in ``pi`` contribute nothing (0 log 0 = 0).
    """
    log_ref = log_reference(inst)
    lp = pi.log_masses
    if lp.shape != log_ref.shape:
        raise ValueError(f"coupling shape {lp.shape} does not match instance {log_ref.shape}")
    live = lp > -np.inf
    if np.any(live & (log_ref == -np.inf)):
        return float("inf")
    terms = np.zeros_like(lp)
    terms[live] = np.exp(lp[live]) * (lp[live] - log_ref[live])
    return float(terms.sum())
