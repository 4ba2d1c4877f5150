"""Coupled-dipole solve for one realization of the atomic cloud."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import K_ATOM, AtomModel

COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-10
DIRECT_SWEEP_MAX = 10  # below this many detunings direct inversion is cheaper


class DegenerateRealizationError(RuntimeError):
    """The coupled-dipole matrix is singular or too ill-conditioned to trust."""


@dataclass(frozen=True, eq=False)
class CloudRealization:
    """Atom positions (N, 3) in units of lambda_a, centred on the origin."""

    positions: np.ndarray
    seed_tag: tuple = ()

    @property
    def n_atoms(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class DipoleSolution:
    positions: np.ndarray  # (N, 3)
    dipoles: np.ndarray    # (N, 3) complex
    residual_norm: float
    condition: float


def interaction_matrix(positions, inv_alpha, k: float = K_ATOM) -> np.ndarray:
    """Stack of coupled-dipole matrices M = I/(eps0 alpha) - G.

    ``inv_alpha`` may be a scalar or a 1-D array (one matrix per entry).
    """
    g = core.coupling_matrix(positions, k)
    inv_alpha = np.atleast_1d(np.asarray(inv_alpha, dtype=complex)) / core.EPS0
    m = np.broadcast_to(-g, (len(inv_alpha),) + g.shape).copy()
    idx = np.arange(g.shape[0])
    m[:, idx, idx] += inv_alpha[:, None]
    return m


def _cond1_estimate(m: np.ndarray, minv: np.ndarray) -> np.ndarray:
    return np.abs(m).sum(axis=-2).max(axis=-1) * np.abs(minv).sum(axis=-2).max(axis=-1)


def solve_stack(m: np.ndarray, rhs: np.ndarray):
    """Solve M_d X_d = B for every matrix in the stack.

    Parameters
    ----------
    m : (D, 3N, 3N) complex
    rhs : (3N, F) complex, shared by every matrix

    Returns
    -------
    x : (D, 3N, F) solutions
    cond : (D,) 1-norm condition numbers
    residual : (D,) relative residual norms
    """
    try:
        minv = np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise DegenerateRealizationError("singular coupled-dipole matrix") from exc
    cond = _cond1_estimate(m, minv)
    x = minv @ rhs
    res = m @ x - rhs
    bnorm = np.linalg.norm(rhs)
    residual = np.linalg.norm(res, axis=(-2, -1)) / (bnorm if bnorm > 0 else 1.0)
    return x, cond, residual


def _residual(g, inv_alpha, x, rhs):
    # M x - b with M = diag(1/alpha) - G, without assembling M per detuning
    d, n3, f = x.shape
    gx = (g @ x.transpose(1, 0, 2).reshape(n3, d * f)).reshape(n3, d, f).transpose(1, 0, 2)
    res = x * (inv_alpha / core.EPS0)[:, None, None] - gx - rhs
    bnorm = np.linalg.norm(rhs)
    return np.linalg.norm(res, axis=(-2, -1)) / (bnorm if bnorm > 0 else 1.0)


def solve_detuning_sweep(positions, inv_alpha, rhs, k: float = K_ATOM):
    """Solve the coupled-dipole system for many polarizabilities at fixed positions.

    Only the diagonal 1/alpha changes across a detuning sweep, so G = V L V^-1
    is diagonalized once and each detuning costs O(N^2). The 1-norm condition
    number is bounded by (|G|_1 + |1/alpha|) cond_1(V) max_j |1/alpha - l_j|^-1.
    Points whose residual exceeds ``RESIDUAL_LIMIT`` (a badly conditioned
    eigenbasis) are re-solved by direct inversion. Short sweeps, where one
    eigendecomposition costs more than the direct solves, go straight to
    direct inversion.

    Returns (x (D, 3N, F), cond (D,), residual (D,)).
    """
    inv_alpha = np.atleast_1d(np.asarray(inv_alpha, dtype=complex))
    if len(inv_alpha) <= DIRECT_SWEEP_MAX:
        return solve_stack(interaction_matrix(positions, inv_alpha, k), rhs)
    g = core.coupling_matrix(positions, k)
    try:
        lam, v = np.linalg.eig(g)
        v_inv = np.linalg.inv(v)
    except np.linalg.LinAlgError:
        lam = None
    if lam is not None:
        shift = inv_alpha[:, None] / core.EPS0 - lam[None, :]
        x = v @ ((v_inv @ rhs)[None] / shift[:, :, None])
        cond_v = np.abs(v).sum(axis=0).max() * np.abs(v_inv).sum(axis=0).max()
        g_norm = np.abs(g).sum(axis=0).max()
        with np.errstate(divide="ignore"):
            cond = (g_norm + np.abs(inv_alpha)) * cond_v / np.abs(shift).min(axis=1)
        residual = _residual(g, inv_alpha, x, rhs)
        redo = ~(residual <= RESIDUAL_LIMIT)
    else:
        x = np.empty((len(inv_alpha),) + rhs.shape, dtype=complex)
        cond = np.empty(len(inv_alpha))
        residual = np.empty(len(inv_alpha))
        redo = np.ones(len(inv_alpha), dtype=bool)
    if redo.any():
        m = interaction_matrix(positions, inv_alpha[redo], k)
        x[redo], cond[redo], residual[redo] = solve_stack(m, rhs)
    return x, cond, residual


def solve_coupled_dipoles(cloud: CloudRealization, field, model: AtomModel,
                          k: float = K_ATOM) -> DipoleSolution:
    """Induced dipoles p_i = eps0 alpha [E_inc(r_i) + sum_j G_ij p_j].

    Raises :class:`DegenerateRealizationError` when the 1-norm condition
    number exceeds ``COND_LIMIT``.
    """
    pos = np.asarray(cloud.positions, dtype=float)
    alpha = core.atomic_polarizability(model, k)
    m = interaction_matrix(pos, 1.0 / alpha, k)
    rhs = field.eval_E(pos).reshape(-1, 1)
    x, cond, residual = solve_stack(m, rhs)
    if not np.isfinite(cond[0]) or cond[0] > COND_LIMIT:
        raise DegenerateRealizationError(f"condition number {cond[0]:.3g} exceeds {COND_LIMIT:g}")
    return DipoleSolution(pos, x[0, :, 0].reshape(-1, 3), float(residual[0]), float(cond[0]))
