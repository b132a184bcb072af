"""Interaction matrices, positive-definite repair and the ellipsoidal constraint.

A user's interaction block maps a slate ``x`` (item-major, slot-minor, as
in the flat layout) to slot-conditional event probabilities. Diagonal
``K x K`` blocks are ``p_tilde[j] * I``; a cross block between items
``j != j'`` has a zero diagonal, because an item shown in slot ``k``
excludes every other item from that slot. The lower cross blocks are
transposes of the upper ones, so an assembled block is symmetric by
construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import (NotConvexError, check_count, check_pd, check_positive,
                          check_random_state, check_square, check_symmetric, check_vector)

__all__ = [
    "PD_TRIGGER",
    "COND_CAP",
    "InteractionBlock",
    "assemble_block",
    "min_eigenvalue",
    "repair_pd",
    "InteractionModel",
    "EllipsoidConstraint",
    "to_ellipsoid_constraint",
    "AffineResponse",
    "dependent_constraint",
    "build_qcqp",
    "synthetic_block",
    "PDRepair",
]

logger = logging.getLogger(__name__)

PD_TRIGGER = 1e-10
COND_CAP = 1e12


@dataclass(frozen=True, eq=False)
class InteractionBlock:
    """Parameters of one user's interaction matrix.

    Attributes
    ----------
    p_tilde : ndarray of shape (J,)
        Prior event probability of each item, in (0, 1].
    offdiag : ndarray of shape (J, J, K, K)
        ``offdiag[j, j']`` for ``j < j'`` is the cross block; other
        entries are ignored.
    slot_weights : ndarray of shape (K,)
        Multiplies the diagonal of every item block. All ones reproduces
        ``p_tilde[j] * I``.
    """

    p_tilde: np.ndarray
    offdiag: np.ndarray
    slot_weights: np.ndarray

    @property
    def n_items(self) -> int:
        return self.p_tilde.shape[0]

    @property
    def n_slots(self) -> int:
        return self.slot_weights.shape[0]

    def matrix(self) -> np.ndarray:
        return assemble_block(self.p_tilde, self.offdiag, self.slot_weights)

    def to_dict(self) -> dict:
        J, K = self.n_items, self.n_slots
        pairs = [self.offdiag[j, jp].tolist() for j in range(J) for jp in range(j + 1, J)]
        return {"J": J, "K": K, "p_tilde": self.p_tilde.tolist(), "offdiag": pairs,
                "slot_weights": self.slot_weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "InteractionBlock":
        J = check_count(data["J"], "J")
        K = check_count(data["K"], "K")
        off = np.zeros((J, J, K, K))
        pairs = [(j, jp) for j in range(J) for jp in range(j + 1, J)]
        blocks = data.get("offdiag", [])
        if len(blocks) != len(pairs):
            raise ValueError(f"expected {len(pairs)} cross blocks, got {len(blocks)}")
        for (j, jp), blk in zip(pairs, blocks):
            off[j, jp] = check_square(blk, f"offdiag[{j},{jp}]", K)
        w = np.asarray(data.get("slot_weights", np.ones(K)), dtype=float)
        assemble_block(data["p_tilde"], off, w)  # validates
        return cls(np.asarray(data["p_tilde"], dtype=float), off, w)


def _coerce_offdiag(offdiag, J: int, K: int) -> np.ndarray:
    if isinstance(offdiag, dict):
        arr = np.zeros((J, J, K, K))
        for (j, jp), blk in offdiag.items():
            if not 0 <= j < jp < J:
                raise ValueError(f"cross block key {(j, jp)} must satisfy 0 <= j < j' < {J}")
            arr[j, jp] = check_square(blk, f"offdiag[{j},{jp}]", K)
        return arr
    arr = np.asarray(offdiag, dtype=float)
    if arr.shape != (J, J, K, K):
        raise ValueError(f"offdiag must have shape {(J, J, K, K)}, got {arr.shape}")
    return arr


def assemble_block(p_tilde, offdiag, slot_weights=None) -> np.ndarray:
    """Assemble a symmetric ``JK x JK`` interaction block.

    Parameters
    ----------
    p_tilde : array_like of shape (J,)
        Item priors in (0, 1].
    offdiag : array_like of shape (J, J, K, K) or dict
        Upper cross blocks keyed by ``(j, j')`` with ``j < j'``. Each must
        have a zero diagonal.
    slot_weights : array_like of shape (K,), optional
        Positive per-slot multipliers on the diagonal blocks.

    Returns
    -------
    ndarray of shape (JK, JK)
    """
    p_tilde = check_vector(p_tilde, "p_tilde")
    if np.any(p_tilde <= 0) or np.any(p_tilde > 1):
        raise ValueError("p_tilde entries must lie in (0, 1]")
    J = p_tilde.shape[0]
    if isinstance(offdiag, dict):
        K = int(np.asarray(next(iter(offdiag.values()))).shape[0]) if offdiag else (
            1 if slot_weights is None else len(slot_weights))
    else:
        K = int(np.shape(offdiag)[-1])
    off = _coerce_offdiag(offdiag, J, K)
    w = np.ones(K) if slot_weights is None else check_vector(slot_weights, "slot_weights", K)
    if np.any(w <= 0):
        raise ValueError("slot_weights must be positive")
    Q = np.zeros((J * K, J * K))
    for j in range(J):
        Q[j * K:(j + 1) * K, j * K:(j + 1) * K] = np.diag(p_tilde[j] * w)
        for jp in range(j + 1, J):
            blk = off[j, jp]
            if np.any(np.diag(blk) != 0):
                raise ValueError(f"cross block ({j}, {jp}) must have a zero diagonal")
            Q[j * K:(j + 1) * K, jp * K:(jp + 1) * K] = blk
            Q[jp * K:(jp + 1) * K, j * K:(j + 1) * K] = blk.T
    return Q


def min_eigenvalue(Q) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Reduces to tridiagonal form and isolates the lowest eigenvalue by
    bisection (LAPACK ``syevx``); falls back once to the relatively
    robust representation driver before giving up.
    """
    Q = check_symmetric(Q, "Q", tol=1e-12)
    for driver in ("evx", "evr"):
        try:
            return float(sla.eigvalsh(Q, subset_by_index=[0, 0], driver=driver)[0])
        except (np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("eigenvalue driver %s failed: %s", driver, exc)
    raise np.linalg.LinAlgError("minimum eigenvalue computation did not converge")


def repair_pd(Q, epsilon: float, *, trigger: float = PD_TRIGGER, return_shift: bool = False):
    """Shift the diagonal of ``Q`` so that its smallest eigenvalue is ``epsilon``.

    The shift ``-lambda_1 + epsilon`` is applied when ``lambda_1 < trigger``;
    otherwise ``Q`` is returned unchanged. The small positive trigger keeps
    singular inputs out, so the result is always strictly positive definite.

    Returns
    -------
    ndarray, or (ndarray, float) with the applied shift when ``return_shift``.
    """
    epsilon = check_positive(epsilon, "epsilon")
    Q = check_symmetric(Q, "Q", tol=1e-12)
    lam = min_eigenvalue(Q)
    shift = 0.0
    out = Q.copy()
    if lam < trigger:
        shift = -lam + epsilon
        out[np.diag_indices_from(out)] += shift
    return (out, shift) if return_shift else out


@dataclass(frozen=True, eq=False)
class InteractionModel:
    """Repaired per-user interaction blocks for clicks and, optionally, the constraint.

    ``Q_p`` and ``Q_r`` are the block-diagonal assemblies. ``shifts_p`` and
    ``shifts_r`` record the diagonal shift each block received (0 when the
    block was already positive definite).
    """

    blocks_p: tuple
    epsilon: float
    shifts_p: tuple
    blocks_r: tuple | None = None
    shifts_r: tuple | None = None
    trigger: float = PD_TRIGGER

    @property
    def n_users(self) -> int:
        return len(self.blocks_p)

    @property
    def Q_p(self) -> sp.csr_matrix:
        return sp.block_diag(self.blocks_p, format="csr")

    @property
    def Q_r(self) -> sp.csr_matrix | None:
        return None if self.blocks_r is None else sp.block_diag(self.blocks_r, format="csr")

    def metadata(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "trigger": self.trigger,
            "repaired_p": [i for i, s in enumerate(self.shifts_p) if s > 0],
            "repaired_r": [] if self.shifts_r is None else
            [i for i, s in enumerate(self.shifts_r) if s > 0],
            "shifts_p": list(self.shifts_p),
            "shifts_r": None if self.shifts_r is None else list(self.shifts_r),
        }

    @classmethod
    def from_blocks(cls, blocks_p, epsilon: float, blocks_r=None,
                    trigger: float = PD_TRIGGER) -> "InteractionModel":
        """Repair each raw block and collect the results."""
        rep_p = [repair_pd(np.asarray(Q, dtype=float), epsilon, trigger=trigger, return_shift=True)
                 for Q in blocks_p]
        rep_r = None
        if blocks_r is not None:
            rep_r = [repair_pd(np.asarray(Q, dtype=float), epsilon, trigger=trigger,
                               return_shift=True) for Q in blocks_r]
            if len(rep_r) != len(rep_p):
                raise ValueError("blocks_p and blocks_r must cover the same users")
        return cls(tuple(Q for Q, _ in rep_p), float(epsilon), tuple(s for _, s in rep_p),
                   None if rep_r is None else tuple(Q for Q, _ in rep_r),
                   None if rep_r is None else tuple(s for _, s in rep_r), trigger)


@dataclass(frozen=True, eq=False)
class EllipsoidConstraint:
    """The set ``{x : (x - center)' B (x - center) <= radius_sq}``.

    ``B`` is a dense symmetric positive definite matrix or a 1-D positive
    array holding a diagonal.
    """

    B: np.ndarray = field(repr=False)
    center: np.ndarray = field(repr=False)
    radius_sq: float

    def __post_init__(self):
        B = check_pd(self.B, "B")
        center = check_vector(self.center, "center", B.shape[0])
        r = check_positive(float(self.radius_sq), "radius_sq")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius_sq", r)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.B.ndim == 1

    def apply_B(self, v: np.ndarray) -> np.ndarray:
        """``B v`` for a vector or ``v B`` row-wise for a stack of rows."""
        if self.is_diagonal:
            return v * self.B
        return v @ self.B if v.ndim == 2 else self.B @ v

    def value(self, x) -> np.ndarray | float:
        """``(x - center)' B (x - center)``, row-wise for 2-D input."""
        z = np.asarray(x, dtype=float) - self.center
        Bz = self.apply_B(z)
        return np.einsum("...i,...i->...", z, Bz)

    def contains(self, x, tol: float = 1e-9):
        return self.value(x) <= self.radius_sq * (1 + tol)

    def _eig(self):
        if self.is_diagonal:
            return self.B, None
        w, V = np.linalg.eigh(self.B)
        return w, V

    def condition(self) -> float:
        w, _ = self._eig()
        return float(w.max() / w.min())

    def _power(self, exponent: float):
        w, V = self._eig()
        if w.max() / w.min() > COND_CAP:
            raise NotConvexError(f"B is numerically singular (condition {w.max() / w.min():.2e})")
        if V is None:
            return w ** exponent
        return (V * w ** exponent) @ V.T

    def inv_sqrt(self) -> np.ndarray:
        """``B^{-1/2}`` (a 1-D array when ``B`` is diagonal)."""
        return self._power(-0.5)

    def sqrt(self) -> np.ndarray:
        return self._power(0.5)

    def to_dict(self) -> dict:
        key = "B_diag" if self.is_diagonal else "B"
        return {key: self.B.tolist(), "center": self.center.tolist(), "radius_sq": self.radius_sq}

    @classmethod
    def from_dict(cls, data: dict) -> "EllipsoidConstraint":
        B = data["B_diag"] if "B_diag" in data else data["B"]
        return cls(np.asarray(B, dtype=float), np.asarray(data["center"], dtype=float),
                   float(data["radius_sq"]))


def to_ellipsoid_constraint(Q_r, P: float, c_r=None) -> EllipsoidConstraint:
    """Rewrite ``x' Q_r x - 2 x' Q_r c_r <= P`` as an ellipsoid.

    The set equals ``(x - c_r)' Q_r (x - c_r) <= P + c_r' Q_r c_r``.

    Raises
    ------
    ValueError
        If the right-hand side is not positive, i.e. the set is empty or
        a single point.
    """
    Q_r = check_pd(Q_r, "Q_r")
    s = Q_r.shape[0]
    c_r = np.zeros(s) if c_r is None else check_vector(c_r, "c_r", s)
    Qc = Q_r * c_r if Q_r.ndim == 1 else Q_r @ c_r
    radius_sq = float(P) + float(c_r @ Qc)
    if not radius_sq > 0:
        raise ValueError(f"P + c_r'Q_r c_r = {radius_sq:.3e} must be positive")
    return EllipsoidConstraint(Q_r, c_r, radius_sq)


@dataclass(frozen=True, eq=False)
class AffineResponse:
    """Dependent constraint parameters ``r = f(p) = shift - scale * p``.

    With clicks ``p = -Q_p x`` this gives ``r = scale * Q_p x + shift``,
    which is a positive scaling followed by a linear shift.
    """

    scale: float
    shift: np.ndarray

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return self.shift - self.scale * p


def dependent_constraint(Q_p, P: float, scale: float, shift=None):
    """Ellipsoid equivalent to ``x' f(-Q_p x) <= P`` for an affine ``f``.

    Returns the constraint together with ``f`` so callers can evaluate the
    original inequality directly. ``Q_r = scale * Q_p`` and
    ``c_r = -Q_r^{-1} shift / 2``.
    """
    scale = check_positive(scale, "scale")
    Q_p = check_pd(Q_p, "Q_p")
    s = Q_p.shape[0]
    shift = np.zeros(s) if shift is None else check_vector(shift, "shift", s)
    Q_r = scale * Q_p
    c_r = -0.5 * (shift / Q_r if Q_r.ndim == 1 else np.linalg.solve(Q_r, shift))
    return to_ellipsoid_constraint(Q_r, P, c_r), AffineResponse(scale, shift)


def build_qcqp(model: InteractionModel, P: float, gamma: float, *, C=None, c=None, E=None, e=None,
               local=None, n_users: int | None = None):
    """QCQP ``min x'(Q_p + gamma/2 I)x`` s.t. ``x'Q_r x <= P`` and linear rows.

    Linear rows come from ``C x <= c`` and ``E x = e`` when given, or
    from the per-user serving polytope ``local`` repeated over users.
    Uses ``Q_p`` for the constraint when the model has no ``Q_r``.
    """
    from .linearizer import QcqpInstance

    gamma = check_positive(gamma, "gamma")
    Q_p = model.Q_p.toarray()
    Q_r = Q_p if model.Q_r is None else model.Q_r.toarray()
    s = Q_p.shape[0]
    A = Q_p + 0.5 * gamma * np.eye(s)
    if local is not None:
        users = model.n_users if n_users is None else n_users
        C = sp.block_diag([local.matrix] * users).toarray()
        c = np.tile(local.bound, users)
    return QcqpInstance(A, np.zeros(s), to_ellipsoid_constraint(Q_r, P), C=C, c=c, Ceq=E, ceq=e)


def synthetic_block(J: int, K: int, random_state=None, *, a_max: float = 0.3,
                    decay: bool = True) -> InteractionBlock:
    """Random interaction block for simulation.

    Priors are uniform on [0.2, 1]; with ``decay`` the diagonal falls as
    ``1 / (1 + k)`` in slot position ``k``. Cross coefficients are uniform
    on ``[0, a_max]`` off the diagonal of each cross block.
    """
    rng = check_random_state(random_state)
    p_tilde = rng.uniform(0.2, 1.0, size=J)
    off = rng.uniform(0.0, a_max, size=(J, J, K, K))
    idx = np.arange(K)
    off[:, :, idx, idx] = 0.0
    w = 1.0 / (1.0 + np.arange(K)) if decay else np.ones(K)
    return InteractionBlock(p_tilde, off, w)


class PDRepair(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`repair_pd`.

    ``X`` is one symmetric matrix or a sequence of blocks. ``fit`` stores
    the repaired blocks in ``blocks_``, the applied shifts in ``shifts_``
    and their smallest eigenvalues in ``min_eigenvalues_``.
    ``transform`` repairs ``X`` and returns the matrix (block diagonal
    for several blocks).
    """

    def __init__(self, epsilon: float = 2.0, trigger: float = PD_TRIGGER):
        self.epsilon = epsilon
        self.trigger = trigger

    def _repair(self, X):
        blocks = [X] if np.ndim(X) == 2 else list(X)
        return [repair_pd(Q, self.epsilon, trigger=self.trigger, return_shift=True)
                for Q in blocks]

    def fit(self, X, y=None):
        out = self._repair(X)
        self.blocks_ = [Q for Q, _ in out]
        self.shifts_ = np.array([s for _, s in out])
        self.min_eigenvalues_ = np.array([min_eigenvalue(Q) for Q in self.blocks_])
        return self

    def transform(self, X):
        blocks = [Q for Q, _ in self._repair(X)]
        if len(blocks) == 1:
            return blocks[0]
        return sla.block_diag(*blocks)
