"""Model interface shared by every jump-diffusion in the package.

All coefficient methods are vectorised over a batch of paths: ``x`` has shape
``(P, d)`` and ``t`` is either a scalar or a ``(P,)`` array. Derivative arrays
put the differentiation index last, e.g. ``diffusion_jac[p, a, b, c]`` is
``dX_ab / dx_c``.
"""

from __future__ import annotations

import numpy as np

from ..stochastic_core import MarkLaw

FAMILIES = ("BEL_delta", "BEL_gamma", "hypoelliptic", "SVJ_delta", "SVJ_gamma", "SVJJ_delta")


class NonFiniteStateError(FloatingPointError):
    pass


class SingularVariationError(np.linalg.LinAlgError):
    pass


class ModelSpec:
    """Base class for a jump-diffusion ``dx = Z dt + X dW + Y(x-, y) dN``.

    Subclasses are frozen dataclasses; they must stay picklable so batches
    can be shipped to worker processes.
    """

    name = "model"
    dim = 1
    brownian_dim = 1
    families: frozenset = frozenset()
    components: tuple = ("spot",)
    # Paths on which class_J payoffs are admitted by the weighted estimators.
    admits_indicators = False

    # --- initial condition --------------------------------------------------
    def initial_state(self, spot: float | None = None) -> np.ndarray:
        raise NotImplementedError

    @property
    def spot(self) -> float:
        raise NotImplementedError

    def spot_jacobian(self) -> np.ndarray:
        """d z / d S0."""
        raise NotImplementedError

    def spot_hessian(self) -> np.ndarray:
        """d^2 z / d S0^2."""
        return np.zeros(self.dim)

    @property
    def epsilon(self) -> float:
        """Ellipticity floor of X X^T; 0 marks a degenerate model."""
        return 0.0

    # --- continuous part ----------------------------------------------------
    def drift(self, t, x):
        raise NotImplementedError

    def diffusion(self, t, x):
        raise NotImplementedError

    def drift_jac(self, t, x):
        raise NotImplementedError

    def diffusion_jac(self, t, x):
        raise NotImplementedError

    def drift_hess(self, t, x):
        return np.zeros(x.shape + (self.dim, self.dim))

    def diffusion_hess(self, t, x):
        return np.zeros((x.shape[0], self.dim, self.brownian_dim, self.dim, self.dim))

    # --- jumps --------------------------------------------------------------
    @property
    def jump_intensity(self) -> float:
        return 0.0

    @property
    def mark_law(self) -> MarkLaw | None:
        return None

    def jump(self, t, x, y):
        return np.zeros_like(x)

    def jump_jac(self, t, x, y):
        return np.zeros(x.shape + (self.dim,))

    def jump_hess(self, t, x, y):
        return np.zeros(x.shape + (self.dim, self.dim))

    # --- observation --------------------------------------------------------
    def observe(self, x, component="spot", t=None):
        raise NotImplementedError

    def observe_jac(self, x, component="spot", t=None):
        raise NotImplementedError

    # --- hooks for weights --------------------------------------------------
    def right_inverse(self, t, x, X=None):
        """Minimal-norm right inverse ``R = X^T (X X^T)^{-1}``, shape (P, m, d)."""
        if X is None:
            X = self.diffusion(t, x)
        return right_inverse(X)

    def right_inverse_jac(self, t, x, X=None, dX=None, R=None):
        """``dR[p, a, b, c] = dR_ab / dx_c``."""
        if X is None:
            X = self.diffusion(t, x)
        if dX is None:
            dX = self.diffusion_jac(t, x)
        if R is None:
            R = right_inverse(X)
        return right_inverse_jac(X, dX, R)

    def step_map(self, ctx, order):
        """Optional replacement of the Euler step.

        Return ``(x_next, DG, D2G)`` with DG (P, d, d) and D2G (P, d, d, d) the
        first and second derivatives of the one-step map, or None to use Euler.
        """
        return None

    def h_derivative_accumulator(self):
        """Accumulator of ``dC_T^h/dh_k`` for hypoelliptic weights (None: C_T deterministic)."""
        return None

    def with_spot(self, spot: float) -> "ModelSpec":
        """Same dynamics started from another spot (for bump-and-revalue)."""
        raise NotImplementedError

    def check_family(self, family: str):
        if family not in self.families:
            raise ValueError(f"weight family {family} is not valid for model {self.name}; "
                             f"allowed: {sorted(self.families)}")


def right_inverse(X: np.ndarray) -> np.ndarray:
    P, d, m = X.shape
    if d == 1 and m == 1:
        return 1.0 / X
    if d == m == 2:
        det = X[:, 0, 0] * X[:, 1, 1] - X[:, 0, 1] * X[:, 1, 0]
        if np.any(det == 0):
            raise np.linalg.LinAlgError("diffusion matrix is singular; no right inverse")
        R = np.empty_like(X)
        R[:, 0, 0] = X[:, 1, 1] / det
        R[:, 1, 1] = X[:, 0, 0] / det
        R[:, 0, 1] = -X[:, 0, 1] / det
        R[:, 1, 0] = -X[:, 1, 0] / det
        return R
    M = X @ np.swapaxes(X, 1, 2)
    return np.swapaxes(X, 1, 2) @ np.linalg.inv(M)


def right_inverse_jac(X, dX, R):
    P, d, m = X.shape
    if d == m:
        # d(X^{-1}) = -X^{-1} dX X^{-1}
        return -np.einsum("pae,pefc,pfb->pabc", R, dX, R)
    Minv = np.linalg.inv(X @ np.swapaxes(X, 1, 2))
    XT = np.swapaxes(X, 1, 2)
    dXT = np.swapaxes(dX, 1, 2)                                   # (P, m, d, d) [a, e, c] = dX_ea/dx_c
    dM = np.einsum("paec,pbe->pabc", dX, X) + np.einsum("pae,pbec->pabc", X, dX)
    first = np.einsum("paec,peb->pabc", dXT, Minv)
    second = -np.einsum("pae,pef,pfgc,pgb->pabc", XT, Minv, dM, Minv)
    return first + second
