"""Connection kernels, model parameters and the shared probability layer.

A model instance lives on the vertex set {1, ..., N}.  An unordered pair
{i, j} is an edge independently with probability

    p_ij = min(1, p(i/N, j/N) / N),

where p is a symmetric kernel on (0,1]^2, decreasing in each argument.
Vertex i refreshes its whole neighbourhood at rate

    kappa_i = kappa0 * (N / i)**(gamma * eta),

so eta >= 0 makes strong (low-index) vertices update faster.  Every other
module builds on the functions here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad


class ParameterError(ValueError):
    """Raised when model parameters violate their contract."""


class KernelBoundsError(ParameterError):
    """Raised when a kernel fails the c1/c2 sandwich spot-check."""


# Relative padding applied to derived c2 constants.  Any valid c2 only
# rescales downstream constants; the pad keeps the sandwich strict.
_C2_PAD = 1e-6

# Grid used to validate custom kernels at construction time.
_VALIDATION_GRID = np.linspace(0.01, 0.99, 50)


# =============================================================================
# Kernels
# =============================================================================

def _check_kernel_params(beta: float, gamma: float) -> None:
    if not beta > 0:
        raise ParameterError(f"kernel prefactor must be positive, got beta={beta}")
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"kernel exponent must lie in (0,1), got gamma={gamma}")


@dataclass(frozen=True)
class FactorKernel:
    """p(x, y) = beta * x**-gamma * y**-gamma."""

    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        _check_kernel_params(self.beta, self.gamma)

    def __call__(self, x, y):
        return self.beta * np.asarray(x, dtype=float) ** -self.gamma * np.asarray(y, dtype=float) ** -self.gamma

    def bounds(self) -> tuple[float, float]:
        # p(a,1) = beta*a^-gamma exactly; int_0^1 p(a,s) ds = beta*a^-gamma/(1-gamma)
        return self.beta, self.beta / (1.0 - self.gamma) * (1.0 + _C2_PAD)


@dataclass(frozen=True)
class PreferentialAttachmentKernel:
    """p(x, y) = beta * min(x,y)**-gamma * max(x,y)**(gamma-1)."""

    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        _check_kernel_params(self.beta, self.gamma)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lo = np.minimum(x, y)
        hi = np.maximum(x, y)
        return self.beta * lo ** -self.gamma * hi ** (self.gamma - 1.0)

    def bounds(self) -> tuple[float, float]:
        # int_0^1 p(a,s) ds = beta*[1/(1-gamma) + (a^-gamma - 1)/gamma]
        #                   = beta*a^-gamma*[u/(1-gamma) + (1-u)/gamma],  u = a^gamma in (0,1),
        # which is strictly below beta*a^-gamma*(1/(1-gamma) + 1/gamma).
        g = self.gamma
        return self.beta, self.beta * (1.0 / (1.0 - g) + 1.0 / g) * (1.0 + _C2_PAD)


@dataclass(frozen=True)
class CustomKernel:
    """User-supplied symmetric decreasing kernel with explicit (gamma, c1, c2).

    The sandwich c1*a^-gamma <= p(a,1) <= int_0^1 p(a,s) ds < c2*a^-gamma
    cannot be checked symbolically for an arbitrary closure, so it is
    spot-checked on a grid at construction together with symmetry and
    monotonicity.
    """

    func: Callable[[float, float], float]
    gamma: float
    c1: float
    c2: float
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in (0,1), got {self.gamma}")
        if not (0.0 < self.c1 < self.c2):
            raise ParameterError(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")
        if self.validate:
            self._grid_check()

    def __call__(self, x, y):
        f = np.vectorize(self.func, otypes=[float])
        out = f(x, y)
        return out if out.ndim else float(out)

    def _grid_check(self) -> None:
        grid = _VALIDATION_GRID
        for a in grid[::7]:
            for b in grid[::7]:
                pab, pba = self.func(a, b), self.func(b, a)
                if not math.isclose(pab, pba, rel_tol=1e-9):
                    raise KernelBoundsError(f"kernel not symmetric at ({a:.3f},{b:.3f})")
        vals = np.array([[self.func(a, b) for b in grid] for a in grid])
        if np.any(np.diff(vals, axis=0) > 1e-12) or np.any(np.diff(vals, axis=1) > 1e-12):
            raise KernelBoundsError("kernel is increasing somewhere on the check grid")
        for a in grid:
            lo = self.c1 * a ** -self.gamma
            p_a1 = self.func(a, 1.0)
            integral, _ = quad(lambda s: self.func(a, s), 0.0, 1.0, limit=200)
            hi = self.c2 * a ** -self.gamma
            if not (lo <= p_a1 * (1 + 1e-12) and p_a1 <= integral * (1 + 1e-9) and integral < hi):
                raise KernelBoundsError(
                    f"sandwich violated at a={a:.4f}: "
                    f"c1*a^-g={lo:.6g}, p(a,1)={p_a1:.6g}, int={integral:.6g}, c2*a^-g={hi:.6g}"
                )

    def bounds(self) -> tuple[float, float]:
        return self.c1, self.c2


KernelKind = FactorKernel | PreferentialAttachmentKernel | CustomKernel


def kernel_value(kernel: KernelKind, x: float, y: float) -> float:
    """Evaluate p(x, y) for x, y in (0, 1]."""
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(xa <= 0) or np.any(ya <= 0):
        raise ParameterError(f"kernel arguments must be positive, got x={x}, y={y}")
    if np.any(xa > 1) or np.any(ya > 1):
        raise ParameterError(f"kernel arguments must lie in (0,1], got x={x}, y={y}")
    out = kernel(xa, ya)
    return float(out) if np.ndim(out) == 0 else out


def kernel_bounds(kernel: KernelKind) -> tuple[float, float]:
    """Constants (c1, c2) with c1*a^-g <= p(a,1) <= int_0^1 p(a,s) ds < c2*a^-g."""
    return kernel.bounds()


# =============================================================================
# Model parameters
# =============================================================================

@dataclass(frozen=True)
class ModelParams:
    """Full parameterization of one model instance.

    Attributes
    ----------
    n : int
        Number of vertices.
    kernel : KernelKind
        Connection kernel; carries beta and gamma.
    eta : float
        Fast-evolution exponent, must be >= 0 (the slowly evolving
        regime eta < 0 is out of scope).
    kappa0 : float
        Base update rate.
    lam : float
        Infection rate ("lambda" in configs).  Values >= 1 are allowed
        for simulation but draw a warning: the analytic layer assumes
        lambda in (0, 1).
    """

    n: int
    kernel: KernelKind
    eta: float = 0.0
    kappa0: float = 1.0
    lam: float = 0.1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if self.eta < 0:
            raise ParameterError(
                f"eta must be >= 0 (fast-evolving regime only), got {self.eta}"
            )
        if not self.kappa0 > 0:
            raise ParameterError(f"kappa0 must be positive, got {self.kappa0}")
        if self.lam < 0:
            # lam = 0 is allowed for calibration runs (pure death process);
            # the analytic layer demands lam > 0 where it matters
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.lam >= 1:
            warnings.warn(
                f"lambda={self.lam} >= 1: simulation is exact but the analytic "
                "layer assumes lambda in (0,1)",
                stacklevel=2,
            )

    @property
    def gamma(self) -> float:
        return self.kernel.gamma

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(self.n, self.kernel, self.eta, self.kappa0, lam)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "ModelParams":
        """Build from a flat key=value section (all values strings).

        Recognised keys: n, kernel in {factor, pa}, beta, gamma, eta,
        kappa0, lambda.  Unknown keys are rejected.
        """
        known = {"n", "kernel", "beta", "gamma", "eta", "kappa0", "lambda"}
        unknown = set(mapping) - known
        if unknown:
            raise ParameterError(f"unknown model keys: {sorted(unknown)}")
        missing = {"n", "kernel"} - set(mapping)
        if missing:
            raise ParameterError(f"missing model keys: {sorted(missing)}")
        kind = mapping["kernel"].strip().lower()
        beta = float(mapping.get("beta", 1.0))
        gamma = float(mapping.get("gamma", 0.5))
        if kind == "factor":
            kernel: KernelKind = FactorKernel(beta, gamma)
        elif kind == "pa":
            kernel = PreferentialAttachmentKernel(beta, gamma)
        else:
            raise ParameterError(f"kernel must be 'factor' or 'pa', got {kind!r}")
        return cls(
            n=int(mapping["n"]),
            kernel=kernel,
            eta=float(mapping.get("eta", 0.0)),
            kappa0=float(mapping.get("kappa0", 1.0)),
            lam=float(mapping.get("lambda", 0.1)),
        )

    def to_mapping(self) -> dict[str, str]:
        if isinstance(self.kernel, FactorKernel):
            kind = "factor"
        elif isinstance(self.kernel, PreferentialAttachmentKernel):
            kind = "pa"
        else:
            raise ParameterError("custom kernels are not config-serializable")
        return {
            "n": repr(self.n),
            "kernel": kind,
            "beta": repr(self.kernel.beta),
            "gamma": repr(self.kernel.gamma),
            "eta": repr(self.eta),
            "kappa0": repr(self.kappa0),
            "lambda": repr(self.lam),
        }


# =============================================================================
# Probabilities and rates (1-based vertex indices in the public contract)
# =============================================================================

def _check_index(params: ModelParams, i: int) -> None:
    if int(i) != i or not 1 <= i <= params.n:
        raise ParameterError(f"vertex index must lie in 1..{params.n}, got {i}")


def connection_probability(params: ModelParams, i: int, j: int) -> float:
    """Edge probability p_ij = min(1, p(i/N, j/N)/N) for i != j."""
    _check_index(params, i)
    _check_index(params, j)
    if i == j:
        raise ParameterError(f"self-pair ({i},{i}) has no connection probability")
    n = params.n
    return float(min(1.0, kernel_value(params.kernel, i / n, j / n) / n))


def probability_row(params: ModelParams, i: int) -> np.ndarray:
    """Vector of p_ij over j = 1..N with the self entry set to 0."""
    _check_index(params, i)
    n = params.n
    js = np.arange(1, n + 1, dtype=float)
    row = np.minimum(1.0, params.kernel(i / n, js / n) / n)
    row[i - 1] = 0.0
    return row


def probability_matrix(params: ModelParams) -> np.ndarray:
    """Dense (N, N) matrix of pair probabilities, zero diagonal."""
    n = params.n
    u = np.arange(1, n + 1, dtype=float) / n
    mat = np.minimum(1.0, params.kernel(u[:, None], u[None, :]) / n)
    np.fill_diagonal(mat, 0.0)
    return mat


def update_rate(params: ModelParams, i: int) -> float:
    """kappa_i = kappa0 * (N/i)**(gamma*eta); non-increasing in i."""
    _check_index(params, i)
    return params.kappa0 * (params.n / i) ** (params.gamma * params.eta)


def update_rates(params: ModelParams) -> np.ndarray:
    js = np.arange(1, params.n + 1, dtype=float)
    return params.kappa0 * (params.n / js) ** (params.gamma * params.eta)


def expected_degree(params: ModelParams, i: int) -> float:
    """Exact sum of p_ij over j != i (lambda plays no role)."""
    return float(probability_row(params, i).sum())
