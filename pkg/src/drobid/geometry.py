"""Uncertainty supports and transport geometry.

The 4-dim market support is a box around the training range with a safety
margin. For the solver the uncertainty is lifted to 6 dimensions by appending
the products t- = g*r- and t+ = g*r+, and the box is encoded as a polyhedron
C xi <= d with one upper and one lower row per coordinate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_MARGIN = 0.2
XI_DIM = 6


@dataclass(frozen=True)
class Box4:
    """Componentwise bounds on (g, s, r-, r+)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (4,) or hi.shape != (4,):
            raise DataError("Box4 bounds must be 4-vectors")
        if np.any(lo > hi):
            raise DataError("Box4 lower bounds exceed upper bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return bool(
            np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol)
        )


def _margin_bounds(values: np.ndarray, margin: float) -> tuple[np.ndarray, np.ndarray]:
    # sign-safe enlargement: lower = min - margin*|min|, upper = max + margin*|max|;
    # coincides with the 0.8*min / 1.2*max rule for nonnegative extrema and with
    # 1.2*min for negative minima, and leaves zero extrema at zero
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    return lo - margin * np.abs(lo), hi + margin * np.abs(hi)


def build_support_x(train_x, margin: float = DEFAULT_MARGIN) -> Box4:
    """Margin-enlarged box around the training realizations of (g, s, r-, r+)."""
    train_x = np.asarray(train_x, dtype=float)
    if train_x.ndim != 2 or train_x.shape[1] != 4 or len(train_x) == 0:
        raise DataError("build_support_x needs a non-empty (N, 4) training array")
    if margin < 0:
        raise ConfigError(f"margin must be nonnegative, got {margin}")
    lo, hi = _margin_bounds(train_x, margin)
    return Box4(lo, hi)


def lift(x) -> np.ndarray:
    """Map (g, s, r-, r+) to (g, s, r-, r+, g*r-, g*r+).

    Accepts a 4-vector or an (N, 4) array.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        g, _, r_minus, r_plus = x
        return np.concatenate([x, [g * r_minus, g * r_plus]])
    return np.column_stack([x, x[:, 0] * x[:, 2], x[:, 0] * x[:, 3]])


@dataclass(frozen=True)
class PolyhedralSupport:
    """Lifted box {xi : C xi <= d}, rows ordered upper_1..upper_6, lower_1..lower_6."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if C.shape != (2 * XI_DIM, XI_DIM) or d.shape != (2 * XI_DIM,):
            raise DataError(f"support must have C of shape {(2 * XI_DIM, XI_DIM)} and d of length {2 * XI_DIM}")
        if np.any(self.lower_from(d) > self.upper_from(d)):
            raise DataError("polyhedral support box is empty")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @staticmethod
    def upper_from(d: np.ndarray) -> np.ndarray:
        return d[:XI_DIM]

    @staticmethod
    def lower_from(d: np.ndarray) -> np.ndarray:
        return -d[XI_DIM:]

    @property
    def upper(self) -> np.ndarray:
        return self.d[:XI_DIM]

    @property
    def lower(self) -> np.ndarray:
        return -self.d[XI_DIM:]

    @classmethod
    def from_bounds(cls, lower, upper) -> "PolyhedralSupport":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        C = np.vstack([np.eye(XI_DIM), -np.eye(XI_DIM)])
        d = np.concatenate([upper, -lower])
        return cls(C, d)

    def contains(self, xi, atol: float = 0.0) -> bool:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return bool(np.all(xi @ self.C.T <= self.d + atol))

    def vertices(self) -> np.ndarray:
        """All 2^6 box vertices, in a fixed lexicographic order."""
        lo, hi = self.lower, self.upper
        corners = np.array(np.meshgrid(*[(lo[k], hi[k]) for k in range(XI_DIM)], indexing="ij"))
        return corners.reshape(XI_DIM, -1).T

    def to_json(self) -> str:
        payload = {"C": self.C.tolist(), "d": self.d.tolist()}
        return json.dumps(payload, sort_keys=True) + "\n"


def build_support_xi(train_x, margin: float = DEFAULT_MARGIN) -> PolyhedralSupport:
    """Lifted 6-dim support: x-box rules plus margin-enlarged ranges of g*r- and g*r+."""
    train_x = np.asarray(train_x, dtype=float)
    if train_x.ndim != 2 or train_x.shape[1] != 4 or len(train_x) == 0:
        raise DataError("build_support_xi needs a non-empty (N, 4) training array")
    if margin < 0:
        raise ConfigError(f"margin must be nonnegative, got {margin}")
    lifted = lift(train_x)
    lo, hi = _margin_bounds(lifted, margin)
    return PolyhedralSupport.from_bounds(lo, hi)


@dataclass(frozen=True)
class TransportCost:
    """Norm-power transport cost; the solver supports p = 1 with the l1 norm."""

    p: float = 1.0
    norm: str = "l1"

    def require_solver_supported(self) -> None:
        if self.p != 1.0 or self.norm != "l1":
            raise ConfigError(
                f"solver supports only p=1 with the l1 norm, got p={self.p}, norm={self.norm!r}"
            )

    def __call__(self, xi1, xi2) -> float:
        return transport_cost(xi1, xi2)


def transport_cost(xi1, xi2):
    """l1 ground cost between lifted points; broadcasts over leading dimensions."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    out = np.abs(xi1 - xi2).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def max_mass_at_deviation(epsilon: float, q: float, p: float = 1.0) -> float:
    """Largest probability a transport budget epsilon can place at deviation q.

    A mass fraction moved to distance q costs mass * q**p, so the fraction is
    at most epsilon * q**-p, capped at total probability one.
    """
    if q <= 0:
        raise DataError(f"deviation magnitude must be positive, got {q}")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be nonnegative, got {epsilon}")
    if p < 1:
        raise ConfigError(f"transport exponent must be >= 1, got {p}")
    return min(1.0, epsilon * q ** (-p))
