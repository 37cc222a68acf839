"""Normal-form zero-sum games, VI operators and entropic Bregman geometry.

The row player maximizes ``f(x, y) = x^T A y``; the column player minimizes it.
Operators act on the stacked vector ``z = (x, y)`` of length ``m + n``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nashrefine.errors import DimensionError, DomainError

INTERIOR_FLOOR = 1e-12


def project_interior(p, floor: float = INTERIOR_FLOOR) -> np.ndarray:
    """Clamp entries to ``floor`` and renormalize onto the simplex."""
    p = np.maximum(np.asarray(p, dtype=np.float64), floor)
    return p / p.sum()


def _check_simplex(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or p.size == 0:
        raise DimensionError(f"{name} must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DomainError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"{name} sums to {p.sum()!r}, not 1")


@dataclass(frozen=True)
class NormalFormGame:
    """Zero-sum matrix game; ``payoff_matrix`` holds the row player's payoff."""

    payoff_matrix: np.ndarray
    name: str = "matrix"

    def __post_init__(self):
        A = np.array(self.payoff_matrix, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"payoff matrix must be 2-D and non-empty, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("payoff matrix has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "payoff_matrix", A)

    @property
    def A(self) -> np.ndarray:
        return self.payoff_matrix

    @property
    def m(self) -> int:
        return self.payoff_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.payoff_matrix.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.payoff_matrix.shape

    def uniform_profile(self) -> "MixedProfile":
        return MixedProfile(np.full(self.m, 1.0 / self.m), np.full(self.n, 1.0 / self.n))

    def spectral_norm(self, max_iter: int = 50, tol: float = 1e-10) -> float:
        """Largest singular value of A by power iteration on A^T A."""
        A = self.payoff_matrix
        v = np.random.default_rng(0).random(self.n) + 0.5
        v /= np.linalg.norm(v)
        sigma = 0.0
        for _ in range(max_iter):
            w = A.T @ (A @ v)
            norm_w = np.linalg.norm(w)
            if norm_w == 0.0:
                return 0.0
            v = w / norm_w
            new_sigma = np.sqrt(norm_w)
            if abs(new_sigma - sigma) <= tol * max(1.0, new_sigma):
                sigma = new_sigma
                break
            sigma = new_sigma
        return float(np.linalg.norm(A @ v))

    def exploitability(self, z: "MixedProfile") -> float:
        """Average best-response gain of the two players against ``z``."""
        _check_dims(self, z)
        A = self.payoff_matrix
        return 0.5 * float(np.max(A @ z.y) - np.min(A.T @ z.x))

    def value(self, z: "MixedProfile") -> float:
        return payoff(self, z)

    @classmethod
    def from_text(cls, text: str, name: str = "matrix") -> "NormalFormGame":
        """Parse ``"m n"`` followed by m rows of n reals."""
        lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
        if not lines:
            raise ValueError("line 1: empty matrix file")
        lineno, header = lines[0]
        parts = header.split()
        try:
            m, n = (int(tok) for tok in parts)
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'm n' header, got {header.strip()!r}") from None
        if m < 1 or n < 1:
            raise ValueError(f"line {lineno}: dimensions must be positive")
        rows = lines[1:]
        if len(rows) != m:
            where = rows[-1][0] + 1 if rows else lineno + 1
            raise ValueError(f"line {where}: expected {m} matrix rows, found {len(rows)}")
        A = np.empty((m, n))
        for r, (lineno, ln) in enumerate(rows):
            toks = ln.split()
            if len(toks) != n:
                raise ValueError(f"line {lineno}: expected {n} values, found {len(toks)}")
            try:
                A[r] = [float(t) for t in toks]
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric entry in {ln.strip()!r}") from None
        return cls(A, name=name)

    @classmethod
    def load(cls, path) -> "NormalFormGame":
        path = Path(path)
        return cls.from_text(path.read_text(), name=path.stem)

    def to_text(self) -> str:
        rows = [" ".join(repr(float(v)) for v in row) for row in self.payoff_matrix]
        return "\n".join([f"{self.m} {self.n}", *rows]) + "\n"


@dataclass(frozen=True)
class MixedProfile:
    """Strategy profile ``z = (x, y)`` of mixed strategies."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        _check_simplex(x, "x")
        _check_simplex(y, "y")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def interior(cls, x, y, floor: float = INTERIOR_FLOOR) -> "MixedProfile":
        return cls(project_interior(x, floor), project_interior(y, floor))

    @classmethod
    def from_vector(cls, z, m: int) -> "MixedProfile":
        z = np.asarray(z, dtype=np.float64)
        return cls(z[:m], z[m:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    def is_interior(self, floor: float = INTERIOR_FLOOR) -> bool:
        # renormalization after clamping can shave a few ulps off the floor
        thresh = floor * (1 - 1e-6)
        return bool(np.all(self.x >= thresh) and np.all(self.y >= thresh))

    def l1_distance(self, other: "MixedProfile") -> float:
        return float(np.abs(self.x - other.x).sum() + np.abs(self.y - other.y).sum())


class GeometryKind(enum.Enum):
    NEGATIVE_ENTROPY = "negative_entropy"


@dataclass(frozen=True)
class BregmanGeometry:
    """Distance-generating function on the product of simplices.

    Only negative entropy is provided; it is 1-strongly convex in the 1-norm,
    and its Bregman divergence is the KL divergence summed over both players.
    """

    kind: GeometryKind = GeometryKind.NEGATIVE_ENTROPY
    strong_convexity_mu: float = field(default=1.0)

    def psi(self, p: np.ndarray) -> float:
        p = np.asarray(p, dtype=np.float64)
        pos = p > 0
        return float(np.sum(p[pos] * np.log(p[pos])))

    def grad_psi(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if np.any(p <= 0):
            raise DomainError("gradient of negative entropy needs a strictly positive point")
        return 1.0 + np.log(p)

    def kl(self, a: np.ndarray, b: np.ndarray) -> float:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        pos = a > 0
        return float(np.sum(a[pos] * (np.log(a[pos]) - np.log(b[pos]))))


NEGATIVE_ENTROPY = BregmanGeometry()


def _check_dims(game: NormalFormGame, z: MixedProfile) -> None:
    if z.x.shape[0] != game.m or z.y.shape[0] != game.n:
        raise DimensionError(
            f"profile dimensions ({z.x.shape[0]}, {z.y.shape[0]}) do not match game {game.shape}"
        )


def _require_interior(z: MixedProfile, what: str) -> None:
    if not z.is_interior():
        raise DomainError(f"{what} must lie strictly inside the simplex")


def payoff(game: NormalFormGame, z: MixedProfile) -> float:
    """Row player's expected payoff ``x^T A y``."""
    _check_dims(game, z)
    return float(z.x @ game.payoff_matrix @ z.y)


def operator_F(game: NormalFormGame, z: MixedProfile) -> np.ndarray:
    """Stacked negated-gradient operator ``(-A y, A^T x)``."""
    _check_dims(game, z)
    A = game.payoff_matrix
    return np.concatenate([-(A @ z.y), A.T @ z.x])


def bregman_divergence(geom: BregmanGeometry, a: MixedProfile, b: MixedProfile) -> float:
    """``B(a; b)``, i.e. ``KL(a.x || b.x) + KL(a.y || b.y)`` for negative entropy."""
    if a.x.shape != b.x.shape or a.y.shape != b.y.shape:
        raise DimensionError("profiles have different dimensions")
    _require_interior(b, "reference point b")
    return geom.kl(a.x, b.x) + geom.kl(a.y, b.y)


def operator_G(game: NormalFormGame, geom: BregmanGeometry, z: MixedProfile,
               rho: MixedProfile, alpha: float) -> np.ndarray:
    """Regularized operator ``F(z) + alpha * (grad psi(z) - grad psi(rho))``."""
    _require_interior(z, "z")
    _require_interior(rho, "rho")
    _check_dims(game, rho)
    F = operator_F(game, z)
    if alpha == 0:
        return F
    # (1 + log z) - (1 + log rho): the constants cancel
    reg = np.concatenate([np.log(z.x) - np.log(rho.x), np.log(z.y) - np.log(rho.y)])
    return F + alpha * reg


def check_mmd_condition(alpha: float, eta: float, mu: float = 1.0, L: float = 1.0) -> bool:
    """Sufficient step-size condition ``alpha >= mu * eta * L**2``."""
    # relative slack so that eta = alpha / L**2 passes despite rounding
    return alpha >= mu * eta * L * L * (1.0 - 1e-12)


def smoothness_constant(game: NormalFormGame) -> float:
    return game.spectral_norm()
