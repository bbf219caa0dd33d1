"""Randomized sparsification of John decompositions.

Draw M points from the John point mass, accept the draw when the
empirical second moment is close to the identity and the point sum is
small, then recenter.  The accepted points, rescaled to the unit sphere
and shifted, give an equal-weight approximate decomposition of the
identity with an operator-norm residual certificate below eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import JohnDecomposition
from .samplers import RandomStream, john_draws
from .symlin import SymMatrix, operator_norm

__all__ = [
    "SparsifyError",
    "SparsifyRejectionError",
    "CertificateError",
    "ApproxJohn",
    "VerifyReport",
    "choose_M",
    "sparsify",
    "verify",
    "serialize_approx_john",
    "parse_approx_john",
]

DEFAULT_C = 2.0
DEFAULT_MAX_ATTEMPTS = 16
# Point-sum acceptance threshold |sum y_i| <= POINT_SUM_FACTOR * sqrt(M n).
# The John point mass has mean zero and |y| = sqrt(n), so E|sum y|^2 = M n
# exactly and Markov at twice the RMS keeps the acceptance probability
# above 3/4.  This threshold (not sqrt(M) alone, which no bound supports
# for n > 4) is also what the downstream shift bound |u| <= 2/sqrt(M) and
# the residual term 4n/M require.
POINT_SUM_FACTOR = 2.0


class SparsifyError(RuntimeError):
    pass


class SparsifyRejectionError(SparsifyError):
    """Every attempt was rejected; carries per-condition failure counts."""

    def __init__(self, attempts: int, deviation_failures: int, point_sum_failures: int):
        self.attempts = attempts
        self.deviation_failures = deviation_failures
        self.point_sum_failures = point_sum_failures
        super().__init__(
            f"all {attempts} attempts rejected "
            f"(deviation condition failed {deviation_failures}x, "
            f"point-sum condition failed {point_sum_failures}x)"
        )


class CertificateError(SparsifyError):
    """Residual certificate failed after acceptance; M is too small for eps."""


@dataclass(frozen=True, eq=False)
class ApproxJohn:
    """Equal-weight approximate John decomposition with residual certificate.

    id = (n/M) sum (x_i + u) (x) (x_i + u) + S with |S| = residual_norm.
    """

    points: np.ndarray
    shift: np.ndarray
    residual_norm: float
    eps: float
    attempts: int | None = None

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        u = np.asarray(self.shift, dtype=float)
        if x.ndim != 2 or u.shape != (x.shape[1],):
            raise SparsifyError(f"inconsistent shapes: points {x.shape}, shift {u.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise SparsifyError("points and shift must be finite")
        x = x.copy()
        u = u.copy()
        x.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "shift", u)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class VerifyReport:
    residual_norm: float
    centroid_norm: float
    shift_scaled: float  # |u| * sqrt(M)


def choose_M(n: int, eps: float, C: float) -> int:
    """Sample count ceil((C/eps^2) n log(n/eps)), floored at n+1."""
    if n < 1:
        raise SparsifyError("dimension must be >= 1")
    if not 0.0 < eps < 1.0:
        raise SparsifyError("eps must lie in (0, 1)")
    if C <= 0.0:
        raise SparsifyError("C must be positive")
    m = math.ceil((C / eps**2) * n * math.log(n / eps))
    return max(m, n + 1)


def _residual_matrix(points: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """S = id - (n/M) sum (x_i + u) (x) (x_i + u), via one matrix product."""
    m, n = points.shape
    shifted = points + shift
    return np.eye(n) - (n / m) * (shifted.T @ shifted)


def sparsify(
    jd: JohnDecomposition,
    eps: float,
    rng: RandomStream,
    C: float = DEFAULT_C,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> ApproxJohn:
    """Sample an equal-weight approximate decomposition with residual below eps.

    Each attempt draws M points y_i = sqrt(n) z_i from the decomposition's
    point mass and accepts when both
      (a) the empirical second moment is within eps/2 of the identity, and
      (b) |sum y_i| <= 2 sqrt(M n).
    Accepted draws are rescaled (x_i = y_i / sqrt(n)) and recentered by
    u = -mean(x_i), which keeps |u| <= 2/sqrt(M); the residual then
    provably stays below eps/2 + 4n/M.
    """
    if not 0.0 < eps < 1.0:
        raise SparsifyError("eps must lie in (0, 1)")
    if max_attempts < 1:
        raise SparsifyError("max_attempts must be >= 1")
    n = jd.n
    m = choose_M(n, eps, C)
    dev_failures = 0
    sum_failures = 0
    for attempt in range(1, max_attempts + 1):
        y = john_draws(jd, m, rng)
        t = SymMatrix.from_dense((y.T @ y) / m)
        dev = operator_norm(t - SymMatrix.identity(n))
        point_sum = float(np.linalg.norm(y.sum(axis=0)))
        ok_dev = dev <= eps / 2.0
        ok_sum = point_sum <= POINT_SUM_FACTOR * math.sqrt(m * n)
        if not ok_dev:
            dev_failures += 1
        if not ok_sum:
            sum_failures += 1
        if not (ok_dev and ok_sum):
            continue
        x = y / math.sqrt(n)
        u = -x.mean(axis=0)
        residual = operator_norm(SymMatrix.from_dense(_residual_matrix(x, u), asym_tol=1e-8))
        if residual >= eps:
            # Should be unreachable once 4n/M <= eps/2; a failure here means
            # the constant C is too small, not bad luck.
            raise CertificateError(
                f"certificate failed: residual {residual:.6g} >= eps {eps:.6g} "
                f"with M={m} (increase C so that 4n/M <= eps/2)"
            )
        return ApproxJohn(points=x, shift=u, residual_norm=residual, eps=eps, attempts=attempt)
    raise SparsifyRejectionError(max_attempts, dev_failures, sum_failures)


def verify(a: ApproxJohn) -> VerifyReport:
    """Recompute the certificate from scratch, independently of sparsify.

    Uses a separate accumulation route (einsum contraction) for the
    rank-one sum, so agreement with the stored residual is a real
    crosscheck rather than a replay of the same arithmetic.
    """
    m, n = a.M, a.n
    shifted = a.points + a.shift
    gram = np.einsum("mi,mj->ij", shifted, shifted)
    s = np.eye(n) - (n / m) * gram
    residual = operator_norm(SymMatrix.from_dense(s, asym_tol=1e-8))
    centroid = float(np.linalg.norm(shifted.sum(axis=0)))
    return VerifyReport(
        residual_norm=residual,
        centroid_norm=centroid,
        shift_scaled=float(np.linalg.norm(a.shift)) * math.sqrt(m),
    )


def serialize_approx_john(a: ApproxJohn) -> str:
    """Text format: header "n M eps residual u_norm", M point lines, then u."""
    lines = [
        "{} {} {} {} {}".format(
            a.n,
            a.M,
            format(a.eps, ".17g"),
            format(a.residual_norm, ".17g"),
            format(float(np.linalg.norm(a.shift)), ".17g"),
        )
    ]
    for row in a.points:
        lines.append(" ".join(format(v, ".17g") for v in row))
    lines.append(" ".join(format(v, ".17g") for v in a.shift))
    return "\n".join(lines) + "\n"


def parse_approx_john(text: str) -> ApproxJohn:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SparsifyError("empty serialization")
    head = lines[0].split()
    if len(head) != 5:
        raise SparsifyError("header must hold: n M eps residual u_norm")
    n, m = int(head[0]), int(head[1])
    eps, residual = float(head[2]), float(head[3])
    if len(lines) != 2 + m:
        raise SparsifyError(f"expected {m} point lines plus the shift, got {len(lines) - 1}")
    points = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + m]])
    shift = np.array([float(v) for v in lines[1 + m].split()])
    if points.shape != (m, n) or shift.shape != (n,):
        raise SparsifyError("point or shift dimensions do not match the header")
    return ApproxJohn(points=points, shift=shift, residual_norm=residual, eps=eps, attempts=None)
