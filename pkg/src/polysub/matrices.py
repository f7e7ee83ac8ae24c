"""Transfer matrices of one subdivision step and their algebraic identities.

``build_H`` gives the d x d edge-recursion matrix (columns sum to 1, so its
transpose is row-stochastic); ``build_T`` gives the (d-1) x (d-1) reduction
obtained by eliminating the closure constraint.  The remaining functions
construct and cross-check the closed forms attached to these families:
the determinant product formula, the unipotent Q commutator for d = 3, the
eigenstructure of the constant-proportion matrix, and the rank-one-drift
witness for odd d.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import io
import math

import numpy as np

__all__ = [
    "build_H",
    "build_T",
    "det_T_closed_form",
    "det_T_lu",
    "q_t",
    "build_Q",
    "q_product",
    "verify_eigenstructure",
    "contraction_witness_odd",
    "contraction_witness_product",
    "matrix_csv",
]


def _check_open_unit(xi: np.ndarray):
    if np.any((xi <= 0.0) | (xi >= 1.0)):
        raise ValueError("all proportions must lie strictly in (0, 1)")


def build_H(xi) -> np.ndarray:
    """d x d one-step edge matrix: row j has 1-xi_j on the diagonal and
    xi_{j+1} on the (cyclic) superdiagonal."""
    xi = np.asarray(xi, dtype=float)
    _check_open_unit(xi)
    d = xi.shape[0]
    if d < 3:
        raise ValueError("need d >= 3 proportions")
    H = np.zeros((d, d))
    idx = np.arange(d)
    H[idx, idx] = 1.0 - xi
    H[idx, (idx + 1) % d] = xi[(idx + 1) % d]
    return H


def build_T(xi) -> np.ndarray:
    """(d-1) x (d-1) reduced one-step matrix.

    Rows 1..d-2 are bidiagonal with (1-xi_j, xi_{j+1}); the last row is
    (-xi_d, ..., -xi_d, 1-xi_{d-1}-xi_d).
    """
    xi = np.asarray(xi, dtype=float)
    _check_open_unit(xi)
    d = xi.shape[0]
    if d < 3:
        raise ValueError("need d >= 3 proportions")
    T = np.zeros((d - 1, d - 1))
    idx = np.arange(d - 2)
    T[idx, idx] = 1.0 - xi[:-2]
    T[idx, idx + 1] = xi[1:-1]
    T[d - 2, :] = -xi[d - 1]
    T[d - 2, d - 2] = 1.0 - xi[d - 2] - xi[d - 1]
    return T


def build_T_batch(xi: np.ndarray) -> np.ndarray:
    """(n, d-1, d-1) stack of reduced matrices from an (n, d) proportion array."""
    n, d = xi.shape
    T = np.zeros((n, d - 1, d - 1))
    idx = np.arange(d - 2)
    T[:, idx, idx] = 1.0 - xi[:, :-2]
    T[:, idx, idx + 1] = xi[:, 1:-1]
    T[:, d - 2, :] = -xi[:, d - 1, None]
    T[:, d - 2, d - 2] = 1.0 - xi[:, d - 2] - xi[:, d - 1]
    return T


def det_T_closed_form(xi) -> np.ndarray | float:
    """prod(1 - xi_i) - (-1)^d prod(xi_i), vectorized over the last axis."""
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[-1]
    sign = -1.0 if d % 2 == 0 else 1.0
    out = np.prod(1.0 - xi, axis=-1) + sign * np.prod(xi, axis=-1)
    return float(out) if out.ndim == 0 else out


def det_T_lu(xi) -> float:
    """Numerical determinant of build_T(xi) via partial-pivot LU (cross-check)."""
    return float(np.linalg.det(build_T(xi)))


def q_t(a: float, b: float) -> float:
    """The subdiagonal entry t = -(a-b)^2 / (2ab + b^2 - a - 2b + 1) of Q.

    The denominator equals (a+b-1)^2 + a(1-a) > 0, so t is well defined and
    strictly negative whenever a != b.
    """
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise ValueError("a and b must lie strictly in (0, 1)")
    if a == b:
        raise ValueError("q_t requires a != b")
    return -((a - b) ** 2) / (2 * a * b + b * b - a - 2 * b + 1.0)


def build_Q(a: float, b: float) -> np.ndarray:
    """Closed-form Q = [[1, 0], [t, 1]] with t = q_t(a, b)."""
    return np.array([[1.0, 0.0], [q_t(a, b), 1.0]])


def q_product(a: float, b: float, normalized: bool = False) -> np.ndarray:
    """The defining product T(a,b,a) T(a,b,b)^-1 T(b,a,b) T(b,a,a)^-1.

    With ``normalized`` each factor is first scaled to determinant one,
    T~ = (det T)^(-1/2) T; the scalings cancel, so both variants equal the
    closed-form Q up to rounding.  Inverses are applied by solving linear
    systems rather than forming explicit inverses.
    """
    seqs = [(a, b, a), (a, b, b), (b, a, b), (b, a, a)]
    mats = [build_T(np.array(s)) for s in seqs]
    if normalized:
        mats = [m / math.sqrt(det_T_closed_form(np.array(s))) for m, s in zip(mats, seqs)]
    m1, m2, m3, m4 = mats
    # m1 m2^-1 m3 m4^-1, right-multiplying by an inverse = solving X A = B
    out = np.linalg.solve(m2.T, m1.T).T
    out = out @ m3
    return np.linalg.solve(m4.T, out.T).T


def verify_eigenstructure(a: float, d: int, tol: float = 1e-12) -> tuple[bool, float]:
    """Check the eigenpairs of T_a = T(a, ..., a) against their closed form.

    The eigenvectors are v_l = (1, e^l, e^{2l}, ..., e^{(d-2)l}) with
    e = exp(2 pi i / d), and the eigenvalues lambda_l = 1 - a + a e^l,
    l = 1..d-1.  Returns (all residuals below tol, max relative residual).
    """
    if d < 3:
        raise ValueError("need d >= 3")
    T = build_T(np.full(d, float(a)))
    eps = np.exp(2j * np.pi / d)
    worst = 0.0
    for ell in range(1, d):
        v = eps ** (ell * np.arange(d - 1))
        lam = 1.0 - a + a * eps**ell
        res = np.linalg.norm(T @ v - lam * v) / np.linalg.norm(v)
        worst = max(worst, float(res))
    return worst <= tol, worst


def _alternating(d: int, first: float, second: float, last: float) -> np.ndarray:
    seq = np.where(np.arange(d) % 2 == 0, first, second).astype(float)
    seq[-1] = last
    return seq


def contraction_witness_odd(d: int, a: float, b: float) -> np.ndarray:
    """Closed-form witness M for odd d = 2l+1: identity except the last row.

    The last row is (phi_1, ..., phi_{2l-1}, 1) with phi_{2j} = 0 and

        phi_{2j-1} = -(a-b)^2 ((1-a)(1-b))^(l-j) (ab)^(j-1)
                     / ((1-a)^l (1-b)^(l+1) + a^l b^(l+1)).

    M^n has last row (n phi_1, ..., n phi_{2l-1}, 1), so ||M^n|| grows
    linearly and M^n/||M^n|| tends to a rank-one matrix.
    """
    if d < 5 or d % 2 == 0:
        raise ValueError("need an odd d >= 5")
    if a == b:
        raise ValueError("witness requires a != b")
    ell = (d - 1) // 2
    denom = (1 - a) ** ell * (1 - b) ** (ell + 1) + a**ell * b ** (ell + 1)
    M = np.eye(d - 1)
    row = np.zeros(d - 1)
    for j in range(1, ell + 1):
        row[2 * j - 2] = -((a - b) ** 2) * ((1 - a) * (1 - b)) ** (ell - j) * (a * b) ** (j - 1) / denom
    row[d - 2] = 1.0
    M[d - 2, :] = row
    return M


def contraction_witness_product(d: int, a: float, b: float) -> np.ndarray:
    """Defining four-factor product for the odd-d witness, computed numerically:
    T(a,b,..,a,b,a) T(a,b,..,a,b,b)^-1 T(b,a,..,b,a,b) T(b,a,..,b,a,a)^-1."""
    if d < 5 or d % 2 == 0:
        raise ValueError("need an odd d >= 5")
    m1 = build_T(_alternating(d, a, b, a))
    m2 = build_T(_alternating(d, a, b, b))
    m3 = build_T(_alternating(d, b, a, b))
    m4 = build_T(_alternating(d, b, a, a))
    out = np.linalg.solve(m2.T, m1.T).T
    out = out @ m3
    return np.linalg.solve(m4.T, out.T).T


def matrix_csv(m: np.ndarray) -> str:
    """Row-major CSV text with shortest round-trip float formatting."""
    buf = io.StringIO()
    for row in np.atleast_2d(m):
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()
