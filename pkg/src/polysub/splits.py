"""Splitting-proportion laws for the side subdivision.

A :class:`SplitSpec` describes how the d side proportions are drawn each
step: i.i.d. marginal kinds (uniform, symmetric or general beta, a two-point
mixture, a heavy-tailed law with non-integrable log), or a finite joint atom
table for correlated side proportions.

Every draw lies strictly inside (0, 1).  The heavy-tailed kind produces
values whose true magnitude can fall below the double-precision range; the
sampled float is then clamped to the nearest representable number inside
(0, 1), and log-space sampling (:func:`sample_log_pair`) is provided for
diagnostics that need the exact tail.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

__all__ = [
    "SplitSpec",
    "LogMoments",
    "sample",
    "sample_vector",
    "sample_array",
    "sample_log_pair",
    "heavy_tail_inverse_cdf",
    "heavy_tail_pdf",
    "heavy_tail_cdf",
    "log_moment_diagnostics",
    "assumption2_violation_possible",
]

_MARGINAL_KINDS = ("uniform", "beta", "two_point", "heavy_tail")

_TINY = np.nextafter(0.0, 1.0)
_ALMOST_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class SplitSpec:
    """Law of the splitting proportions.

    Use the factory classmethods; the constructor does not validate
    parameter combinations beyond what ``__post_init__`` checks.
    """

    kind: str
    alpha: float | None = None
    beta: float | None = None
    a: float | None = None
    b: float | None = None
    p: float | None = None
    delta: float | None = None
    atoms: tuple[tuple[tuple[float, ...], float], ...] | None = None
    d: int | None = None

    def __post_init__(self):
        k = self.kind
        if k == "uniform":
            pass
        elif k == "beta":
            if not (self.alpha is not None and self.alpha > 0 and self.beta is not None and self.beta > 0):
                raise ValueError("beta kind needs alpha > 0 and beta > 0")
        elif k == "two_point":
            a, b, p = self.a, self.b, self.p
            if a is None or b is None or p is None:
                raise ValueError("two_point kind needs a, b, p")
            if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
                raise ValueError("two_point atoms must lie strictly in (0, 1)")
            if a == b:
                raise ValueError("two_point requires a != b")
            if not 0.0 <= p <= 1.0:
                raise ValueError("two_point weight p must lie in [0, 1]")
        elif k == "heavy_tail":
            if self.delta is None or not (0.0 < self.delta <= 0.5):
                raise ValueError("heavy_tail needs delta in (0, 1/2]")
        elif k == "joint_table":
            if self.atoms is None or len(self.atoms) == 0:
                raise ValueError("joint_table needs a non-empty atom list")
            if self.d is None or self.d < 3:
                raise ValueError("joint_table needs d >= 3")
            total = 0.0
            for vec, prob in self.atoms:
                if len(vec) != self.d:
                    raise ValueError("joint_table atom length must equal d")
                if any(not (0.0 < v < 1.0) for v in vec):
                    raise ValueError("joint_table atom components must lie strictly in (0, 1)")
                if prob < 0.0:
                    raise ValueError("joint_table probabilities must be non-negative")
                total += prob
            if abs(total - 1.0) > 1e-12:
                raise ValueError("joint_table probabilities must sum to 1 within 1e-12")
        else:
            raise ValueError(f"unknown split kind {k!r}")
        if self.d is not None and self.d < 3:
            raise ValueError("d must be >= 3")

    # ---- factories ----------------------------------------------------

    @classmethod
    def uniform(cls) -> "SplitSpec":
        return cls(kind="uniform")

    @classmethod
    def make_beta(cls, alpha: float, beta: float) -> "SplitSpec":
        return cls(kind="beta", alpha=float(alpha), beta=float(beta))

    @classmethod
    def two_point(cls, a: float, b: float, p: float) -> "SplitSpec":
        return cls(kind="two_point", a=float(a), b=float(b), p=float(p))

    @classmethod
    def heavy_tail(cls, delta: float) -> "SplitSpec":
        return cls(kind="heavy_tail", delta=float(delta))

    @classmethod
    def joint_table(cls, atoms, d: int) -> "SplitSpec":
        frozen = tuple((tuple(float(v) for v in vec), float(prob)) for vec, prob in atoms)
        return cls(kind="joint_table", atoms=frozen, d=int(d))

    # ---- properties ----------------------------------------------------

    @property
    def is_joint(self) -> bool:
        return self.kind == "joint_table"

    def support_atoms(self) -> list[float] | None:
        """Marginal support atoms for finite-support kinds, else None."""
        if self.kind == "two_point":
            return [self.a, self.b]
        return None

    # ---- serialization (config fragment) -------------------------------

    def to_config(self) -> dict:
        """Flat config fragment: keys kind, alpha, beta, a, b, p, delta, atoms."""
        out: dict = {"kind": self.kind}
        for key in ("alpha", "beta", "a", "b", "p", "delta"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.atoms is not None:
            out["atoms"] = [[list(vec), prob] for vec, prob in self.atoms]
        if self.d is not None:
            out["d"] = self.d
        return out

    @classmethod
    def from_config(cls, fragment: dict) -> "SplitSpec":
        frag = dict(fragment)
        kind = frag.pop("kind", None)
        if kind is None:
            raise ValueError("spec fragment needs a 'kind' key")
        if kind == "uniform":
            return cls.uniform()
        if kind == "beta":
            return cls.make_beta(float(frag["alpha"]), float(frag["beta"]))
        if kind == "two_point":
            return cls.two_point(float(frag["a"]), float(frag["b"]), float(frag["p"]))
        if kind == "heavy_tail":
            return cls.heavy_tail(float(frag["delta"]))
        if kind == "joint_table":
            return cls.joint_table(frag["atoms"], int(frag["d"]))
        raise ValueError(f"unknown split kind {kind!r}")


# ---- heavy-tail closed forms ------------------------------------------


def _heavy_tail_c(delta: float) -> float:
    """Normalizing constant: c = delta * (log 2)^delta / 2."""
    return delta * math.log(2.0) ** delta / 2.0


def heavy_tail_pdf(x, delta: float):
    """Density c/(x |log x|^(1+delta)) on (0, 1/2], mirrored on (1/2, 1)."""
    x = np.asarray(x, dtype=float)
    c = _heavy_tail_c(delta)
    y = np.where(x <= 0.5, x, 1.0 - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = c / (y * np.abs(np.log(y)) ** (1.0 + delta))
    return np.where((x <= 0.0) | (x >= 1.0), 0.0, out)


def heavy_tail_cdf(x, delta: float):
    x = np.asarray(x, dtype=float)
    c = _heavy_tail_c(delta)
    y = np.minimum(x, 1.0 - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        half = (c / delta) * np.abs(np.log(y)) ** (-delta)
    out = np.where(x <= 0.5, half, 1.0 - half)
    return np.clip(np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, out)), 0.0, 1.0)


def heavy_tail_neg_log_quantile(u, delta: float):
    """Exact -log(x) of the lower-branch quantile: log(2) * (2u)^(-1/delta).

    Valid for u in (0, 1/2]; the upper branch mirrors to -log(1-x).
    """
    u = np.asarray(u, dtype=float)
    return math.log(2.0) * (2.0 * u) ** (-1.0 / delta)


def heavy_tail_inverse_cdf(u, delta: float):
    """Quantile function of the heavy-tailed law.

    For u <= 1/2 the quantile is exp(-(c/(delta u))^(1/delta)); the upper
    half mirrors it.  True quantiles below the double-precision range are
    clamped to the nearest representable number inside (0, 1).
    """
    scalar = np.isscalar(u)
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie strictly in (0, 1)")
    lo = np.minimum(u, 1.0 - u)
    x_lo = np.exp(-heavy_tail_neg_log_quantile(lo, delta))
    x_lo = np.clip(x_lo, _TINY, 0.5)
    out = np.where(u <= 0.5, x_lo, 1.0 - x_lo)
    out = np.clip(out, _TINY, _ALMOST_ONE)
    return float(out) if scalar else out


# ---- sampling --------------------------------------------------------


def sample_array(spec: SplitSpec, size, rng: RngStream) -> np.ndarray:
    """Array of i.i.d. marginal draws, each strictly inside (0, 1)."""
    if spec.is_joint:
        raise ValueError("joint_table spec has no marginal sampler; use sample_vector")
    if spec.kind == "uniform":
        return rng.open_uniform(size)
    if spec.kind == "beta":
        x = rng.beta(spec.alpha, spec.beta, size)
        bad = (x <= 0.0) | (x >= 1.0)
        while np.any(bad):
            x[bad] = rng.beta(spec.alpha, spec.beta, int(bad.sum()))
            bad = (x <= 0.0) | (x >= 1.0)
        return x
    if spec.kind == "two_point":
        u = rng.random(size)
        return np.where(u < spec.p, spec.a, spec.b)
    if spec.kind == "heavy_tail":
        return heavy_tail_inverse_cdf(rng.open_uniform(size), spec.delta)
    raise AssertionError(spec.kind)


def sample(spec: SplitSpec, rng: RngStream) -> float:
    """One marginal draw of the splitting proportion."""
    return float(sample_array(spec, (), rng))


_warned_assumption2: set = set()


def assumption2_violation_possible(spec: SplitSpec, d: int) -> bool:
    """Whether det T = 0 has positive probability for this spec at even d.

    Only finite-support kinds can put positive mass on the degeneracy
    manifold prod((1-xi_i)/xi_i) = 1; continuous kinds hit it with
    probability zero.
    """
    if d % 2 != 0:
        return False
    if spec.kind == "two_point":
        la = math.log((1.0 - spec.a) / spec.a)
        lb = math.log((1.0 - spec.b) / spec.b)
        return any(abs(k * la + (d - k) * lb) < 1e-12 for k in range(d + 1))
    if spec.kind == "joint_table":
        for vec, prob in spec.atoms:
            if prob > 0.0:
                s = sum(math.log((1.0 - v) / v) for v in vec)
                if abs(s) < 1e-12:
                    return True
        return False
    return False


def sample_vector(spec: SplitSpec, d: int, rng: RngStream) -> np.ndarray:
    """One joint draw of the d side proportions.

    Marginal kinds give i.i.d. components.  For even d combined with a
    finite-support kind that can produce det T = 0, a warning is emitted
    once per (spec, d) pair; sampling itself never fails.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    if spec.d is not None and spec.d != d:
        raise ValueError(f"spec is bound to d={spec.d}, got d={d}")
    key = (id(spec), d)
    if key not in _warned_assumption2 and assumption2_violation_possible(spec, d):
        _warned_assumption2.add(key)
        warnings.warn(
            f"spec can produce a singular transfer matrix with positive probability at even d={d}",
            UserWarning,
            stacklevel=2,
        )
    if spec.is_joint:
        idx = int(rng.choice(len(spec.atoms), p=[prob for _, prob in spec.atoms]))
        return np.array(spec.atoms[idx][0], dtype=float)
    return sample_array(spec, d, rng)


def sample_vector_batch(spec: SplitSpec, n: int, d: int, rng: RngStream) -> np.ndarray:
    """(n, d) array of joint draws; the batched form of :func:`sample_vector`."""
    if spec.is_joint:
        if spec.d is not None and spec.d != d:
            raise ValueError(f"spec is bound to d={spec.d}, got d={d}")
        probs = [prob for _, prob in spec.atoms]
        idx = rng.choice(len(spec.atoms), size=n, p=probs)
        table = np.array([vec for vec, _ in spec.atoms], dtype=float)
        return table[idx]
    return sample_array(spec, (n, d), rng)


def sample_log_pair(spec: SplitSpec, size, rng: RngStream):
    """Draw (log xi, log(1 - xi)) with exact heavy-tail asymptotics.

    For the heavy-tailed kind the lower/upper branch logs are computed
    directly from the quantile formula, so magnitudes far beyond the range
    of a double (|log xi| ~ 1e13 and larger) are represented exactly.
    Other kinds take logs of ordinary samples.
    """
    if spec.kind == "heavy_tail":
        u = rng.open_uniform(size)
        m = heavy_tail_neg_log_quantile(np.minimum(u, 1.0 - u), spec.delta)
        # the draw is s = exp(-m) on one side of 1/2 and 1 - s on the other;
        # exp(-m) underflows to 0 for huge m, and log1p then returns exactly 0,
        # which matches log(1 - s) to double precision
        with np.errstate(under="ignore"):
            log_other = np.log1p(-np.exp(-m))
        lower = u <= 0.5
        log_xi = np.where(lower, -m, log_other)
        log_1m = np.where(lower, log_other, -m)
        return log_xi, log_1m
    x = sample_array(spec, size, rng)
    return np.log(x), np.log1p(-x)


@dataclass(frozen=True)
class LogMoments:
    """Monte Carlo (or exact, for finite support) log-integrability estimates."""

    mean_abs_log: float
    se_abs_log: float
    mean_abs_log1m: float
    se_abs_log1m: float
    samples: int


def log_moment_diagnostics(spec: SplitSpec, samples: int, rng: RngStream) -> LogMoments:
    """Estimate E|log xi| and E|log(1-xi)| with standard errors.

    Finite-support kinds are evaluated exactly (zero standard error).
    Large, sample-size-dependent estimates for the heavy-tailed kind are the
    expected signature of a non-integrable log moment.
    """
    if spec.is_joint:
        raise ValueError("log_moment_diagnostics needs a marginal spec")
    if samples < 10**3:
        raise ValueError("samples must be >= 1000")
    if spec.kind == "two_point":
        a, b, p = spec.a, spec.b, spec.p
        m1 = p * abs(math.log(a)) + (1.0 - p) * abs(math.log(b))
        m2 = p * abs(math.log(1.0 - a)) + (1.0 - p) * abs(math.log(1.0 - b))
        return LogMoments(m1, 0.0, m2, 0.0, samples)
    log_xi, log_1m = sample_log_pair(spec, samples, rng)
    ax, am = np.abs(log_xi), np.abs(log_1m)
    n = float(samples)
    return LogMoments(
        float(ax.mean()),
        float(ax.std(ddof=1) / math.sqrt(n)),
        float(am.mean()),
        float(am.std(ddof=1) / math.sqrt(n)),
        samples,
    )
