"""Lyapunov spectrum of the random transfer-matrix products, and the rate
functionals expressed through it.

The spectrum estimator is the discrete QR method: each replica carries an
orthonormal frame that is multiplied by a fresh random T every step and
re-orthonormalized, accumulating the logs of the diagonal stretch factors.
The sum of the accumulated logs telescopes to the running mean of
log|det T|, so the spectrum-sum identity is checked against an independent
Monte Carlo estimate of E log|det T|.

Rates from geometry come from least-squares slopes of trajectory logs:
log M_n for the top exponent, log h_n (triangles) or log delta_n for the
flatness rate, both after a burn-in.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import run_batch
from .matrices import build_T_batch, det_T_closed_form
from .rng import RngStream
from .splits import SplitSpec, sample_log_pair, sample_vector_batch

__all__ = [
    "LyapunovSpectrum",
    "estimate_spectrum",
    "estimate_top_exponent_from_sides",
    "estimate_flatness_rate",
    "expected_log_abs_det",
    "log_det_divergence_scan",
]

_SINGULAR_FLOOR = 1e-300
_DELTA_FLOOR = 1e-13
_BLOCK = 16  # replicas per work unit; fixed so results never depend on thread count


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Estimated exponents mu_1 >= ... >= mu_{d-1} (nats per step)."""

    mu: np.ndarray
    se: np.ndarray
    n_steps: int
    replicas: int
    log_det_mean: float
    log_det_se: float
    rejected_steps: int

    @property
    def sum_check_z(self) -> float:
        """z-score of sum(mu) against the independent E log|det T| estimate."""
        diff = float(self.mu.sum()) - self.log_det_mean
        comb = math.sqrt(float((self.se**2).sum()) + self.log_det_se**2)
        return diff / comb if comb > 0 else math.inf if diff else 0.0


def _qr_accumulate_2x2(frames: np.ndarray, T: np.ndarray, acc: np.ndarray):
    """One Givens-QR step for a (R, 2, 2) batch; updates frames and acc in place."""
    B = np.einsum("rij,rjk->rik", T, frames)
    r00 = np.hypot(B[:, 0, 0], B[:, 1, 0])
    c = B[:, 0, 0] / r00
    s = B[:, 1, 0] / r00
    r11 = np.abs(-s * B[:, 0, 1] + c * B[:, 1, 1])
    frames[:, 0, 0] = c
    frames[:, 1, 0] = s
    frames[:, 0, 1] = -s
    frames[:, 1, 1] = c
    acc[:, 0] += np.log(r00)
    acc[:, 1] += np.log(r11)


def _spectrum_block(spec: SplitSpec, d: int, n_steps: int, streams: list[RngStream]):
    nrep = len(streams)
    m = d - 1
    frames = np.tile(np.eye(m), (nrep, 1, 1))
    acc = np.zeros((nrep, m))
    rejected = np.zeros(nrep, dtype=int)
    chunk = max(1, min(n_steps, 4_000_000 // max(1, nrep * d)))
    done = 0
    while done < n_steps:
        count = min(chunk, n_steps - done)
        draws = np.empty((nrep, count, d))
        for r, g in enumerate(streams):
            draws[r] = sample_vector_batch(spec, count, d, g)
        dets = det_T_closed_form(draws)
        bad = np.abs(dets) < _SINGULAR_FLOOR
        for t in range(count):
            xi = draws[:, t, :]
            T = build_T_batch(xi)
            if np.any(bad[:, t]):
                # rejected steps leave the frame untouched (identity factor)
                T[bad[:, t]] = np.eye(m)
                rejected += bad[:, t]
            if m == 2:
                _qr_accumulate_2x2(frames, T, acc)
            else:
                B = np.einsum("rij,rjk->rik", T, frames)
                q, r = np.linalg.qr(B)
                frames = q
                diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
                acc += np.log(diag)
        done += count
    return acc, rejected


def estimate_spectrum(
    spec: SplitSpec,
    d: int,
    n_steps: int,
    replicas: int,
    rng: RngStream,
    threads: int = 1,
    log_det_samples: int = 200_000,
) -> LyapunovSpectrum:
    """QR estimate of the full spectrum, averaged over independent replicas.

    Replica r draws from the child stream ``rng.spawn(r)``; the result is
    identical for any ``threads`` value.  Draws whose transfer matrix is
    numerically singular (|det| < 1e-300) are rejected and counted.
    """
    if n_steps < 10**3:
        raise ValueError("n_steps must be >= 1000")
    if replicas < 2:
        raise ValueError("need at least 2 replicas for standard errors")
    blocks = [list(range(i, min(i + _BLOCK, replicas))) for i in range(0, replicas, _BLOCK)]

    def work(idx_block):
        streams = [rng.spawn(r) for r in idx_block]
        return _spectrum_block(spec, d, n_steps, streams)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    acc = np.vstack([a for a, _ in results])
    rejected = np.concatenate([r for _, r in results])
    eff = n_steps - rejected
    mu_rep = acc / eff[:, None]
    mu = mu_rep.mean(axis=0)
    se = mu_rep.std(axis=0, ddof=1) / math.sqrt(replicas)

    ld_mean, ld_se = expected_log_abs_det(spec, d, log_det_samples, rng.spawn(replicas))
    return LyapunovSpectrum(
        mu=mu,
        se=se,
        n_steps=n_steps,
        replicas=replicas,
        log_det_mean=ld_mean,
        log_det_se=ld_se,
        rejected_steps=int(rejected.sum()),
    )


def _slopes(steps: np.ndarray, series: np.ndarray) -> np.ndarray:
    """Least-squares slopes of each row of ``series`` against ``steps``."""
    t = steps - steps.mean()
    denom = float(t @ t)
    return (series - series.mean(axis=1, keepdims=True)) @ t / denom


def estimate_top_exponent_from_sides(
    spec: SplitSpec,
    d: int,
    n_steps: int,
    replicas: int,
    rng: RngStream,
) -> tuple[float, float]:
    """Slope of log(largest side) over the second half of each run; the
    almost-sure limit of log(M_n)/n is the top exponent."""
    batch = run_batch(spec, d, n_steps, replicas, rng, with_shape=False)
    half = batch.steps >= n_steps // 2
    slopes = _slopes(batch.steps[half].astype(float), batch.log_M[:, half])
    return float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(replicas))


def estimate_flatness_rate(
    spec: SplitSpec,
    d: int,
    n_steps: int,
    replicas: int,
    rng: RngStream,
    observable: str = "h",
    burn_in_frac: float = 0.1,
) -> tuple[float, float]:
    """Slope of log h_n (triangles) or log delta_n (any d); both estimate
    the gap mu_2 - mu_1.

    The first ``burn_in_frac`` of the regression window is discarded.  The
    delta series saturates at the rounding floor (~1e-15) once the
    coordinate vectors are numerically parallel, so its window is first cut
    per replica where delta drops below 1e-13 and the burn-in is taken as a
    fraction of what remains.
    """
    if observable == "h" and d != 3:
        raise ValueError("the h-based rate needs d = 3")
    if observable not in ("h", "delta"):
        raise ValueError("observable must be 'h' or 'delta'")
    batch = run_batch(spec, d, n_steps, replicas, rng, with_shape=False)
    steps = batch.steps.astype(float)
    if observable == "h":
        keep = batch.steps > int(burn_in_frac * n_steps)
        slopes = _slopes(steps[keep], batch.log_flatness[:, keep])
    else:
        slopes = np.empty(replicas)
        for r in range(replicas):
            informative = np.nonzero(batch.delta_xy[r] > _DELTA_FLOOR)[0]
            informative = informative[informative >= int(burn_in_frac * len(informative))]
            if len(informative) < 10:
                raise ValueError(
                    "fewer than 10 informative delta points; the run decayed "
                    "to the rounding floor almost immediately"
                )
            slopes[r] = _slopes(
                steps[informative], np.log(batch.delta_xy[r, informative])[None, :]
            )[0]
    return float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(replicas))


def _log_abs_det_samples(spec: SplitSpec, d: int, n: int, rng: RngStream) -> np.ndarray:
    """n draws of log|det T|, computed in log space.

    Sums of log xi and log(1-xi) are combined with logaddexp (odd d) or the
    signed analogue (even d), so heavy-tailed draws far below the floating
    floor keep their true magnitude.
    """
    if spec.is_joint:
        xi = sample_vector_batch(spec, n, d, rng)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(det_T_closed_form(xi)))
    log_xi, log_1m = sample_log_pair(spec, (n, d), rng)
    s_one_minus = log_1m.sum(axis=1)
    s_xi = log_xi.sum(axis=1)
    if d % 2 == 1:
        return np.logaddexp(s_one_minus, s_xi)
    hi = np.maximum(s_one_minus, s_xi)
    diff = np.abs(s_one_minus - s_xi)
    with np.errstate(divide="ignore"):
        return hi + np.log(-np.expm1(-diff))


def expected_log_abs_det(
    spec: SplitSpec, d: int, samples: int, rng: RngStream
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of E log|det T|."""
    if samples < 10**4:
        raise ValueError("samples must be >= 10000")
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 1_000_000
    while done < samples:
        count = min(chunk, samples - done)
        vals = _log_abs_det_samples(spec, d, count, rng)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += count
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, math.sqrt(var / samples)


def log_det_divergence_scan(
    spec: SplitSpec,
    d: int,
    sizes: list[int],
    rng: RngStream,
) -> tuple[list[tuple[int, float, float]], bool]:
    """Nested-sample estimates of E log|det T| at growing sizes.

    Returns the per-size (n, estimate, se) table and a divergence flag:
    True when every consecutive estimate strictly decreases, the signature
    of a log-moment that is not integrable.
    """
    sizes = sorted(sizes)
    table = []
    total = 0.0
    total_sq = 0.0
    done = 0
    for target in sizes:
        while done < target:
            count = min(1_000_000, target - done)
            vals = _log_abs_det_samples(spec, d, count, rng)
            total += float(vals.sum())
            total_sq += float((vals * vals).sum())
            done += count
        mean = total / done
        var = max(total_sq / done - mean * mean, 0.0) * done / max(done - 1, 1)
        table.append((done, mean, math.sqrt(var / done)))
    flag = all(b[1] < a[1] for a, b in zip(table, table[1:]))
    return table, flag
