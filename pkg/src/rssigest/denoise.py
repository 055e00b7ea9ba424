"""Wavelet shrinkage of raw RSSI traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .wavelet import dwt_decompose, dwt_reconstruct

MAD_TO_SIGMA = 0.6745
SURE_MIN_LENGTH = 32


@dataclass(frozen=True)
class DenoiseConfig:
    levels: int = 7
    sigma_estimator: str = "mad"  # "mad" or "fixed"
    sigma: float | None = None  # used when sigma_estimator == "fixed"
    threshold_rule: str = "sure"  # "sure" or "universal"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.sigma_estimator not in ("mad", "fixed"):
            raise ValueError(f"unknown sigma_estimator {self.sigma_estimator!r}")
        if self.sigma_estimator == "fixed" and (self.sigma is None or self.sigma < 0):
            raise ValueError("fixed sigma_estimator needs sigma >= 0")
        if self.threshold_rule not in ("sure", "universal"):
            raise ValueError(f"unknown threshold_rule {self.threshold_rule!r}")


def estimate_noise_sigma(details_finest):
    d = np.asarray(details_finest, dtype=float)
    if d.size < 8:
        raise DomainError(f"need at least 8 detail coefficients, got {d.size}")
    return float(np.median(np.abs(d)) / MAD_TO_SIGMA)


def soft_threshold(d, t):
    d = np.asarray(d, dtype=float)
    return np.sign(d) * np.maximum(np.abs(d) - t, 0.0)


def sure_risk(d, t, sigma):
    """Stein unbiased risk of soft thresholding ``d`` at ``t``."""
    d = np.asarray(d, dtype=float)
    s2 = sigma * sigma
    return d.size * s2 - 2.0 * s2 * np.count_nonzero(np.abs(d) <= t) + np.minimum(d * d, t * t).sum()


def sure_threshold(detail, sigma):
    """Threshold in ``{0} | {|d_i|}`` minimising the SURE risk."""
    d = np.asarray(detail, dtype=float)
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    n = d.size
    if n == 0 or sigma == 0:
        return 0.0
    a = np.sort(np.abs(d))
    cand = np.concatenate([[0.0], a])
    # count of |d| <= t, with ties handled by searchsorted
    below = np.searchsorted(a, cand, side="right")
    sq_cum = np.concatenate([[0.0], np.cumsum(a * a)])
    s2 = sigma * sigma
    risk = n * s2 - 2.0 * s2 * below + sq_cum[below] + (n - below) * cand * cand
    # cumulative sums round differently from a direct sum; settle near-ties exactly
    best = risk.min()
    near = np.flatnonzero(risk <= best + 1e-9 * max(1.0, abs(best)))
    exact = [sure_risk(d, cand[i], sigma) for i in near]
    return float(cand[near[int(np.argmin(exact))]])


def universal_threshold(n, sigma):
    return float(sigma * np.sqrt(2.0 * np.log(n))) if n > 1 else 0.0


def denoise_signal(x, config=DenoiseConfig(), return_sigma=False):
    x = np.asarray(x, dtype=float)
    if x.size < 2**config.levels:
        raise DomainError(f"trace of {x.size} samples is too short for {config.levels} levels")
    dec = dwt_decompose(x, config.levels)
    if config.sigma_estimator == "fixed":
        sigma = float(config.sigma)
    else:
        sigma = estimate_noise_sigma(dec.details[0]) if dec.details[0].size >= 8 else 0.0
    shrunk = []
    for d in dec.details:
        if config.threshold_rule == "universal" or d.size < SURE_MIN_LENGTH:
            t = universal_threshold(d.size, sigma)
        else:
            t = sure_threshold(d, sigma)
        shrunk.append(soft_threshold(d, t))
    out = dwt_reconstruct(dec.with_details(shrunk))
    return (out, sigma) if return_sigma else out


def denoise(trace, config=DenoiseConfig()):
    """Denoised copy of ``trace``; only the sample values change."""
    return trace.with_samples(denoise_signal(trace.samples, config))
