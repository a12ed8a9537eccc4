"""Elementary exact samplers for Brownian bridges and related laws."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .errors import ContractViolation, PreconditionError


@dataclass(frozen=True)
class Bridge:
    """Brownian bridge from ``(s, x)`` to ``(t, y)``."""

    s: float
    t: float
    x: float
    y: float

    def __post_init__(self):
        if not self.t > self.s:
            raise PreconditionError(f"bridge needs t > s, got [{self.s}, {self.t}]")

    def reflect(self) -> "Bridge":
        return Bridge(self.s, self.t, -self.x, -self.y)


@dataclass(frozen=True)
class ExtremeRecord:
    tau: float
    value: float
    kind: str = "min"

    def reflect(self) -> "ExtremeRecord":
        return ExtremeRecord(self.tau, -self.value, "max" if self.kind == "min" else "min")


def bridge_moments(b: Bridge, q: float) -> tuple[float, float]:
    """Mean and variance of the bridge at time ``q``."""
    L = b.t - b.s
    return b.x + (q - b.s) * (b.y - b.x) / L, (b.t - q) * (q - b.s) / L


def bridge_point(b: Bridge, q: float, rng: np.random.Generator) -> float:
    if not b.s < q < b.t:
        raise PreconditionError(f"q={q} outside ({b.s}, {b.t})")
    mean, var = bridge_moments(b, q)
    return mean + math.sqrt(var) * rng.standard_normal()


def sample_inverse_gaussian(mu: float, lam: float, rng: np.random.Generator) -> float:
    """IG(mu, lam) by transformation with rejection (Michael, Schucany and Haas).

    The smaller root is formed as ``mu^2 / x2`` so that it does not suffer from
    cancellation when ``mu * z / lam`` is large.
    """
    if not (mu > 0 and lam > 0):
        raise PreconditionError(f"inverse Gaussian needs mu, lam > 0, got {mu}, {lam}")
    nu = rng.standard_normal()
    z = nu * nu
    muz = mu * z
    big = mu + mu * muz / (2.0 * lam) + (mu / (2.0 * lam)) * math.sqrt(4.0 * lam * muz + muz * muz)
    small = mu * mu / big
    if rng.random() * (mu + small) <= mu:
        return small
    return big


def min_cdf(b: Bridge, a: float) -> float:
    """P(min of the bridge <= a) for ``a <= min(x, y)``."""
    return math.exp(-2.0 * (b.x - a) * (b.y - a) / (b.t - b.s))


def sample_min(b: Bridge, a1: float, a2: float, rng: np.random.Generator) -> ExtremeRecord:
    """Minimum value and time of the bridge conditioned on the minimum lying in ``[a1, a2]``."""
    lo = min(b.x, b.y)
    if not a1 < a2:
        raise PreconditionError(f"need a1 < a2, got {a1}, {a2}")
    if a2 > lo:
        raise PreconditionError(f"a2={a2} exceeds min(x, y)={lo}")
    x, y, L = b.x, b.y, b.t - b.s
    m_hi, m_lo = min_cdf(b, a2), min_cdf(b, a1)
    if m_lo > m_hi:
        raise ContractViolation("minimum CDF is not increasing in the level")
    while True:
        u1 = m_lo + rng.random() * (m_hi - m_lo)
        if u1 <= 0.0:
            continue
        d = y - x
        m = x - (math.sqrt(d * d - 2.0 * L * math.log(u1)) - d) / 2.0
        m = min(max(m, a1), a2)
        if m < lo:
            break
    xm, ym = x - m, y - m
    if rng.random() < xm / (xm + ym):
        v = sample_inverse_gaussian(ym / xm, ym * ym / L, rng)
    else:
        v = 1.0 / sample_inverse_gaussian(xm / ym, xm * xm / L, rng)
    tau = b.s + L / (1.0 + v)
    if not b.s < tau < b.t:
        tau = min(max(tau, math.nextafter(b.s, b.t)), math.nextafter(b.t, b.s))
    return ExtremeRecord(tau, m, "min")


def sample_max(b: Bridge, a1: float, a2: float, rng: np.random.Generator) -> ExtremeRecord:
    """Maximum conditioned on lying in ``[a1, a2]`` with ``a1 >= max(x, y)``, by reflection."""
    return sample_min(b.reflect(), -a2, -a1, rng).reflect()


def _bessel_min(s, t, x, y, tau, m, q, r, wr, rng):
    span = abs(tau - r)
    frac = abs(tau - q) / span
    sd = math.sqrt(abs(tau - q) * abs(q - r)) / span
    b1, b2, b3 = rng.standard_normal(3) * sd
    c = (wr - m) / math.sqrt(span) * frac + b1
    return m + math.sqrt(span) * math.sqrt(c * c + b2 * b2 + b3 * b3)


def bessel_bridge_point(b: Bridge, ext: ExtremeRecord, q: float, rng: np.random.Generator,
                        left: tuple[float, float] | None = None,
                        right: tuple[float, float] | None = None) -> float:
    """Value at ``q`` of the bridge conditioned on its extreme ``ext``.

    ``left``/``right`` optionally give a nearer known point ``(time, value)`` on
    the far side of ``q`` from ``tau``; by the Markov property the formula
    then uses that point in place of the bridge endpoint.
    """
    if not b.s < q < b.t:
        raise PreconditionError(f"q={q} outside ({b.s}, {b.t})")
    if q == ext.tau:
        return ext.value
    if ext.kind == "max":
        rb = b.reflect()
        re = ext.reflect()
        rl = None if left is None else (left[0], -left[1])
        rr = None if right is None else (right[0], -right[1])
        return -bessel_bridge_point(rb, re, q, rng, rl, rr)
    if q < ext.tau:
        r, wr = left if left is not None else (b.s, b.x)
    else:
        r, wr = right if right is not None else (b.t, b.y)
    return _bessel_min(b.s, b.t, b.x, b.y, ext.tau, ext.value, q, r, wr, rng)


def bessel_bridge_points(b: Bridge, ext: ExtremeRecord, times, rng: np.random.Generator) -> list[float]:
    """Joint draw at several times, filling from the outer endpoints towards ``tau``."""
    times = list(times)
    out: dict[float, float] = {}
    before = sorted(q for q in times if q < ext.tau)
    after = sorted((q for q in times if q > ext.tau), reverse=True)
    prev = None
    for q in before:
        out[q] = bessel_bridge_point(b, ext, q, rng, left=prev)
        prev = (q, out[q])
    prev = None
    for q in after:
        out[q] = bessel_bridge_point(b, ext, q, rng, right=prev)
        prev = (q, out[q])
    for q in times:
        if q == ext.tau:
            out[q] = ext.value
    return [out[q] for q in times]


@dataclass(frozen=True)
class GaussianProposal:
    """Gaussian envelope ``q(y) = exp(-(y-mean)^2 / (2 var))`` for the biased endpoint.

    ``log_bound`` must satisfy ``A(y) - (y-x)^2/(2T) - log q(y) <= log_bound``.
    """

    mean: float
    var: float
    log_bound: float


def _log_target(drift_integral: Callable[[float], float], x: float, T: float, y: float) -> float:
    return drift_integral(y) - (y - x) ** 2 / (2.0 * T)


def sample_biased_endpoint(drift_integral: Callable[[float], float], x: float, T: float,
                           proposal: GaussianProposal, rng: np.random.Generator,
                           max_attempts: int = 1_000_000) -> float:
    """Draw ``y`` with density proportional to ``exp(A(y) - (y-x)^2/(2T))``."""
    sd = math.sqrt(proposal.var)
    for _ in range(max_attempts):
        y = proposal.mean + sd * rng.standard_normal()
        log_ratio = (_log_target(drift_integral, x, T, y) + (y - proposal.mean) ** 2 / (2.0 * proposal.var)
                     - proposal.log_bound)
        if log_ratio > 1e-9:
            raise ContractViolation(f"endpoint envelope violated at y={y}: log ratio {log_ratio:.3g} > 0")
        if math.log(1.0 - rng.random()) <= log_ratio:
            return y
    raise ContractViolation("endpoint sampler exceeded its attempt cap")


def validate_proposal(drift_integral, x, T, proposal: GaussianProposal, width: float = 12.0,
                      n: int = 4001) -> float:
    """Largest observed ``log h - log q - log_bound`` on a grid; should be <= 0."""
    sd = math.sqrt(max(proposal.var, T))
    grid = np.linspace(proposal.mean - width * sd, proposal.mean + width * sd, n)
    vals = [_log_target(drift_integral, x, T, y) + (y - proposal.mean) ** 2 / (2.0 * proposal.var)
            for y in grid]
    return float(np.max(vals) - proposal.log_bound)


# Truncated normal --------------------------------------------------------------

def _log_diff_ndtr(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    if a >= 0.0:
        a, b = -b, -a
    if b <= 0.0:
        lb = float(log_ndtr(b))
        la = float(log_ndtr(a))
        return lb + math.log1p(-math.exp(la - lb)) if la < lb else -math.inf
    return math.log1p(-math.exp(float(log_ndtr(a))) - math.exp(float(log_ndtr(-b))))


def truncnorm_logmass(mean: float, sd: float, lo: float, hi: float) -> float:
    return _log_diff_ndtr((lo - mean) / sd, (hi - mean) / sd)


def sample_truncnorm(mean: float, sd: float, lo: float, hi: float, rng: np.random.Generator) -> float:
    """N(mean, sd^2) restricted to ``[lo, hi]`` by inversion on the log-CDF scale.

    Working with ``log Phi`` and its inverse keeps the inversion accurate far
    into either tail, where a plain CDF inversion would underflow.
    """
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if not a < b:
        raise PreconditionError("empty truncation interval")
    flip = a > 0.0
    if flip:
        a, b = -b, -a
    u = rng.random()
    if b <= 0.0:
        la, lb = float(log_ndtr(a)), float(log_ndtr(b))
        # log(Phi(a) + u (Phi(b) - Phi(a))) = lb + log(e^{la-lb} + u (1 - e^{la-lb}))
        r = math.exp(la - lb)
        z = float(ndtri_exp(lb + math.log(r + u * (1.0 - r))))
    else:
        pa, pb = math.exp(float(log_ndtr(a))), math.exp(float(log_ndtr(b)))
        p = pa + u * (pb - pa)
        z = float(ndtri_exp(math.log(p))) if p > 0.0 else a
    z = min(max(z, a), b)
    if flip:
        z = -z
    return mean + sd * z
