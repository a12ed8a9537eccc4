"""Unit-volatility diffusion models, jump specifications and the Lamperti reduction.

A ``DiffusionModel`` describes ``dX = alpha(X) dt + dW`` on ``[0, T]``. Exactness
rests on the user-supplied ``phi``, ``drift_integral`` and ``phi_bounds`` being
mathematically correct, so they are inputs rather than derived quantities;
``validate_model`` cross-checks them numerically.
"""
from __future__ import annotations

import configparser
import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, optimize

from .brownian import GaussianProposal
from .errors import ConfigError, ContractViolation, NumericalPrecisionError, PreconditionError

Fn = Callable[[float], float]


@dataclass(frozen=True)
class GlobalBound:
    value: float


@dataclass(frozen=True)
class LayerBound:
    """Intensity bound on a state interval: ``bound(lo, hi) >= sup lambda``."""

    bound: Callable[[float, float], float]


@dataclass(frozen=True)
class JumpSpec:
    intensity: Fn
    intensity_bound: Union[GlobalBound, LayerBound]
    jump_sampler: Callable[[float, np.random.Generator], float]
    intensity_floor: Optional[float] = None

    def bound_on(self, lo: float, hi: float) -> float:
        if isinstance(self.intensity_bound, GlobalBound):
            return self.intensity_bound.value
        return self.intensity_bound.bound(lo, hi)

    def excess(self) -> "JumpSpec":
        """Spec of the process left after removing a homogeneous floor-rate component."""
        f = self.intensity_floor
        if not f:
            raise PreconditionError("excess intensity requires a positive intensity floor")
        lam = self.intensity

        def excess_intensity(x):
            v = lam(x) - f
            if v < -1e-12:
                raise ContractViolation(f"intensity {lam(x)} at state {x} is below the declared floor {f}")
            return max(v, 0.0)

        if isinstance(self.intensity_bound, GlobalBound):
            bd: Union[GlobalBound, LayerBound] = GlobalBound(self.intensity_bound.value - f)
        else:
            inner = self.intensity_bound.bound
            bd = LayerBound(lambda lo, hi: inner(lo, hi) - f)
        return JumpSpec(excess_intensity, bd, self.jump_sampler, None)


@dataclass(frozen=True)
class DiffusionModel:
    drift: Fn
    drift_deriv: Fn
    drift_integral: Fn
    phi: Fn
    phi_bounds: Callable[[float, float], tuple[float, float]]
    horizon: float
    start: float
    proposal: Optional[Callable[[float, float], GaussianProposal]] = None
    global_phi_bounds: Optional[tuple[float, float]] = None
    phi_floor: Optional[float] = None
    jumps: Optional[JumpSpec] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise PreconditionError("horizon must be positive")

    def endpoint_proposal(self, x: float, dt: float) -> GaussianProposal:
        if self.proposal is None:
            raise PreconditionError(f"model {self.name!r} has no biased-endpoint proposal")
        return self.proposal(x, dt)

    def with_(self, **kw) -> "DiffusionModel":
        return replace(self, **kw)


@dataclass(frozen=True)
class RawSDE:
    """``dV = beta(V) dt + sigma(V) dW`` (+ jumps) before transformation."""

    beta: Fn
    sigma: Fn
    sigma_deriv: Fn
    jumps: Optional[JumpSpec] = None


@dataclass(frozen=True)
class LampertiResult:
    eta: Fn
    eta_inv: Fn
    drift: Fn


def lamperti_transform(raw: RawSDE, vstar: float, bracket: float = 1.0,
                       probe: Optional[np.ndarray] = None) -> LampertiResult:
    """``eta(v) = int_{v*}^v du / sigma(u)``; returns eta, its inverse and the unit-volatility drift."""
    if probe is None:
        probe = vstar + np.linspace(-1.0, 1.0, 41) * bracket
    for v in probe:
        try:
            sv = raw.sigma(float(v))
        except (ValueError, ZeroDivisionError, ArithmeticError):
            continue
        if not sv > 0:
            raise PreconditionError(f"sigma({v}) = {sv} is not strictly positive")

    def eta(v: float) -> float:
        if v == vstar:
            return 0.0
        val, err = integrate.quad(lambda u: 1.0 / raw.sigma(u), vstar, v, epsabs=1e-13, epsrel=1e-12, limit=200)
        if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
            raise NumericalPrecisionError(f"quadrature for eta({v}) did not converge (err {err:.3g})")
        return val

    def _eta_or_none(v: float):
        try:
            if not raw.sigma(v) > 0:
                return None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val = eta(v)
        except (NumericalPrecisionError, ValueError, ZeroDivisionError, ArithmeticError):
            return None
        return val if math.isfinite(val) else None

    def eta_inv(x: float) -> float:
        if x == 0.0:
            return vstar
        step = bracket * max(1.0, abs(x))
        sgn = 1.0 if x > 0 else -1.0
        inner = vstar
        # expand away from v* until eta passes x; halve the step when leaving the domain of sigma
        for _ in range(400):
            cand = inner + sgn * step
            e = _eta_or_none(cand)
            if e is None:
                step /= 2.0
                continue
            if sgn * e >= sgn * x:
                lo, hi = sorted((inner, cand))
                break
            inner = cand
            step *= 2.0
        else:
            raise NumericalPrecisionError(f"could not bracket eta^-1({x})")
        return optimize.brentq(lambda v: eta(v) - x, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)

    def drift(x: float) -> float:
        v = eta_inv(x)
        return raw.beta(v) / raw.sigma(v) - raw.sigma_deriv(v) / 2.0

    return LampertiResult(eta, eta_inv, drift)


def validate_model(m: DiffusionModel, grid: Optional[np.ndarray] = None, intervals=None,
                   tol: float = 1e-9) -> dict:
    """Grid checks of phi against the drift and of the supplied bounds.

    Returns a mapping ``check -> {"ok": bool, "worst": float}``. No exception
    is raised; this is a report.
    """
    if grid is None:
        grid = np.linspace(m.start - 6.0, m.start + 6.0, 241)
    if intervals is None:
        c = m.start
        intervals = [(c - w, c + v) for w in (0.1, 0.5, 1.0, 3.0) for v in (0.2, 0.7, 2.0)]
    report = {}
    cons = [abs(m.phi(x) - (m.drift(x) ** 2 / 2 + m.drift_deriv(x) / 2)) for x in grid]
    report["phi_consistency"] = {"ok": max(cons) <= tol, "worst": float(max(cons))}
    worst_b = 0.0
    worst_m = 0.0
    for lo, hi in intervals:
        L, U = m.phi_bounds(lo, hi)
        sub = np.linspace(lo, hi, 201)
        vals = np.array([m.phi(x) for x in sub])
        worst_b = max(worst_b, float(L - vals.min()), float(vals.max() - U))
        # nested interval
        a, b = lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo)
        L2, U2 = m.phi_bounds(a, b)
        worst_m = max(worst_m, L - L2, U2 - U)
    report["phi_bounds"] = {"ok": worst_b <= tol, "worst": worst_b}
    report["phi_bounds_monotone"] = {"ok": worst_m <= tol, "worst": float(worst_m)}
    if m.jumps is not None:
        j = m.jumps
        worst = 0.0
        for lo, hi in intervals:
            lam = max(j.intensity(x) for x in np.linspace(lo, hi, 201))
            worst = max(worst, lam - j.bound_on(lo, hi))
        report["intensity_bound"] = {"ok": worst <= tol, "worst": float(worst)}
        if j.intensity_floor is not None:
            lmin = min(j.intensity(x) for x in grid)
            report["intensity_floor"] = {"ok": j.intensity_floor <= lmin + tol,
                                         "worst": float(j.intensity_floor - lmin)}
    return report


def grid_phi_bounds(phi: Fn, n: int = 257, margin: float = 0.05):
    """Grid min/max of phi widened by ``margin``.

    Not exact: a bound missed between grid points silently biases the
    sampler. Provided for exploration only.
    """
    def bounds(lo, hi):
        v = np.array([phi(x) for x in np.linspace(lo, hi, n)])
        pad = margin * max(1.0, float(v.max() - v.min()))
        return float(v.min() - pad), float(v.max() + pad)
    return bounds


# Drift families ----------------------------------------------------------------

def _zero_drift(start, horizon, **_):
    def proposal(x, dt):
        return GaussianProposal(x, dt, 0.0)
    z = lambda x: 0.0 * x
    return dict(drift=z, drift_deriv=z, drift_integral=z, phi=z,
                phi_bounds=lambda lo, hi: (0.0, 0.0), proposal=proposal, global_phi_bounds=(0.0, 0.0),
                phi_floor=0.0)


def _constant_drift(start, horizon, c=0.0, **_):
    c = float(c)

    def proposal(x, dt):
        return GaussianProposal(x + c * dt, dt, c * x + c * c * dt / 2.0)
    val = c * c / 2.0
    return dict(drift=lambda x: c + 0.0 * x, drift_deriv=lambda x: 0.0 * x, drift_integral=lambda u: c * u,
                phi=lambda x: val + 0.0 * x, phi_bounds=lambda lo, hi: (val, val), proposal=proposal,
                global_phi_bounds=(val, val), phi_floor=val)


def _linear_drift(start, horizon, theta=1.0, **_):
    """alpha(x) = -theta x, theta >= 0."""
    th = float(theta)
    if th < 0:
        raise ConfigError("linear drift needs theta >= 0")

    def phi_bounds(lo, hi):
        top = (th * th * max(lo * lo, hi * hi) - th) / 2.0
        if lo <= 0.0 <= hi:
            bot = -th / 2.0
        else:
            bot = (th * th * min(lo * lo, hi * hi) - th) / 2.0
        return bot, top

    def proposal(x, dt):
        prec = th + 1.0 / dt
        mean = x / (dt * prec)
        return GaussianProposal(mean, 1.0 / prec, prec * mean * mean / 2.0 - x * x / (2.0 * dt))

    return dict(drift=lambda x: -th * x, drift_deriv=lambda x: -th + 0.0 * x,
                drift_integral=lambda u: -th * u * u / 2.0,
                phi=lambda x: (th * th * x * x - th) / 2.0, phi_bounds=phi_bounds, proposal=proposal,
                global_phi_bounds=None if th else (0.0, 0.0), phi_floor=-th / 2.0)


def _sine_drift(start, horizon, amp=1.0, **_):
    """alpha(x) = amp sin(x); phi = (amp^2 sin^2 x + amp cos x) / 2."""
    a = float(amp)

    def phi(x):
        return (a * a * np.sin(x) ** 2 + a * np.cos(x)) / 2.0

    crit = [0.0, math.pi]
    if a != 0.0 and abs(1.0 / (2.0 * a)) <= 1.0:
        r = math.acos(1.0 / (2.0 * a))
        crit += [r, -r]

    def phi_bounds(lo, hi):
        # stationary points: sin x = 0 or cos x = 1 / (2 a); all are 2 pi periodic
        pts = [lo, hi]
        for c in crit:
            k0 = math.ceil((lo - c) / (2 * math.pi))
            k1 = math.floor((hi - c) / (2 * math.pi))
            if k1 - k0 >= 1:
                pts.append(c + 2 * math.pi * k0)
                pts.append(c + 2 * math.pi * (k0 + 1))
            elif k1 == k0:
                pts.append(c + 2 * math.pi * k0)
        vals = [float(phi(p)) for p in pts]
        return min(vals), max(vals)

    gb = phi_bounds(-math.pi, math.pi)

    def proposal(x, dt):
        return GaussianProposal(x, dt, a + abs(a))

    return dict(drift=lambda x: a * np.sin(x), drift_deriv=lambda x: a * np.cos(x),
                drift_integral=lambda u: a * (1.0 - np.cos(u)), phi=phi, phi_bounds=phi_bounds,
                proposal=proposal, global_phi_bounds=gb, phi_floor=gb[0])


DRIFTS = {"zero": _zero_drift, "constant": _constant_drift, "linear": _linear_drift, "sine": _sine_drift}


# Jump families -----------------------------------------------------------------

def _intensity(form: str, rate: float, offset: float):
    if form == "none":
        return None
    if form == "constant":
        return (lambda x: rate + 0.0 * x), GlobalBound(rate)
    if form == "sine_pos":
        # negative values of sin are read as zero intensity
        return (lambda x: rate * np.maximum(np.sin(x), 0.0)), GlobalBound(rate)
    if form == "square":
        return ((lambda x: rate * x * x + offset),
                LayerBound(lambda lo, hi: rate * max(lo * lo, hi * hi) + offset))
    raise ConfigError(f"unknown intensity form {form!r}")


def _jump_sampler(form: str, scale: float):
    if form == "half_gauss":
        # nu ~ N(-x/2, scale^2)
        return lambda x, rng: -x / 2.0 + scale * rng.standard_normal(np.shape(x))
    if form == "to_zero":
        # nu ~ U between 0 and -x, so the post-jump state lies between 0 and x
        return lambda x, rng: -x * rng.random(np.shape(x))
    if form == "gauss":
        return lambda x, rng: scale * rng.standard_normal(np.shape(x))
    if form == "zero":
        return lambda x, rng: 0.0 * x
    raise ConfigError(f"unknown jump form {form!r}")


# Declarative configuration ------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    name: str = "custom"
    drift: str = "zero"
    drift_param: float = 0.0
    start: float = 0.0
    horizon: float = 1.0
    intensity: str = "none"
    intensity_rate: float = 1.0
    intensity_offset: float = 0.0
    intensity_floor: float = 0.0
    jump: str = "zero"
    jump_scale: float = 1.0

    def build(self) -> DiffusionModel:
        if self.drift not in DRIFTS:
            raise ConfigError(f"unknown drift form {self.drift!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        key = {"constant": "c", "linear": "theta", "sine": "amp"}.get(self.drift, "unused")
        parts = DRIFTS[self.drift](self.start, self.horizon, **{key: self.drift_param})
        jumps = None
        it = _intensity(self.intensity, self.intensity_rate, self.intensity_offset)
        if it is not None:
            floor = self.intensity_floor if self.intensity_floor > 0 else None
            jumps = JumpSpec(it[0], it[1], _jump_sampler(self.jump, self.jump_scale), floor)
        return DiffusionModel(horizon=self.horizon, start=self.start, jumps=jumps, name=self.name, **parts)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["model"] = {f.name: repr(getattr(self, f.name)) if isinstance(getattr(self, f.name), float)
                       else str(getattr(self, f.name)) for f in fields(self)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unreadable model config: {e}") from e
        if "model" not in cp:
            raise ConfigError("model config needs a [model] section")
        sec = cp["model"]
        kw = {}
        for f in fields(cls):
            if f.name in sec:
                raw = sec[f.name]
                try:
                    kw[f.name] = float(raw) if f.type in ("float", float) else raw
                except ValueError as e:
                    raise ConfigError(f"bad value for {f.name}: {raw!r}") from e
        unknown = set(sec) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown keys in model config: {sorted(unknown)}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())


PRESETS = {
    "bm": ModelConfig(name="bm"),
    "const": ModelConfig(name="const", drift="constant", drift_param=0.5),
    "ou": ModelConfig(name="ou", drift="linear", drift_param=1.0),
    "sine": ModelConfig(name="sine", drift="sine", drift_param=1.0, horizon=2.0),
    "app1": ModelConfig(name="app1", drift="linear", drift_param=1.0, start=2.0, horizon=5.0,
                        intensity="sine_pos", jump="half_gauss"),
    "app2": ModelConfig(name="app2", drift="sine", drift_param=1.0, start=0.0, horizon=2.0,
                        intensity="square", jump="to_zero"),
}


def load_model(name: str) -> ModelConfig:
    """Preset name or path to a config file."""
    if name in PRESETS:
        return PRESETS[name]
    try:
        return ModelConfig.from_file(name)
    except FileNotFoundError as e:
        raise ConfigError(f"unknown model {name!r}: not a preset ({', '.join(PRESETS)}) or a readable file") from e
