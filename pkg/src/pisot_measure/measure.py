"""Monte Carlo samples of the measure, projections, slices and Wiener averages."""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import mpmath
import numpy as np
from mpmath import mp, mpc
from scipy import stats

from .algebraic import MonicIntPolynomial, PisotContext, build_context
from .construction import IFSConfig
from .errors import PrecisionError, SearchExhausted

DUMP_MAGIC = b"PSLM"
DUMP_VERSION = 1
CHUNK = 1 << 18
UNIT_TOL = 1e-14


@dataclass(frozen=True)
class DigitWord:
    """Digits in ``0..3`` selecting ``-a1, -a2, a1, a2`` (the map order of :meth:`IFSConfig.maps`)."""

    digits: tuple[int, ...]

    def __post_init__(self):
        if any(d not in (0, 1, 2, 3) for d in self.digits):
            raise ValueError("digits must lie in 0..3")

    def center(self, cfg: IFSConfig) -> complex:
        t = cfg.translations()
        lam = cfg.lam
        z = 0j
        for d in reversed(self.digits):
            z = z * lam + t[d]
        return z

    def radius(self, cfg: IFSConfig) -> float:
        return abs(cfg.lam) ** len(self.digits) * cfg.attractor_radius


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.weights is None:
            n = len(self.points)
            self.weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        elif len(self.weights) and abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return len(self.points)

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0])) if len(self) else True


def _chunk_points(lam: complex, translations: np.ndarray, depth: int, ss: np.random.SeedSequence, m: int):
    rng = np.random.Generator(np.random.Philox(ss))
    words = (depth + 31) // 32
    raw = rng.bit_generator.random_raw((m, words)).astype(np.uint64)
    pts = np.zeros(m, dtype=complex)
    for n in reversed(range(depth)):
        digit = (raw[:, n // 32] >> np.uint64(2 * (n % 32))) & np.uint64(3)
        pts = pts * lam + translations[digit.astype(np.intp)]
    return pts


def sample_measure(cfg: IFSConfig, depth: int, count: int, seed: int, threads: int = 1) -> EmpiricalMeasure:
    """``count`` i.i.d. sums ``sum_{n<depth} lambda^n X_n`` with uniform digits.

    Chunks draw from independent Philox streams spawned from ``seed``, so the
    output does not depend on ``threads``.
    """
    if depth < 1 or count < 1:
        raise ValueError("depth and count must be positive")
    lam = cfg.lam
    t = cfg.translations()
    sizes = [min(CHUNK, count - s) for s in range(0, count, CHUNK)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda a: _chunk_points(lam, t, depth, *a), zip(children, sizes)))
    meta = {
        "depth": depth,
        "seed": seed,
        "count": count,
        "truncation_error": abs(lam) ** depth * cfg.attractor_radius,
    }
    return EmpiricalMeasure(np.concatenate(parts), meta=meta)


def _check_unit(z) -> None:
    if abs(float(abs(z)) - 1) > UNIT_TOL:
        raise ValueError(f"direction must be a unit complex number, |z| = {abs(z)!r}")


def project(em: EmpiricalMeasure, z: complex) -> EmpiricalMeasure:
    """Push forward under ``w -> <w, z> = Re(w conj(z))``."""
    _check_unit(z)
    pts = (np.asarray(em.points) * np.conj(z)).real
    return EmpiricalMeasure(pts, em.weights, dict(em.meta, direction=(z.real, z.imag)))


def empirical_transform(em: EmpiricalMeasure, xis, block: int = 1 << 20) -> np.ndarray:
    """``sum_i w_i exp(i <x_i, xi>)`` for every ``xi`` (real points take real ``xi``)."""
    xis = np.atleast_1d(np.asarray(xis))
    pts = np.asarray(em.points)
    planar = np.iscomplexobj(pts)
    out = np.zeros(xis.shape, dtype=complex)
    for s in range(0, len(pts), block):
        p = pts[s : s + block]
        w = em.weights[s : s + block]
        for i, xi in enumerate(xis.flat):
            phase = (p * np.conj(xi)).real if planar else p * float(np.real(xi))
            out.flat[i] += np.dot(w, np.cos(phase)) + 1j * np.dot(w, np.sin(phase))
    return out


# -- Wiener averages ----------------------------------------------------------


class WienerEstimate(NamedTuple):
    value: float
    error: float


def required_step(support_diameter: float) -> float:
    return math.pi / (2 * support_diameter)


def wiener_statistic(
    ft: Callable,
    M: float,
    quad_step: float,
    support_diameter: float,
) -> WienerEstimate:
    """Trapezoid estimate of ``(1/2M) int_{-M}^{M} |ft(r)|^2 dr``.

    ``ft`` maps an array of reals to transform values, or to a pair
    ``(values, errors)``.  After centring, a measure supported in an
    interval of length ``D`` has ``| |F|^2 '| <= D`` and ``| |F|^2 ''| <= D^2``;
    the reported error is the smaller of the two trapezoid bounds plus the
    propagated evaluation error.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if support_diameter <= 0:
        raise ValueError("support_diameter must be positive")
    need = required_step(support_diameter)
    if quad_step > need:
        raise ValueError(f"quad_step {quad_step} too coarse; need at most {need}")
    n = max(1, math.ceil(2 * M / quad_step))
    h = 2 * M / n
    r = np.linspace(-M, M, n + 1)
    out = ft(r)
    if isinstance(out, tuple):
        vals, errs = out
    else:
        vals, errs = out, np.zeros(len(r))
    g = np.abs(vals) ** 2
    g_err = 2 * np.abs(vals) * errs + errs**2
    wts = np.full(n + 1, h)
    wts[[0, -1]] = h / 2
    value = float(np.dot(wts, g)) / (2 * M)
    D = support_diameter
    quad = min(D * h / 4, D**2 * h**2 / 12)
    return WienerEstimate(value, quad + float(np.dot(wts, g_err)) / (2 * M))


def discrete_transform(atoms, masses) -> Callable:
    """Transform ``r -> sum p_j exp(i r x_j)`` of a finite atomic measure on the line."""
    atoms = np.asarray(atoms, dtype=float)
    masses = np.asarray(masses, dtype=float)

    def ft(r):
        return np.exp(1j * np.outer(r, atoms)) @ masses

    return ft


def projected_transform(ev, z: complex) -> Callable:
    """``r -> F(r z)``, the transform of the projection onto direction ``z``."""
    from .fourier import transform_array

    _check_unit(z)
    return lambda r: transform_array(ev, np.asarray(r) * z)


def projection_decay_flag(ev, z: complex, M_small: float = 1e2, M_large: float = 1e4, step: float | None = None):
    """``(flag, W(M_small), W(M_large))``; flag fires when the Wiener average fails to decrease."""
    D = 2 * ev.cfg.attractor_radius
    step = step or required_step(D) / 16
    lo = wiener_statistic(projected_transform(ev, z), M_small, step, D)
    hi = wiener_statistic(projected_transform(ev, z), M_large, step, D)
    return hi.value > lo.value, lo, hi


def ks_to_uniform(values) -> float:
    """Kolmogorov-Smirnov distance of the sample to the uniform law on its range."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return 1.0
    return float(stats.kstest((v - lo) / (hi - lo), "uniform").statistic)


# -- slices ---------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """Band ``{x : |<x, z> - <w, z>| < delta}`` recentred to the real line."""

    z: complex
    w: complex
    band_halfwidth: float

    def __post_init__(self):
        _check_unit(self.z)
        if not self.band_halfwidth > 0:
            raise ValueError("band_halfwidth must be positive")

    @property
    def normal(self) -> complex:
        """``z^perp = -i z``."""
        return -1j * self.z

    def recenter(self, xs):
        """``x -> <x - w, z^perp>``, the coordinate along the slice line."""
        return (np.asarray(xs) - self.w) * np.conj(self.normal)


@lru_cache(maxsize=8)
def _context_at(poly: MonicIntPolynomial, digits: int) -> PisotContext:
    return build_context(poly, digits)


def _theta_for(ctx: PisotContext, k: int) -> PisotContext:
    need = int(k * math.log10(float(abs(ctx.theta)))) + 30
    if ctx.precision_digits >= need:
        return ctx
    return _context_at(ctx.poly, need + 20)


def _slice_frequencies(ctx: PisotContext, z, k_max: int):
    """Yield ``(k, t_k, err)`` for ``t_k = <4 pi conj(theta)^k, z^perp>``, ``z`` taken as exact."""
    c = _theta_for(ctx, k_max)
    with mp.workdps(c.dps):
        zp_conj = mpmath.conj(-1j * mpc(z))
        base = mpmath.conj(c.theta)
        mod = abs(c.theta) + c.theta_radius
        power = 4 * mp.pi
        for k in range(k_max + 1):
            t = mpmath.re(power * zp_conj)
            err = 4 * mp.pi * k * mod ** max(k - 1, 0) * c.theta_radius + abs(t) * mpmath.mpf(10) ** (5 - c.dps)
            yield k, t, err
            power *= base


def slice_frequency_value(ctx: PisotContext, z, k: int):
    """``t_k`` and its error bound."""
    *_, (_, t, err) = _slice_frequencies(ctx, z, k)
    return t, err


def find_slice_frequency(ctx: PisotContext, z, n: int, k_cap: int = 200):
    """Smallest ``k <= k_cap`` with ``t_k`` in ``(n, n+1)``; returns ``(k, t)``.

    ``z`` may be an ``mpc``; large ``k`` needs directions resolved far below
    double precision.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    _check_unit(z)
    best = None
    for k, t, err in _slice_frequencies(ctx, z, k_cap):
        if t - err > n and t + err < n + 1:
            return k, float(t)
        if not (t + err <= n or t - err >= n + 1):
            raise PrecisionError(f"t_{k} = {float(t)} undecided against ({n}, {n + 1})", margin=float(err))
        miss = float(min(abs(t - n), abs(t - n - 1)))
        if best is None or miss < best[1]:
            best = (k, miss)
    raise SearchExhausted(f"no k <= {k_cap} puts t_k in ({n}, {n + 1})", best=best)


def window_angle(ctx: PisotContext, k: int) -> float:
    """``arg conj(theta)^k`` in ``[0, 2 pi)``; ``J_{n,k}`` hugs this line's two directions."""
    with mp.workdps(ctx.dps):
        return float(mpmath.fmod(-k * mpmath.arg(ctx.theta), 2 * mp.pi) % (2 * mp.pi))


def nearest_window_direction(ctx: PisotContext, z, n: int, k: int) -> mpc:
    """Unit direction nearest ``z`` whose ``t_k`` sits at the window centre ``n + 1/2``.

    Returned as an ``mpc`` at the precision needed to resolve the window.
    """
    _check_unit(z)
    c = _theta_for(ctx, k)
    with mp.workdps(c.dps):
        w = 4 * mp.pi * mpmath.conj(c.theta) ** k
        ratio = (n + mpmath.mpf(1) / 2) / abs(w)
        if ratio > 1:
            raise SearchExhausted(f"|4 pi theta^{k}| too small for window {n}")
        phi = mpmath.arg(w)
        s = mpmath.asin(ratio)
        psi0 = mpmath.arg(mpc(z))
        candidates = (phi + s, phi + mp.pi - s)
        psi = min(candidates, key=lambda p: abs(math.remainder(float(p - psi0), 2 * math.pi)))
        return mpmath.expj(psi)


class SliceRow(NamedTuple):
    delta: float
    n: int
    t: float
    average: float
    plain_average: float
    bands: int
    dropped_mass: float


def band_statistics(proj, along, delta: float, t: float, weights=None):
    """Per-band ``|sum exp(i t s)|^2`` statistics for bands of width ``2 delta``.

    Returns ``(average, plain_average, bands, dropped_mass)``.  ``average``
    is the mass-weighted unbiased estimate ``(|S|^2 - m) / (m (m - 1))`` of
    ``|F(nu_w)(t)|^2``; ``plain_average`` uses ``|S / m|^2``, which is biased
    upward by ``1/m``.  Bands with fewer than two points are dropped.
    """
    proj = np.asarray(proj)
    idx = np.floor((proj - proj.min()) / (2 * delta)).astype(np.int64)
    total = len(proj)
    counts = np.bincount(idx)
    re = np.bincount(idx, weights=np.cos(t * along), minlength=len(counts))
    im = np.bincount(idx, weights=np.sin(t * along), minlength=len(counts))
    keep = counts >= 2
    m = counts[keep].astype(float)
    s2 = re[keep] ** 2 + im[keep] ** 2
    mass = m / total
    average = float(np.dot(mass, (s2 - m) / (m * (m - 1))))
    plain = float(np.dot(mass, s2 / m**2))
    dropped = float(counts[~keep].sum()) / total
    return average, plain, int(keep.sum()), dropped


def slice_experiment(
    em: EmpiricalMeasure,
    z: complex,
    deltas,
    frequencies,
) -> list[SliceRow]:
    """Mass-weighted band averages of ``|F(nu_w)(t)|^2`` for every ``(delta, t)``.

    ``frequencies`` is a sequence of ``(n, t_n)``.  Bands are cut along
    ``<x, z>`` and recentred with :meth:`SliceSpec.recenter`.
    """
    if not em.uniform:
        raise ValueError("band statistics assume uniform sample weights")
    z = complex(z)
    _check_unit(z)
    pts = np.asarray(em.points)
    proj = (pts * np.conj(z)).real
    along = SliceSpec(z, 0j, 1.0).recenter(pts).real
    rows = []
    for delta in deltas:
        for n, t in frequencies:
            avg, plain, bands, dropped = band_statistics(proj, along, delta, t)
            rows.append(SliceRow(float(delta), int(n), float(t), avg, plain, bands, dropped))
    return rows


def band_wiener(em: EmpiricalMeasure, z: complex, delta: float, M: float, step: float, min_points: int = 2):
    """Mass-weighted Wiener average of the band measures on ``[-M, M]``.

    Uses the unbiased per-band estimate of ``|F|^2`` at each frequency.
    """
    pts = np.asarray(em.points)
    proj = (pts * np.conj(z)).real
    along = SliceSpec(z, 0j, 1.0).recenter(pts).real
    span = float(along.max() - along.min()) or 1.0
    step = min(step, required_step(span))
    n = max(1, math.ceil(2 * M / step))
    ts = np.linspace(-M, M, n + 1)
    vals = np.array([band_statistics(proj, along, delta, t)[0] for t in ts])
    wts = np.full(n + 1, 2 * M / n)
    wts[[0, -1]] /= 2
    return float(np.dot(wts, vals)) / (2 * M)


# -- sample dumps -----------------------------------------------------------------


def write_samples(path, points) -> None:
    pts = np.ascontiguousarray(np.asarray(points, dtype="<c16"))
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC + struct.pack("<IQ", DUMP_VERSION, len(pts)))
        fh.write(pts.tobytes())


def read_samples(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != DUMP_MAGIC:
            raise ValueError(f"{path}: not a sample dump")
        version, count = struct.unpack("<IQ", head[4:])
        if version != DUMP_VERSION:
            raise ValueError(f"{path}: unsupported dump version {version}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if len(data) != count:
        raise ValueError(f"{path}: header says {count} points, found {len(data)}")
    return data.astype(complex)


__all__ = [
    "DigitWord",
    "EmpiricalMeasure",
    "SliceRow",
    "SliceSpec",
    "WienerEstimate",
    "band_statistics",
    "band_wiener",
    "discrete_transform",
    "empirical_transform",
    "find_slice_frequency",
    "ks_to_uniform",
    "nearest_window_direction",
    "project",
    "projected_transform",
    "projection_decay_flag",
    "read_samples",
    "required_step",
    "sample_measure",
    "slice_experiment",
    "slice_frequency_value",
    "window_angle",
    "wiener_statistic",
    "write_samples",
]
