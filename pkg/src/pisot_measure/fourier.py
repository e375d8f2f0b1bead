"""Fourier transform of the self-similar measure as an infinite cosine product.

``F(xi) = prod_{n>=0} (cos Re(lambda^n a_1 conj(xi)) + cos Re(lambda^n a_2 conj(xi))) / 2``

Along ``xi = 4 pi conj(theta)^N`` the product telescopes into bilateral
factors ``b_m`` whose cosine arguments reduce modulo 1 through the integer
power sums, which is what makes a certified lower bound possible.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np
from mpmath import mp, mpc, mpf
from scipy.special import j1

from .algebraic import reduced_trace_multiple
from .construction import IFSConfig
from .errors import CertificationError, PrecisionError

FLOAT_LIMIT = 1e6
UNIT_ROUNDOFF = np.finfo(float).eps / 2


@dataclass(frozen=True)
class FourierEvaluator:
    cfg: IFSConfig
    tail_tol: float
    C0: float
    M_cut: int

    @property
    def lam(self) -> complex:
        return complex(self.cfg.ctx.lam)

    @property
    def lam_abs(self) -> float:
        return float(abs(self.cfg.ctx.lam) + self.cfg.ctx.lam_radius)

    @property
    def rho(self) -> float:
        return float(self.cfg.ctx.rho)

    def translations(self) -> tuple[complex, complex]:
        return complex(self.cfg.a1.value), complex(self.cfg.a2.value)


def make_evaluator(cfg: IFSConfig, tail_tol: float = 1e-12) -> FourierEvaluator:
    if not 0 < tail_tol < 1:
        raise ValueError("tail_tol must lie in (0, 1)")
    ctx = cfg.ctx
    rho = float(ctx.rho)
    k_max = max(cfg.a1.k, cfg.a2.k)
    l_max = max(cfg.a1.l, cfg.a2.l)
    C0 = 2 * math.pi * float(ctx.C) * float(k_max) * rho ** (-l_max)
    M_cut = 0
    while C0 * rho**M_cut >= 1:
        M_cut += 1
    return FourierEvaluator(cfg, tail_tol, C0, M_cut)


class FrequencySample(NamedTuple):
    xi: complex
    value: complex
    error: float


def truncation_index(ev: FourierEvaluator, xi_abs: float) -> tuple[int, float]:
    """First ``N*`` whose quadratic tail bound drops below ``tail_tol``, and that bound."""
    a1, a2 = ev.translations()
    S = abs(a1) ** 2 + abs(a2) ** 2
    r2 = ev.lam_abs**2

    def tail(n):
        return S * xi_abs**2 * r2 ** (n + 1) / (4 * (1 - r2))

    if tail(0) < ev.tail_tol:
        return 0, tail(0)
    guess = math.log(4 * (1 - r2) * ev.tail_tol / (S * xi_abs**2)) / math.log(r2) - 1
    n = max(0, math.floor(guess) - 1)
    while tail(n) >= ev.tail_tol:
        n += 1
    while n > 0 and tail(n - 1) < ev.tail_tol:
        n -= 1
    return n, tail(n)


def _float_rounding(ev: FourierEvaluator, xi_abs, nstar):
    a1, a2 = ev.translations()
    r = ev.lam_abs
    weighted = 2 / (1 - r) + r / (1 - r) ** 2  # sum of (n+2) r^n
    return UNIT_ROUNDOFF * (2 * xi_abs * (abs(a1) + abs(a2)) * weighted + 3 * (nstar + 1))


def transform_array(ev: FourierEvaluator, xis) -> tuple[np.ndarray, np.ndarray]:
    """Float evaluation at many frequencies; returns ``(values, errors)``."""
    xis = np.asarray(xis, dtype=complex)
    mods = np.abs(xis)
    top = float(mods.max()) if mods.size else 0.0
    nstar, _ = truncation_index(ev, top)
    a1, a2 = ev.translations()
    lam = ev.lam
    w = np.conj(xis)
    prod = np.ones(xis.shape)
    scale = 1 + 0j
    for _ in range(nstar + 1):
        ww = scale * w
        prod *= 0.5 * (np.cos((ww * a1).real) + np.cos((ww * a2).real))
        scale *= lam
    S = abs(a1) ** 2 + abs(a2) ** 2
    r2 = ev.lam_abs**2
    tails = S * mods**2 * r2 ** (nstar + 1) / (4 * (1 - r2))
    errors = tails + _float_rounding(ev, mods, nstar)
    return prod.astype(complex), errors


def _transform_mp(ev: FourierEvaluator, xi, xi_radius) -> FrequencySample:
    ctx = ev.cfg.ctx
    xi_abs = float(abs(xi))
    nstar, tail = truncation_index(ev, xi_abs)
    dps = max(30, int(math.log10(max(xi_abs, 1.0))) + 30)
    with mp.workdps(dps):
        w = mpmath.conj(mpc(xi))
        a = (ev.cfg.a1.value, ev.cfg.a2.value)
        lam = ctx.lam
        prod = mpf(1)
        scale = mpc(1)
        for _ in range(nstar + 1):
            ww = scale * w
            prod *= (mpmath.cos(mpmath.re(ww * a[0])) + mpmath.cos(mpmath.re(ww * a[1]))) / 2
            scale *= lam
        value = float(prod)
    r = ev.lam_abs
    lr = float(ctx.lam_radius)
    arg_err = 0.0
    for y in (ev.cfg.a1, ev.cfg.a2):
        ya, yr = float(abs(y.value)), float(y.radius)
        arg_err += xi_abs * (yr / (1 - r) + ya * lr / (1 - r) ** 2) + float(xi_radius) * ya / (1 - r)
    rounding = 10.0 ** (-dps) * (xi_abs * 10 + 3 * (nstar + 1))
    return FrequencySample(complex(xi), complex(value), tail + arg_err / 2 + rounding)


def transform(ev: FourierEvaluator, xi, xi_radius: float = 0.0) -> FrequencySample:
    """``F(xi)`` with an error bound covering truncation and rounding.

    ``xi`` may be a Python complex or an ``mpc``; the latter (or a large
    ``|xi|``) switches to multiprecision evaluation.  ``xi_radius`` is an
    uncertainty on ``xi`` itself, propagated through the product.
    """
    if isinstance(xi, (mpc, mpf)) or abs(complex(xi)) > FLOAT_LIMIT:
        return _transform_mp(ev, xi, xi_radius)
    values, errors = transform_array(ev, np.array([complex(xi)]))
    a1, a2 = ev.translations()
    lip = (abs(a1) + abs(a2)) / (2 * (1 - ev.lam_abs))
    return FrequencySample(complex(xi), complex(values[0]), float(errors[0]) + lip * xi_radius)


def pisot_frequency(ev: FourierEvaluator, N: int) -> tuple[mpc, float]:
    """``4 pi conj(theta)^N`` as an ``mpc`` together with its radius."""
    ctx = ev.cfg.ctx
    with mp.workdps(ctx.dps):
        xi = 4 * mp.pi * mpmath.conj(ctx.theta) ** N
        rad = 4 * mp.pi * N * (abs(ctx.theta) + ctx.theta_radius) ** max(N - 1, 0) * ctx.theta_radius
    return xi, float(rad)


class BilateralFactor(NamedTuple):
    value: float
    margin: float
    error: float


def b_n(ev: FourierEvaluator, n: int) -> BilateralFactor:
    """Bilateral factor ``b_n`` with arguments reduced mod 1 exactly.

    ``b_n = cos(pi (x_1 + x_2)) cos(pi (x_1 - x_2))`` with
    ``x_j = k_j 2 Re theta^(n - l_j)``.  ``margin`` is the certified distance
    of ``x_1 +/- x_2`` from ``1/2 + Z``; it is positive iff ``b_n != 0`` is
    certified.
    """
    ctx = ev.cfg.ctx
    if abs(ctx.poly.constant_term) != 1:
        raise ValueError("bilateral factors need constant term +/-1")
    x1, e1 = reduced_trace_multiple(ctx, ev.cfg.a1.k, n - ev.cfg.a1.l)
    x2, e2 = reduced_trace_multiple(ctx, ev.cfg.a2.k, n - ev.cfg.a2.l)
    with mp.workdps(ctx.dps):
        err = e1 + e2
        half = mpf(1) / 2
        margins = []
        for s in (x1 + x2, x1 - x2):
            frac = s - mpmath.floor(s)
            margins.append(abs(frac - half))
        margin = min(margins) - err
        value = mpmath.cos(mp.pi * (x1 + x2)) * mpmath.cos(mp.pi * (x1 - x2))
        value_err = 2 * mp.pi * err + mpf(10) ** (3 - ctx.dps)
    if margin <= 0:
        raise PrecisionError(
            f"b_{n}: argument not separated from a half-integer (margin {float(margin):.3g})",
            margin=float(margin),
        )
    return BilateralFactor(float(value), float(margin), float(value_err))


def b_n_sum_form(ev: FourierEvaluator, n: int) -> float:
    """``(cos 2 pi x_1 + cos 2 pi x_2) / 2``, the sum form of :func:`b_n`."""
    ctx = ev.cfg.ctx
    x1, _ = reduced_trace_multiple(ctx, ev.cfg.a1.k, n - ev.cfg.a1.l)
    x2, _ = reduced_trace_multiple(ctx, ev.cfg.a2.k, n - ev.cfg.a2.l)
    with mp.workdps(ctx.dps):
        return float((mpmath.cos(2 * mp.pi * x1) + mpmath.cos(2 * mp.pi * x2)) / 2)


@dataclass(frozen=True)
class LowerBound:
    c: float
    cut: int
    core_product: float
    tail_factor: float
    min_margin: float


def default_cut(ev: FourierEvaluator, target: float = 1e-4) -> int:
    cut = ev.M_cut
    while ev.C0 * ev.rho**cut > min(target, 0.5):
        cut += 1
    return cut


def lower_bound_details(ev: FourierEvaluator, cut: int | None = None) -> LowerBound:
    """Certified ``c`` with ``|F(4 pi conj(theta)^N)| > c`` for all ``N >= 0``.

    Factors with ``|n| < cut`` are evaluated and certified nonzero; the rest
    satisfy ``|b_n| >= 1 - C0 rho^|n|`` and contribute at least
    ``exp(-4 C0 rho^cut / (1 - rho))`` because ``log(1 - x) >= -2x`` for ``x <= 1/2``.
    Omitting factors only enlarges the product, so the bound covers every ``N``.
    """
    if cut is None:
        cut = default_cut(ev)
    if cut < ev.M_cut:
        raise ValueError(f"cut {cut} below M_cut {ev.M_cut}")
    head = ev.C0 * ev.rho**cut
    if head > 0.5:
        raise ValueError(f"C0 rho^cut = {head:.3g} exceeds 1/2; raise cut")
    log_core = 0.0
    min_margin = math.inf
    for n in range(-cut + 1, cut):
        f = b_n(ev, n)
        low = abs(f.value) - f.error
        if low <= 0:
            raise CertificationError(f"|b_{n}| not bounded away from 0")
        log_core += math.log(low)
        min_margin = min(min_margin, f.margin)
    tail = math.exp(-4 * head / (1 - ev.rho))
    core = math.exp(log_core)
    c = core * tail * (1 - 1e-12)
    return LowerBound(c, cut, core, tail, min_margin)


def certify_lower_bound(ev: FourierEvaluator, cut: int | None = None) -> float:
    return lower_bound_details(ev, cut).c


def bilateral_product(ev: FourierEvaluator, N: int) -> FrequencySample:
    """``prod_{m <= N} b_m`` with the negative tail truncated at the tail tolerance."""
    m = -ev.M_cut
    while 2 * ev.C0 * ev.rho ** abs(m) / (1 - ev.rho) >= ev.tail_tol:
        m -= 1
    prod = 1.0
    err = 0.0
    for n in range(m + 1, N + 1):
        f = b_n(ev, n)
        prod *= f.value
        err += f.error
    tail = 2 * ev.C0 * ev.rho ** abs(m) / (1 - ev.rho)
    xi, _ = pisot_frequency(ev, N)
    return FrequencySample(complex(xi), complex(prod), tail + err + 1e-14 * (N - m))


# -- direction scans -------------------------------------------------------


class ScanRow(NamedTuple):
    angle: float
    best_radius: float
    sup_modulus: float
    exceeds_c: bool


def eta_angle(ctx, k: int) -> float:
    """Angle of ``eta^k = exp(-i k arg theta)`` in ``[0, 2 pi)``."""
    with mp.workdps(ctx.dps):
        return float(mpmath.fmod(-k * mpmath.arg(ctx.theta), 2 * mp.pi) % (2 * mp.pi))


def special_radius(ctx, k: int) -> float:
    return float(4 * mp.pi * abs(ctx.theta) ** k)


def direction_sup(ev: FourierEvaluator, angle: float, radii) -> tuple[float, float, float]:
    """``(best_radius, sup |F|, error at the sup)`` along ``r e^{i angle}``."""
    radii = np.asarray(radii, dtype=float)
    vals, errs = transform_array(ev, radii * np.exp(1j * angle))
    i = int(np.argmax(np.abs(vals)))
    return float(radii[i]), float(abs(vals[i])), float(errs[i])


def scan_directions(
    ev: FourierEvaluator,
    n_dirs: int,
    r_min: float,
    r_max: float,
    n_radii: int,
    c: float | None = None,
    threads: int = 1,
) -> list[ScanRow]:
    """Sup of ``|F(r z)|`` over log-spaced ``r`` in ``[r_min, r_max]`` per grid direction.

    Every ``eta^k`` with ``4 pi |theta|^k`` in range is snapped onto its grid
    cell and evaluated exactly at ``4 pi conj(theta)^k``; the row then
    reports ``eta^k``'s angle if that value is the sup.
    """
    if n_dirs < 1 or n_radii < 1:
        raise ValueError("grids must be nonempty")
    if r_min < 1:
        raise ValueError("r_min must be at least 1")
    if r_max < r_min:
        raise ValueError("r_max must not be below r_min")
    if c is None:
        c = certify_lower_bound(ev)
    ctx = ev.cfg.ctx
    cell = 2 * math.pi / n_dirs
    specials: dict[int, list[int]] = {}
    k = 0
    while special_radius(ctx, k) <= r_max:
        if special_radius(ctx, k) >= r_min:
            idx = int(round(eta_angle(ctx, k) / cell)) % n_dirs
            specials.setdefault(idx, []).append(k)
        k += 1
    radii = np.geomspace(r_min, r_max, n_radii)

    def row(i):
        angle = i * cell
        best_r, sup, err = direction_sup(ev, angle, radii)
        for k in specials.get(i, ()):
            xi, rad = pisot_frequency(ev, k)
            s = transform(ev, xi, rad)
            if abs(s.value) > sup:
                angle, best_r, sup, err = eta_angle(ctx, k), special_radius(ctx, k), abs(s.value), s.error
        return ScanRow(angle, best_r, sup, sup - err > c)

    # multiprecision work mutates mpmath's global context, so only the
    # special directions are kept on the calling thread
    plain = [i for i in range(n_dirs) if i not in specials]
    rows: dict[int, ScanRow] = {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for i, r in zip(plain, pool.map(row, plain)):
            rows[i] = r
    for i in specials:
        rows[i] = row(i)
    return [rows[i] for i in range(n_dirs)]


def orbit_cell_coverage(ctx, n_cells: int, K: int) -> float:
    """Fraction of ``n_cells`` angular cells hit by ``eta^k`` for ``0 <= k <= K``."""
    alpha = float(mpmath.arg(ctx.theta))
    ks = np.arange(K + 1)
    angles = np.mod(-ks * alpha, 2 * math.pi)
    cells = np.floor(angles / (2 * math.pi) * n_cells).astype(int) % n_cells
    return len(np.unique(cells)) / n_cells


def uniform_disk_transform(r):
    """Transform of the uniform probability measure on the unit disk, ``2 J1(r) / r``."""
    r = np.asarray(r, dtype=float)
    safe = np.where(r == 0, 1.0, r)
    return np.where(r == 0, 1.0, 2 * j1(safe) / safe)


__all__ = [
    "BilateralFactor",
    "FourierEvaluator",
    "FrequencySample",
    "LowerBound",
    "ScanRow",
    "b_n",
    "b_n_sum_form",
    "bilateral_product",
    "certify_lower_bound",
    "direction_sup",
    "eta_angle",
    "lower_bound_details",
    "make_evaluator",
    "orbit_cell_coverage",
    "pisot_frequency",
    "scan_directions",
    "special_radius",
    "transform",
    "transform_array",
    "uniform_disk_transform",
]
