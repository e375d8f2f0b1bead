"""The four-map IFS ``z -> lambda z +/- a_j`` with translations in ``Y = {k lambda^l}``.

Translations are stored as exact integer pairs ``(k, l)``; their complex
values are derived from the context's certified ``lambda``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import mpmath
import numpy as np
from mpmath import mp, mpc, mpf
from scipy.spatial import cKDTree

from .algebraic import MonicIntPolynomial, PisotContext, build_context, pow_error
from .errors import CertificationError, SearchExhausted, SeparationInconclusive

REFERENCE_PAIR = (2 / 3, 2j / 3)
IFS_FORMAT = "pisot-ifs/1"


@dataclass(frozen=True)
class YElement:
    """``k * lambda**l`` with ``value`` accurate to ``radius``."""

    k: int
    l: int
    value: mpc
    radius: mpf

    def __complex__(self):
        return complex(self.value)


def y_element(ctx: PisotContext, k: int, l: int) -> YElement:
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise ValueError(f"k must be a non-negative integer, got {k!r}")
    if int(l) != l or l < 0:
        raise ValueError(f"l must be a non-negative integer, got {l!r}")
    k, l = int(k), int(l)
    with mp.workdps(ctx.dps):
        value = k * ctx.lam**l
        radius = k * pow_error(abs(ctx.lam), ctx.lam_radius, l) + abs(value) * mpf(10) ** (2 - ctx.dps)
    return YElement(k, l, value, radius)


@dataclass(frozen=True)
class SeparationCertificate:
    depth: int
    min_gap: float


@dataclass(frozen=True)
class IFSConfig:
    """Maps ``phi_{k,j}(z) = lambda z + (-1)^k a_j`` for ``k, j in {1, 2}``."""

    ctx: PisotContext
    a1: YElement
    a2: YElement
    attractor_radius: float
    ssc_certificate: SeparationCertificate | None = None

    @property
    def lam(self) -> complex:
        return complex(self.ctx.lam)

    def maps(self):
        """``[((k, j), translation), ...]`` in digit order 0..3."""
        a = {1: complex(self.a1.value), 2: complex(self.a2.value)}
        return [((k, j), (-1) ** k * a[j]) for k in (1, 2) for j in (1, 2)]

    def translations(self) -> np.ndarray:
        return np.array([t for _, t in self.maps()], dtype=complex)

    def key(self):
        return (self.a1.k, self.a1.l, self.a2.k, self.a2.l)


def attractor_radius(lam_abs: float, translations) -> float:
    """Radius of a ball around 0 mapped into itself by every map."""
    top = max(abs(complex(t)) for t in translations)
    return top / (1 - lam_abs) * (1 + 1e-12)


def make_ifs(ctx: PisotContext, a1: YElement, a2: YElement, certificate=None) -> IFSConfig:
    lam_abs = float(abs(ctx.lam) + ctx.lam_radius)
    R = attractor_radius(lam_abs, (complex(a1.value), complex(a2.value)))
    return IFSConfig(ctx, a1, a2, R, certificate)


def _cylinder_centers(lam: complex, translations: np.ndarray, depth: int) -> np.ndarray:
    centers = np.zeros(1, dtype=complex)
    scale = 1.0 + 0j
    for _ in range(depth):
        centers = (centers[:, None] + scale * translations[None, :]).ravel()
        scale *= lam
    return centers


def certify_separation(lam: complex, translations, max_depth: int = 6, min_depth: int = 1) -> SeparationCertificate:
    """Certify the SSC for ``{z -> lam z + t}`` using ball hulls of cylinders.

    At depth ``t`` the ``4**t`` cylinders sit in balls of radius
    ``|lam|**t R`` around the images of 0.  Returns the first depth where all
    balls are pairwise disjoint.
    """
    translations = np.asarray(translations, dtype=complex)
    lam_abs = abs(lam)
    R = attractor_radius(lam_abs, translations)
    slack = 64 * np.finfo(float).eps * max(R, 1.0) * len(translations)
    best = -math.inf
    for depth in range(min_depth, max_depth + 1):
        centers = _cylinder_centers(lam, translations, depth)
        pts = np.column_stack([centers.real, centers.imag])
        dist, _ = cKDTree(pts).query(pts, k=2)
        gap = float(dist[:, 1].min()) - 2 * lam_abs**depth * R
        best = max(best, gap)
        if gap > slack:
            return SeparationCertificate(depth, gap)
    raise SeparationInconclusive(
        f"no separating depth up to {max_depth} (best gap {best:.3g}); SSC undecided, not refuted"
    )


def certify_ssc(cfg: IFSConfig, max_depth: int = 6, min_depth: int = 1) -> SeparationCertificate:
    lam = complex(cfg.ctx.lam)
    return certify_separation(lam, cfg.translations(), max_depth=max_depth, min_depth=min_depth)


def approximate_in_Y(ctx: PisotContext, target: complex, eps: float, l_cap: int = 100_000) -> YElement:
    """Smallest ``l`` (then smallest ``k >= 1``) with ``|k lambda^l - target| < eps``.

    Only ``l`` is capped; ``k`` is an unbounded integer, since approximating
    at scale ``eps`` generally needs ``l`` of order ``1/eps`` and hence
    ``k`` of order ``|theta|**l``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = complex(target)
    if target == 0:
        return y_element(ctx, 0, 0)
    lam = complex(ctx.lam)
    log_r = math.log(abs(lam))
    t_abs = abs(target)
    ls = np.arange(l_cap + 1)
    delta = np.angle(target) - ls * np.angle(lam)
    delta = (delta + np.pi) % (2 * np.pi) - np.pi
    perp = t_abs * np.abs(np.sin(delta))
    along = t_abs * np.cos(delta)
    log_step = ls * log_r
    # quantization along the ray is at most half a step; below ~1e-300 it is moot
    step = np.where(log_step > -690, np.exp(np.maximum(log_step, -690)), 0.0)
    quant = np.minimum(step / 2, np.abs(along))
    loose = (along > 0) & (np.hypot(perp, quant) < eps * (1 + 1e-9) + step)
    best = None
    for l in np.flatnonzero(loose):
        l = int(l)
        with mp.workdps(ctx.dps):
            lam_l = ctx.lam**l
            tt = mpc(target)
            proj = mpmath.re(tt * mpmath.conj(lam_l)) / abs(lam_l) ** 2
            base = int(mpmath.floor(proj))
            for k in sorted({max(base, 1), base + 1}):
                dist = abs(k * lam_l - tt)
                err = k * pow_error(abs(ctx.lam), ctx.lam_radius, l)
                if best is None or dist < best[0]:
                    best = (dist, k, l)
                if dist + err < eps:
                    return y_element(ctx, k, l)
    if best is None:
        # report the closest ray direction as the nearest miss
        l = int(np.argmin(np.where(along > 0, perp, np.inf)))
        best = (float(perp[l]), None, l)
    raise SearchExhausted(
        f"no k*lambda^l within {eps} of {target} for l <= {l_cap}", best=best
    )


class DimensionEstimate(NamedTuple):
    value: float
    error: float


def similarity_dimension(n_maps: int, expansion: float) -> float:
    """``log(n_maps) / log(expansion)`` for contraction ratio ``1/expansion``."""
    return math.log(n_maps) / math.log(expansion)


def hausdorff_dimension(cfg: IFSConfig) -> DimensionEstimate:
    """``log 4 / log|theta|`` (valid under the SSC)."""
    if cfg.ssc_certificate is None or cfg.ssc_certificate.min_gap <= 0:
        raise CertificationError("dimension formula needs a separation certificate")
    with mp.workdps(cfg.ctx.dps):
        mod = abs(cfg.ctx.theta)
        r = cfg.ctx.theta_radius
        value = mpmath.log(4) / mpmath.log(mod)
        # derivative of log4/log x is -log4/(x log^2 x)
        err = mpmath.log(4) / ((mod - r) * mpmath.log(mod - r) ** 2) * r
    est = DimensionEstimate(float(value), float(err) + 1e-15)
    if mod < 4 and not est.value > 1:
        raise CertificationError(f"dimension {est.value} should exceed 1 for |theta| < 4")
    return est


def _relative_gap(lam: complex, translations) -> float:
    """Depth-1 ball gap divided by the largest translation (scale invariant)."""
    translations = np.asarray(translations, dtype=complex)
    lam_abs = abs(lam)
    R = attractor_radius(lam_abs, translations)
    diff = np.abs(translations[:, None] - translations[None, :])
    np.fill_diagonal(diff, np.inf)
    return (diff.min() - 2 * lam_abs * R) / np.abs(translations).max()


def _pm(a1: complex, a2: complex):
    return np.array([-a1, -a2, a1, a2], dtype=complex)


def reference_margin(ctx: PisotContext) -> SeparationCertificate:
    """Separation certificate of the reference pair ``(2/3, 2i/3)`` at depth 1."""
    return certify_separation(complex(ctx.lam), _pm(*REFERENCE_PAIR), max_depth=1)


def build_paper_ifs(
    ctx: PisotContext,
    eps_fraction: float = 0.25,
    strategy: str = "search",
    max_l: int = 8,
    max_k: int = 64,
) -> IFSConfig:
    """A certified pair ``(a_1, a_2)`` in ``Y x Y`` and the resulting IFS.

    ``strategy="search"`` scans ``(k_1, l_1, k_2, l_2)`` by increasing
    ``max(l)``, then ``max(k)``, then lexicographically, and accepts the first
    pair whose depth-1 relative separation gap is at least ``eps_fraction``
    times that of the reference pair ``(2/3, 2i/3)``.

    ``strategy="perturb"`` approximates each coordinate of the reference
    pair within ``eps_fraction * g`` (``g`` the reference gap) inside ``Y``.
    This is valid but produces large ``k, l`` and hence tiny Fourier bounds.
    """
    if not 0 < eps_fraction < 1:
        raise ValueError("eps_fraction must lie strictly between 0 and 1")
    ref = reference_margin(ctx)
    lam = complex(ctx.lam)
    if strategy == "perturb":
        eps = eps_fraction * ref.min_gap
        a1 = approximate_in_Y(ctx, REFERENCE_PAIR[0], eps)
        a2 = approximate_in_Y(ctx, REFERENCE_PAIR[1], eps)
        cfg = make_ifs(ctx, a1, a2)
        return make_ifs(ctx, a1, a2, certify_ssc(cfg, max_depth=1))
    if strategy != "search":
        raise ValueError(f"unknown strategy {strategy!r}")
    need = eps_fraction * _relative_gap(lam, _pm(*REFERENCE_PAIR))
    powers = [lam**l for l in range(max_l + 1)]
    for L in range(max_l + 1):
        for K in range(1, max_k + 1):
            for l1, k1, l2, k2 in product(range(L + 1), range(1, K + 1), range(L + 1), range(1, K + 1)):
                if max(l1, l2) != L or max(k1, k2) != K or (l1, k1) >= (l2, k2):
                    continue
                t = _pm(k1 * powers[l1], k2 * powers[l2])
                if _relative_gap(lam, t) < need:
                    continue
                a1, a2 = y_element(ctx, k1, l1), y_element(ctx, k2, l2)
                cfg = make_ifs(ctx, a1, a2)
                try:
                    cert = certify_ssc(cfg, max_depth=1)
                except SeparationInconclusive:
                    continue
                return make_ifs(ctx, a1, a2, cert)
    raise SearchExhausted(
        f"no pair with l <= {max_l}, k <= {max_k} keeps {eps_fraction} of the reference margin"
    )


# -- serialization --------------------------------------------------------


def ifs_to_json(cfg: IFSConfig, extra: dict | None = None) -> str:
    cert = cfg.ssc_certificate
    doc = {
        "format": IFS_FORMAT,
        "polynomial": list(cfg.ctx.poly.coefficients),
        "polynomial_text": str(cfg.ctx.poly),
        "precision_digits": cfg.ctx.precision_digits,
        "a1": {"k": str(cfg.a1.k), "l": cfg.a1.l},
        "a2": {"k": str(cfg.a2.k), "l": cfg.a2.l},
        "certificate": None
        if cert is None
        else {"depth": cert.depth, "min_gap": repr(float(cert.min_gap))},
        "theta": [mpmath.nstr(mpmath.re(cfg.ctx.theta), 30), mpmath.nstr(mpmath.im(cfg.ctx.theta), 30)],
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def ifs_from_json(text: str, ctx: PisotContext | None = None) -> IFSConfig:
    """Rebuild an :class:`IFSConfig`; the stored certificate is re-derived and checked."""
    doc = json.loads(text)
    if doc.get("format") != IFS_FORMAT:
        raise ValueError(f"not an IFS document (format {doc.get('format')!r})")
    poly = MonicIntPolynomial(tuple(doc["polynomial"]))
    if ctx is None or ctx.poly != poly or ctx.precision_digits != doc["precision_digits"]:
        ctx = build_context(poly, doc["precision_digits"])
    a1 = y_element(ctx, int(doc["a1"]["k"]), doc["a1"]["l"])
    a2 = y_element(ctx, int(doc["a2"]["k"]), doc["a2"]["l"])
    cfg = make_ifs(ctx, a1, a2)
    stored = doc.get("certificate")
    if stored is None:
        return cfg
    cert = certify_ssc(cfg, max_depth=stored["depth"], min_depth=stored["depth"])
    if not math.isclose(cert.min_gap, float(stored["min_gap"]), rel_tol=1e-9, abs_tol=1e-12):
        raise CertificationError("stored separation certificate does not reproduce")
    return make_ifs(ctx, a1, a2, cert)


__all__ = [
    "IFSConfig",
    "REFERENCE_PAIR",
    "SeparationCertificate",
    "YElement",
    "approximate_in_Y",
    "build_paper_ifs",
    "certify_separation",
    "certify_ssc",
    "hausdorff_dimension",
    "ifs_from_json",
    "ifs_to_json",
    "make_ifs",
    "similarity_dimension",
    "y_element",
]
