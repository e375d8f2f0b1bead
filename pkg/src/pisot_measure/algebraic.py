"""High-precision arithmetic for complex Pisot numbers.

Roots are located by Aberth-Ehrlich iteration in mpmath and then enclosed in
certified disks (Weierstrass-correction inclusion radii).  Every later
comparison (modulus against 1, imaginary part against 0, fractional part
against 1/2) is decided outside those disks or refused with
:class:`~pisot_measure.errors.PrecisionError`.

Polynomials are monic with integer coefficients, stored constant term first:
``MonicIntPolynomial((1, 10, 1))`` is ``X^3 + X^2 + 10 X + 1``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import mpmath
from mpmath import mp, mpc, mpf

from .errors import CriterionInapplicable, PrecisionError, RootFindingError

DEFAULT_PRECISION = 50
GUARD_DIGITS = 20


@dataclass(frozen=True)
class MonicIntPolynomial:
    """Monic integer polynomial ``X^d + c_{d-1} X^{d-1} + ... + c_0``."""

    coefficients: tuple[int, ...]

    def __post_init__(self):
        coeffs = tuple(self.coefficients)
        if len(coeffs) < 2:
            raise ValueError("degree must be at least 2")
        for c in coeffs:
            if isinstance(c, bool) or int(c) != c:
                raise ValueError(f"coefficient {c!r} is not an integer")
        object.__setattr__(self, "coefficients", tuple(int(c) for c in coeffs))

    @classmethod
    def parse(cls, text: str) -> "MonicIntPolynomial":
        """Parse ``"1,10,1"`` (constant term first, monic leading term implied)."""
        parts = [p.strip() for p in text.split(",")]
        if not parts or any(p == "" for p in parts):
            raise ValueError(f"cannot parse polynomial coefficients from {text!r}")
        try:
            return cls(tuple(int(p) for p in parts))
        except ValueError as exc:
            raise ValueError(f"cannot parse polynomial coefficients from {text!r}") from exc

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    @property
    def constant_term(self) -> int:
        return self.coefficients[0]

    def full_coefficients(self) -> list[int]:
        """All ``d + 1`` coefficients, constant term first, leading 1 included."""
        return list(self.coefficients) + [1]

    def reciprocal(self) -> "MonicIntPolynomial":
        """Monic polynomial whose roots are the reciprocals of ours (needs ``|c_0| = 1``)."""
        c0 = self.constant_term
        if abs(c0) != 1:
            raise ValueError("reciprocal polynomial is monic over Z only when |c_0| = 1")
        full = self.full_coefficients()
        # coefficient of X^j in X^d p(1/X) is c_{d-j}; divide by c_0
        rev = [c * c0 for c in reversed(full)]
        return MonicIntPolynomial(tuple(rev[:-1]))

    def is_squarefree(self) -> bool:
        p = [Fraction(c) for c in self.full_coefficients()]
        dp = [i * c for i, c in enumerate(p)][1:]
        return len(_poly_gcd(p, dp)) == 1

    def rational_roots(self) -> list[int]:
        """Integer roots (the only rational ones, as the polynomial is monic)."""
        c0 = self.constant_term
        if c0 == 0:
            candidates = {0}
        else:
            candidates = set()
            for q in range(1, abs(c0) + 1):
                if c0 % q == 0:
                    candidates.update((q, -q))
        full = self.full_coefficients()
        roots = []
        for x in sorted(candidates):
            acc = 0
            for c in reversed(full):
                acc = acc * x + c
            if acc == 0:
                roots.append(x)
        return roots

    def __str__(self) -> str:
        terms = []
        for power in range(self.degree, -1, -1):
            c = 1 if power == self.degree else self.coefficients[power]
            if c == 0:
                continue
            mag = abs(c)
            if power == 0:
                body = str(mag)
            else:
                mono = "X" if power == 1 else f"X^{power}"
                body = mono if mag == 1 else f"{mag}*{mono}"
            sign = "-" if c < 0 else "+"
            terms.append((sign, body))
        first_sign, first_body = terms[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in terms[1:]:
            out += f" {sign} {body}"
        return out


def _poly_trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def _poly_mod(a, b):
    a = list(a)
    while len(a) >= len(b):
        if a[-1] != 0:
            factor = a[-1] / b[-1]
            shift = len(a) - len(b)
            for i, c in enumerate(b):
                a[shift + i] -= factor * c
        a.pop()
    return _poly_trim(a) if a else [Fraction(0)]


def _poly_gcd(a, b):
    a, b = _poly_trim(a), _poly_trim(b)
    while any(b):
        a, b = b, _poly_mod(a, b)
    return a


# -- root finding ---------------------------------------------------------


def _horner(full, z):
    """Value and derivative of the polynomial at ``z`` (coefficients low to high)."""
    p = mpc(0)
    dp = mpc(0)
    for c in reversed(full):
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _aberth(full, dps, maxiter=2000):
    d = len(full) - 1
    scale = mpmath.root(max(abs(mpf(full[0])), mpf(1)), d)
    z = [scale * mpmath.expj(2 * mp.pi * i / d + mpf("0.4")) for i in range(d)]
    tol = mpf(10) ** (-(dps - 4))
    for _ in range(maxiter):
        worst = mpf(0)
        for i in range(d):
            p, dp = _horner(full, z[i])
            if p == 0:
                continue
            ratio = p / dp if dp != 0 else mpc(mpf(10) ** (-dps))
            s = mpc(0)
            for j in range(d):
                if j != i:
                    s += 1 / (z[i] - z[j])
            offset = ratio / (1 - ratio * s)
            z[i] -= offset
            worst = max(worst, abs(offset) / max(mpf(1), abs(z[i])))
        if worst < tol:
            return z
    raise RootFindingError("Aberth iteration did not converge", achieved_radius=None)


def _inclusion_radii(full, z, dps):
    d = len(full) - 1
    u = mpf(10) ** (1 - dps)
    radii = []
    for i in range(d):
        p, _ = _horner(full, z[i])
        denom = mpc(1)
        for j in range(d):
            if j != i:
                denom *= z[i] - z[j]
        size = sum(abs(mpf(c)) * abs(z[i]) ** k for k, c in enumerate(full))
        eval_err = 2 * (d + 1) * u * size
        r = d * (abs(p) + eval_err) / abs(denom)
        radii.append(max(r, u * max(mpf(1), abs(z[i]))))
    return radii


def _snap_conjugates(z, radii):
    """Pair complex conjugates exactly and make certified-real roots real."""
    d = len(z)
    z = list(z)
    radii = list(radii)

    def conj_disk_hits(i):
        zc = mpmath.conj(z[i])
        return [m for m in range(d) if abs(zc - z[m]) <= radii[i] + radii[m]]

    done = set()
    for i in range(d):
        if i in done:
            continue
        hits = conj_disk_hits(i)
        if hits == [i]:
            z[i] = mpc(mpmath.re(z[i]), 0)
            done.add(i)
        elif len(hits) == 1 and abs(mpmath.im(z[i])) > radii[i]:
            j = hits[0]
            hits_j = conj_disk_hits(j)
            if hits_j == [i]:
                if mpmath.im(z[i]) < 0:
                    i, j = j, i
                r = max(radii[i], radii[j])
                z[j] = mpmath.conj(z[i])
                radii[i] = radii[j] = r
                done.update((i, j))
    return z, radii


def find_roots(poly: MonicIntPolynomial, precision_digits: int = DEFAULT_PRECISION):
    """All roots of ``poly`` as ``(value, radius)`` pairs.

    Each true root lies within ``radius`` of ``value`` and ``radius <=
    10**-precision_digits``.  Values are ``mpc`` at ``precision_digits +
    GUARD_DIGITS`` working digits (or more, when refinement was needed).
    Roots are sorted by decreasing modulus, then decreasing imaginary part.
    """
    if precision_digits < 1:
        raise ValueError("precision_digits must be positive")
    if not poly.is_squarefree():
        raise ValueError(f"{poly} is not square-free")
    full = poly.full_coefficients()
    target = mpf(10) ** (-precision_digits)
    guard = GUARD_DIGITS
    achieved = None
    for _ in range(4):
        dps = precision_digits + guard
        with mp.workdps(dps):
            target = mpf(10) ** (-precision_digits)
            z = _aberth(full, dps)
            radii = _inclusion_radii(full, z, dps)
            disjoint = all(
                abs(z[i] - z[j]) > radii[i] + radii[j]
                for i in range(len(z))
                for j in range(i + 1, len(z))
            )
            achieved = max(radii)
            if disjoint and achieved <= target:
                z, radii = _snap_conjugates(z, radii)
                order = sorted(range(len(z)), key=lambda i: (-abs(z[i]), -mpmath.im(z[i])))
                return [(z[i], radii[i]) for i in order]
        guard *= 2
    raise RootFindingError(
        f"could not certify roots of {poly} to 1e-{precision_digits}", achieved_radius=achieved
    )


# -- power sums -----------------------------------------------------------


class PowerSumSequence:
    """Exact integer power sums ``s_n = sum(root**n)`` via Newton's recurrence.

    Negative indices use the reciprocal polynomial, so they need ``|c_0| = 1``.
    """

    def __init__(self, poly: MonicIntPolynomial):
        self.poly = poly
        self._forward = _newton_initial(poly)
        self._backward = None
        self._lock = threading.Lock()

    def __getitem__(self, n: int) -> int:
        if n >= 0:
            return _extend(self._forward, self.poly, n, self._lock)
        if abs(self.poly.constant_term) != 1:
            raise ValueError("negative power sums need constant term 1 or -1")
        with self._lock:
            if self._backward is None:
                self._backward = _newton_initial(self.poly.reciprocal())
        return _extend(self._backward, self.poly.reciprocal(), -n, self._lock)


def _newton_initial(poly):
    d = poly.degree
    c = poly.coefficients
    s = [d]
    for k in range(1, d + 1):
        acc = -k * c[d - k]
        for i in range(1, k):
            acc -= c[d - i] * s[k - i]
        s.append(acc)
    return s


def _extend(s, poly, n, lock):
    d = poly.degree
    c = poly.coefficients
    with lock:
        while len(s) <= n:
            k = len(s)
            s.append(-sum(c[d - i] * s[k - i] for i in range(1, d + 1)))
        return s[n]


def power_sum(seq: PowerSumSequence, n: int) -> int:
    """``s_n``; raises ``ValueError`` for ``n < 0`` unless ``|c_0| = 1``."""
    return seq[n]


# -- the Pisot context ----------------------------------------------------


@dataclass(frozen=True)
class PisotContext:
    """A monic integer polynomial together with certified roots.

    ``theta`` is the dominant root (largest modulus, non-negative imaginary
    part).  ``conjugates`` are the remaining roots, ``conj_index`` points at
    the complex conjugate of ``theta`` among them (``None`` if ``theta`` is
    real).  ``rho`` and ``C`` are one valid pair of constants with
    ``dist(2 Re theta^n, Z) <= C rho^|n|`` for every integer ``n``; they are
    only meaningful when ``theta`` is a complex Pisot number.
    """

    poly: MonicIntPolynomial
    precision_digits: int
    dps: int
    theta: mpc
    theta_radius: mpf
    conjugates: tuple
    conj_index: int | None
    lam: mpc
    lam_radius: mpf
    rho: mpf
    C: mpf
    power_sums: PowerSumSequence = field(repr=False, compare=False)

    @property
    def degree(self) -> int:
        return self.poly.degree

    def others(self):
        """Conjugates other than ``theta`` and its complex conjugate, with radii."""
        return [rc for i, rc in enumerate(self.conjugates) if i != self.conj_index]

    @property
    def radius(self) -> mpf:
        return max([self.theta_radius] + [r for _, r in self.conjugates])


def build_context(poly: MonicIntPolynomial, precision_digits: int = DEFAULT_PRECISION) -> PisotContext:
    roots = find_roots(poly, precision_digits)
    dps = max(precision_digits + GUARD_DIGITS, mp.dps)
    with mp.workdps(dps):
        top = max(abs(z) for z, _ in roots)
        idx = 0
        for i, (z, r) in enumerate(roots):
            if abs(abs(z) - top) <= 2 * r and mpmath.im(z) >= 0:
                idx = i
                break
        theta, theta_r = roots[idx]
        conjugates = tuple(rc for i, rc in enumerate(roots) if i != idx)
        conj_index = None
        if mpmath.im(theta) != 0:
            tc = mpmath.conj(theta)
            best = min(range(len(conjugates)), key=lambda i: abs(conjugates[i][0] - tc))
            if abs(conjugates[best][0] - tc) <= theta_r + conjugates[best][1]:
                conj_index = best
        mod = abs(theta)
        lam = 1 / theta
        if mod > theta_r:
            lam_r = theta_r / (mod * (mod - theta_r))
        else:
            lam_r = mpf("inf")
        others = [rc for i, rc in enumerate(conjugates) if i != conj_index]
        other_max = max([abs(z) + r for z, r in others], default=mpf(0))
        inv = 1 / (mod - theta_r) if mod > theta_r else mpf("inf")
        rho = max(other_max, inv) + max(r for _, r in roots)
        C = mpf(poly.degree)
    return PisotContext(
        poly=poly,
        precision_digits=precision_digits,
        dps=dps,
        theta=theta,
        theta_radius=theta_r,
        conjugates=conjugates,
        conj_index=conj_index,
        lam=lam,
        lam_radius=lam_r,
        rho=rho,
        C=C,
        power_sums=PowerSumSequence(poly),
    )


def pow_error(base_abs, radius, n):
    """Bound on ``|z**n - w**n|`` when ``|z - w| <= radius`` and ``|w| = base_abs``."""
    n = abs(n)
    if n == 0:
        return mpf(0)
    return n * radius * (base_abs + radius) ** (n - 1)


@dataclass(frozen=True)
class PisotCertificate:
    is_complex_pisot: bool
    margins: dict
    failed: tuple


def verify_complex_pisot(ctx: PisotContext) -> PisotCertificate:
    """Decide whether ``ctx.theta`` is a complex Pisot number.

    Margins are distances from the decision boundary minus the error radius;
    a negative margin on a condition means that condition certifiably fails.
    A comparison that cannot be decided raises :class:`PrecisionError`.
    """
    with mp.workdps(ctx.dps):
        checks = {}
        margins = {}
        r = ctx.theta_radius
        im = abs(mpmath.im(ctx.theta))
        if mpmath.im(ctx.theta) == 0:
            checks["nonreal"] = False
            margins["nonreal"] = -r
        else:
            margins["nonreal"] = im - r
            checks["nonreal"] = True if im > r else None
        m = abs(ctx.theta) - 1
        margins["theta_outside"] = m - r
        checks["theta_outside"] = (m > 0) if abs(m) > r else None
        if ctx.conj_index is None:
            checks["conjugate_pair"] = False if checks["nonreal"] is False else None
        else:
            checks["conjugate_pair"] = True
        for i, (z, rz) in enumerate(ctx.conjugates):
            if i == ctx.conj_index:
                continue
            gap = 1 - abs(z)
            key = f"conjugate_{i}_inside"
            margins[key] = gap - rz
            checks[key] = (gap > 0) if abs(gap) > rz else None
    failed = tuple(k for k, v in checks.items() if v is False)
    if failed:
        return PisotCertificate(False, margins, failed)
    undecided = [k for k, v in checks.items() if v is None]
    if undecided:
        raise PrecisionError(
            f"undecidable at {ctx.precision_digits} digits: {', '.join(undecided)}",
            margin=min(margins.values()),
        )
    return PisotCertificate(True, margins, ())


@dataclass(frozen=True)
class DenseRotationCertificate:
    holds: bool
    rational_root: int | None
    probe_n: int
    probe_min_abs_im: mpf | None


def verify_dense_rotation_criterion(ctx: PisotContext, probe_n: int = 64) -> DenseRotationCertificate:
    """Irreducible cubic + complex Pisot implies ``arg(theta)`` is not a rational multiple of pi.

    Only the irreducibility half is decided here (the Pisot half is
    :func:`verify_complex_pisot`).  The probe ``min |Im theta^n|`` over
    ``1 <= n <= probe_n`` is a sanity check, not a proof.
    """
    if ctx.degree != 3:
        raise CriterionInapplicable(f"criterion covers degree 3 only, got degree {ctx.degree}")
    roots = ctx.poly.rational_roots()
    if roots:
        return DenseRotationCertificate(False, roots[0], probe_n, None)
    with mp.workdps(ctx.dps):
        mod = abs(ctx.theta)
        worst = None
        z = mpc(1)
        for n in range(1, probe_n + 1):
            z *= ctx.theta
            err = pow_error(mod, ctx.theta_radius, n) + abs(z) * mpf(10) ** (2 - ctx.dps)
            v = abs(mpmath.im(z))
            if v <= err:
                raise PrecisionError(f"|Im theta^{n}| not separated from 0", margin=v - err)
            worst = v if worst is None else min(worst, v)
    return DenseRotationCertificate(True, None, probe_n, worst)


class PowerDistance(NamedTuple):
    distance: mpf
    nearest: int
    error: mpf


def _other_power_sum(ctx, n):
    """``sum theta_j**n`` over the non-dominant conjugates, with an error bound."""
    total = mpc(0)
    err = mpf(0)
    for z, r in ctx.others():
        total += z**n
        err += pow_error(abs(z), r, n)
    return total, err + mpf(10) ** (2 - ctx.dps)


def dist_two_re_power(ctx: PisotContext, n: int) -> PowerDistance:
    """Distance from ``2 Re(theta^n)`` to the integers, and the nearest integer.

    For ``n >= 0`` this uses ``2 Re theta^n = s_n - r_n`` with ``s_n`` the
    exact power sum and ``r_n`` the (small) contribution of the other
    conjugates, so no precision is lost to the size of ``theta^n``.  For
    ``n < 0`` the value ``2 Re(lambda^|n|)`` is small and computed directly.
    """
    if ctx.conj_index is None:
        raise ValueError("theta is not part of a complex-conjugate pair")
    with mp.workdps(ctx.dps):
        if n >= 0:
            rem, err = _other_power_sum(ctx, n)
            x = mpmath.re(rem)
            base = ctx.power_sums[n]
            near = int(mpmath.nint(x))
            frac = x - near
            if abs(abs(frac) - mpf(1) / 2) <= err:
                raise PrecisionError(f"2Re(theta^{n}) too close to a half-integer", margin=abs(abs(frac) - 0.5) - err)
            return PowerDistance(abs(frac), base - near, err)
        m = -n
        val = 2 * mpmath.re(ctx.lam**m)
        err = 2 * pow_error(abs(ctx.lam), ctx.lam_radius, m) + mpf(10) ** (2 - ctx.dps)
        near = int(mpmath.nint(val))
        frac = val - near
        if abs(abs(frac) - mpf(1) / 2) <= err:
            raise PrecisionError(f"2Re(theta^{n}) too close to a half-integer", margin=abs(abs(frac) - 0.5) - err)
        return PowerDistance(abs(frac), near, err)


def reduced_trace_multiple(ctx: PisotContext, k, m: int):
    """``x`` with ``x = k * 2 Re(theta^m) (mod 1)`` plus an error bound.

    ``k`` may be an ``int`` or a ``Fraction``.  For ``m >= 0`` the integer part
    ``k * s_m`` is reduced exactly before any floating arithmetic happens.
    """
    k = Fraction(k)
    with mp.workdps(ctx.dps):
        kf = mpf(k.numerator) / k.denominator
        if m >= 0:
            rem, err = _other_power_sum(ctx, m)
            whole = (k * ctx.power_sums[m]) % 1
            x = mpf(whole.numerator) / whole.denominator - kf * mpmath.re(rem)
            return x, abs(kf) * err
        val = 2 * mpmath.re(ctx.lam ** (-m))
        err = 2 * pow_error(abs(ctx.lam), ctx.lam_radius, -m) + mpf(10) ** (2 - ctx.dps)
        return kf * val, abs(kf) * err


def default_polynomial() -> MonicIntPolynomial:
    """``X^3 + X^2 + 10 X + 1``."""
    return MonicIntPolynomial((1, 10, 1))


__all__ = [
    "DEFAULT_PRECISION",
    "MonicIntPolynomial",
    "PisotContext",
    "PowerSumSequence",
    "PowerDistance",
    "build_context",
    "default_polynomial",
    "dist_two_re_power",
    "find_roots",
    "power_sum",
    "reduced_trace_multiple",
    "verify_complex_pisot",
    "verify_dense_rotation_criterion",
]
