"""Command line pipeline: verify -> build -> certify-bound -> scan/sample/wiener/slice -> report.

Every command reads one JSON config (``--config``) and writes into
``<out>/<config-hash>/``.  Exit codes: 0 success, 1 certification failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import mpmath
import numpy as np

from . import __version__
from .algebraic import (
    MonicIntPolynomial,
    build_context,
    dist_two_re_power,
    verify_complex_pisot,
    verify_dense_rotation_criterion,
)
from .construction import build_paper_ifs, hausdorff_dimension, ifs_from_json, ifs_to_json
from .errors import (
    CertificationError,
    CriterionInapplicable,
    DependencyError,
    SearchExhausted,
)
from .fourier import (
    eta_angle,
    lower_bound_details,
    make_evaluator,
    pisot_frequency,
    scan_directions,
    transform,
)
from .measure import (
    EmpiricalMeasure,
    find_slice_frequency,
    ks_to_uniform,
    nearest_window_direction,
    project,
    projected_transform,
    read_samples,
    required_step,
    sample_measure,
    slice_experiment,
    wiener_statistic,
    write_samples,
)

log = logging.getLogger("pisot_measure")

EXIT_OK, EXIT_CERT, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    polynomial: list = field(default_factory=lambda: [1, 10, 1])
    precision_digits: int = 50
    eps_fraction: float = 0.25
    tail_tol: float = 1e-12
    seed: int = 0
    sample_depth: int = 40
    output_dir: str = "out"

    def validate(self) -> None:
        try:
            MonicIntPolynomial(tuple(self.polynomial))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"polynomial: {exc}") from exc
        checks = [
            ("precision_digits", isinstance(self.precision_digits, int) and 10 <= self.precision_digits <= 2000),
            ("eps_fraction", 0 < float(self.eps_fraction) < 1),
            ("tail_tol", 0 < float(self.tail_tol) < 1),
            ("seed", isinstance(self.seed, int) and self.seed >= 0),
            ("sample_depth", isinstance(self.sample_depth, int) and 1 <= self.sample_depth <= 64),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"{name}={getattr(self, name)!r} out of range")

    @property
    def poly(self) -> MonicIntPolynomial:
        return MonicIntPolynomial(tuple(self.polynomial))

    def digest(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if k != "output_dir"}
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if isinstance(doc.get("polynomial"), str):
        doc["polynomial"] = list(MonicIntPolynomial.parse(doc["polynomial"]).coefficients)
    return RunConfig(**doc)


# -- output helpers -------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, cfg: RunConfig, params: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.digest()}\n")
        fh.write(f"# seed={cfg.seed}\n")
        for k in sorted(params):
            fh.write(f"# {k}={fmt(params[k])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class Run:
    def __init__(self, cfg: RunConfig, out: Path, threads: int):
        self.cfg = cfg
        self.dir = out / cfg.digest()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.threads = threads
        self._ctx = None
        self._ifs = None

    @property
    def ctx(self):
        if self._ctx is None:
            self._ctx = build_context(self.cfg.poly, self.cfg.precision_digits)
        return self._ctx

    @property
    def ifs(self):
        if self._ifs is None:
            path = self.dir / "ifs.json"
            if not path.exists():
                raise DependencyError(f"{path} missing; run `build` first")
            self._ifs = ifs_from_json(path.read_text(), self.ctx)
        return self._ifs

    def evaluator(self):
        return make_evaluator(self.ifs, self.cfg.tail_tol)

    def bound(self) -> float:
        path = self.dir / "bound.json"
        if path.exists():
            return float(json.loads(path.read_text())["c"])
        return lower_bound_details(self.evaluator()).c


# -- commands -------------------------------------------------------------------


def cmd_verify(run: Run, args) -> int:
    ctx = run.ctx
    print(f"polynomial: {ctx.poly}")
    for z, r in [(ctx.theta, ctx.theta_radius), *ctx.conjugates]:
        print(f"root: {mpmath.nstr(z, 20)}  radius {mpmath.nstr(r, 3)}")
    report = {"polynomial": str(ctx.poly), "coefficients": list(ctx.poly.coefficients)}
    pisot = verify_complex_pisot(ctx)
    report["complex_pisot"] = pisot.is_complex_pisot
    report["margins"] = {k: mpmath.nstr(v, 15) for k, v in pisot.margins.items()}
    ok = pisot.is_complex_pisot
    print(f"complex Pisot: {pisot.is_complex_pisot}" + (f" (failed: {', '.join(pisot.failed)})" if pisot.failed else ""))
    if ok:
        try:
            dense = verify_dense_rotation_criterion(ctx)
            report["dense_rotation"] = dense.holds
            print(f"dense rotation criterion: {dense.holds}")
            ok = ok and dense.holds
        except CriterionInapplicable as exc:
            report["dense_rotation"] = "inapplicable"
            print(f"dense rotation criterion: inapplicable ({exc})")
            ok = False
    if ok:
        lo = -40 if abs(ctx.poly.constant_term) == 1 else 0
        worst = -math.inf
        for n in range(lo, 61):
            d = dist_two_re_power(ctx, n)
            bound = ctx.C * ctx.rho ** abs(n)
            worst = max(worst, float(d.distance / bound))
            if d.distance > bound:
                ok = False
        report["decay_range"] = [lo, 60]
        report["decay_worst_ratio"] = worst
        print(f"decay bound for n in [{lo}, 60]: worst distance/bound = {worst:.6g}")
    report["certified"] = ok
    write_json(run.dir / "verify.json", report)
    return EXIT_OK if ok else EXIT_CERT


def cmd_build(run: Run, args) -> int:
    ctx = run.ctx
    pisot = verify_complex_pisot(ctx)
    if not pisot.is_complex_pisot:
        print(f"not a complex Pisot number (failed: {', '.join(pisot.failed)})")
        return EXIT_CERT
    cfg = build_paper_ifs(ctx, run.cfg.eps_fraction)
    dim = hausdorff_dimension(cfg)
    text = ifs_to_json(cfg, {"dimension": repr(dim.value), "dimension_error": repr(dim.error)})
    (run.dir / "ifs.json").write_text(text)
    print(f"a1 = {cfg.a1.k}*lambda^{cfg.a1.l}, a2 = {cfg.a2.k}*lambda^{cfg.a2.l}")
    print(f"separation: depth {cfg.ssc_certificate.depth}, min_gap {cfg.ssc_certificate.min_gap!r}")
    print(f"dimension: {dim.value!r} +/- {dim.error:.3g}")
    return EXIT_OK


def cmd_certify_bound(run: Run, args) -> int:
    ev = run.evaluator()
    lb = lower_bound_details(ev, args.cut)
    doc = {
        "c": repr(lb.c),
        "cut": lb.cut,
        "core_product": repr(lb.core_product),
        "tail_factor": repr(lb.tail_factor),
        "min_margin": repr(lb.min_margin),
        "C0": repr(ev.C0),
        "M_cut": ev.M_cut,
    }
    write_json(run.dir / "bound.json", doc)
    print(f"c = {lb.c!r} (cut {lb.cut}, M_cut {ev.M_cut})")
    return EXIT_OK


def cmd_fourier(run: Run, args) -> int:
    ev = run.evaluator()
    if args.pisot_n is not None:
        xi, rad = pisot_frequency(ev, args.pisot_n)
        s = transform(ev, xi, rad)
    else:
        s = transform(ev, complex(args.xi_re, args.xi_im))
    print(f"F({s.xi.real!r}, {s.xi.imag!r}) = {s.value.real!r} + {s.value.imag!r}i  +/- {s.error:.3g}")
    write_csv(
        run.dir / "fourier.csv",
        run.cfg,
        {"pisot_n": args.pisot_n if args.pisot_n is not None else "none"},
        ["xi_re", "xi_im", "value_re", "value_im", "error"],
        [[s.xi.real, s.xi.imag, s.value.real, s.value.imag, s.error]],
    )
    return EXIT_OK


def cmd_scan(run: Run, args) -> int:
    ev = run.evaluator()
    c = run.bound()
    rows = scan_directions(ev, args.dirs, args.rmin, args.rmax, args.radii, c=c, threads=run.threads)
    path = Path(args.csv) if args.csv else run.dir / "scan.csv"
    write_csv(
        path,
        run.cfg,
        {"dirs": args.dirs, "rmin": args.rmin, "rmax": args.rmax, "radii": args.radii, "c": c},
        ["angle", "best_radius", "sup_modulus", "exceeds_c"],
        rows,
    )
    hits = sum(r.exceeds_c for r in rows)
    print(f"{len(rows)} directions scanned, {hits} exceed c = {c!r}; wrote {path}")
    return EXIT_OK


def cmd_sample(run: Run, args) -> int:
    em = sample_measure(run.ifs, run.cfg.sample_depth, args.count, run.cfg.seed, threads=run.threads)
    write_samples(run.dir / "samples.bin", em.points)
    rows = []
    for angle in np.linspace(0, math.pi, args.ks_dirs, endpoint=False):
        p = project(em, complex(math.cos(angle), math.sin(angle)))
        rows.append([angle, ks_to_uniform(p.points)])
    write_csv(
        run.dir / "projection_ks.csv",
        run.cfg,
        {"count": args.count, "depth": run.cfg.sample_depth},
        ["angle", "ks_to_uniform"],
        rows,
    )
    print(f"wrote {args.count} samples (depth {run.cfg.sample_depth}) to {run.dir / 'samples.bin'}")
    return EXIT_OK


def _load_or_sample(run: Run, count: int) -> EmpiricalMeasure:
    path = run.dir / "samples.bin"
    if path.exists():
        pts = read_samples(path)
        if len(pts) >= count:
            return EmpiricalMeasure(pts[:count])
    return sample_measure(run.ifs, run.cfg.sample_depth, count, run.cfg.seed, threads=run.threads)


def cmd_wiener(run: Run, args) -> int:
    ev = run.evaluator()
    z = complex(math.cos(args.direction), math.sin(args.direction))
    D = 2 * run.ifs.attractor_radius
    step = args.step or required_step(D) / 16
    rows = []
    for M in args.M:
        est = wiener_statistic(projected_transform(ev, z), M, step, D)
        rows.append([M, est.value, est.error])
        print(f"M = {M!r}: W = {est.value!r} +/- {est.error:.3g}")
    write_csv(
        run.dir / "wiener.csv",
        run.cfg,
        {"direction": args.direction, "step": step, "support_diameter": D},
        ["M", "statistic", "error"],
        rows,
    )
    return EXIT_OK


def cmd_slice(run: Run, args) -> int:
    ctx = run.ctx
    if (args.direction is None) == (args.pisot_k is None):
        raise ConfigError("give exactly one of --direction or --pisot-k")
    lam = float(abs(ctx.lam))
    deltas = args.delta or [lam**4, lam**6, lam**8]
    em = _load_or_sample(run, args.samples)
    c = run.bound()
    rows = []
    missing = []
    for n in range(args.nmax):
        if args.pisot_k is not None:
            eta = complex(mpmath.expj(eta_angle(ctx, args.pisot_k)))
            z = nearest_window_direction(ctx, eta, n, args.pisot_k)
        else:
            z = complex(math.cos(args.direction), math.sin(args.direction))
        try:
            k, t = find_slice_frequency(ctx, z, n, args.k_cap)
        except SearchExhausted as exc:
            missing.append(n)
            log.warning("n=%d: %s", n, exc)
            continue
        angle = float(mpmath.arg(z)) % (2 * math.pi)
        for r in slice_experiment(em, z, deltas, [(n, t)]):
            rows.append([angle, k, *r])
    write_csv(
        run.dir / "slice.csv",
        run.cfg,
        {
            "direction": args.direction if args.direction is not None else "none",
            "pisot_k": args.pisot_k if args.pisot_k is not None else "none",
            "nmax": args.nmax,
            "samples": len(em),
            "c_squared": c * c,
            "missing_n": " ".join(map(str, missing)) or "none",
        },
        ["angle", "k", "delta", "n", "t", "average", "plain_average", "bands", "dropped_mass"],
        rows,
    )
    print(f"{len(rows)} slice rows written; c^2 = {c * c!r}")
    return EXIT_OK


def cmd_report(run: Run, args) -> int:
    lines = [f"config hash {run.cfg.digest()}", f"polynomial {run.cfg.poly}"]
    for name in ("verify.json", "ifs.json", "bound.json"):
        path = run.dir / name
        if path.exists():
            doc = json.loads(path.read_text())
            keys = [k for k in ("certified", "dimension", "certificate", "c", "cut") if k in doc]
            lines.append(f"{name}: " + ", ".join(f"{k}={doc[k]}" for k in keys))
        else:
            lines.append(f"{name}: missing")
    for name in sorted(p.name for p in run.dir.glob("*.csv")):
        with open(run.dir / name) as fh:
            n = sum(1 for line in fh if not line.startswith("#")) - 1
        lines.append(f"{name}: {n} rows")
    text = "\n".join(lines) + "\n"
    (run.dir / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pisot-measure", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output root (default: config output_dir)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--polynomial", help="override coefficients, constant term first, e.g. 1,10,1")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", help="certify the complex Pisot and decay properties")
    sub.add_parser("build", help="search and certify the translations, write ifs.json")
    s = sub.add_parser("certify-bound", help="certified lower bound along 4 pi conj(theta)^N")
    s.add_argument("--cut", type=int)
    s = sub.add_parser("fourier", help="evaluate the transform at one frequency")
    s.add_argument("--xi-re", type=float, default=0.0)
    s.add_argument("--xi-im", type=float, default=0.0)
    s.add_argument("--pisot-n", type=int, help="use xi = 4 pi conj(theta)^N exactly")
    s = sub.add_parser("scan", help="sup of |F(r z)| over radii per direction")
    s.add_argument("--dirs", type=int, default=360)
    s.add_argument("--rmin", type=float, default=1e3)
    s.add_argument("--rmax", type=float, default=1e6)
    s.add_argument("--radii", type=int, default=2000)
    s.add_argument("--csv", help="output CSV path (default: scan.csv in the run directory)")
    s = sub.add_parser("sample", help="Monte Carlo samples to samples.bin")
    s.add_argument("--count", type=int, default=10**6)
    s.add_argument("--ks-dirs", type=int, default=16)
    s = sub.add_parser("wiener", help="Wiener average of a projection")
    s.add_argument("--direction", type=float, required=True, help="angle in radians")
    s.add_argument("--M", type=float, nargs="+", default=[1e2, 1e3, 1e4])
    s.add_argument("--step", type=float)
    s = sub.add_parser("slice", help="band statistics of slices at slice frequencies")
    s.add_argument("--direction", type=float, help="angle in radians")
    s.add_argument("--pisot-k", type=int, help="use windows of J_{n,k} next to eta^k")
    s.add_argument("--nmax", type=int, default=10)
    s.add_argument("--delta", type=float, nargs="+")
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--k-cap", type=int, default=200)
    sub.add_parser("report", help="summarize the run directory")
    return p


COMMANDS = {
    "verify": cmd_verify,
    "build": cmd_build,
    "certify-bound": cmd_certify_bound,
    "fourier": cmd_fourier,
    "scan": cmd_scan,
    "sample": cmd_sample,
    "wiener": cmd_wiener,
    "slice": cmd_slice,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.polynomial is not None:
            cfg.polynomial = list(MonicIntPolynomial.parse(args.polynomial).coefficients)
        cfg.validate()
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        run = Run(cfg, Path(args.out or cfg.output_dir), args.threads)
        return COMMANDS[args.command](run, args)
    except (ConfigError, DependencyError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CertificationError, SearchExhausted) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT


if __name__ == "__main__":
    sys.exit(main())
