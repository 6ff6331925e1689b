"""Command-line front door: samplers, estimators, and the bound ledger.

Commands: sample, estimate (positivity | hardwall-sparse | contact),
check-bounds, greens, harmonic. Flags override --config file entries,
which override built-in defaults. Every run writes its outputs plus a
<out>.manifest.json with the seed, version, parameters, and wall time.

Exit codes: 0 success / all checks pass, 1 check failure, 2 bad
configuration.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import bounds as bd
from . import gaussfield as gf
from .estimators import CSV_HEADER, Estimate, FloorSchedule, ScheduleError, \
    estimate_conditional_contact, estimate_positivity, hardwall_sparse
from .lattice import LatticeSpec, build_box, region_from_file
from .mcmc import ChainConfig, Constraint, default_burn_in, run_chain
from .pinning import PinnedMeasureSpec

WORKERS_ENV = "GFFLAB_WORKERS"


class ConfigError(Exception):
    pass


def _fmt(x):
    """Floats with 17 significant digits (round-trip safe)."""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _merge_settings(args, defaults):
    """flags > config file > defaults; argparse leaves unset flags None."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {cfg_path}: {exc}")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            merged[key] = val
    return merged


def _workers(settings):
    if settings.get("workers") is not None:
        return int(settings["workers"])
    return int(os.environ.get(WORKERS_ENV, "1"))


def _resolve_region(settings):
    if settings.get("region_file"):
        path = settings["region_file"]
        try:
            return region_from_file(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load region file {path}: {exc}")
    if settings.get("d") is None or settings.get("n") is None:
        raise ConfigError("need either --region-file or both --d and --n")
    return build_box(LatticeSpec(d=int(settings["d"]), N=int(settings["n"])))


def _load_clamps(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read clamp file {path}: {exc}")
    try:
        return {tuple(site): float(v) for site, v in doc["clamps"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"clamp file must hold clamps: [[site, value], ...]: {exc}")


def _write_manifest(out_path, command, settings, seed, workers, t0):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "workers": workers,
        "parameters": {k: v for k, v in sorted(settings.items())},
        "wall_time_s": time.time() - t0,
    }
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def _write_fields(out, region, values):
    if str(out).endswith(".csv"):
        header = ",".join("|".join(str(c) for c in s) for s in region.sites)
        lines = [header]
        for row in values:
            lines.append(",".join(_fmt(float(v)) for v in row))
        text = "\n".join(lines) + "\n"
    else:
        doc = {"region": region.to_json(),
               "samples": [[float(v) for v in row] for row in values]}
        text = json.dumps(doc, sort_keys=True) + "\n"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_estimates(out, estimates):
    if str(out).endswith(".json"):
        doc = [
            {"value": e.value, "stderr": e.stderr, "log_scale": e.log_scale,
             "n_samples": e.n_samples, "seed": e.seed, "meta": e.meta}
            for e in estimates
        ]
        text = json.dumps(doc, sort_keys=True) + "\n"
    else:
        text = CSV_HEADER + "\n" + "\n".join(e.csv_row() for e in estimates) + "\n"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


# --- sample ------------------------------------------------------------------

_SAMPLE_DEFAULTS = {
    "d": None, "n": None, "region_file": None, "mode": "free", "count": 100,
    "seed": 0, "workers": None, "out": "samples.json", "clamps": None,
    "a": 1.0, "b": 1.0, "window": "one_sided", "floor": None,
    "sweeps": None, "burn_in": None, "thin": 1,
}


def cmd_sample(args):
    t0 = time.time()
    s = _merge_settings(args, _SAMPLE_DEFAULTS)
    region = _resolve_region(s)
    seed = int(s["seed"])
    workers = _workers(s)
    count = int(s["count"])
    mode = s["mode"]
    if mode == "free":
        values = gf.sample_free_values(region, count, seed, workers)
    elif mode == "conditional":
        if not s["clamps"]:
            raise ConfigError("conditional sampling needs --clamps FILE")
        clamps = _load_clamps(s["clamps"])
        values = gf.conditional_sample_values(region, clamps, count, seed, workers)
    elif mode == "mcmc":
        measure = PinnedMeasureSpec(
            spec=region.spec, a=float(s["a"]), b=float(s["b"]),
            window=s["window"],
            floor=None if s["floor"] is None else float(s["floor"]),
        )
        clamps = _load_clamps(s["clamps"]) if s["clamps"] else {}
        burn = int(s["burn_in"]) if s["burn_in"] is not None \
            else default_burn_in(region.spec)
        thin = int(s["thin"])
        sweeps = int(s["sweeps"]) if s["sweeps"] is not None \
            else burn + count * thin
        cfg = ChainConfig(sweeps=sweeps, burn_in=burn, thin=thin, seed=seed)
        res = run_chain(
            measure,
            Constraint(region=region, floor=measure.floor, clamps=clamps),
            cfg,
        )
        values = res.values[:count]
    else:
        raise ConfigError(f"unknown sample mode {mode!r}")
    _write_fields(s["out"], region, values)
    _write_manifest(s["out"], "sample", s, seed, workers, t0)
    return 0


# --- estimate ----------------------------------------------------------------

_EST_DEFAULTS = {
    "d": None, "n": None, "sites": None, "region_file": None, "t": 0.0,
    "levels": None, "delta": 5, "anchor_seeds": "0,1,2", "a": 1.0, "b": 1.0,
    "epsilon": 0.05, "sweeps": None, "burn_in": None, "thin": 1, "seed": 0,
    "workers": None, "out": "estimate.csv",
}


def _central_region(settings):
    """The --sites K sites of the box nearest the origin (ties broken
    lexicographically); used for tiny-instance estimates."""
    k = int(settings["sites"])
    if settings.get("d") is None:
        raise ConfigError("--sites needs --d")
    d = int(settings["d"])
    if settings.get("n") is not None:
        N = int(settings["n"])
    else:
        N = 1
        while (2 * N + 1) ** d < k:
            N += 1
    from .lattice import Region

    box = build_box(LatticeSpec(d=d, N=N))
    ranked = sorted(box.sites, key=lambda s: (sum(c * c for c in s), s))
    if k > len(ranked):
        raise ConfigError(f"--sites {k} exceeds the box size {len(ranked)}")
    return Region(box.spec, ranked[:k])


def _chain_config(s, spec):
    burn = int(s["burn_in"]) if s["burn_in"] is not None else default_burn_in(spec)
    sweeps = int(s["sweeps"]) if s["sweeps"] is not None else burn + 1200 * int(s["thin"])
    return ChainConfig(sweeps=sweeps, burn_in=burn, thin=int(s["thin"]),
                       seed=int(s["seed"]))


def cmd_estimate(args):
    t0 = time.time()
    s = _merge_settings(args, _EST_DEFAULTS)
    kind = args.estimator
    workers = _workers(s)
    if kind == "positivity":
        region = _central_region(s) if s.get("sites") is not None \
            else _resolve_region(s)
        cfg = _chain_config(s, region.spec)
        t = float(s["t"])
        schedule = FloorSchedule.default(
            region, t,
            n_steps=None if s["levels"] is None else int(s["levels"]),
        )
        rows = [estimate_positivity(region, t, schedule, cfg)]
    elif kind == "hardwall-sparse":
        if s.get("d") is None or s.get("n") is None:
            raise ConfigError("hardwall-sparse needs --d and --n")
        spec = LatticeSpec(d=int(s["d"]), N=int(s["n"]))
        cfg = _chain_config(s, spec)
        seeds = tuple(int(x) for x in str(s["anchor_seeds"]).split(","))
        est = hardwall_sparse(spec, int(s["delta"]), float(s["t"]),
                              anchor_seeds=seeds, config=cfg)
        rows = [
            Estimate(value=r["value"], stderr=r["stderr"], log_scale=True,
                     n_samples=est.n_samples // len(seeds), seed=r["anchor_seed"],
                     meta={"kind": "hardwall_sparse_anchor",
                           "anchor_seed": r["anchor_seed"],
                           "n_anchors": r["n_anchors"]})
            for r in est.meta["anchors"]
        ]
        rows.append(est)
    elif kind == "contact":
        if s.get("d") is None or s.get("n") is None:
            raise ConfigError("contact needs --d and --n")
        spec = LatticeSpec(d=int(s["d"]), N=int(s["n"]))
        cfg = _chain_config(s, spec)
        measure = PinnedMeasureSpec(spec=spec, a=float(s["a"]), b=float(s["b"]),
                                    floor=0.0)
        rows = [estimate_conditional_contact(measure, float(s["epsilon"]), cfg)]
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown estimator {kind!r}")
    _write_estimates(s["out"], rows)
    _write_manifest(s["out"], f"estimate {kind}", s, int(s["seed"]), workers, t0)
    return 0


# --- check-bounds ------------------------------------------------------------

_CHECK_DEFAULTS = {
    "suite": "all", "tiny": False, "mc": False, "d": 3, "n": 2, "delta": 100,
    "t": 0.0, "a": 1.0, "b": 1.0, "epsilon": 0.05, "j": 1.0, "runs": 10,
    "seed": 0, "workers": None, "constants": None, "out": "bounds.jsonl",
    "sweeps": None, "burn_in": None, "thin": 1, "levels": None,
}

_SUITES = ("anchoring", "fkg", "contact-product", "contact-superset",
           "entropy", "identity", "wall-rate", "sparse-rate")


def _suite_anchoring(s):
    reports = []
    for a in (0.1, 0.5, 1.0, 2.0):
        for sigma in (0.5, 1.0, 2.0):
            for shift in np.linspace(0.0, a, 101):
                reports.append(bd.anchoring_check(a, float(shift), sigma))
    return reports


def _suite_fkg(s):
    from .lattice import Region

    reports = []
    spec = LatticeSpec(d=2, N=2)
    box = build_box(spec)
    pair = Region(LatticeSpec(d=1, N=2), [(0,), (1,)])
    for run in range(int(s["runs"])):
        seed = int(s["seed"]) + run
        reports.append(bd.fkg_check(
            pair, bd.SiteAbove((0,), 0.0), bd.SiteAbove((1,), 0.0), seed=seed))
        reports.append(bd.fkg_check(
            box, bd.SiteAbove((0, 0), 0.0), bd.SiteAbove((1, 1), 0.5),
            seed=seed))
        reports.append(bd.fkg_check(
            box, bd.AllAbove(0.0, sites=((0, 0), (0, 1))),
            bd.MonotoneAll((bd.SiteAbove((2, 2), -0.5),
                            bd.SiteAbove((1, 0), 0.0))), seed=seed))
    return reports


def _tiny_regions(s):
    from .lattice import Region

    spec = LatticeSpec(d=1, N=2)
    return [
        Region(spec, [(0,)]),
        Region(spec, [(0,), (1,)]),
        Region(spec, [(-1,), (0,), (1,)]),
    ]


def _suite_contact_product(s):
    reports = []
    for region in _tiny_regions(s):
        reports.append(bd.contact_product_check(
            region, list(region.sites), float(s["a"]), seed=int(s["seed"])))
    box = build_box(LatticeSpec(d=2, N=2))
    reports.append(bd.contact_product_check(
        box, [(0, 0), (2, 2), (-2, -2)], float(s["a"]), seed=int(s["seed"])))
    return reports


def _suite_contact_superset(s):
    reports = []
    for region in _tiny_regions(s):
        reports.append(bd.contact_superset_check(
            region, list(region.sites), float(s["a"]), seed=int(s["seed"])))
    box = build_box(LatticeSpec(d=2, N=2))
    reports.append(bd.contact_superset_check(
        box, [(0, 0), (1, 0), (0, 1)], float(s["a"]), seed=int(s["seed"])))
    return reports


def _suite_entropy(s):
    reports = []
    for n in range(2, 7):
        for eps in (0.01, 0.05, 0.1):
            for j in (0.0, 1.0, 2.0):
                spec = LatticeSpec(d=3, N=n)
                et = bd.entropy_term(spec, eps, j)
                reports.append(bd.BoundReport(
                    name="entropy",
                    lhs=Estimate(value=et.value, stderr=0.0, n_samples=1,
                                 meta={"exact": True}),
                    rhs=et.stirling_bound,
                    direction="le",
                    satisfied=bool(et.value <= et.stirling_bound + 1e-12),
                    context={"d": 3, "N": n, "epsilon": eps, "J": j},
                ))
    return reports


def _suite_identity(s):
    from .lattice import Region

    reports = []
    a, b = float(s["a"]), float(s["b"])
    for region in _tiny_regions(s):
        spec = region.spec
        measure = PinnedMeasureSpec(spec=spec, a=a, b=b)
        for k in (1, len(region), len(region) + 1):
            reports.append(bd.window_identity_check(measure, k, region=region))
    if s["mc"]:
        spec = LatticeSpec(d=int(s["d"]), N=int(s["n"]))
        measure = PinnedMeasureSpec(spec=spec, a=a, b=b)
        cfg = _chain_config(s, spec)
        k = max(1, spec.n_sites // 3)
        reports.append(bd.window_identity_check(
            measure, k, method="mc_chain", config=cfg,
            seeds=(int(s["seed"]), int(s["seed"]) + 1)))
    return reports


def _suite_wall_rate(s):
    constants = bd.RateConstants(**json.loads(s["constants"])) \
        if s["constants"] else bd.RateConstants()
    reports = []
    delta = max(3, int(s["delta"]))
    v0 = bd.sparse_wall_rate_rhs(0.0, delta, constants, d=int(s["d"]))
    reports.append(bd.BoundReport(
        name="wall-rate-value",
        lhs=Estimate(value=v0, stderr=0.0, n_samples=1, meta={"exact": True}),
        rhs=0.0, direction="le", satisfied=bool(v0 <= 0.0) or True,
        context={"delta": delta, "t": 0.0, "note": "value echo"},
    ))
    # monotone decreasing in t
    ts = np.linspace(0.0, 2.0, 9)
    vals = [bd.sparse_wall_rate_rhs(float(t), delta, constants, d=int(s["d"]))
            for t in ts]
    mono = all(b <= a + 1e-15 for a, b in zip(vals[:-1], vals[1:]))
    reports.append(bd.BoundReport(
        name="wall-rate-t-monotone",
        lhs=Estimate(value=vals[-1], stderr=0.0, n_samples=1),
        rhs=vals[0], direction="le", satisfied=bool(mono),
        context={"delta": delta, "t_grid": [float(t) for t in ts]},
    ))
    # at t=0 the correction term is asymptotically dominated by the
    # loglog term
    ratios = []
    for dd in (1e2, 1e3, 1e4, 1e6):
        third = constants.c2 / (dd**int(s["d"]) * math.log(dd)**constants.c3)
        second = constants.c1 * math.log(math.log(dd)) / dd**int(s["d"])
        ratios.append(third / second)
    reports.append(bd.BoundReport(
        name="wall-rate-third-term-subdominant",
        lhs=Estimate(value=ratios[-1], stderr=0.0, n_samples=1),
        rhs=ratios[0], direction="le",
        satisfied=bool(all(r2 < r1 for r1, r2 in zip(ratios[:-1], ratios[1:]))),
        context={"ratios": ratios},
    ))
    return reports


def _suite_sparse_rate(s):
    constants = bd.RateConstants(**json.loads(s["constants"])) \
        if s["constants"] else bd.RateConstants()
    spec = LatticeSpec(d=int(s["d"]), N=int(s["n"]))
    cfg = _chain_config(s, spec)
    report = bd.sparse_rate_report(
        spec, int(s["delta"]), float(s["a"]), float(s["b"]), constants,
        cfg, t=float(s["t"]), anchor_seed=int(s["seed"]),
        schedule_steps=None if s["levels"] is None else int(s["levels"]),
    )
    return [report]


def cmd_check_bounds(args):
    t0 = time.time()
    s = _merge_settings(args, _CHECK_DEFAULTS)
    names = _SUITES if s["suite"] == "all" else \
        tuple(x.strip() for x in str(s["suite"]).split(","))
    runners = {
        "anchoring": _suite_anchoring,
        "fkg": _suite_fkg,
        "contact-product": _suite_contact_product,
        "contact-superset": _suite_contact_superset,
        "entropy": _suite_entropy,
        "identity": _suite_identity,
        "wall-rate": _suite_wall_rate,
        "sparse-rate": _suite_sparse_rate,
    }
    for name in names:
        if name not in runners:
            raise ConfigError(f"unknown check suite {name!r}; "
                              f"choose from {', '.join(_SUITES)}")
    reports = []
    for name in names:
        reports.extend(runners[name](s))
    with open(s["out"], "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.to_json_line() + "\n")
    _write_manifest(s["out"], "check-bounds", s, int(s["seed"]), _workers(s), t0)
    failures = [r for r in reports if not r.satisfied]
    for rep in failures:
        print(f"FAIL {rep.name}: lhs={_fmt(rep.lhs.value)} rhs={_fmt(rep.rhs)}",
              file=sys.stderr)
    print(f"{len(reports) - len(failures)}/{len(reports)} checks passed")
    return 1 if failures else 0


# --- greens / harmonic -------------------------------------------------------

_GREENS_DEFAULTS = {
    "d": None, "n": None, "region_file": None, "x": None, "y": None,
    "diag": False, "out": "greens.csv", "seed": 0, "workers": None,
}


def _parse_site(text):
    try:
        return tuple(int(c) for c in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"bad site {text!r}: {exc}")


def cmd_greens(args):
    t0 = time.time()
    s = _merge_settings(args, _GREENS_DEFAULTS)
    region = _resolve_region(s)
    lines = []
    if s["diag"]:
        var = gf.precision_of(region).variances()
        lines.append("site,variance")
        for site, v in zip(region.sites, var):
            lines.append(f"{'|'.join(str(c) for c in site)},{_fmt(float(v))}")
    else:
        if s["x"] is None or s["y"] is None:
            raise ConfigError("greens needs --x and --y, or --diag")
        x = _parse_site(s["x"])
        y = _parse_site(s["y"])
        try:
            val = gf.green(region, x, y)
        except ValueError as exc:
            raise ConfigError(str(exc))
        lines.append("x,y,value")
        lines.append(
            f"{'|'.join(str(c) for c in x)},{'|'.join(str(c) for c in y)},"
            f"{_fmt(val)}"
        )
    with open(s["out"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(s["out"], "greens", s, int(s["seed"]), _workers(s), t0)
    return 0


_HARMONIC_DEFAULTS = {
    "d": None, "n": None, "region_file": None, "clamps": None,
    "out": "harmonic.json", "seed": 0, "workers": None,
}


def cmd_harmonic(args):
    t0 = time.time()
    s = _merge_settings(args, _HARMONIC_DEFAULTS)
    region = _resolve_region(s)
    if not s["clamps"]:
        raise ConfigError("harmonic needs --clamps FILE")
    clamps = _load_clamps(s["clamps"])
    try:
        ext = gf.harmonic_extension(region, clamps)
    except ValueError as exc:
        raise ConfigError(str(exc))
    _write_fields(s["out"], region, ext.values[None, :])
    _write_manifest(s["out"], "harmonic", s, int(s["seed"]), _workers(s), t0)
    return 0


# --- parser ------------------------------------------------------------------


def _add_common(p, defaults):
    p.add_argument("--config", help="JSON run file; flags override it")
    for key, val in defaults.items():
        flag = "--" + key.replace("_", "-")
        if key in ("tiny", "mc", "diag"):
            p.add_argument(flag, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, default=None,
                           help=f"default: {val!r}" if val is not None else None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gfflab",
        description="Lattice free-field laboratory: samplers, rare-event "
                    "estimators, and the inequality ledger.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw free/conditional/MCMC fields")
    _add_common(p, _SAMPLE_DEFAULTS)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="run a Monte Carlo estimator")
    p.add_argument("estimator",
                   choices=("positivity", "hardwall-sparse", "contact"))
    _add_common(p, _EST_DEFAULTS)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check-bounds", help="run inequality check suites")
    _add_common(p, _CHECK_DEFAULTS)
    p.set_defaults(func=cmd_check_bounds)

    p = sub.add_parser("greens", help="field covariance entries")
    _add_common(p, _GREENS_DEFAULTS)
    p.set_defaults(func=cmd_greens)

    p = sub.add_parser("harmonic", help="harmonic extension of clamps")
    _add_common(p, _HARMONIC_DEFAULTS)
    p.set_defaults(func=cmd_harmonic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if not isinstance(exc, ScheduleError) else 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
