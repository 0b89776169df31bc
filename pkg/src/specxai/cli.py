"""Command-line entry point: ``specxai <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 tolerance check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .core import rng_fork
from .errors import DataError, DegenerateSpectrumError, FormatError
from .explain import METHOD_IDS, ExplainerConfig, explain_batch
from .formats import load_model, read_smap, save_model, write_report, write_smap
from .kernellab import (
    KernelSpec,
    count_intersections,
    cutoff_index,
    eigen_decay,
    empirical_ntk,
    gap_scaling,
    integrate_real_line,
    laplace_psd,
    octave_slope,
    smooth_trajectory,
    trajectory_gradient_spectrum,
)
from .net import Model, ModelConfig, init_params, parse_beta, parse_layers
from .recipes import RECIPES, get_recipe, load_data_spec, parse_config_file
from .spectral import EFReport, batch_ef, batch_ef_stats
from .train import fit_with_cap

log = logging.getLogger("specxai")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOLERANCE = 0, 1, 2, 3
SUITES = ("psd", "ntk", "trajectory", "scaling")
NTK_BETAS = (0.9, 3.0, 7.0, math.inf)


class UsageError(Exception):
    pass


class ToleranceFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _comment(args) -> str | None:
    if args.deterministic:
        return None
    return "generated " + datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _outdir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create output directory {p}: {e}") from e
    if not os.access(p, os.W_OK):
        raise DataError(f"output directory {p} is not writable")
    return p


def _jsonable(v):
    if isinstance(v, Path):
        return str(v.resolve())
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def write_run_config(out: Path, args, **extra) -> None:
    """Record the fully resolved invocation next to its outputs."""
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    for k in ("out", "model", "maps", "vanilla", "method_dir", "config"):
        if isinstance(flags.get(k), str):
            flags[k] = str(Path(flags[k]).resolve())
        elif isinstance(flags.get(k), list):
            flags[k] = [str(Path(x).resolve()) for x in flags[k]]
    cfg = {"command": args.command, "flags": flags, "seed": flags.get("seed"), "version": __version__}
    cfg.update(extra)
    if not args.deterministic:
        cfg["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    (out / "run_config.json").write_text(json.dumps(_jsonable(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _float_list(text: str) -> list[float]:
    try:
        return [parse_beta(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(str(e)) from None


def _int_list(text: str) -> list[int]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        if "-" in t[1:]:
            a, b = t.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(t))
    return out


def _jobs(args) -> int:
    env = os.environ.get("SPECXAI_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SPECXAI_JOBS must be an integer, got {env!r}") from None
    return max(1, args.jobs)


def _check(rows: list, name: str, value: float, target: float, tol: float, ok: bool | None = None) -> None:
    passed = abs(value - target) <= tol if ok is None else ok
    rows.append({"check": name, "value": value, "target": target, "tolerance": tol, "pass": passed})


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_RECIPE_INT = ("n_train", "n_val", "n_test", "batch_size", "max_epochs", "data_seed", "size")
_RECIPE_FLOAT = ("lr", "alpha", "cap")


def _resolve_recipe(args):
    """Recipe from ``--recipe`` and an optional key=value ``--config`` file."""
    conf = parse_config_file(args.config) if args.config else {}
    name = conf.pop("recipe", args.recipe)
    idx_images, idx_labels = conf.pop("idx_images", None), conf.pop("idx_labels", None)
    over = {}
    for k, v in conf.items():
        if k in _RECIPE_INT:
            over[k] = int(v)
        elif k in _RECIPE_FLOAT:
            over[k] = float(v)
        elif k in ("arch", "optimizer"):
            over[k] = v
        else:
            raise UsageError(f"unknown config key {k!r}")
    try:
        recipe = get_recipe(name, **over)
        recipe.model_config(math.inf)
    except ValueError as e:
        raise UsageError(str(e)) from None
    return recipe, idx_images, idx_labels


def train_one(recipe, beta: float, seed: int, cap: float | None, out: Path, idx=(None, None)) -> dict:
    train, val, test = recipe.datasets(*idx)
    cfg = recipe.model_config(beta, max(train.num_classes, 2), train.shape[0])
    params, hist = fit_with_cap(cfg, recipe.train_config(seed, cap), train, val)
    model = Model(cfg, params)
    save_model(model, out / "model.spxm")
    return {"model": model, "history": hist, "test": test}


def cmd_train(args) -> int:
    recipe, idx_images, idx_labels = _resolve_recipe(args)
    beta = parse_beta(args.beta)
    out = _outdir(args.out)
    res = train_one(recipe, beta, args.seed, args.cap, out, (idx_images, idx_labels))
    hist = res["history"]
    write_report(hist.rows(), out / "history.csv", ["step", "train_loss", "val_accuracy"], _comment(args))
    write_run_config(out, args, recipe=recipe.to_dict(), beta=beta, stop_reason=hist.stop_reason,
                     fingerprint=res["model"].fingerprint)
    last = hist.records[-1] if hist.records else None
    print(f"{hist.stop_reason} after {last.step if last else 0} steps; val_accuracy={last.val_accuracy if last else float('nan'):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# explain / ef / gap
# ---------------------------------------------------------------------------


def _explainer_config(args, method: str, seed: int) -> ExplainerConfig:
    return ExplainerConfig(method=method, sg_sigma_rel=args.sg_sigma, sg_samples=args.sg_samples,
                           ig_steps=args.ig_steps, cam_layer=args.cam_layer, seed=seed)


def cmd_explain(args) -> int:
    if args.method not in METHOD_IDS:
        raise UsageError(f"unknown method {args.method!r}; choose from {sorted(METHOD_IDS)}")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    model = load_model(args.model)
    try:
        ds = load_data_spec(args.data)
    except ValueError as e:
        if isinstance(e, DataError):
            raise
        raise UsageError(str(e)) from None
    if len(ds) < args.n:
        raise DataError(f"data spec provides {len(ds)} images, --n asks for {args.n}")
    if ds.shape != tuple(model.cfg.input_shape):
        raise DataError(f"model expects inputs {tuple(model.cfg.input_shape)}, data has {ds.shape}")
    out = _outdir(args.out)
    ecfg = _explainer_config(args, args.method, args.seed)
    idx = np.arange(args.n)
    maps = explain_batch(model, ds.images[idx], ecfg, args.class_source, ds.labels[idx], idx)
    rows = []
    for i, m in zip(idx, maps):
        name = f"{args.method}_{i:05d}.smap"
        write_smap(m, out / name)
        rows.append({"index": int(i), "file": name, "method": m.method, "method_id": m.method_id,
                     "class_index": m.class_index, "seed": m.seed})
    write_report(rows, out / "manifest.csv", ["index", "file", "method", "method_id", "class_index", "seed"],
                 _comment(args))
    write_run_config(out, args, fingerprint=model.fingerprint)
    print(f"wrote {len(maps)} {args.method} maps to {out}")
    return EXIT_OK


def _load_maps(d) -> list:
    d = Path(d)
    if not d.is_dir():
        raise DataError(f"{d} is not a directory")
    files = sorted(d.glob("*.smap"))
    if not files:
        raise DataError(f"{d} contains no .smap files")
    return [read_smap(f) for f in files]


def _method_of(maps, where) -> str:
    methods = sorted({m.method for m in maps})
    if len(methods) != 1:
        raise DataError(f"{where} mixes methods {methods}")
    return methods[0]


def cmd_ef(args) -> int:
    groups: dict[str, list] = {}
    for d in args.maps:
        for m in _load_maps(d):
            groups.setdefault(m.method, []).append(m)
    shapes = {m.values.shape for ms in groups.values() for m in ms}
    if len(shapes) > 1:
        raise DataError(f"maps have mismatched sizes {sorted(shapes)}")
    stats = {k: batch_ef_stats(v) for k, v in groups.items()}
    ref = stats["vanilla"][0] if "vanilla" in stats else None
    rows = []
    for method in sorted(groups, key=lambda k: METHOD_IDS[k]):
        ef, _, skipped = stats[method]
        row = EFReport(method, ref if ref is not None else math.nan, ef, len(groups[method])).row()
        row["n_degenerate"] = skipped
        if ref is None:
            row["delta_ef"] = ""
        rows.append(row)
    out = Path(args.out)
    _outdir(out.parent)
    write_report(rows, out, ["method", "ef", "delta_ef", "n_images", "n_degenerate"], _comment(args))
    write_run_config(out.parent, args)
    for r in rows:
        print(f"{r['method']:>10}  ef={r['ef']:.6f}  n={r['n_images']}")
    return EXIT_OK


def cmd_gap(args) -> int:
    van, met = _load_maps(args.vanilla), _load_maps(args.method_dir)
    if van[0].values.shape != met[0].values.shape:
        raise DataError(f"map size mismatch: {van[0].values.shape} vs {met[0].values.shape}")
    rep = EFReport(_method_of(met, args.method_dir), batch_ef(van), batch_ef(met), len(met))
    row = {"method": rep.method, "ef_vanilla": rep.ef_vanilla, "ef": rep.ef_method,
           "delta_ef": rep.delta_ef, "n_images": rep.n_images}
    out = Path(args.out)
    _outdir(out.parent)
    write_report([row], out, list(row), _comment(args))
    write_run_config(out.parent, args)
    print(f"delta_ef({rep.method}) = {rep.delta_ef:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# kernellab suites
# ---------------------------------------------------------------------------


def suite_psd(out: Path, comment) -> list:
    checks = []
    w = np.logspace(-2, 4, 61)
    b = 1.0
    lap = laplace_psd(w, b)
    formula = 2 * b / (1 + b * b * w * w)
    write_report([{"omega": x, "laplace": y, "gaussian": KernelSpec("gaussian", b).psd(x)} for x, y in zip(w, lap)],
                 out / "psd.csv", ["omega", "laplace", "gaussian"], comment)
    _check(checks, "laplace_psd_max_rel_err", float(np.max(np.abs(lap - formula) / formula)), 0.0, 1e-12)
    total = integrate_real_line(lambda x: float(laplace_psd(x, b)), tol=1e-10)
    _check(checks, "laplace_psd_integral", total, 2 * math.pi, 1e-6)
    tail = np.logspace(2, 4, 21)
    slope = float(np.polyfit(np.log(tail), np.log(laplace_psd(tail, b)), 1)[0])
    _check(checks, "laplace_psd_tail_slope", slope, -2.0, 0.05)
    return checks


def ntk_inputs(seed: int, n: int = 64, dim: int = 2) -> np.ndarray:
    return rng_fork(seed, 0x4E54).uniform((n, dim)) * 2 - 1


NTK_ARCH = "dense:64, sp, dense:1"


def ntk_cutoffs(seed: int, n: int = 64, threshold: float = 1e-3, betas=NTK_BETAS):
    """Cutoff index per beta for one seed; the init is shared across betas."""
    xs = ntk_inputs(seed, n)
    base = ModelConfig(parse_layers(NTK_ARCH), 1, (xs.shape[1],))
    params = init_params(base, seed)
    decays, cuts = {}, {}
    for beta in betas:
        model = Model(base.with_beta(beta), params)
        d = eigen_decay(empirical_ntk(model, xs))
        decays[beta], cuts[beta] = d, cutoff_index(d, threshold)
    return decays, cuts


def suite_ntk(out: Path, comment, seeds=range(10)) -> list:
    checks, eig_rows, cut_rows = [], [], []
    good = 0
    for s in seeds:
        decays, cuts = ntk_cutoffs(s)
        for beta in NTK_BETAS:
            eig_rows += [{"seed": s, "beta": beta, "index": i, "value": v} for i, v in enumerate(decays[beta])]
            cut_rows.append({"seed": s, "beta": beta, "cutoff_index": cuts[beta]})
        seq = [cuts[b] for b in NTK_BETAS]
        good += all(a <= b for a, b in zip(seq, seq[1:]))
    write_report(eig_rows, out / "ntk_eigen_decay.csv", ["seed", "beta", "index", "value"], comment)
    write_report(cut_rows, out / "ntk_cutoff.csv", ["seed", "beta", "cutoff_index"], comment)
    need = math.ceil(0.8 * len(seeds))
    _check(checks, "ntk_cutoff_nondecreasing_seeds", good, need, 0, ok=good >= need)
    return checks


def trajectory_cases(n: int = 256):
    xt = smooth_trajectory(n)
    return xt, {
        "one": xt.shifted(lambda t: 2.0 * (t - 0.37)),
        "three": xt.shifted(lambda t: 40.0 * (t - 0.2) * (t - 0.45) * (t - 0.8)),
        "none": xt.shifted(lambda t: 1.0 + 0.8 * np.sin(2 * np.pi * t)),
    }


def trajectory_summary(n: int = 256, b: float = 0.1):
    xt, cases = trajectory_cases(n)
    spectra, summary = {}, {}
    for case, xe in cases.items():
        for fam in ("laplace", "gaussian"):
            rs = trajectory_gradient_spectrum(KernelSpec(fam, b), xt, xe)
            spectra[(fam, case)] = rs
            summary[(fam, case)] = octave_slope(rs)
    k = n // 4
    lap, gau = spectra[("laplace", "one")].power[k], spectra[("gaussian", "one")].power[k]
    sep = math.log10(lap / gau) if gau > 0 else math.inf
    counts = {c: count_intersections(xt, xe) for c, xe in cases.items()}
    return spectra, summary, sep, counts


def suite_trajectory(out: Path, comment) -> list:
    spectra, slopes, sep, counts = trajectory_summary()
    rows = [{"kernel": f, "case": c, "freq": fr, "power": p}
            for (f, c), rs in spectra.items() for fr, p in zip(rs.freqs, rs.power)]
    write_report(rows, out / "trajectory_spectra.csv", ["kernel", "case", "freq", "power"], comment)
    write_report([{"kernel": f, "case": c, "intersections": counts[c], "tail_slope": s} for (f, c), s in slopes.items()],
                 out / "trajectory_slopes.csv", ["kernel", "case", "intersections", "tail_slope"], comment)
    checks = []
    _check(checks, "laplace_one_slope", slopes[("laplace", "one")], -2.0, 0.3)
    _check(checks, "laplace_three_minus_one_slope", slopes[("laplace", "three")] - slopes[("laplace", "one")], 0.0, 0.3)
    _check(checks, "gaussian_vs_laplace_decades_at_half_nyquist", sep, 2.0, 0, ok=sep >= 2.0)
    for fam in ("laplace", "gaussian"):
        s = slopes[(fam, "none")]
        _check(checks, f"{fam}_none_slope_below_-4", s, -4.0, 0, ok=s < -4.0)
    return checks


def suite_scaling(out: Path, comment) -> list:
    band = (0.5, 2.0)
    res = gap_scaling(np.logspace(-5, 5, 41), band)
    write_report([{"b": b, "delta_ef": d, "gap": g} for b, d, g in zip(res.b, res.delta_ef, res.gap)],
                 out / "gap_scaling.csv", ["b", "delta_ef", "gap"], comment)
    checks = []
    _check(checks, "delta_ef_slope_small_b", res.slope_small_b, 1.0, 0.2)
    _check(checks, "delta_ef_slope_large_b", res.slope_large_b, -1.0, 0.2)
    _check(checks, "gap_slope_small_b", res.gap_slope_small_b, 1.0, 0.2)
    _check(checks, "gap_slope_large_b", res.gap_slope_large_b, -1.0, 0.2)
    return checks


SUITE_FUNCS = {"psd": suite_psd, "ntk": suite_ntk, "trajectory": suite_trajectory, "scaling": suite_scaling}


def cmd_kernellab(args) -> int:
    out = _outdir(args.out)
    comment = _comment(args)
    checks = SUITE_FUNCS[args.suite](out, comment)
    write_report(checks, out / f"{args.suite}_checks.csv", ["check", "value", "target", "tolerance", "pass"], comment)
    write_run_config(out, args)
    failed = [c for c in checks if not c["pass"]]
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}: {c['value']:.6g} (target {c['target']:g} +/- {c['tolerance']:g})")
    if failed:
        raise ToleranceFailure(f"{len(failed)} {args.suite} check(s) failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ["beta", "seed", "ef", "stop_reason", "steps", "epochs", "val_accuracy", "n_images"]


def _point_dir(out: Path, beta: float, seed: int) -> Path:
    return out / f"beta_{beta:g}_seed_{seed}"


def sweep_point(recipe_dict: dict, beta: float, seed: int, n_images: int, out: str) -> dict:
    """Train, explain with VanillaGrad and measure batch EF for one grid point."""
    d = Path(out)
    done = d / "result.json"
    if done.exists():
        return json.loads(done.read_text(encoding="utf-8"))
    d.mkdir(parents=True, exist_ok=True)
    recipe = replace(get_recipe(recipe_dict["name"]), **{k: v for k, v in recipe_dict.items() if k != "name"})
    res = train_one(recipe, beta, seed, None, d)
    hist, test = res["history"], res["test"]
    write_report(hist.rows(), d / "history.csv", ["step", "train_loss", "val_accuracy"])
    maps = explain_batch(res["model"], test.images[:n_images], ExplainerConfig("vanilla", seed=seed))
    last = hist.records[-1]
    row = {"beta": beta if math.isfinite(beta) else "inf", "seed": seed, "ef": batch_ef(maps),
           "stop_reason": hist.stop_reason, "steps": last.step, "epochs": last.epoch,
           "val_accuracy": last.val_accuracy, "n_images": len(maps)}
    tmp = d / "result.json.tmp"
    tmp.write_text(json.dumps(row, sort_keys=True), encoding="utf-8")
    tmp.replace(done)
    return row


def trend_statistics(rows: list) -> dict:
    betas = sorted({parse_beta(r["beta"]) for r in rows})
    rank = {b: i for i, b in enumerate(betas)}
    x = [rank[parse_beta(r["beta"])] for r in rows]
    y = [float(r["ef"]) for r in rows]
    stats = {"n_points": len(rows)}
    if len(set(x)) > 1 and len(set(y)) > 1:
        res = spearmanr(x, y)
        stats["spearman_rho"], stats["spearman_p"] = float(res.statistic), float(res.pvalue)
    else:
        stats["spearman_rho"], stats["spearman_p"] = math.nan, math.nan
    for b in betas:
        vals = [float(r["ef"]) for r in rows if parse_beta(r["beta"]) == b]
        stats[f"mean_ef_beta_{b:g}"] = float(np.mean(vals))
    return stats


def cmd_sweep(args) -> int:
    betas, seeds = _float_list(args.betas), _int_list(args.seeds)
    if not betas or not seeds:
        raise UsageError("--betas and --seeds must be nonempty")
    try:
        recipe = get_recipe(args.recipe)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.max_epochs is not None:
        recipe = replace(recipe, max_epochs=args.max_epochs)
    out = _outdir(args.out)
    rdict = recipe.to_dict()
    grid = [(b, s) for s in seeds for b in betas]
    jobs = _jobs(args)
    work = [(rdict, b, s, args.n_images, str(_point_dir(out, b, s))) for b, s in grid]
    if jobs == 1:
        rows = [sweep_point(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(sweep_point, *zip(*work)))
    comment = _comment(args)
    write_report(rows, out / "sweep.csv", SWEEP_COLUMNS, comment)
    stats = trend_statistics(rows)
    write_report([{"statistic": k, "value": v} for k, v in stats.items()], out / "trend.csv",
                 ["statistic", "value"], comment)
    write_run_config(out, args, recipe=rdict, jobs=jobs)
    print(f"{len(rows)} grid points; spearman rho = {stats['spearman_rho']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--deterministic", action="store_true", help="omit timestamps from outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="specxai", description="Spectral analysis of gradient explanations for SP(beta) networks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", parents=[common], help="train one model to an accuracy cap")
    t.add_argument("--config", help="key=value recipe overrides")
    t.add_argument("--recipe", default="raster32", choices=sorted(RECIPES))
    t.add_argument("--beta", default="inf", help="SP smoothness; 'inf' for exact ReLU")
    t.add_argument("--cap", type=float, default=None, help="validation accuracy cap (default: recipe's)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("explain", parents=[common], help="write saliency maps for a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", default="recipe:raster32:test",
                   help="recipe:<name>[:split] | grf:H=..,W=..,alpha=..,seed=..,n=.. | idx:<images>,<labels>")
    e.add_argument("--method", required=True)
    e.add_argument("--n", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--class-source", default="argmax", choices=("argmax", "label"))
    e.add_argument("--sg-sigma", type=float, default=0.15)
    e.add_argument("--sg-samples", type=int, default=32)
    e.add_argument("--ig-steps", type=int, default=64)
    e.add_argument("--cam-layer", type=int, default=None)
    e.set_defaults(func=cmd_explain)

    f = sub.add_parser("ef", parents=[common], help="Expected Frequency report for map directories")
    f.add_argument("--maps", nargs="+", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_ef)

    g = sub.add_parser("gap", parents=[common], help="delta-EF of a method against VanillaGrad")
    g.add_argument("--vanilla", required=True)
    g.add_argument("--method", dest="method_dir", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gap)

    k = sub.add_parser("kernellab", parents=[common], help="kernel-spectral verification suites")
    k.add_argument("--suite", required=True, choices=SUITES)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_kernellab)

    s = sub.add_parser("sweep", parents=[common], help="beta x seed grid: train, explain, EF")
    s.add_argument("--betas", default="0.9,3,7,inf")
    s.add_argument("--seeds", default="0-9")
    s.add_argument("--recipe", default="raster32")
    s.add_argument("--n-images", type=int, default=256)
    s.add_argument("--max-epochs", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, DegenerateSpectrumError, FileNotFoundError, IsADirectoryError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ToleranceFailure as e:
        print(f"tolerance check failed: {e}", file=sys.stderr)
        return EXIT_TOLERANCE
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
