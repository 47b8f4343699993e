"""Command-line surface: reproducible experiments with file outputs.

Every command writes three artifacts into the output directory:

* results.csv     - numeric rows, 17-significant-digit floats, fully
                    determined by (config, seed, library versions);
* provenance.json - the resolved configuration, seeds, versions and model
                    fingerprints;
* summary.txt     - human-readable recap (the only file with a timestamp).

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

DEFAULTS = {
    "seed": 20240901,
    "out": "fbfield-out",
    "threads": 0,              # 0 = machine default
    "basis_size": 0,           # 0 = model default (128 in d=1, 64 in d>=2)
    "grid_cells": 256,         # measure-space cells per axis
    "eta": 0.05,
    "quad_tol": 1e-8,
    "quad_step": 0.15,
    "quad_nodes": 64,
}


@dataclass
class RunConfig:
    """Fully resolved run configuration; echoed into provenance.json."""

    command: str
    seed: int
    out: str
    params: dict = field(default_factory=dict)

    def as_dict(self):
        return {"command": self.command, "seed": self.seed,
                "out": self.out, **self.params}


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_artifacts(cfg: RunConfig, rows: list[dict], summary_lines: list[str],
                     extra_prov: dict | None = None):
    os.makedirs(cfg.out, exist_ok=True)
    path_csv = os.path.join(cfg.out, "results.csv")
    if rows:
        header = list(rows[0].keys())
        with open(path_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(r[k]) for k in header])
    else:
        open(path_csv, "w").close()
    import numpy
    import scipy
    from . import __version__
    prov = {
        "config": cfg.as_dict(),
        "versions": {"fbfield": __version__, "numpy": numpy.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "rng": "philox-4x64 counter-based; gaussians via numpy standard_normal",
    }
    if extra_prov:
        prov.update(extra_prov)
    with open(os.path.join(cfg.out, "provenance.json"), "w") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True)
        fh.write("\n")
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with open(os.path.join(cfg.out, "summary.txt"), "w") as fh:
        fh.write(f"fbfield {cfg.command} @ {stamp}\n")
        for line in summary_lines:
            fh.write(line + "\n")


def _floats(s: str) -> list[float]:
    return [float(v) for v in str(s).split(",") if v != ""]


def _parse_hfun(spec: str):
    """'const:0.3' or 'linear:a,b' meaning h(t) = a + b t."""
    from .sampling import RegularityFunction
    kind, _, rest = str(spec).partition(":")
    if kind == "const":
        c = float(rest)
        return RegularityFunction(
            lambda t: np.full_like(np.asarray(t, dtype=float), c), label=spec)
    if kind == "linear":
        a, b = _floats(rest)
        return RegularityFunction(lambda t: a + b * np.asarray(t, dtype=float),
                                  label=spec)
    raise ValueError(f"unknown hfun spec {spec!r}")


def _parse_phi(spec: str):
    from .spde import TestFunction
    kind, _, rest = str(spec).partition(":")
    if kind == "eigenmode":
        m, n = [int(v) for v in rest.split(",")]
        return TestFunction.eigenmode(m, n)
    if kind == "bump":
        vals = _floats(rest) if rest else [0.5, 0.5, 0.3]
        return TestFunction.bump(*vals)
    raise ValueError(f"unknown phi spec {spec!r}")


# ---------------------------------------------------------------------------
# command implementations (imported lazily so --threads can pin BLAS first)
# ---------------------------------------------------------------------------

def _make_model(cfg: RunConfig, dim: int = 1):
    from .gram import FieldModel
    from .measure import lebesgue_grid
    from .quadrature import QuadratureSpec
    p = cfg.params
    space = lebesgue_grid(int(p["grid_cells"]), dim)
    n = int(p["basis_size"]) or None
    quad = QuadratureSpec(nodes_per_panel=int(p["quad_nodes"]),
                          tol=float(p["quad_tol"]), step=float(p["quad_step"]))
    return FieldModel(space, n, quad, eta=float(p["eta"]))


def _cmd_covariance(cfg: RunConfig):
    from .gram import field_cov, truncation_error
    from .kernels import cov_l2_pair
    from .measure import indicator_of_rect
    p = cfg.params
    model = _make_model(cfg, dim=len(_floats(p["f"])))
    f = indicator_of_rect(model.space, _floats(p["f"]))
    g = indicator_of_rect(model.space, _floats(p.get("g") or p["f"]))
    h = float(p["h"])
    h2 = float(p.get("h2") or h)
    exact = cov_l2_pair(h, f, g) if h == h2 else None
    trunc = field_cov(h, f, h2, g, model)
    rows = [{
        "h": h, "h2": h2, "f": p["f"], "g": p.get("g") or p["f"],
        "cov_kernel_exact": exact if exact is not None else float("nan"),
        "cov_field_truncated": trunc,
        "truncation_bound_f": truncation_error(h, f, model),
        "truncation_bound_g": truncation_error(h2, g, model),
    }]
    lines = [f"cov_l2 (same-h closed form): {exact}",
             f"field covariance (truncated basis): {trunc}"]
    return rows, lines, {"model": model.manifest()}


def _sample_rows(sample, label_cols):
    rows = []
    for p in range(sample.n_samples):
        row = {"path": p}
        for j, lbl in enumerate(label_cols):
            row[lbl] = float(sample.values[p, j])
        rows.append(row)
    return rows


def _cmd_simulate_fbm(cfg: RunConfig):
    from .sampling import SeededStream, simulate_fbm_volterra
    p = cfg.params
    grid = np.arange(1, int(p["grid_points"]) + 1) / int(p["grid_points"])
    sample = simulate_fbm_volterra(float(p["h"]), grid, int(p["paths"]),
                                   SeededStream(cfg.seed),
                                   n_cells=int(p["cells"]))
    cols = [f"t={_fmt(float(t))}" for t in grid]
    rows = _sample_rows(sample, cols)
    var = sample.values.var(axis=0, ddof=1)
    se = var * np.sqrt(2.0 / (sample.n_samples - 1))
    lines = ["empirical variance (with MC std-error) vs t^{2h}:"] + [
        f"  t={t:.4f}: {v:.6g} +- {s:.2g} (target {t ** (2 * float(p['h'])):.6g})"
        for t, v, s in zip(grid, var, se)]
    return rows, lines, {"sampler": sample.provenance}


def _cmd_simulate_fbf(cfg: RunConfig):
    from .sampling import SeededStream, simulate_fbf_1d
    p = cfg.params
    grid = np.arange(1, int(p["grid_points"]) + 1) / int(p["grid_points"])
    hs = _floats(p["h_list"])
    sample = simulate_fbf_1d(hs, grid, int(p["paths"]), SeededStream(cfg.seed),
                             n_cells=int(p["cells"]))
    cols = [f"h={_fmt(h)};t={_fmt(float(t))}" for h in hs for t in grid]
    rows = _sample_rows(sample, cols)
    return rows, [f"{len(hs)} coupled fBm slices on {len(grid)} points"], \
        {"sampler": sample.provenance}


def _cmd_simulate_mbm(cfg: RunConfig):
    from .sampling import SeededStream, simulate_mbm_1d
    p = cfg.params
    grid = np.arange(1, int(p["grid_points"]) + 1) / int(p["grid_points"])
    hfun = _parse_hfun(p["hfun"])
    sample = simulate_mbm_1d(hfun, grid, int(p["paths"]), SeededStream(cfg.seed))
    cols = [f"t={_fmt(float(t))}" for t in grid]
    rows = _sample_rows(sample, cols)
    var = sample.values.var(axis=0, ddof=1)
    hs = hfun(grid)
    lines = [f"hfun={p['hfun']}; variance targets t^(2 h(t))"] + [
        f"  t={t:.4f}: var={v:.5g} target={t ** (2 * hv):.5g}"
        for t, v, hv in list(zip(grid, var, hs))[:: max(1, len(grid) // 8)]]
    return rows, lines, {"sampler": sample.provenance}


def _cmd_verify_hinc(cfg: RunConfig):
    from .measure import indicator_of_rect
    from .regularity import verify_h_increment_scaling
    from .sampling import SeededStream
    p = cfg.params
    model = _make_model(cfg)
    deltas = _floats(p["deltas"])
    rows, lines = [], []
    ok_all = True
    for h0 in _floats(p["h0"]):
        for corner in str(p["f_corners"]).split(";"):
            f = indicator_of_rect(model.space, _floats(corner))
            fit = verify_h_increment_scaling(
                model, f, h0, deltas, n_paths=int(p.get("paths") or 0),
                stream=SeededStream(cfg.seed), mode=p.get("mode", "analytic"))
            ok = 1.8 <= fit.slope <= 2.2
            ok_all &= ok
            for d, v, s in zip(fit.abscissae, fit.estimates, fit.std_errors):
                rows.append({"h0": h0, "f": corner, "delta": float(d),
                             "increment_var": float(v), "std_error": float(s),
                             "slope": fit.slope, "r_squared": fit.r_squared})
            lines.append(f"h0={h0} f={corner}: slope={fit.slope:.4f} "
                         f"{'PASS' if ok else 'FAIL'} (band [1.8, 2.2])")
    lines.append(f"overall: {'PASS' if ok_all else 'FAIL'}")
    return rows, lines, {"model": model.manifest()}


def _cmd_exponents(cfg: RunConfig):
    from .regularity import estimate_pointwise_exponent
    from .sampling import SeededStream, simulate_fbm_exact, simulate_mbm_1d
    p = cfg.params
    n = 1 << int(p["grid_log2"])
    grid = np.arange(1, n + 1) / n
    t0 = float(p["t0"])
    scales = float(p.get("rho0", 0.25)) * 2.0 ** -np.arange(0, int(p.get("n_scales", 7)))
    rows, alphas = [], []
    for s in range(int(p["seeds"])):
        stream = SeededStream(cfg.seed, s)
        if p.get("hfun"):
            sample = simulate_mbm_1d(_parse_hfun(p["hfun"]), grid,
                                     int(p["paths_per_seed"]), stream)
        else:
            sample = simulate_fbm_exact(float(p["h"]), grid,
                                        int(p["paths_per_seed"]), stream)
        est = estimate_pointwise_exponent(sample, t0, scales=scales)
        alphas.append(est.alpha_hat)
        rows.append({"seed_index": s, "alpha_hat": est.alpha_hat,
                     "half_width": est.half_width})
    med = float(np.median(alphas))
    lines = [f"pointwise exponent at t0={t0}: median={med:.4f} over "
             f"{len(alphas)} seeds (std {np.std(alphas):.4f})"]
    return rows, lines, {}


def _cmd_lnd(cfg: RunConfig):
    from .measure import indicator_of_rect
    from .regularity import lnd_scaling_probe
    p = cfg.params
    model = _make_model(cfg)
    radii = _floats(p["radii"])
    nd = int(p.get("design_size", 64))
    design = [indicator_of_rect(model.space, (t,))
              for t in (np.arange(1, nd + 1) / nd)]
    rows, lines = [], []
    for h in _floats(p["h"]):
        f = indicator_of_rect(model.space, (float(p.get("t0", 0.5)),))
        fit = lnd_scaling_probe(model, h, f, radii, design)
        for r, v in zip(fit.abscissae, fit.estimates):
            rows.append({"h": h, "radius": float(r), "cond_var": float(v),
                         "slope": fit.slope, "intercept": fit.intercept})
        lines.append(f"h={h}: slope={fit.slope:.4f} (target 2h={2 * h})")
    return rows, lines, {"model": model.manifest()}


def _cmd_entropy(cfg: RunConfig):
    from .entropy import dudley_integral, entropy_profile
    p = cfg.params
    h = float(p["h"])
    n = int(p.get("sample_size", 1024))
    pts = np.arange(n) / (n - 1)
    eps = np.array(_floats(p["eps"]))

    def dist(a, b):
        return np.abs(np.asarray(b) - a) ** h

    prof = entropy_profile(pts, dist, eps, metric=f"dh(h={h})")
    val, verdict = dudley_integral(prof)
    rows = [{"eps": float(e), "cover_upper": int(cu), "cover_lower": int(cl),
             "packing": int(pk), "trusted": bool(tr)}
            for e, cu, cl, pk, tr in zip(prof.epsilons, prof.cover_upper,
                                         prof.pack_lower, prof.packing,
                                         prof.trusted())]
    lines = [f"dudley integral ~ {val:.6g}: {verdict}",
             f"sample resolution (untrusted below): {prof.resolution:.3g}"]
    return rows, lines, {}


def _cmd_smallball(cfg: RunConfig):
    from .entropy import small_ball_mc
    from .kernels import cov_fbm
    from .sampling import SeededStream, factor_psd, sample_gaussian
    p = cfg.params
    h = float(p["h"])
    n = 1 << int(p["grid_log2"])
    grid = np.arange(1, n + 1) / n
    L, _ = factor_psd(cov_fbm(h, grid[:, None], grid[None, :]))

    def sup_sampler(k, stream):
        return np.abs(sample_gaussian(L, k, stream)).max(axis=1)

    eps = np.array(_floats(p["eps"])) if p.get("eps") else None
    stream = SeededStream(cfg.seed)
    if eps is None:
        pilot = sup_sampler(2048, stream.child(999))
        eps = np.quantile(pilot, [0.002, 0.005, 0.012, 0.03, 0.07, 0.15, 0.3])
    rep = small_ball_mc(sup_sampler, eps, int(p["paths"]), stream)
    rows = [{"eps": r.eps, "p_hat": r.p_hat, "wilson_low": r.wilson_low,
             "wilson_high": r.wilson_high, "hits": r.hits,
             "estimable": r.estimable} for r in rep.rows]
    lines = [f"slope of log(-log p) vs log(1/eps): {rep.slope}",
             f"1/h = {1 / h:.4f}; band [{0.7 / h:.3f}, {1.3 / h:.3f}]"]
    return rows, lines, {}


def _cmd_spde(cfg: RunConfig):
    from .spde import (SpectralGreen, green_convolve, mild_solution_var,
                       verify_spde_h_continuity)
    p = cfg.params
    green = SpectralGreen(int(p.get("modes", 32)))
    grid_n = 1 << int(p.get("grid_log2", 7))
    phi = _parse_phi(p.get("phi", "eigenmode:1,1"))
    base = _floats(p.get("base", "0.25,0.25"))
    deltas = _floats(p["deltas"]) if p.get("deltas") else list(2.0 ** -np.arange(20, 25))
    fit = verify_spde_h_continuity(phi, base, deltas, green, grid_n)
    v_half = mild_solution_var(0.5, 0.5, phi, green, grid_n)
    psi = green_convolve(green, phi, grid_n)
    lap = (psi[:-2, 1:-1] + psi[2:, 1:-1] + psi[1:-1, :-2] + psi[1:-1, 2:]
           - 4.0 * psi[1:-1, 1:-1]) * grid_n ** 2
    x = np.arange(grid_n + 1) / grid_n
    X, Y = np.meshgrid(x[1:-1], x[1:-1], indexing="ij")
    resid = np.max(np.abs(-lap - phi(X, Y))) / max(np.max(np.abs(phi(X, Y))), 1e-300)
    rows = [{"delta": float(d), "normalized_increment": float(v),
             "slope": fit.slope} for d, v in zip(fit.abscissae, fit.estimates)]
    lines = [
        f"continuity slope (L^2-normalized): {fit.slope:.4f} (band [1.8, 2.2])",
        f"Var<u,phi> at (1/2,1/2): {v_half!r}",
        f"finite-difference -Lap(G*phi) vs phi: rel err {resid:.3g}",
    ]
    return rows, lines, {"modes": green.cutoff, "grid_n": grid_n}


_COMMANDS = {
    "covariance": _cmd_covariance,
    "simulate-fbm": _cmd_simulate_fbm,
    "simulate-fbf": _cmd_simulate_fbf,
    "simulate-mbm": _cmd_simulate_mbm,
    "verify-hinc": _cmd_verify_hinc,
    "exponents": _cmd_exponents,
    "lnd": _cmd_lnd,
    "entropy": _cmd_entropy,
    "smallball": _cmd_smallball,
    "spde": _cmd_spde,
}

_COMMAND_PARAMS = {
    "covariance": {"h": 0.3, "h2": "", "f": "1.0", "g": ""},
    "simulate-fbm": {"h": 0.3, "grid_points": 16, "paths": 64, "cells": 1024},
    "simulate-fbf": {"h_list": "0.2,0.3", "grid_points": 16, "paths": 64,
                     "cells": 1024},
    "simulate-mbm": {"hfun": "linear:0.2,0.2", "grid_points": 32, "paths": 16},
    "verify-hinc": {"h0": "0.15,0.25,0.35",
                    "deltas": "0.03125,0.015625,0.0078125,0.00390625,0.001953125",
                    "f_corners": "1.0;0.5;0.75", "mode": "analytic",
                    "paths": 0},
    "exponents": {"h": 0.3, "hfun": "", "grid_log2": 12, "seeds": 10,
                  "paths_per_seed": 4, "t0": 0.5, "rho0": 0.25, "n_scales": 7},
    "lnd": {"h": "0.2,0.3,0.4", "t0": 0.5,
            "radii": "0.25,0.125,0.0625,0.03125,0.015625", "design_size": 64},
    "entropy": {"h": 0.25, "sample_size": 1024,
                "eps": "0.9,0.8,0.7,0.6,0.5,0.45,0.4,0.35,0.3"},
    "smallball": {"h": 0.3, "grid_log2": 9, "paths": 10000, "eps": ""},
    "spde": {"phi": "eigenmode:1,1", "base": "0.25,0.25", "deltas": "",
             "grid_log2": 7, "modes": 32},
}


def run(command: str, config: dict) -> int:
    """Execute one command with a resolved config; returns the exit code."""
    if command not in _COMMANDS:
        print(f"unknown command: {command}", file=sys.stderr)
        return 2
    params = dict(_COMMAND_PARAMS[command])
    params.update({k: v for k, v in config.items()
                   if k not in ("command", "seed", "out", "threads")})
    cfg = RunConfig(command=command,
                    seed=int(config.get("seed", DEFAULTS["seed"])),
                    out=str(config.get("out", DEFAULTS["out"])),
                    params={**{k: DEFAULTS[k] for k in
                               ("basis_size", "grid_cells", "eta", "quad_tol",
                                "quad_step", "quad_nodes")}, **params})
    from .errors import HurstRangeError, RangeViolation
    try:
        rows, lines, extra = _COMMANDS[command](cfg)
    except (ValueError, KeyError, HurstRangeError, RangeViolation) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical failures from the library
        from .errors import FbfieldError
        if isinstance(exc, (FbfieldError, ArithmeticError, np.linalg.LinAlgError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 3
        raise
    _write_artifacts(cfg, rows, lines, extra)
    print(f"wrote {cfg.out}/results.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbfield",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", help="JSON config file; flags override it")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a command parameter")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        # effective for BLAS pools created after this point; recorded either way
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    config = {}
    if args.config:
        with open(args.config) as fh:
            config.update(json.load(fh))
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out"] = args.out
    for kv in args.set:
        k, _, v = kv.partition("=")
        config[k.replace("-", "_")] = v
    command = args.command or config.get("command")
    return run(command, config)


if __name__ == "__main__":
    sys.exit(main())
