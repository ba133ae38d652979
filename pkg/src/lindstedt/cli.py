"""Command-line pipelines: solve, verify, measure, clusters, bifurcate.

Every run reads one JSON config (missing keys are filled from
``DEFAULT_CONFIG`` and the resolved document is written next to the
outputs).  Exit codes: 0 ok, 1 a check failed, 2 bad configuration.
Failures print the name of the stage that failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantViolation, LindstedtError

log = logging.getLogger("lindstedt")

OUTPUT_ENV = "LINDSTEDT_OUTPUT_DIR"

DEFAULT_CONFIG = {
    "D": 2,
    "s": 1,
    "mu": "987/1597",
    "eps": "1/100",
    "eps_grid": [0.1, 0.05, 0.01],
    "grid_size": 10000,
    "gamma": "1/200",
    "gamma0": "1/100",
    "tau0": 2.0,
    "tau1": 3.5,
    "tau": 6.0,
    "alpha": 0.1,
    "eps0": "1/10",
    "K": 2,
    "arithmetic": "rational",
    "resonant": False,
    "seed": 0,
    "output_dir": "lindstedt-out",
    "cutoff": {"gamma": None, "profile": "exp"},
    "clusters": {"alpha": 0.1, "C1": None, "C2": None, "p_max": 2000},
    "mu_check": {"n_max": 200, "sector": "odd"},
    "melnikov": {"n_max": 200},
    "fixpoint": {"n_max": 3, "K2": 50.0, "tol": 1e-13},
    "residual": {"etas": [1e-4, 3e-4, 1e-3, 3e-3, 1e-2], "slope_tolerance": 0.2},
    "samples": {"x_points": 9, "t_points": 4},
    "packet": {"N": 1, "r_min": 1.0, "alphas": None},
    "bifurcate": {"s_min": 0.5, "s_max": 2.0, "s_points": 100, "block_bound": 50},
    "verify": {
        "suites": ["oracle", "symmetry", "bryuno", "partition", "clusters", "loops"],
        "oracle_K": 2,
        "symmetry_K": 2,
        "bryuno_K": 3,
        "bryuno_c": 2.0,
        "bryuno_beta": 1 / 3,
        "partition_points": 10000,
        "cluster_p_max": 2000,
        "loop_samples": 200,
        "corrupt_counterterm": False,
    },
}


# ---------------------------------------------------------------------------
# config


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}", stage="config")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def parse_number(value, exact: bool):
    """Numbers may be given as ints, floats or "a/b" strings."""
    if value is None:
        return None
    if isinstance(value, str):
        try:
            frac = Fraction(value)
        except ValueError as exc:
            raise ConfigError(f"not a number: {value!r}", stage="config") from exc
        return frac if exact else float(frac)
    if isinstance(value, bool):
        raise ConfigError(f"not a number: {value!r}", stage="config")
    if exact:
        return Fraction(value) if isinstance(value, int) else Fraction(str(value))
    return float(value)


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", stage="config") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", stage="config")
    cfg = _merge(DEFAULT_CONFIG, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    if cfg["arithmetic"] not in ("rational", "float"):
        raise ConfigError("arithmetic must be 'rational' or 'float'", stage="config")
    if not isinstance(cfg["K"], int) or cfg["K"] < 0:
        raise ConfigError("K must be a non-negative integer", stage="config")
    return cfg


def frequency_context(cfg: dict, eps=None):
    from .smalldiv import FrequencyContext

    exact = cfg["arithmetic"] == "rational"
    s = cfg["s"]
    if exact and not float(s).is_integer():
        exact = False
    num = lambda v: parse_number(v, exact)  # noqa: E731
    return FrequencyContext(
        D=int(cfg["D"]), s=int(s) if exact else float(s), mu=num(cfg["mu"]),
        eps=num(cfg["eps"] if eps is None else eps), gamma=num(cfg["gamma"]),
        gamma0=num(cfg["gamma0"]), tau0=float(cfg["tau0"]), tau1=float(cfg["tau1"]),
        tau=float(cfg["tau"]), alpha=float(cfg["alpha"]), eps0=num(cfg["eps0"]))


def cutoff_spec(cfg: dict, ctx):
    from .smalldiv import CutoffSpec

    gamma = cfg["cutoff"]["gamma"]
    gamma = ctx.gamma if gamma is None else parse_number(gamma, ctx.exact)
    if cfg["resonant"]:
        return CutoffSpec.resonant(gamma, profile=cfg["cutoff"]["profile"], exact=ctx.exact)
    return CutoffSpec(gamma=gamma, profile=cfg["cutoff"]["profile"], exact=ctx.exact)


def cluster_index(cfg: dict):
    from .lattice import ClusterConstants, ClusterIndex, default_constants

    c = cfg["clusters"]
    base = default_constants(int(cfg["D"]), float(c["alpha"]))
    const = ClusterConstants(D=int(cfg["D"]), alpha=float(c["alpha"]),
                             C1=base.C1 if c["C1"] is None else float(c["C1"]),
                             C2=base.C2 if c["C2"] is None else float(c["C2"]))
    return ClusterIndex(int(cfg["D"]), const)


def output_dir(cfg: dict, flag: str | None = None) -> Path:
    path = Path(flag or os.environ.get(OUTPUT_ENV) or cfg["output_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _json(obj) -> str:
    def default(o):
        if isinstance(o, Fraction):
            return str(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (set, frozenset, tuple)):
            return list(o)
        raise TypeError(type(o))
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


class StageFailure(LindstedtError):
    stage = "check"


def _stage(name):
    log.info("stage: %s", name)
    return name


# ---------------------------------------------------------------------------
# solve


def samples_csv(u: dict, D: int, x_points: int, t_points: int) -> str:
    from .series import reconstruct

    xs = [np.linspace(0, math.pi, x_points) for _ in range(D)]
    ts = np.linspace(0, 2 * math.pi, t_points, endpoint=False)
    field_ = reconstruct(u, xs, ts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *[f"x{i + 1}" for i in range(D)], "u"])
    for idx in np.ndindex(field_.shape):
        w.writerow([repr(float(ts[idx[0]])), *[repr(float(xs[i][idx[i + 1]])) for i in range(D)],
                    repr(float(field_[idx]))])
    return buf.getvalue()


def cmd_solve(cfg: dict, out: Path) -> dict:
    from .series import (Recursion, compatibility_fixpoint, leading_order,
                         q_equation_solve, residual, solve_truncated)
    from .smalldiv import check_melnikov_first, check_mu_nonresonant, omega_indices
    from .trees import TreeContext

    ctx = frequency_context(cfg)
    if cfg["resonant"]:
        return _solve_resonant(cfg, ctx, out)
    stage = _stage("mu non-resonance")
    if ctx.mu == 0:
        raise StageFailure("mu = 0 violates strong non-resonance; rerun with --resonant",
                           stage=stage)
    ok, witness = check_mu_nonresonant(ctx.mu, ctx.gamma0, ctx.tau0, cfg["mu_check"]["n_max"],
                                       ctx.D, cfg["mu_check"]["sector"])
    if not ok:
        raise StageFailure(f"mu fails strong non-resonance at {witness}", stage=stage)
    stage = _stage("first Melnikov condition")
    ok, witness = check_melnikov_first(ctx.eps, ctx, cfg["melnikov"]["n_max"])
    if not ok:
        raise StageFailure(f"eps fails the first Melnikov condition at {witness}", stage=stage)
    report = {"config": cfg, "stages": []}
    K = cfg["K"]
    s = cfg["samples"]
    if K == 0:
        q0 = q_equation_solve(0, None, ctx)
        lead = leading_order(ctx.D, q0.q, exact=False)
        _write(out / "samples.csv", samples_csv(lead, ctx.D, s["x_points"], s["t_points"]))
        report["q"] = q0.q
        report["stages"].append("leading solution")
        _write(out / "solve.json", _json(report))
        return report

    stage = _stage("clusters")
    clusters = cluster_index(cfg)
    spec = cutoff_spec(cfg, ctx)

    stage = _stage("recursion")
    tc = TreeContext(ctx, clusters, cutoff=spec, q=1)
    unit = Recursion(tc).solve(K, q=1)
    _write(out / "coefficients_unit_amplitude.csv", unit.to_csv())
    report["stages"].append(stage)

    stage = _stage("compatibility fixpoint")
    blocks = {}
    for n, p in omega_indices(cfg["fixpoint"]["n_max"], ctx):
        for cl in clusters.clusters_on_sphere(p):
            blocks[(n, cl.key)] = cl
    fix = compatibility_fixpoint(float(ctx.eps), K, ctx, clusters, blocks, cutoff=None,
                                 K2=cfg["fixpoint"]["K2"], tol=cfg["fixpoint"]["tol"])
    report["fixpoint"] = {"blocks": len(blocks), "iterations": fix.iterations,
                          "steps": fix.steps, "sigma_norm": fix.sigma_norm,
                          "residual": fix.residual}
    report["stages"].append(stage)

    stage = _stage("Q equation")
    sol, qs = solve_truncated(K, ctx.with_eps(float(ctx.eps)) if ctx.exact else ctx, clusters)
    report["q"] = qs.q
    _write(out / "coefficients.csv", sol.to_csv())
    report["stages"].append(stage)

    stage = _stage("residual")
    from .series import float_context

    etas = cfg["residual"]["etas"]
    res = residual(K, etas, float_context(ctx, 0.0), clusters)
    report["residual"] = res.to_dict()
    tol = cfg["residual"]["slope_tolerance"]
    _write(out / "residual.json", _json(res.to_dict()))
    if res.slope is not None and abs(res.slope - (K + 1)) > tol:
        raise StageFailure(f"residual slope {res.slope:.3f} differs from {K + 1}", stage=stage)
    report["stages"].append(stage)

    _write(out / "samples.csv", samples_csv(sol.summed(float(ctx.eps)), ctx.D,
                                            s["x_points"], s["t_points"]))
    _write(out / "solve.json", _json(report))
    return report


def _packet(cfg: dict):
    from .bifurcation import construct_packet

    pk = cfg["packet"]
    return construct_packet(int(pk["N"]), int(cfg["D"]), cfg["s"], pk["alphas"],
                            float(pk["r_min"]))


def _solve_resonant(cfg: dict, ctx, out: Path) -> dict:
    from .bifurcation import amplitudes
    from .series import ResonantRecursion, float_context, resonant_residual

    if ctx.mu != 0:
        raise ConfigError("--resonant needs mu = 0", stage="config")
    report = {"config": cfg, "stages": []}
    stage = _stage("packet construction")
    packet = _packet(cfg)
    amps = amplitudes(packet)
    report["packet"] = packet.to_dict()
    report["A_squared"] = amps.A_squared
    report["stages"].append(stage)
    stage = _stage("resonant recursion")
    fctx = float_context(ctx)
    sol = ResonantRecursion(fctx, packet).solve(cfg["K"])
    _write(out / "coefficients.csv", sol.to_csv())
    report["stages"].append(stage)
    s = cfg["samples"]
    if cfg["K"] > 0:
        stage = _stage("residual")
        res = resonant_residual(cfg["K"], cfg["residual"]["etas"], packet, float_context(ctx, 0.0))
        report["residual"] = res.to_dict()
        _write(out / "residual.json", _json(res.to_dict()))
        if abs(res.slope - (cfg["K"] + 1)) > cfg["residual"]["slope_tolerance"]:
            raise StageFailure(f"residual slope {res.slope:.3f} differs from {cfg['K'] + 1}",
                               stage=stage)
        report["stages"].append(stage)
    _write(out / "samples.csv", samples_csv(sol.summed(float(ctx.eps)), ctx.D,
                                            s["x_points"], s["t_points"]))
    _write(out / "solve.json", _json(report))
    return report


# ---------------------------------------------------------------------------
# verify


def stress_setup(exact: bool = True, seed: int = 3):
    """A small configuration where the p = 10 blocks sit in the near-resonant
    window with non-trivial scales, so resonances and counterterms appear at
    orders 2 and 3."""
    from .lattice import ClusterConstants, ClusterIndex
    from .smalldiv import CutoffSpec, FrequencyContext
    from .trees import TreeContext

    F = Fraction if exact else float
    ctx = FrequencyContext(D=2, s=1 if exact else 1.0, mu=F(33, 4) if exact else 8.25,
                           eps=F(39, 500) if exact else 0.078)
    clusters = ClusterIndex(2, ClusterConstants(D=2, alpha=0.1, C1=2.0, C2=1.0))
    spec = CutoffSpec(gamma=56, exact=exact)
    rng = random.Random(seed)
    M = {}
    for c in clusters.clusters_on_sphere(10):
        d = c.d
        A = [[F(0)] * d for _ in range(d)]
        for a in range(d):
            for b in range(a, d):
                v = Fraction(rng.randint(-20, 20), 37)
                A[a][b] = A[b][a] = v if exact else float(v)
        M[(1, c.key)] = tuple(tuple(r) for r in A)
    q = Fraction(2, 3) if exact else 2 / 3
    return TreeContext(ctx, clusters, cutoff=spec, M=M, q=q)


def _close(a, b, exact: bool) -> bool:
    if exact:
        return a == b
    keys = set(a) | set(b)
    scale = max([abs(float(v)) for v in a.values()] + [1e-300])
    return all(abs(float(a.get(k, 0)) - float(b.get(k, 0))) <= 1e-11 * scale for k in keys)


def suite_oracle(cfg: dict) -> dict:
    from .series import Recursion
    from .trees import CountertermTable, TreeEnumerator

    exact = cfg["arithmetic"] == "rational"
    tc = stress_setup(exact)
    enum = TreeEnumerator(tc)
    table = CountertermTable(enum)
    K = cfg["verify"]["oracle_K"]
    rec = Recursion(tc, table).solve(K)
    orders = {}
    ok = True
    for k in range(1, K + 1):
        sums = enum.tree_sums(k, "renormalized")
        o = {kk: v for kk, v in rec.orders[k].items() if v != 0}
        s = {kk: v for kk, v in sums.items() if v != 0}
        same = _close(o, s, exact)
        orders[k] = {"modes": len(o), "equal": same}
        ok &= same
    return {"passed": ok, "orders": orders}


def suite_symmetry(cfg: dict) -> dict:
    from .blocks import is_symmetric
    from .trees import CountertermTable, TreeEnumerator

    exact = cfg["arithmetic"] == "rational"
    tc = stress_setup(exact)
    corrupt = bool(cfg["verify"]["corrupt_counterterm"])
    table = CountertermTable(TreeEnumerator(tc), check_symmetry=False, corrupt=corrupt)
    checked, bad = 0, []
    for c in tc.clusters.clusters_on_sphere(10):
        st = tc.state(1, c)
        for k in range(1, cfg["verify"]["symmetry_K"] + 1):
            for h in st.scales:
                L = table.scale_matrix(k, 1, c, h)
                checked += 1
                sym = is_symmetric(L) if exact else np.allclose(
                    np.asarray(L, float), np.asarray(L, float).T, atol=1e-13)
                if not sym:
                    bad.append([k, list(c.key), h])
    return {"passed": not bad, "checked": checked, "asymmetric": bad}


def suite_bryuno(cfg: dict) -> dict:
    from .trees import bryuno_scan

    v = cfg["verify"]
    stats = bryuno_scan(v["bryuno_K"], v["bryuno_c"], v["bryuno_beta"], float(cfg["tau"]),
                        raise_on_violation=False)
    return {"passed": stats["violations"] == 0, **stats}


def suite_partition(cfg: dict) -> dict:
    from .smalldiv import CutoffSpec, chi_bar, chi_scale, partition_max_scale

    exact = cfg["arithmetic"] == "rational"
    rng = np.random.default_rng(cfg["seed"])
    spec = CutoffSpec(gamma=Fraction(1, 8) if exact else 0.125, exact=exact)
    worst = 0.0
    bad = 0
    for x in rng.uniform(-1, 1, cfg["verify"]["partition_points"]):
        if x == 0:
            continue
        H = partition_max_scale(x, spec)
        total = sum(chi_scale(x, h, spec) for h in range(-1, H + 1))
        bar = sum(chi_bar(x, i, spec) for i in (-1, 0, 1))
        for t in (total, bar):
            if exact:
                bad += t != 1
            else:
                worst = max(worst, abs(t - 1))
    passed = bad == 0 if exact else worst <= 1e-12
    return {"passed": bool(passed), "failures": int(bad), "max_error": worst}


def suite_clusters(cfg: dict) -> dict:
    clusters = cluster_index(cfg)
    p_max = cfg["verify"]["cluster_p_max"]
    try:
        count = sum(len(clusters.clusters_on_sphere(p)) for p in range(1, p_max + 1))
    except InvariantViolation as exc:
        return {"passed": False, "error": str(exc)}
    return {"passed": True, "clusters": count, "p_max": p_max}


def suite_loops(cfg: dict) -> dict:
    from .bifurcation import (construct_packet, contains_loop, find_blocks,
                              repeated_letter_identity, sample_chains)

    out = {"passed": True, "packets": []}
    for N in (1, 2):
        packet = construct_packet(N, 2, 1)
        part = find_blocks(packet, 50, max_block=cfg["bifurcate"]["block_bound"],
                           chain_radius2=400)
        K = part.chain_bound
        chains = sample_chains(packet, cfg["verify"]["loop_samples"], K, seed=cfg["seed"],
                               bound=400)
        loops = all(contains_loop(w) for _, w in chains)
        ident = all(repeated_letter_identity(w) for _, w in chains)
        ok = loops and ident and part.max_size <= cfg["bifurcate"]["block_bound"]
        out["packets"].append({"N": N, "members": packet.members, "M1": part.max_size,
                               "K": K, "chains": len(chains), "all_loop": loops,
                               "identity": ident})
        out["passed"] &= ok
    return out


SUITES = {
    "oracle": suite_oracle,
    "symmetry": suite_symmetry,
    "bryuno": suite_bryuno,
    "partition": suite_partition,
    "clusters": suite_clusters,
    "loops": suite_loops,
}


def cmd_verify(cfg: dict, out: Path) -> dict:
    results = {}
    for name in cfg["verify"]["suites"]:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}", stage="config")
        t0 = time.perf_counter()
        try:
            res = SUITES[name](cfg)
        except LindstedtError as exc:
            res = {"passed": False, "error": str(exc), "stage": exc.stage}
        res["seconds"] = round(time.perf_counter() - t0, 3)
        results[name] = res
        log.info("suite %s: %s", name, "pass" if res["passed"] else "FAIL")
    report = {"arithmetic": cfg["arithmetic"], "suites": results,
              "passed": all(r["passed"] for r in results.values())}
    _write(out / "verify.json", _json(report))
    return report


# ---------------------------------------------------------------------------
# measure


def resonant_condition(ctx, cfg: dict, radius: int = 12):
    """Eigenvalue test on the near-resonant cells with zero counterterms:
    every divisor -(D - eps) n + |m|^2 of a cell mode stays above 2 gamma / p^tau."""
    from .lattice import bourgain_partition, build_resonant_cells

    D = ctx.D
    modes = [m for m in np.ndindex(*(radius + 1,) * D) if all(c > 0 for c in m)]
    cells = bourgain_partition(modes)
    res_cells = build_resonant_cells(cells, D - float(ctx.eps0) / 2, float(ctx.eps0), D)
    rows = []
    for cell in res_cells:
        p = min(sum(c * c for c in m) for _, m in cell.members)
        for n, m in cell.members:
            rows.append((n, sum(c * c for c in m), 2 * float(ctx.gamma) / p ** ctx.tau))
    ns = np.array([r[0] for r in rows], float)
    ps = np.array([r[1] for r in rows], float)
    bounds = np.array([r[2] for r in rows], float)

    def condition(eps):
        lam = np.abs(-(D - eps) * ns + ps)
        margin = float((lam - bounds).min()) if rows else math.inf
        return margin >= 0, margin

    return condition


def cmd_measure(cfg: dict, out: Path) -> dict:
    from .smalldiv import measure_sweep

    grid = cfg["eps_grid"]
    if not grid:
        raise ConfigError("eps_grid is empty", stage="measure sweep")
    ctx = frequency_context({**cfg, "arithmetic": "float"})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps0", "fraction", "excluded_intervals"])
    series = []
    condition = resonant_condition(ctx, cfg) if cfg["resonant"] else "first_melnikov"
    for e0 in grid:
        res = measure_sweep(float(e0), int(cfg["grid_size"]), condition, ctx)
        series.append({"eps0": float(e0), "fraction": res.fraction,
                       "excluded": [list(iv) for iv in res.excluded_intervals]})
        w.writerow([repr(float(e0)), repr(res.fraction), len(res.excluded_intervals)])
    ordered = sorted(series, key=lambda r: -r["eps0"])
    monotone = all(a["fraction"] <= b["fraction"] for a, b in zip(ordered, ordered[1:]))
    _write(out / "measure.csv", buf.getvalue())
    report = {"series": series, "non_decreasing": monotone,
              "condition": "resonant eigenvalues" if cfg["resonant"] else "first Melnikov"}
    _write(out / "measure.json", _json(report))
    return report


# ---------------------------------------------------------------------------
# clusters and bifurcate


def cmd_clusters(cfg: dict, out: Path) -> dict:
    clusters = cluster_index(cfg)
    p_max = int(cfg["clusters"]["p_max"])
    rows = []
    for p in range(1, p_max + 1):
        for c in clusters.clusters_on_sphere(p):
            rows.append(c.report())
    report = {"D": cfg["D"], "p_max": p_max, "count": len(rows),
              "max_d": max((r["d_j"] for r in rows), default=0), "clusters": rows}
    _write(out / "clusters.json", _json(report))
    return report


def cmd_bifurcate(cfg: dict, out: Path) -> dict:
    from .bifurcation import amplitudes, det_table_csv, find_blocks, scan_J11_invertibility

    stage = _stage("packet construction")
    packet = _packet(cfg)
    stage = _stage("amplitudes")
    amps = amplitudes(packet)
    stage = _stage("block search")
    part = find_blocks(packet, 50, max_block=cfg["bifurcate"]["block_bound"], chain_radius2=400)
    stage = _stage("invertibility scan")
    b = cfg["bifurcate"]
    grid = np.linspace(b["s_min"], b["s_max"], b["s_points"])
    scan = scan_J11_invertibility(packet, grid)
    report = {"packet": packet.to_dict(), "A_squared": amps.A_squared,
              "a_squared": {",".join(map(str, m)): v for m, v in amps.a_squared.items()},
              "M1": part.max_size, "chain_bound": part.chain_bound,
              "recursive_chain_bound": part.recursive_bound,
              "crossings": scan["crossings"], "zeros": scan["zeros"],
              "identically_zero": scan["identically_zero"]}
    _write(out / "packet.json", _json(report))
    _write(out / "determinants.csv", det_table_csv(scan))
    if scan["identically_zero"]:
        raise StageFailure("det J11 vanishes on the whole grid", stage=stage)
    return report


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "measure": cmd_measure,
    "clusters": cmd_clusters,
    "bifurcate": cmd_bifurcate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindstedt", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output", help="output directory (overrides config and environment)")
        p.add_argument("--D", type=int)
        p.add_argument("--s", type=float)
        p.add_argument("--mu")
        p.add_argument("--eps")
        p.add_argument("--K", type=int)
        p.add_argument("--arithmetic", choices=["rational", "float"])
        p.add_argument("--resonant", action="store_true", default=None)
        p.add_argument("--seed", type=int)
        if name == "verify":
            p.add_argument("--corrupt-counterterm", action="store_true")
            p.add_argument("--suites", help="comma-separated subset")
        if name == "measure":
            p.add_argument("--eps-grid", help="comma-separated eps0 values")
        if name == "bifurcate":
            p.add_argument("--N", type=int)
            p.add_argument("--r", type=float, help="minimal base radius")
    return parser


def _overrides(args) -> dict:
    out = {}
    for key in ("D", "mu", "eps", "K", "arithmetic", "resonant", "seed"):
        out[key] = getattr(args, key, None)
    if args.s is not None:
        out["s"] = int(args.s) if float(args.s).is_integer() else args.s
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if getattr(args, "corrupt_counterterm", False):
            cfg["verify"]["corrupt_counterterm"] = True
        if getattr(args, "suites", None):
            cfg["verify"]["suites"] = [s for s in args.suites.split(",") if s]
        if getattr(args, "eps_grid", None) is not None:
            cfg["eps_grid"] = [float(x) for x in args.eps_grid.split(",") if x.strip()]
        if getattr(args, "N", None) is not None:
            cfg["packet"]["N"] = args.N
        if getattr(args, "r", None) is not None:
            cfg["packet"]["r_min"] = args.r
        out = output_dir(cfg, args.output)
        _write(out / "config.json", _json(cfg))
        report = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error [{exc.stage}]: {exc}", file=sys.stderr)
        return 2
    except LindstedtError as exc:
        print(f"FAILED [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    if args.command == "verify" and not report["passed"]:
        failed = [k for k, v in report["suites"].items() if not v["passed"]]
        print(f"FAILED [verify]: suites {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"{args.command}: ok ({out})")
    return 0
