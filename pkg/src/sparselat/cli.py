"""Config-driven experiment runner.

``sparselat run <config.toml>`` executes one named experiment and writes a
JSON record plus a CSV table (written atomically: temp file then rename);
``sparselat validate <config.toml>`` checks the config and the hypothesis
diagnostics without computing anything expensive.

Exit codes: 0 success, 2 config validation failure, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .errors import ConfigurationError, SparselatError
from .green import coupling_bound, green_decay_fit
from .lattice import (
    Potential,
    SparseRule,
    rule_shells,
    sample_potential,
    short_range_partial_sums,
    sparse_support,
    sparseness_margin,
    LatticeBox,
    LatticeField,
)
from .localization import (
    SWThresholds,
    bump_measure_compare,
    impurity_level,
    one_plus_gv_scan,
    rejection_sample_lambdas,
    simon_wolff_resolve,
    spectrum_fill_scan,
)
from .scattering import QIntegralSpec, power_law_fit, q_integral, wave_operator_probe

EXPERIMENTS = (
    "green-decay",
    "q-decay",
    "wave-probe",
    "simon-wolff",
    "impurity",
    "spectrum-fill",
    "bump-measure",
    "one-plus-gv",
)

_REQUIRED = object()


def _take(table: dict, key: str, types, default=_REQUIRED, where: str = ""):
    """Fetch and type-check one config value, naming the offending key on error."""
    label = f"{where}.{key}" if where else key
    if key not in table:
        if default is _REQUIRED:
            raise ConfigurationError(f"missing required config key '{label}'")
        return default
    val = table[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigurationError(f"config key '{label}' must be {tn}, got {type(val).__name__}")
    return val


def _int_list(table, key, default=_REQUIRED, where=""):
    val = _take(table, key, list, default, where)
    if val is default and default is not _REQUIRED:
        return val
    out = []
    for item in val:
        if isinstance(item, bool) or not isinstance(item, int):
            raise ConfigurationError(f"config key '{where}.{key}' must be a list of ints")
        out.append(item)
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc


# ---------------------------------------------------------------------------
# potential construction from the [potential] table
# ---------------------------------------------------------------------------


def build_potential(spec: dict, d: int, radius: int, seed, lambda0=None) -> Potential:
    kind = _take(spec, "kind", str, where="potential")
    if kind == "none":
        return Potential({})
    if kind == "explicit":
        sites = _take(spec, "sites", list, where="potential")
        values = _take(spec, "values", list, where="potential")
        if len(sites) != len(values):
            raise ConfigurationError("potential.sites and potential.values differ in length")
        return Potential({tuple(s): float(v) for s, v in zip(sites, values)})
    if kind != "power":
        raise ConfigurationError(f"potential.kind must be none/explicit/power, got {kind!r}")

    rule = SparseRule(
        d=d,
        exponent=_take(spec, "exponent", float, 2.0, "potential"),
        scale=_take(spec, "scale", float, 1.0, "potential"),
        k_min=_take(spec, "k_min", int, 1, "potential"),
        directions=_take(spec, "directions", str, "positive-axes", "potential"),
    )
    mode = _take(spec, "amplitude_mode", str, "constant", "potential")
    if mode == "uniform":
        amp = _take(spec, "amplitude", (str, float), "auto", "potential")
        if amp == "auto":
            if lambda0 is None:
                raise ConfigurationError(
                    "potential.amplitude = 'auto' needs params.lambda0 in the config"
                )
            amp = coupling_bound(lambda0, d)
        sites, _ = sparse_support(rule, radius)
        return sample_potential(sites, float(amp), seed)

    amp = _take(spec, "amplitude", float, 1.0, "potential")
    entries = {}
    for k, r in rule_shells(rule, radius):
        if mode == "constant":
            val = amp
        elif mode == "inverse-index":
            val = amp / k
        else:
            raise ConfigurationError(
                f"potential.amplitude_mode must be constant/inverse-index/uniform, got {mode!r}"
            )
        for ray in rule.rays():
            entries[tuple(r * e for e in ray)] = val
    return Potential(entries)


def _rule_from_spec(spec: dict, d: int) -> SparseRule:
    return SparseRule(
        d=d,
        exponent=_take(spec, "exponent", float, 2.0, "potential"),
        scale=_take(spec, "scale", float, 1.0, "potential"),
        k_min=_take(spec, "k_min", int, 1, "potential"),
        directions=_take(spec, "directions", str, "positive-axes", "potential"),
    )


# ---------------------------------------------------------------------------
# experiment resolution (validation + default filling)
# ---------------------------------------------------------------------------


def resolve_config(raw: dict, overrides: dict | None = None) -> dict:
    overrides = overrides or {}
    experiment = _take(raw, "experiment", str)
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(
            f"config key 'experiment' must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}"
        )
    d = _take(raw, "dimension", int)
    if not 1 <= d <= 3:
        raise ConfigurationError(f"config key 'dimension' must be 1, 2 or 3, got {d}")
    resolved = {
        "experiment": experiment,
        "dimension": d,
        "seed": int(overrides.get("seed") if overrides.get("seed") is not None
                    else _take(raw, "seed", int, 0)),
        "threads": int(overrides.get("threads") if overrides.get("threads") is not None
                       else _take(raw, "threads", int, 1)),
        "out_dir": str(overrides.get("out_dir") if overrides.get("out_dir") is not None
                       else _take(raw, "out_dir", str, "results")),
    }
    params = dict(raw.get("params", {}))
    if not isinstance(params, dict):
        raise ConfigurationError("config key 'params' must be a table")
    potential = raw.get("potential")
    if potential is not None and not isinstance(potential, dict):
        raise ConfigurationError("config key 'potential' must be a table")
    resolver = _RESOLVERS[experiment]
    resolved["params"] = resolver(params, d, potential)
    if potential is not None:
        resolved["potential"] = dict(potential)
    unknown = set(raw) - {"experiment", "dimension", "seed", "threads", "out_dir",
                          "params", "potential"}
    if unknown:
        raise ConfigurationError(f"unknown top-level config keys: {sorted(unknown)}")
    return resolved


def _resolve_green_decay(params, d, potential):
    out = {
        "lambda": _take(params, "lambda", float, where="params"),
        "direction": _int_list(params, "direction", [1] + [0] * (d - 1), "params"),
        "n_max": _take(params, "n_max", int, 12, "params"),
        "eps": _take(params, "eps", float, 0.1, "params"),
    }
    if len(out["direction"]) != d:
        raise ConfigurationError("params.direction length must equal the dimension")
    return out


def _resolve_q_decay(params, d, potential):
    if d != 2:
        raise ConfigurationError("q-decay experiments require dimension = 2")
    out = {
        "tau1": _take(params, "tau1", float, 2.0, "params"),
        "j_direction": _int_list(params, "j_direction", [1, 0], "params"),
        "j_norms": _int_list(params, "j_norms", [8, 16, 32, 64, 128], "params"),
        "bump_center": _take(params, "bump_center", float, 0.0, "params"),
        "bump_halfwidth": _take(params, "bump_halfwidth", float, 1.0, "params"),
        "bump_tilt": _take(params, "bump_tilt", float, 0.0, "params"),
        "compare_profiles": _take(params, "compare_profiles", bool, False, "params"),
    }
    if len(out["j_direction"]) != 2:
        raise ConfigurationError("params.j_direction must have two components")
    return out


def _resolve_wave_probe(params, d, potential):
    if potential is None:
        raise ConfigurationError("wave-probe configs need a [potential] table")
    return {
        "box_radius": _take(params, "box_radius", int, where="params"),
        "t_start": _take(params, "t_start", float, 2.0, "params"),
        "t_stop": _take(params, "t_stop", float, 44.0, "params"),
        "t_step": _take(params, "t_step", float, 2.0, "params"),
        "margin": _take(params, "margin", float, 8.0, "params"),
        "cheb_tol": _take(params, "cheb_tol", float, 1e-8, "params"),
    }


def _resolve_simon_wolff(params, d, potential):
    if potential is None:
        raise ConfigurationError("simon-wolff configs need a [potential] table")
    out = {
        "radii": _int_list(params, "radii", where="params"),
        "j": _int_list(params, "j", [0] * d, "params"),
        "n_lambda": _take(params, "n_lambda", int, 1, "params"),
        "eps": _take(params, "eps", float, 0.1, "params"),
        "near_eigenvalue_sigma": _take(params, "near_eigenvalue_sigma", float, 1e-6, "params"),
        "tail_rel_change": _take(params, "tail_rel_change", float, 1e-3, "params"),
    }
    if "lambda" in params:
        out["lambda"] = _take(params, "lambda", float, where="params")
    else:
        win = _take(params, "lambda_window", list, where="params")
        if len(win) != 2:
            raise ConfigurationError("params.lambda_window must be [lo, hi]")
        out["lambda_window"] = [float(win[0]), float(win[1])]
    if "lambda0" in params:
        out["lambda0"] = _take(params, "lambda0", float, where="params")
    if not out["radii"]:
        raise ConfigurationError("params.radii must not be empty")
    if len(out["j"]) != d:
        raise ConfigurationError("params.j length must equal the dimension")
    return out


def _resolve_impurity(params, d, potential):
    if "beta" not in params:
        raise ConfigurationError("missing required config key 'params.beta'")
    beta = params["beta"]
    betas = beta if isinstance(beta, list) else [beta]
    out = []
    for b in betas:
        if isinstance(b, bool) or not isinstance(b, (int, float)):
            raise ConfigurationError("params.beta must be a float or list of floats")
        out.append(float(b))
    return {"beta": out}


def _resolve_spectrum_fill(params, d, potential):
    if potential is None:
        raise ConfigurationError("spectrum-fill configs need a [potential] table")
    amp = _take(params, "amplitude", (str, float), "auto", "params")
    return {
        "lambda0": _take(params, "lambda0", float, where="params"),
        "box_radius": _take(params, "box_radius", int, where="params"),
        "realizations": _take(params, "realizations", int, where="params"),
        "amplitude": amp,
    }


def _resolve_bump_measure(params, d, potential):
    out = {
        "beta": _take(params, "beta", float, where="params"),
        "k_list": _int_list(params, "k_list", [3, 4, 5, 6, 7, 8], "params"),
        "site_exponent": _take(params, "site_exponent", float, 2.0, "params"),
        "build_k_max": _take(params, "build_k_max", int, 0, "params"),
        "local_radius": _take(params, "local_radius", int, 120, "params"),
        "z_list": _take(params, "z_list", list, [[0.0, 1.0], [-0.5, 0.5]], "params"),
    }
    if not out["k_list"]:
        raise ConfigurationError("params.k_list must not be empty")
    if out["build_k_max"] == 0:
        out["build_k_max"] = max(out["k_list"]) + 3
    for z in out["z_list"]:
        if not (isinstance(z, list) and len(z) == 2):
            raise ConfigurationError("params.z_list entries must be [re, im] pairs")
    return out


def _resolve_one_plus_gv(params, d, potential):
    return {
        "eps": _take(params, "eps", float, where="params"),
        "lambda_min": _take(params, "lambda_min", float, where="params"),
        "lambda_max": _take(params, "lambda_max", float, where="params"),
        "n_grid": _take(params, "n_grid", int, 4001, "params"),
        "n_list": _int_list(params, "n_list", where="params"),
        "amplitude": _take(params, "amplitude", float, where="params"),
    }


_RESOLVERS = {
    "green-decay": _resolve_green_decay,
    "q-decay": _resolve_q_decay,
    "wave-probe": _resolve_wave_probe,
    "simon-wolff": _resolve_simon_wolff,
    "impurity": _resolve_impurity,
    "spectrum-fill": _resolve_spectrum_fill,
    "bump-measure": _resolve_bump_measure,
    "one-plus-gv": _resolve_one_plus_gv,
}


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# runners: each returns (summary dict, csv columns, csv rows)
# ---------------------------------------------------------------------------


def _run_green_decay(resolved):
    p = resolved["params"]
    fit = green_decay_fit(p["lambda"], p["direction"], p["n_max"], eps=p["eps"])
    rows = [
        {"distance": x, "green_abs": math.exp(y)}
        for x, y in zip(fit.distances, fit.log_values)
    ]
    summary = {
        "gamma": fit.gamma,
        "prefactor": fit.prefactor,
        "residual": fit.residual,
        "rms_residual": fit.rms_residual,
        "n_points": len(rows),
    }
    return summary, ["distance", "green_abs"], rows


def _run_q_decay(resolved):
    p = resolved["params"]
    dx, dy = p["j_direction"]
    spec = QIntegralSpec(
        tau1=p["tau1"],
        bump_center=p["bump_center"],
        bump_halfwidth=p["bump_halfwidth"],
        bump_tilt=p["bump_tilt"],
        j_list=tuple((m * dx, m * dy) for m in p["j_norms"]),
    )
    qs = [q_integral(spec, j) for j in spec.j_list]
    norms = [math.hypot(*j) for j in spec.j_list]
    fit = power_law_fit(norms, qs)
    summary = {"slope": fit.slope, "prefactor": fit.prefactor,
               "rms_residual": fit.rms_residual}
    if p["compare_profiles"]:
        from .scattering import probe_spec_variants

        variant = probe_spec_variants(spec)[1]
        qs2 = [q_integral(variant, j) for j in variant.j_list]
        summary["variant_slope"] = power_law_fit(norms, qs2).slope
    rows = [{"j_norm": n, "q_value": q} for n, q in zip(norms, qs)]
    return summary, ["j_norm", "q_value"], rows


def _run_wave_probe(resolved):
    p = resolved["params"]
    d = resolved["dimension"]
    box = LatticeBox(d, p["box_radius"], "periodic")
    pot = build_potential(resolved["potential"], d, p["box_radius"], resolved["seed"])
    f = LatticeField.delta(box)
    times = np.arange(p["t_start"], p["t_stop"] + 1e-12, p["t_step"])
    probe = wave_operator_probe(pot, f, times, tol=p["cheb_tol"], margin=p["margin"])
    rows = []
    for i, t in enumerate(probe.times):
        rows.append({
            "t": float(t),
            "norm": float(probe.norms[i]),
            "increment": float(probe.increments[i - 1]) if i else "",
        })
    summary = {
        "final_over_first": probe.final_over_first(),
        "first_increment": float(probe.increments[0]),
        "final_increment": float(probe.increments[-1]),
        "max_norm_drift": float(np.max(np.abs(probe.norms - probe.norms[0]))),
        "support_size": len(pot),
    }
    return summary, ["t", "norm", "increment"], rows


def _run_simon_wolff(resolved):
    p = resolved["params"]
    d = resolved["dimension"]
    seeds = np.random.SeedSequence(resolved["seed"]).spawn(2)
    radius = max(p["radii"])
    pot = build_potential(resolved["potential"], d, radius, seeds[0],
                          lambda0=p.get("lambda0"))
    thresholds = SWThresholds(
        near_eigenvalue_sigma=p["near_eigenvalue_sigma"],
        tail_rel_change=p["tail_rel_change"],
        eps=p["eps"],
    )
    if "lambda" in p:
        lams = [p["lambda"]]
    else:
        lams = rejection_sample_lambdas(p["lambda_window"], pot, p["n_lambda"],
                                        seeds[1], eps=p["eps"])
    rows = []
    verdicts = {}
    for lam in lams:
        report = simon_wolff_resolve(lam, p["j"], pot, p["radii"], thresholds=thresholds)
        verdicts[f"{lam:.12g}"] = report.verdict
        for row in report.rows:
            rows.append({
                "lambda": float(lam),
                "radius": row.radius,
                "support_size": row.support_size,
                "psi_norm": row.psi_norm,
                "shell_tail": row.shell_tail,
                "sigma_min": row.sigma_min,
                "verdict": report.verdict,
            })
    summary = {"verdicts": verdicts, "n_lambda": len(lams), "support_size": len(pot)}
    return summary, ["lambda", "radius", "support_size", "psi_norm", "shell_tail",
                     "sigma_min", "verdict"], rows


def _run_impurity(resolved):
    d = resolved["dimension"]
    rows = []
    for b in resolved["params"]["beta"]:
        rows.append({"beta": b, "level": impurity_level(b, d)})
    summary = {"levels": {f"{r['beta']:.12g}": r["level"] for r in rows}}
    return summary, ["beta", "level"], rows


def _run_spectrum_fill(resolved):
    p = resolved["params"]
    d = resolved["dimension"]
    rule = _rule_from_spec(resolved["potential"], d)
    amp = None if p["amplitude"] == "auto" else float(p["amplitude"])
    report = spectrum_fill_scan(p["lambda0"], rule, p["box_radius"], p["realizations"],
                                resolved["seed"], amplitude=amp,
                                threads=resolved["threads"])
    rows = []
    for i, (vals, prs) in enumerate(report.per_realization):
        for v, pr in zip(vals, prs):
            rows.append({"realization": i, "eigenvalue": float(v),
                         "participation_ratio": float(pr)})
    summary = {
        "amplitude_bound": report.amplitude_bound,
        "largest_gap": report.largest_gap,
        "median_pr": report.median_pr,
        "min_eigenvalue": report.min_eigenvalue,
        "n_eigenvalues": int(len(report.eigenvalues)),
        "support_size": report.support_size,
    }
    return summary, ["realization", "eigenvalue", "participation_ratio"], rows


def _bump_site(k: int, exponent: float, d: int):
    return (math.ceil(k**exponent),) + (0,) * (d - 1)


def _run_bump_measure(resolved):
    p = resolved["params"]
    d = resolved["dimension"]
    entries = {}
    for k in range(1, p["build_k_max"] + 1):
        entries[_bump_site(k, p["site_exponent"], d)] = p["beta"] + 1.0 / k
    pot = Potential(entries)
    far = [_bump_site(k, p["site_exponent"], d) for k in p["k_list"]]
    zs = [complex(z[0], z[1]) for z in p["z_list"]]
    report = bump_measure_compare(pot, far, p["beta"], zs,
                                  local_radius=p["local_radius"])
    rows = [
        {"k": k, "site": str(site), "sup_difference": float(s)}
        for k, site, s in zip(p["k_list"], report.sites, report.sup_differences)
    ]
    diffs = np.diff(report.sup_differences)
    summary = {
        "final_sup": report.final_sup,
        "strictly_decreasing": bool(np.all(diffs < 0)),
    }
    return summary, ["k", "site", "sup_difference"], rows


def _run_one_plus_gv(resolved):
    p = resolved["params"]
    d = resolved["dimension"]
    sites = [(n,) + (0,) * (d - 1) for n in p["n_list"]]
    pot = Potential({s: p["amplitude"] for s in sites})
    grid = np.linspace(p["lambda_min"], p["lambda_max"], p["n_grid"])
    scan = one_plus_gv_scan(pot, p["eps"], grid, sites)
    rows = []
    excess = []
    for site in sites:
        row = scan[site]
        slack = row.measure_estimate - (row.bound + row.spacing)
        excess.append(slack)
        rows.append({
            "n_abs": row.n_abs,
            "threshold": row.threshold,
            "measure_estimate": row.measure_estimate,
            "bound": row.bound,
            "resolved": row.resolved,
        })
    summary = {
        "max_excess_over_bound": float(max(excess)),
        "all_within_bound": bool(max(excess) <= 0.0),
        "all_resolved": bool(all(r["resolved"] for r in rows)),
    }
    return summary, ["n_abs", "threshold", "measure_estimate", "bound", "resolved"], rows


_RUNNERS = {
    "green-decay": _run_green_decay,
    "q-decay": _run_q_decay,
    "wave-probe": _run_wave_probe,
    "simon-wolff": _run_simon_wolff,
    "impurity": _run_impurity,
    "spectrum-fill": _run_spectrum_fill,
    "bump-measure": _run_bump_measure,
    "one-plus-gv": _run_one_plus_gv,
}


# ---------------------------------------------------------------------------
# hypothesis checks (validate)
# ---------------------------------------------------------------------------


def hypothesis_report(resolved: dict) -> list:
    """Cheap theorem-hypothesis diagnostics for a resolved config."""
    lines = []
    exp = resolved["experiment"]
    d = resolved["dimension"]
    p = resolved["params"]
    radius = p.get("box_radius") or (max(p["radii"]) if "radii" in p else None)
    pot_spec = resolved.get("potential")

    if pot_spec is not None and radius:
        checks = [max(4, radius // 4), max(4, radius // 2), radius]
        if exp == "wave-probe":
            # the short-range sum is the scattering-experiment hypothesis;
            # localization experiments neither need nor satisfy it
            pot = build_potential(pot_spec, d, radius, resolved["seed"],
                                  lambda0=p.get("lambda0"))
            sums = short_range_partial_sums(pot, checks)
            tail = (sums[-1] - sums[-2]) / sums[-1] if sums[-1] > 0 else 0.0
            status = "looks summable" if tail < 0.2 else "VIOLATED (partial sums still growing)"
            lines.append(
                f"short-range sum over radii {checks}: {np.array2string(sums, precision=4)}"
                f" -> {status}"
            )
        if pot_spec.get("kind") == "power":
            delta = 0.4
            margins = []
            for r in checks:
                sites, gaps = sparse_support(_rule_from_spec(pot_spec, d), r)
                if sites:
                    margins.append(sparseness_margin(sites, gaps, delta))
            if len(margins) >= 2 and all(np.isfinite(margins)):
                growing = all(b > a for a, b in zip(margins, margins[1:]))
                lines.append(
                    f"sparseness margin d(n)/|n|^{delta} over radii {checks}: "
                    f"{['%.3f' % m for m in margins]} -> "
                    f"{'growing' if growing else 'NOT growing'}"
                )

    if exp == "spectrum-fill" and p.get("amplitude") != "auto":
        bound = coupling_bound(p["lambda0"], d)
        if float(p["amplitude"]) > bound:
            lines.append(
                f"WARNING: amplitude {p['amplitude']} exceeds the critical coupling "
                f"{bound:.6f} for lambda0={p['lambda0']}; levels may fall below lambda0"
            )
        else:
            lines.append(
                f"amplitude {p['amplitude']} within the critical coupling {bound:.6f}"
            )
    if exp == "spectrum-fill" and p.get("amplitude") == "auto":
        lines.append(
            f"amplitude bound 'auto' -> {coupling_bound(p['lambda0'], d):.6f}"
        )
    return lines


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj]
    return obj


def _atomic_write(path: str, data: str):
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(resolved: dict, summary: dict, columns, rows, wall_clock: float):
    out_dir = resolved["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    record = {
        "config": _jsonable(resolved),
        "config_hash": config_hash(_jsonable(resolved)),
        "library_version": __version__,
        "wall_clock_s": wall_clock,
        "summary": _jsonable(summary),
        "rows": _jsonable(rows),
    }
    json_path = os.path.join(out_dir, f"{resolved['experiment']}.json")
    csv_path = os.path.join(out_dir, f"{resolved['experiment']}.csv")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in columns})
    _atomic_write(csv_path, buf.getvalue())
    _atomic_write(json_path, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return json_path, csv_path


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    resolved = resolve_config(load_config(args.config), {
        "seed": args.seed, "threads": args.threads, "out_dir": args.out,
    })
    start = time.perf_counter()
    summary, columns, rows = _RUNNERS[resolved["experiment"]](resolved)
    wall = time.perf_counter() - start
    json_path, csv_path = write_outputs(resolved, summary, columns, rows, wall)
    print(f"experiment: {resolved['experiment']} (d={resolved['dimension']}, "
          f"seed={resolved['seed']})")
    for key, val in summary.items():
        print(f"  {key}: {val}")
    print(f"  rows: {len(rows)}  wall clock: {wall:.2f}s")
    print(f"  wrote {json_path}")
    print(f"  wrote {csv_path}")
    return 0


def cmd_validate(args) -> int:
    resolved = resolve_config(load_config(args.config), {
        "seed": args.seed, "threads": args.threads, "out_dir": args.out,
    })
    print(f"config ok: experiment {resolved['experiment']}, d={resolved['dimension']}, "
          f"hash {config_hash(_jsonable(resolved))[:12]}")
    for line in hypothesis_report(resolved):
        print(f"  {line}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparselat",
        description="Run reproducible sparse-potential lattice experiments from TOML configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("validate", cmd_validate)):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="path to the TOML experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker thread cap")
        sp.add_argument("--out", type=str, default=None, help="override the output directory")
        sp.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SparselatError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
