"""Scenario runner: build every operator from a config, integrate, and write artifacts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .auxspaces import AuxFamily, ObliqueProjector, build_aux_family, poincare_alpha, poincare_beta
from .config import ScenarioConfig, SensorSpec
from .dynamics import Coefficients, RunSummary, simulate_error, simulate_plant_observer
from .fem import FemSpace, RectDomain, assemble, build_grid
from .injection import InjectionOperator, build_injection, operator_norm_report
from .sensing import OutputOperator, SensorLayout, assemble_output, layout_to_json, ngrid_layout, sensor_layout

__all__ = [
    "Scenario",
    "build_scenario",
    "make_layout",
    "coefficients_from_config",
    "run",
    "constants_report",
    "sweep",
    "SWEEP_COLUMNS",
    "sweep_table_csv",
    "monotonicity_report",
    "gnuplot_script",
]

SWEEP_COLUMNS = ("S_sigma", "lambda", "blowup", "t_blowup", "mu_hat", "rho_hat", "inj_norm_t0")


@dataclass(eq=False)
class Scenario:
    config: ScenarioConfig
    space: FemSpace
    layout: SensorLayout
    output: OutputOperator
    aux: AuxFamily
    projector: ObliqueProjector
    injection: InjectionOperator
    coefficients: Coefficients


def make_layout(spec: SensorSpec, r: float, domain: RectDomain) -> SensorLayout:
    if spec.kind == "ngrid":
        return ngrid_layout(spec.value, r, domain)
    return sensor_layout(spec.value, r, domain)


def coefficients_from_config(cfg: ScenarioConfig) -> Coefficients:
    return Coefficients.make(cfg.dim, a=cfg.a, b=cfg.b, a_tilde=cfg.a_tilde, b_tilde=cfg.b_tilde,
                             f=cfg.f, r_exp=cfg.r_exp, s_exp=cfg.s_exp)


def build_scenario(cfg: ScenarioConfig, space: FemSpace | None = None) -> Scenario:
    """Grid, sensors, auxiliary family, projections and injection for ``cfg``."""
    domain = RectDomain(cfg.lengths)
    if space is None:
        space = assemble(build_grid(domain, cfg.nodes_per_dim, cfg.bc), cfg.nu)
    layout = make_layout(cfg.sensors, cfg.cover_r, domain)
    output = assemble_output(layout, space)
    aux = build_aux_family(cfg.aux_kind, space, layout, output)
    proj = ObliqueProjector(output, aux)
    inj = build_injection(cfg.lam, cfg.ell, output, proj, space)
    return Scenario(cfg, space, layout, output, aux, proj, inj, coefficients_from_config(cfg))


def _meta(sc: Scenario) -> dict:
    cfg = sc.config
    return {"lambda": cfg.lam, "ell": cfg.ell, "S_sigma": sc.output.count,
            "nodes_per_dim": cfg.nodes_per_dim, "dt": cfg.dt}


def simulate(sc: Scenario) -> RunSummary:
    """Integrate ``sc`` in its configured mode; returns the error summary."""
    cfg, space = sc.config, sc.space
    if cfg.mode == "error":
        z0 = space.interpolate(lambda x: cfg.z0(x, 0.0))
        return simulate_error(space, sc.coefficients, z0, cfg.t_end, cfg.dt, sc.injection,
                              stride=cfg.output_stride, fit_start=cfg.fit_start_value, meta=_meta(sc))
    y0 = space.interpolate(lambda x: cfg.y0(x, 0.0))
    yhat0 = space.interpolate(lambda x: cfg.yhat0(x, 0.0))
    _, err = simulate_plant_observer(space, sc.coefficients, y0, yhat0, cfg.t_end, cfg.dt,
                                     sc.injection, sc.output, stride=cfg.output_stride,
                                     fit_start=cfg.fit_start_value)
    err.meta.update(_meta(sc))
    return err


def constants_report(sc: Scenario, beta_method: str = "auto") -> dict:
    """Poincare-like constants and conditioning of the Gram matrices for ``sc``."""
    spec = sc.config.sensors
    return {
        "S": spec.value if spec.kind == "standard" else str(spec),
        "S_sigma": sc.output.count,
        "beta": poincare_beta(sc.output, method=beta_method),
        "alpha_l0": poincare_alpha(sc.aux, sc.space, 0),
        "alpha_l1": poincare_alpha(sc.aux, sc.space, 1),
        "alpha_l2": poincare_alpha(sc.aux, sc.space, 2),
        "gram_condition_numbers": {
            "vandermonde": float(np.linalg.cond(sc.output.vandermonde)),
            "cross_gram": float(np.linalg.cond(sc.projector.cross_gram)),
            "aux_gram_h": float(np.linalg.cond(sc.aux.gram_h)),
        },
    }


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def run(cfg: ScenarioConfig, out_dir=None, with_constants: bool = True) -> RunSummary:
    """Build, integrate, and (when ``out_dir`` is given) write the run artifacts.

    Files: ``run.csv``, ``summary.json``, ``sensors.json``, ``constants.json``,
    ``injection_norm.json`` and ``plot.gp``.
    """
    sc = build_scenario(cfg)
    summary = simulate(sc)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "run.csv", summary.to_csv())
        _write(out / "summary.json", _dumps(summary.summary_dict()))
        _write(out / "sensors.json", layout_to_json(sc.layout) + "\n")
        if with_constants:
            _write(out / "constants.json", _dumps(constants_report(sc)))
        _write(out / "injection_norm.json", operator_norm_report(sc.injection).to_json() + "\n")
        _write(out / "config.txt", cfg.to_text())
        _write(out / "plot.gp", gnuplot_script([("run.csv", f"S_sigma={sc.output.count}, lambda={cfg.lam:g}")]))
    return summary


def _sweep_one(args):
    cfg, out_dir = args
    summary = run(cfg, out_dir, with_constants=False)
    d = summary.summary_dict()
    return {k: d[k] for k in SWEEP_COLUMNS}


def _run_dir_name(spec: SensorSpec, lam: float) -> str:
    return f"S_{str(spec).replace(':', '')}_lambda_{lam:g}"


def sweep(cfg: ScenarioConfig, sensors_list, lambda_list, out_dir, jobs: int = 1) -> list[dict]:
    """Run every ``(sensors, lambda)`` pair; one row per run, in input order.

    Each run writes into its own subdirectory, so concurrent runs never
    share files; the table, the monotonicity report and the plot script
    are written after all runs are joined.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    for spec in sensors_list:
        for lam in lambda_list:
            tasks.append((cfg.with_gains(spec, float(lam)), out / _run_dir_name(spec, float(lam))))
    jobs = max(1, min(int(jobs), len(tasks)))
    if jobs == 1:
        rows = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    _write(out / "sweep.csv", sweep_table_csv(rows))
    _write(out / "monotonicity.json", _dumps(monotonicity_report(rows)))
    curves = [(os.path.join(t[1].name, "run.csv"), f"S_sigma={r['S_sigma']}, lambda={r['lambda']:g}")
              for t, r in zip(tasks, rows)]
    _write(out / "plot.gp", gnuplot_script(curves))
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def sweep_table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[k]) for k in SWEEP_COLUMNS])
    return buf.getvalue()


def _rate(row) -> float:
    # a blown-up run ranks below every decaying one
    if row["blowup"] or row["mu_hat"] is None:
        return -math.inf
    return float(row["mu_hat"])


def _is_increasing(pairs) -> bool | None:
    pairs = sorted(pairs)
    if len(pairs) < 2:
        return None
    rates = [p[1] for p in pairs]
    return all(b > a or (a == b == -math.inf) for a, b in zip(rates, rates[1:]))


def monotonicity_report(rows) -> dict:
    """Flags whether the fitted rate grows with lambda at fixed S_sigma and with S_sigma at fixed lambda.

    Purely informational: nothing is asserted, and blown-up runs count as
    rate ``-inf``.
    """
    by_s: dict = {}
    by_lam: dict = {}
    for r in rows:
        by_s.setdefault(r["S_sigma"], []).append((r["lambda"], _rate(r)))
        by_lam.setdefault(r["lambda"], []).append((r["S_sigma"], _rate(r)))
    in_lam = {str(s): _is_increasing(v) for s, v in sorted(by_s.items())}
    in_s = {f"{lam:g}": _is_increasing(v) for lam, v in sorted(by_lam.items())}
    flags = [v for v in (*in_lam.values(), *in_s.values()) if v is not None]
    return {
        "mu_increases_with_lambda": in_lam,
        "mu_increases_with_S_sigma": in_s,
        "all_increasing": bool(flags) and all(flags),
    }


def gnuplot_script(curves, title: str = "error norm") -> str:
    """A self-contained gnuplot script drawing ``norm_V`` on a log scale.

    ``curves`` is a list of ``(csv_path, label)`` pairs; paths are used as given.
    """
    lines = [
        "# gnuplot script; run with: gnuplot -persist plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale y",
        "set format y '10^{%L}'",
        "set xlabel 't'",
        "set ylabel '|z(t)|_V'",
        f"set title '{title}'",
        "set grid",
    ]
    if not curves:
        lines.append("# no curves")
        return "\n".join(lines) + "\n"
    parts = [f"'{path}' using 1:2 with lines title '{label}'" for path, label in curves]
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"
