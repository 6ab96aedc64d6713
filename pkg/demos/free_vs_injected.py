"""Error norm with and without output injection on a coarse mesh.

Writes two run directories under ``demo-out/`` plus a combined gnuplot
script.  Pass ``--full`` for the 33x33, T = 15 reference scenario (several
minutes per run).
"""
import argparse
import dataclasses
from pathlib import Path

from oblique_observer.config import load_config, parse_sensor_spec
from oblique_observer.experiments import gnuplot_script, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--out", default="demo-out")
    args = ap.parse_args()
    out = Path(args.out)

    base = load_config("paper-sec5-16sensors")
    if not args.full:
        base = dataclasses.replace(base, nodes_per_dim=17, t_end=3.0, fit_start=1.0)
    cases = {
        "free": base.with_gains(parse_sensor_spec(2), 0.0),
        "injected": base,
    }
    curves = []
    for name, cfg in cases.items():
        s = run(cfg, out / name, with_constants=False)
        state = f"blow-up at t={s.t_blowup:.3g}" if s.blowup else f"mu_hat={s.mu_hat:.3g}"
        print(f"{name:9s} S_sigma={cfg.S_sigma:2d} lambda={cfg.lam:g}: {state}")
        curves.append((f"{name}/run.csv", name))
    (out / "plot.gp").write_text(gnuplot_script(curves, title="free vs injected"))
    print(f"gnuplot -persist {out / 'plot.gp'}  (run from {out})")


if __name__ == "__main__":
    main()
