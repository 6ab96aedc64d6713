"""A small (sensors, lambda) sweep on a 17x17 mesh, two workers.

Mirrors ``observer sweep`` and prints the table and the monotonicity flags.
"""
import dataclasses
import json

from oblique_observer.config import load_config, parse_sensor_spec
from oblique_observer.experiments import monotonicity_report, sweep, sweep_table_csv


def main():
    base = load_config("paper-sec5-4sensors")
    base = dataclasses.replace(base, nodes_per_dim=17, t_end=2.0, fit_start=0.5)
    rows = sweep(base, [parse_sensor_spec(s) for s in (1, 2)], [0.01, 0.1, 1.0], "demo-out/sweep", jobs=2)
    print(sweep_table_csv(rows), end="")
    print(json.dumps(monotonicity_report(rows), indent=2))


if __name__ == "__main__":
    main()
