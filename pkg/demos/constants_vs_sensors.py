"""How the Poincare-like constants move as sensors are added.

Prints beta and the alpha constants for S = 1, 2, 3 (4, 16, 36 sensors)
and for the 3x3 N-grid layout, on a 33x33 mesh.
"""
from oblique_observer.experiments import build_scenario, constants_report
from oblique_observer.config import load_config, parse_sensor_spec


def main():
    base = load_config("paper-sec5-4sensors")
    print(f"{'sensors':>8} {'S_sigma':>7} {'beta':>10} {'alpha_0':>10} {'alpha_1':>10} {'alpha_2':>8}")
    for s in (1, "ngrid:3", 2, 3):
        rep = constants_report(build_scenario(base.with_gains(parse_sensor_spec(s))))
        print(f"{str(s):>8} {rep['S_sigma']:7d} {rep['beta']:10.4g} {rep['alpha_l0']:10.3e} "
              f"{rep['alpha_l1']:10.3e} {rep['alpha_l2']:8.5f}")


if __name__ == "__main__":
    main()
