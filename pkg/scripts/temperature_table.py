"""Print calibrated teacher temperatures over a range of cluster counts."""

import argparse

from klab.teacher import TemperatureConfig, calibrate_teacher_temperature


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cos-threshold", type=float, default=0.4)
    ap.add_argument("--boundary-prob", type=float, default=0.5)
    args = ap.parse_args()
    cfg = TemperatureConfig(cos_threshold=args.cos_threshold, boundary_prob=args.boundary_prob)
    print("k,tau_teacher,tau_student")
    for k in (3, 4, 10, 16, 100, 1000, 4000, 65536):
        t = calibrate_teacher_temperature(cfg, k)
        print(f"{k},{t:.5f},{2 * t:.5f}")


if __name__ == "__main__":
    main()
