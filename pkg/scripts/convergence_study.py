"""Observed RK4 order under dt halving on the harmonic oscillator and the
central force problem (reference: the same run at dt/64)."""
import argparse

import numpy as np

from geomech.integrate import simulate
from geomech.systems import central_force, harmonic


def terminal_state(model, T, dt):
    traj = simulate(model.system, (model.q0, model.v0), (0.0, T), dt)
    return np.concatenate([traj.q[-1], traj.v[-1]])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--dt", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    args = ap.parse_args()
    for name, model in (("harmonic", harmonic()), ("central_force", central_force())):
        ref = terminal_state(model, args.T, min(args.dt) / 64)
        errors = [float(np.max(np.abs(terminal_state(model, args.T, dt) - ref))) for dt in args.dt]
        print(f"{name}")
        print(f"{'dt':>10} {'error':>12} {'ratio':>8}")
        for k, (dt, err) in enumerate(zip(args.dt, errors)):
            ratio = f"{errors[k - 1] / err:8.2f}" if k else " " * 8
            print(f"{dt:10.4g} {err:12.4e} {ratio}")


if __name__ == "__main__":
    main()
