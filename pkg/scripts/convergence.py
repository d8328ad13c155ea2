"""Observed convergence orders of the profile flow.

Time order: fixed-step flow of a round cylinder against the exact radius
sqrt(r0^2 - 2(n-1)t). Space order: self-convergence of the waist amplitude of a
slightly perturbed periodic cylinder under grid doubling.
"""

import argparse

import numpy as np

from neckflow.flow import step
from neckflow.history import FlowState
from neckflow.profile import cylinder_profile, function_profile


def flow_fixed(prof, dt, T):
    st = FlowState(prof)
    for _ in range(int(round(T / dt))):
        st = step(st, dt)
    return st


def time_orders(n=3, T=0.2, dts=(4e-3, 2e-3, 1e-3, 5e-4), m=64):
    exact = np.sqrt(1.0 - 2 * (n - 1) * T)
    errs = [np.abs(flow_fixed(cylinder_profile(1.0, 2 * np.pi, m=m, n=n), dt, T)
                   .profile.radius - exact).max() for dt in dts]
    return np.array(errs), np.log2(np.array(errs[:-1]) / errs[1:])


def space_orders(ms=(16, 32, 64, 128), dt=1e-4, T=0.1, amplitude=0.1):
    def amp(m):
        prof = function_profile(lambda x: 1 + amplitude * np.cos(x), 0.0, 2 * np.pi, m=m,
                                ends=("periodic", "periodic"))
        r = flow_fixed(prof, dt, T).profile.radius
        return r.max() - r.min()

    amps = np.array([amp(m) for m in ms])
    d = np.abs(np.diff(amps))
    return amps, np.log2(d[:-1] / d[1:])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3, help="hypersurface dimension")
    args = ap.parse_args()
    errs, p = time_orders(n=args.n)
    print("time:  errors", np.array2string(errs, precision=3), "orders", np.round(p, 3))
    amps, q = space_orders()
    print("space: amplitudes", np.array2string(amps, precision=8), "orders", np.round(q, 3))


if __name__ == "__main__":
    main()
