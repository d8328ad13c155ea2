"""Write neck and profile files for trying out the certify, merge and extend verbs.

    python scripts/make_fixtures.py fixtures/ --level 3
"""

import argparse
from pathlib import Path

import numpy as np

from neckflow import io
from neckflow.algebra import CylinderIsometry, reparametrize
from neckflow.graph import CylinderGraph
from neckflow.normal import build_normal_neck
from neckflow.profile import function_profile, waist_profile
from neckflow.synthetic import harmonic_graph, rotational_graph


def make_fixtures(out, level=2, n_heights=31):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g = harmonic_graph(1e-3, level=level, n_heights=n_heights, a=0.0, b=3.0)
    h, u, mesh = g.heights, g.u, g.sphere_mesh
    cut = (2 * n_heights) // 3
    written = {}

    def save(name, neck):
        written[name] = out / f"{name}.json"
        io.save_neck(written[name], neck)

    save("good", build_normal_neck(g))
    save("left", build_normal_neck(CylinderGraph(h[0], h[cut], mesh, h[:cut + 1], u[:cut + 1])))
    right = build_normal_neck(CylinderGraph(h[-cut - 1], h[-1], mesh, h[-cut - 1:], u[-cut - 1:]))
    save("right", right)
    save("right_flipped", reparametrize(right, CylinderIsometry(np.eye(3), 0.0, True)))
    far = harmonic_graph(1e-3, level=level, n_heights=9, a=5.0, b=6.0)
    save("disjoint", build_normal_neck(far))
    cone = rotational_graph(lambda z: 0.2 * z, a=0.0, b=1.0, n_heights=9, level=level)
    save("volume_ablated", build_normal_neck(cone, skip_volume=True))

    periodic = function_profile(lambda x: 1 + 0.01 * np.cos(x), 0.0, 2 * np.pi, m=64,
                                ends=("periodic", "periodic"))
    written["periodic_profile"] = out / "periodic_profile.json"
    io.write_json(written["periodic_profile"], io.profile_to_dict(periodic))
    written["waist_profile"] = out / "waist_profile.json"
    io.write_json(written["waist_profile"], io.profile_to_dict(waist_profile(m=257)))
    return written


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default="fixtures")
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--heights", type=int, default=31)
    args = ap.parse_args()
    for name, path in make_fixtures(args.out, args.level, args.heights).items():
        print(f"{name:16s} {path}")


if __name__ == "__main__":
    main()
