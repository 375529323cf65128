"""Uniform-refinement rates of the geometric indicators on the unit sphere."""
import argparse

import numpy as np

from surfafem.afem import loglog_slope
from surfafem.discrete_surface import interpolate_geometry
from surfafem.estimators import geometric_indicators
from surfafem.mesh import build_initial_mesh, refine_uniform


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--levels", type=int, default=7)
    args = p.parse_args(argv)
    dof, lam, beta, mu = [], [], [], []
    mesh = build_initial_mesh("sphere")
    print(f"{'level':>5} {'DOF':>7} {'lambda':>10} {'beta':>10} {'mu':>10}")
    for level in range(args.levels):
        l, b, m = geometric_indicators(mesh, mesh.surface, interpolate_geometry(mesh, k=args.k))
        dof.append(len(mesh.points))
        lam.append(l.max()), beta.append(b.max()), mu.append(m.max())
        print(f"{level:5d} {dof[-1]:7d} {lam[-1]:10.3e} {beta[-1]:10.3e} {mu[-1]:10.3e}")
        mesh = refine_uniform(mesh)
    w = min(4, len(dof))
    print("slopes over the last", w, "levels:", ", ".join(
        f"{n} {loglog_slope(dof, np.array(v), w):+.3f}" for n, v in (("lambda", lam), ("beta", beta), ("mu", mu))))


if __name__ == "__main__":
    main()
