"""Test case 2: variable divergence-free flow, solved with the global block solver."""

import numpy as np

from hyperdg.dg import solve_global
from hyperdg.mesh import gen_structured
from hyperdg.norms import dg_error
from hyperdg.study import build_testcase2

alpha = 2.5
spec, u = build_testcase2(alpha)
mesh = gen_structured(5, 5, "with_flow")

# %% residual history and error per degree
ps, errs = [], []
for p in range(4, 17, 2):
    sol = solve_global(mesh, p, spec)
    rep = dg_error(sol, u, spec)
    print(f"p={p:2d} iters={sol.iterations:3d} residual={sol.residual:.1e} l2={rep.l2_error:.3e}")
    ps.append(p)
    errs.append(rep.l2_error)

# %% log-log slope over the upper half
slope = np.polyfit(np.log(ps[-4:]), np.log(errs[-4:]), 1)[0]
print(f"l2 slope {slope:+.2f} (compare -(alpha + 1/2) = {-(alpha + 0.5):+.2f})")
