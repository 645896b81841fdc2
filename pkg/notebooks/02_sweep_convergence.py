"""Test case 1: constant flow (1, 1) and a solution with a kink of strength alpha at x = 0."""

import numpy as np

from hyperdg.mesh import check_admissible, gen_structured
from hyperdg.study import StudyConfig, fit_rate, run_convergence

# %% admissibility depends on the diagonal direction
for diagonal in ("against_flow", "with_flow"):
    rep = check_admissible(gen_structured(5, 5, diagonal), [1.0, 1.0])
    bad = int(np.sum(~np.asarray(rep.a1_ok)))
    print(f"{diagonal:12s} elements failing a1: {bad:2d}  admissible={rep.verdict}")

# %% odd nx keeps x = 0 inside elements, even nx puts it on edges
for nx in (5, 4):
    cfg = StudyConfig("testcase1", alpha=1.5, mesh={"nx": nx, "ny": nx, "diagonal": "against_flow"},
                      p_range=(4, 16))
    recs = run_convergence(cfg)
    for r in recs[::4]:
        print(f"nx={nx} p={r.p:2d} l2={r.error_l2:.3e} dg={r.error_dg:.3e} {r.solver_used}")
    print(f"nx={nx} l2 slope {fit_rate(recs, (8, 16), 'l2').slope:+.2f}",
          f"dg slope {fit_rate(recs, (8, 16), 'dg').slope:+.2f}")
