"""Orthonormal simplex bases, quadrature and the CDG projector on one triangle."""

import numpy as np

from hyperdg.orthopoly import build_basis, dim_poly
from hyperdg.projectors import cdg_project, l2_project, outflow_facet_rule
from hyperdg.quadrature import simplex_rule
from hyperdg.study import StudyConfig, fit_columns, run_projector_study

# %% orthonormality of the modal basis on the reference triangle
p = 6
rule = simplex_rule(2, 2 * p + 2)
V = build_basis(2, p).eval(rule.points)
gram = V.T @ (rule.weights[:, None] * V)
print("dim P_6 =", dim_poly(2, p), " max |G - I| =", np.abs(gram - np.eye(len(gram))).max())

# %% CDG vs L2 projection of a smooth function
f = lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1])
rule = simplex_rule(2, 2 * p + 8)
fr = outflow_facet_rule(2, 2 * p + 8)
for name, q in (("l2", l2_project(f, None, p, rule)), ("cdg", cdg_project(f, None, p, rule, fr))):
    err = np.sqrt(rule.integrate((f(rule.points) - q(rule.points)) ** 2))
    print(f"{name:4s} L2 error {err:.3e}")

# %% algebraic p-rates for the kink max(x, 0)^alpha
for alpha in (1.5, 2.5):
    recs = run_projector_study(StudyConfig("projector_study", alpha=alpha, p_range=(4, 20)))
    for col in ("cdg_l2_error", "cdg_outflow_trace_error", "cdg_inflow_trace_error", "l2proj_trace_error"):
        print(f"alpha={alpha} {col:26s} slope {fit_columns(recs, col, (4, 20)).slope:+.2f}")
