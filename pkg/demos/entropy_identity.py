"""
Suboptimality measured in relative entropy
==========================================

Pushing the optimal feedback off by a constant ``delta`` raises the expected
cost by exactly ``KL / beta``, the relative entropy between the two path
measures.  For a constant offset that is ``(beta/2) delta^2 E tau / beta``,
so the cost gap grows quadratically in ``delta``.

Paired paths (same noise under both policies) keep the comparison cheap, but
the gap is small at small ``delta``.  This short run resolves the identity
row by row; pinning the quadratic slope takes millions of paths, which is
what the ``entropy_gap`` experiment does.
"""

from msoc import fk_pde, mc_estimators, models

beta = 1.0
sol = fk_pde.solve_linear_bvp(models.overdamped_1d(beta=beta), fk_pde.Grid1D(-3.0, 2.0, 2001))
u_hat = fk_pde.as_feedback(sol, "optimal")

study = mc_estimators.quadratic_gap_study(models.overdamped(beta=beta), u_hat, [0.2, 0.4, 0.8], [-1.0],
                                          dt=1e-3, t_max=50.0, n_traj=5000, seed=3)
print(" delta     gap        KL/beta    |diff|/se")
for r in study.rows:
    print(f"{r.delta:5.2f}  {r.gap:9.5f}  {r.kl_over_beta:9.5f}  {r.identity_z:6.2f}")
print(f"fitted slope {study.slope:.2f}")
