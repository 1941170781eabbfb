"""
Two ways to the same value function
===================================

For the overdamped double well ``dx = (-Phi'(x) + sqrt2 u) dt + sqrt(2/beta) dW``
with unit running cost, the value function can be found either from the
nonlinear HJB equation (policy iteration) or from the linear equation for
``psi = exp(-beta V)``.  A Monte-Carlo estimate of ``psi`` through the
Feynman-Kac formula gives a third, grid-free, answer.
"""

import numpy as np

from msoc import fk_pde, mc_estimators, models

beta = 1.0
grid = fk_pde.Grid1D(-3.0, 2.0, 2001)
reduced = models.overdamped_1d(beta=beta)

linear = fk_pde.solve_linear_bvp(reduced, grid)
iterated = fk_pde.solve_hjb_policy_iteration(reduced, grid)
print(f"max |V_linear - V_policy_iteration| = {np.max(np.abs(linear.value - iterated.value)):.2e}"
      f"  ({iterated.n_iter} policy updates)")

# Feynman-Kac: psi(x0) = E exp(-beta tau) for uncontrolled paths started at x0
x0 = 1.0
est = mc_estimators.estimate_psi(models.overdamped(beta=beta), [x0], dt=1e-3, t_max=30.0, n_traj=4000, seed=1)
v_mc, v_se = mc_estimators.value_from_psi(est, beta)
# exits are only detected at grid times, so paths leave a little late and the
# estimate sits above the grid value by O(sqrt dt): about 0.1 at dt = 1e-3,
# 0.06 at dt = 2.5e-4
print(f"V({x0}) grid = {fk_pde.evaluate_value(linear, x0):.4f}, Monte Carlo = {v_mc:.4f} +- {v_se:.4f}")

# the optimal feedback drives the particle to the exit faster than doing nothing
policy = fk_pde.as_feedback(linear, "optimal")
cost = mc_estimators.estimate_cost(models.overdamped(beta=beta), policy, [x0], 1e-3, 30.0, 4000, 2)
print(f"cost of the grid feedback: {cost.mean:.4f} +- {cost.std_error:.4f}")
