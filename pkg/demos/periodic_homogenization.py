"""
Why the homogenized control is not enough for a rough potential
================================================================

A particle in a tilted double well with a small periodic ripple,
``Phi(x) = Phi0(x) + p(x/eps)``, has to reach ``x >= 1.5`` as quickly as
possible.  The homogenized model replaces the ripple by an effective
diffusivity ``K``.  Its optimal feedback looks reasonable but costs a fixed
amount more than the true optimum however small ``eps`` gets.  Multiplying it
by the periodic factor ``e^{beta p(x/eps)} / (sqrt K int e^{beta p})``
removes the offset.

Everything here is computed on a grid, so the script runs in a few seconds.
"""

import numpy as np

from msoc import fk_pde, homogenize, models

beta = 2.0
p, p_prime = models.sine_perturbation(0.5)
coeffs = homogenize.cell_solution(homogenize.PeriodicPotential(p, p_prime, beta))
print(f"effective diffusivity K = {coeffs.K:.6f}")

# the homogenized problem lives on a coarse grid; the multiscale one needs
# several hundred nodes per ripple period
coarse = fk_pde.Grid1D(-6.0, 1.5, 1501)
v0 = fk_pde.solve_linear_bvp(models.periodic_homogenized_1d(coeffs.K, beta), coarse)

x0 = np.array([-2.5, -1.0, 0.0, 0.5, 1.0])
print("\n  eps      x0   V_eps   J_hom   J_corrected")
for eps in (0.1, 0.05):
    grid = fk_pde.Grid1D.with_spacing(-6.0, 1.5, eps / 400)
    model = models.periodic_multiscale_1d(eps, beta)
    v_eps = fk_pde.solve_linear_bvp(model, grid)
    hom = np.interp(grid.nodes, v0.x, v0.control)
    corrected = coeffs.correction_factor(grid.nodes / eps) * hom
    j_hom = fk_pde.policy_cost(model, grid, hom)
    j_cor = fk_pde.policy_cost(model, grid, corrected)
    for x in x0:
        row = [np.interp(x, grid.nodes, f) for f in (v_eps.value, j_hom, j_cor)]
        print(f"{eps:5.2f} {x:7.2f} " + " ".join(f"{v:7.3f}" for v in row))

# J_hom stays above V_eps by roughly the same amount at both eps,
# while J_corrected closes in on V_eps.
