"""
Reducing a slow-fast linear regulator
=====================================

A linear system with ``k`` slow and ``n - k`` fast states, the fast block
scaled by ``1/eps``, is controlled to minimize the long-run average of
``|x|^2 + |u|^2``.  Eliminating the fast states gives a ``k``-dimensional
Riccati equation whose solution approximates the slow block of the full
one with error ``O(eps^2)``.
"""

from msoc import lqr
from msoc.experiments import fixture_path

system = lqr.load_system(fixture_path("synthetic"))
study = lqr.convergence_study(system, [0.2, 0.1, 0.05, 0.025])

print("   eps       |S - S11|_F   off-diagonal size   ARE residual")
for row in study.rows:
    print(f"{row.epsilon:6.3f}   {row.err_11:12.3e}   {row.norm_residual_block:14.3e}   {row.are_residual:10.1e}")
print(f"log-log slope {study.slope():.2f}")

red = study.reduced_system
print(f"reduced Q = {red.Q:.4g}; eta with Q = {lqr.reduced_eta(red, study.reduced):.4g}, "
      f"without = {lqr.reduced_eta(red, study.reduced, include_Q=False):.4g}")
