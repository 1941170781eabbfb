"""Regenerate the LQR block-matrix fixtures shipped in ``msoc/data``.

The synthetic system is drawn once from ``numpy.random.default_rng(3)``;
seed 3 was picked among seeds 0-4 as a representative draw (all five give
slopes between 1.79 and 1.94).  The decoupled system has no slow/fast
coupling and disjoint input columns, so its reduced Riccati solution equals
the slow block of the full one for every epsilon.
"""

from pathlib import Path

import numpy as np

from msoc import lqr

OUT = Path(__file__).resolve().parents[1] / "src" / "msoc" / "data"
SYNTHETIC_SEED = 3


def synthetic(seed=SYNTHETIC_SEED):
    rng = np.random.default_rng(seed)
    A11 = rng.normal(size=(2, 2)) - 2 * np.eye(2)
    A12 = rng.normal(size=(2, 4)) * 0.5
    A21 = rng.normal(size=(4, 2)) * 0.5
    M = rng.normal(size=(4, 4))
    A22 = -(M @ M.T / 4 + np.eye(4))
    B1 = rng.normal(size=(2, 2))
    B2 = rng.normal(size=(4, 2))
    return lqr.SlowFastLinearSystem(A11, A12, A21, A22, B1, B2, epsilon=1.0, beta=0.01)


def decoupled():
    A11 = np.array([[-1.0, 0.5], [0.0, -2.0]])
    A22 = np.array([[-1.5, 0.2], [-0.3, -1.0]])
    B1 = np.array([[0.0, 0.0], [1.0, 0.0]])
    B2 = np.array([[0.0, 1.0], [0.0, 0.5]])
    return lqr.SlowFastLinearSystem(A11, np.zeros((2, 2)), np.zeros((2, 2)), A22, B1, B2, epsilon=1.0, beta=0.01)


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    eps = [0.2, 0.1, 0.05, 0.025]
    for name, sys in (("lqr_synthetic_k2_n6.txt", synthetic()), ("lqr_decoupled_k2_n4.txt", decoupled())):
        sys.validate(eps)
        lqr.save_system(sys, OUT / name)
        print(name, lqr.convergence_study(sys, eps).slope())
