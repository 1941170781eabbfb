"""Ergodic linear-quadratic regulator with slow and fast states.

The full problem has

    A = [[A11, A12/eps], [A21/eps, A22/eps^2]],   B = sqrt(2) [B1; B2/eps],

value function ``z^T S z`` with ``A^T S + S A - 2 S B B^T S + I = 0`` and
ergodic constant ``eta = tr(B B^T S)``.  Eliminating the fast block gives

    A_bar = A11 - A12 A22^{-1} A21,   B_bar = sqrt(2) (B1 - A12 A22^{-1} B2),

and the reduced Riccati equation in ``R^{k x k}``.  The upper-left block of
the full solution approaches the reduced one at rate ``eps^2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

FORMAT_HEADER = "msoc-lqr-blocks v1"


class ShapeError(ValueError):
    pass


class StabilityError(ValueError):
    pass


class RiccatiError(RuntimeError):
    pass


class ReductionError(ValueError):
    pass


def _eigs_ok(M):
    ev = np.linalg.eigvals(M)
    return ev, float(np.max(ev.real))


def is_hurwitz(M) -> bool:
    return _eigs_ok(M)[1] < 0.0


def is_controllable(A, B, rtol: float = 1e-10) -> bool:
    """Popov-Belevitch-Hautus test: ``[lambda I - A, B]`` has full rank at every eigenvalue.

    Better conditioned than the Krylov matrix rank when ``A`` has widely
    separated scales.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2))
    for lam in np.linalg.eigvals(A):
        M = np.hstack([lam * np.eye(n) - A, B])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= rtol * max(scale, abs(lam)):
            return False
    return True


@dataclass(frozen=True)
class SlowFastLinearSystem:
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    epsilon: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("A11", "A12", "A21", "A22", "B1", "B2"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        k, m = self.A11.shape[0], self.A22.shape[0]
        l = self.B1.shape[1]
        expected = {
            "A11": (k, k), "A12": (k, m), "A21": (m, k), "A22": (m, m), "B1": (k, l), "B2": (m, l),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not (self.epsilon > 0 and self.beta > 0):
            raise ValueError("epsilon and beta must be positive")

    @property
    def k(self) -> int:
        return self.A11.shape[0]

    @property
    def n(self) -> int:
        return self.k + self.A22.shape[0]

    @property
    def l(self) -> int:
        return self.B1.shape[1]

    def with_epsilon(self, epsilon: float) -> "SlowFastLinearSystem":
        return SlowFastLinearSystem(self.A11, self.A12, self.A21, self.A22, self.B1, self.B2, epsilon, self.beta)

    def validate(self, eps_list: Sequence[float] = ()) -> None:
        """Check A22 Hurwitz, and A(eps) Hurwitz and (A, B) controllable for each eps."""
        ev, top = _eigs_ok(self.A22)
        if top >= 0:
            bad = ev[np.argmax(ev.real)]
            raise StabilityError(f"A22 is not Hurwitz: eigenvalue {bad:.6g}")
        for eps in eps_list:
            A, B = assemble(self.with_epsilon(eps))
            ev, top = _eigs_ok(A)
            if top >= 0:
                raise StabilityError(f"A(eps={eps}) is not Hurwitz: eigenvalue {ev[np.argmax(ev.real)]:.6g}")
            if not is_controllable(A, B):
                raise StabilityError(f"(A, B) is not controllable at eps={eps}")


def assemble(sys: SlowFastLinearSystem):
    e = sys.epsilon
    A = np.block([[sys.A11, sys.A12 / e], [sys.A21 / e, sys.A22 / e**2]])
    B = math.sqrt(2.0) * np.vstack([sys.B1, sys.B2 / e])
    return A, B


@dataclass
class RiccatiSolution:
    S: np.ndarray
    eta: float
    residual_norm: float
    n_iter: int = 0

    def feedback_gain(self, B):
        """``K`` with optimal feedback ``u = -K z`` (``K = B^T S``)."""
        return B.T @ self.S


def riccati_residual(A, B, S) -> np.ndarray:
    n = A.shape[0]
    BB = B @ B.T
    return A.T @ S + S @ A - 2.0 * S @ BB @ S + np.eye(n)


def solve_are(A, B, tol: float = 1e-10, max_iter: int = 60) -> RiccatiSolution:
    """Newton-Kleinman iteration for ``A^T S + S A - 2 S B B^T S + I = 0``.

    Starts from the Lyapunov solution ``A^T S0 + S0 A = -I``; each step
    solves ``Ac^T S + S Ac = -I - 2 S_j B B^T S_j`` with the closed-loop
    matrix ``Ac = A - 2 B B^T S_j`` (Bartels-Stewart).
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ShapeError(f"incompatible shapes A{A.shape}, B{B.shape}")
    if not np.any(B):
        raise StabilityError("B = 0: the pair (A, B) is not controllable")
    if not is_hurwitz(A):
        raise StabilityError("A must be Hurwitz to start Newton-Kleinman from the Lyapunov solution")
    I = np.eye(n)
    BB = B @ B.T
    S = solve_continuous_lyapunov(A.T, -I)
    S = 0.5 * (S + S.T)
    res = np.linalg.norm(riccati_residual(A, B, S))
    history = [res]
    n_iter = 0
    while res > tol and n_iter < max_iter:
        n_iter += 1
        Ac = A - 2.0 * BB @ S
        if not is_hurwitz(Ac):
            raise RiccatiError(f"closed-loop matrix lost the Hurwitz property at iteration {n_iter}")
        S = solve_continuous_lyapunov(Ac.T, -I - 2.0 * S @ BB @ S)
        S = 0.5 * (S + S.T)
        res = np.linalg.norm(riccati_residual(A, B, S))
        history.append(res)
        # no progress over the last few Newton steps
        if len(history) > 6 and res > 0.5 * min(history[:-4]):
            break
    if res > tol:
        raise RiccatiError(f"Riccati residual stalled at {res:.3e} (tol {tol:.1e}) after {n_iter} iterations")
    return RiccatiSolution(S, float(np.trace(BB @ S)), float(res), n_iter)


@dataclass
class ReducedSystem:
    A_bar: np.ndarray
    B_bar: np.ndarray
    Q: float
    fast_covariance: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.A_bar, self.B_bar, self.Q))


def reduce(sys: SlowFastLinearSystem) -> ReducedSystem:
    """Homogenized ``(A_bar, B_bar, Q)``; ``Q = 2/beta tr X`` with ``A22 X + X A22^T = -B2 B2^T``."""
    ev, top = _eigs_ok(sys.A22)
    if top >= 0:
        raise ReductionError(f"A22 is not Hurwitz: eigenvalue {ev[np.argmax(ev.real)]:.6g}")
    try:
        W = np.linalg.solve(sys.A22, np.hstack([sys.A21, sys.B2]))
    except np.linalg.LinAlgError as exc:
        raise ReductionError("A22 is singular") from exc
    k = sys.k
    A_bar = sys.A11 - sys.A12 @ W[:, :k]
    B_bar = math.sqrt(2.0) * (sys.B1 - sys.A12 @ W[:, k:])
    X = solve_continuous_lyapunov(sys.A22, -sys.B2 @ sys.B2.T)
    Q = 2.0 / sys.beta * float(np.trace(X))
    return ReducedSystem(A_bar, B_bar, Q, X)


def reduced_eta(red: ReducedSystem, sol: RiccatiSolution, include_Q: bool = True) -> float:
    eta = float(np.trace(red.B_bar @ red.B_bar.T @ sol.S))
    return eta + red.Q if include_Q else eta


@dataclass
class ConvergenceRow:
    epsilon: float
    err_11: float
    norm_residual_block: float
    eigenvalues: np.ndarray
    are_residual: float
    error: Optional[str] = None


@dataclass
class ConvergenceStudy:
    rows: list
    reduced: RiccatiSolution
    reduced_system: ReducedSystem

    def slope(self) -> float:
        good = [r for r in self.rows if r.error is None and r.err_11 > 0]
        if len(good) < 2:
            return math.nan
        return float(np.polyfit(np.log([r.epsilon for r in good]), np.log([r.err_11 for r in good]), 1)[0])

    def to_csv(self, path) -> None:
        k = self.reduced.S.shape[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "err_11", "norm_residual_block"] + [f"eig_{i + 1}" for i in range(k)]
                       + ["are_residual", "error"])
            red_eigs = np.sort(np.linalg.eigvalsh(self.reduced.S))[::-1]
            w.writerow(["0", "0", "0"] + [repr(float(v)) for v in red_eigs]
                       + [repr(self.reduced.residual_norm), "reduced"])
            for r in self.rows:
                eigs = [repr(float(v)) for v in r.eigenvalues] if r.error is None else ["nan"] * k
                w.writerow([repr(float(r.epsilon)), repr(float(r.err_11)), repr(float(r.norm_residual_block))]
                           + eigs + [repr(float(r.are_residual)), r.error or ""])


def convergence_study(sys_template: SlowFastLinearSystem, eps_list: Sequence[float], tol: float = 1e-10):
    """Compare the full Riccati solution's slow block with the reduced solution.

    Each row holds ``||S_bar - S_11||_F``, the Frobenius norm of ``S`` with
    its 1-1 block zeroed, and the ``k`` largest eigenvalues of ``S``.
    Per-eps failures are recorded in the row rather than raised.
    """
    red = reduce(sys_template)
    red_sol = solve_are(red.A_bar, red.B_bar, tol)
    k = sys_template.k
    rows = []
    for eps in eps_list:
        try:
            A, B = assemble(sys_template.with_epsilon(eps))
            sol = solve_are(A, B, tol)
            S = sol.S
            Sr = S.copy()
            Sr[:k, :k] = 0.0
            eigs = np.sort(np.linalg.eigvalsh(S))[::-1][:k]
            rows.append(ConvergenceRow(float(eps), float(np.linalg.norm(red_sol.S - S[:k, :k])),
                                       float(np.linalg.norm(Sr)), eigs, sol.residual_norm))
        except (RiccatiError, StabilityError, np.linalg.LinAlgError) as exc:
            rows.append(ConvergenceRow(float(eps), math.nan, math.nan, np.full(k, math.nan), math.nan, str(exc)))
    return ConvergenceStudy(rows, red_sol, red)


# -- block-matrix files --------------------------------------------------------

_BLOCKS = ("A11", "A12", "A21", "A22", "B1", "B2")


class FormatError(ValueError):
    def __init__(self, line_no, msg):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}")


def save_system(sys: SlowFastLinearSystem, path) -> None:
    """Write the plain-text block format read by :func:`load_system`."""
    lines = [FORMAT_HEADER, f"k {sys.k}", f"n {sys.n}", f"l {sys.l}", f"beta {sys.beta!r}",
             f"epsilon {sys.epsilon!r}"]
    for name in _BLOCKS:
        M = getattr(sys, name)
        lines.append(f"{name} {M.shape[0]} {M.shape[1]}")
        for row in M:
            lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_system(path, validate: bool = True) -> SlowFastLinearSystem:
    """Read a block-matrix file.

    Format: a version line ``msoc-lqr-blocks v1``; scalar lines ``k``, ``n``,
    ``l``, ``beta`` and optionally ``epsilon``; then for each of A11, A12,
    A21, A22, B1, B2 a line ``NAME rows cols`` followed by ``rows`` lines of
    whitespace-separated values.  Blank lines and ``#`` comments are ignored.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(raw)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines or lines[0][1] != FORMAT_HEADER:
        raise FormatError(lines[0][0] if lines else 1, f"expected header {FORMAT_HEADER!r}")
    pos = 1
    scalars = {}
    while pos < len(lines) and lines[pos][1].split()[0] not in _BLOCKS:
        no, ln = lines[pos]
        parts = ln.split()
        if len(parts) != 2 or parts[0] not in ("k", "n", "l", "beta", "epsilon"):
            raise FormatError(no, f"unexpected line {ln!r}")
        try:
            scalars[parts[0]] = int(parts[1]) if parts[0] in ("k", "n", "l") else float(parts[1])
        except ValueError:
            raise FormatError(no, f"cannot parse value {parts[1]!r}") from None
        pos += 1
    for key in ("k", "n", "l", "beta"):
        if key not in scalars:
            raise FormatError(lines[min(pos, len(lines) - 1)][0], f"missing scalar {key!r}")
    blocks = {}
    while pos < len(lines):
        no, ln = lines[pos]
        parts = ln.split()
        if parts[0] not in _BLOCKS or len(parts) != 3:
            raise FormatError(no, f"expected block header, got {ln!r}")
        name = parts[0]
        try:
            r, c = int(parts[1]), int(parts[2])
        except ValueError:
            raise FormatError(no, "block dimensions must be integers") from None
        rows = []
        for j in range(r):
            if pos + 1 + j >= len(lines):
                raise FormatError(no, f"block {name} truncated")
            rno, rln = lines[pos + 1 + j]
            try:
                vals = [float(v) for v in rln.split()]
            except ValueError:
                raise FormatError(rno, f"non-numeric entry in {name}") from None
            if len(vals) != c:
                raise FormatError(rno, f"{name} row has {len(vals)} entries, expected {c}")
            rows.append(vals)
        blocks[name] = np.array(rows, dtype=float).reshape(r, c)
        pos += 1 + r
    missing = [b for b in _BLOCKS if b not in blocks]
    if missing:
        raise FormatError(lines[-1][0], f"missing blocks {missing}")
    k, n, l = scalars["k"], scalars["n"], scalars["l"]
    try:
        sys = SlowFastLinearSystem(**blocks, epsilon=scalars.get("epsilon", 1.0), beta=scalars["beta"])
    except ShapeError as exc:
        raise FormatError(lines[-1][0], str(exc)) from None
    if (sys.k, sys.n, sys.l) != (k, n, l):
        raise FormatError(lines[0][0], f"header says k={k}, n={n}, l={l}; blocks give {sys.k}, {sys.n}, {sys.l}")
    if validate:
        sys.validate()
    return sys
