"""SPD linear solves for the implicit parts of the steppers."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure

SOLVERS = ("cg", "direct")


class SPDSolver:
    """Solve ``A x = b`` for a fixed sparse SPD matrix.

    ``method="cg"`` runs Jacobi-preconditioned conjugate gradients to a
    relative residual of ``tol``.  ``method="direct"`` factorizes once with
    the natural ordering; on the (diagonally dominant) M-matrices built by
    the steppers this is pivot-free, so a nonnegative right side gives an
    exactly nonnegative solution.
    """

    def __init__(self, matrix: sp.spmatrix, method: str = "cg", tol: float = 1e-12):
        if method not in SOLVERS:
            raise ValueError(f"unknown linear solver {method!r}")
        self.matrix = sp.csc_matrix(matrix) if method == "direct" else sp.csr_matrix(matrix)
        self.method = method
        self.tol = tol
        if method == "direct":
            self._lu = spla.splu(
                self.matrix, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        else:
            diag = self.matrix.diagonal()
            if np.any(diag <= 0):
                raise SolverFailure("matrix has a nonpositive diagonal entry")
            self._precond = sp.diags(1.0 / diag)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            return self._lu.solve(b)
        if not np.any(b):
            return np.zeros_like(b)
        x, info = spla.cg(
            self.matrix, b, rtol=self.tol, atol=0.0, M=self._precond,
            maxiter=10 * b.size + 100,
        )
        if info != 0:
            raise SolverFailure(f"conjugate gradients did not converge (info={info})")
        return x
