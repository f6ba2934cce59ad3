"""Optimal label alignment within a column-symmetry group.

Given a prediction matrix Xhat (p x q, entries in (0,1)) and a 0/1 label
matrix X on the same grid, we look for the group element pi minimizing the
loss between Xhat and the column-permuted label [X[:,pi(0)], ..., X[:,pi(q-1)]].

For cyclic and dihedral groups the q (resp. 2q) elements are evaluated
directly. For the symmetric group both supported losses decompose as a sum
of per-column terms cost(source column a -> target slot b), so the search
over all q! permutations collapses to a linear assignment problem. Its LP
relaxation has a totally unimodular constraint matrix, hence an integral
optimum; we solve it with the Hungarian method, which is exact. A brute
force path over S_q exists in the test suite as an independent oracle.

Ties between equal-cost optima are broken toward the lexicographically
smallest mapping so that repeated runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import perm as pm

SE = "se"
BCE = "bce"
LOSS_KINDS = (SE, BCE)

BCE_CLIP = 1e-7
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AlignmentProblem:
    xhat: np.ndarray  # p x q prediction on the grid
    x: np.ndarray  # p x q 0/1 label on the grid
    loss: str  # "se" or "bce"
    group_kind: str  # perm.SYMMETRIC / CYCLIC / DIHEDRAL

    def __post_init__(self):
        if self.xhat.shape != self.x.shape:
            raise ValueError(f"shape mismatch {self.xhat.shape} vs {self.x.shape}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.group_kind not in pm.GROUP_KINDS:
            raise ValueError(f"unknown group kind {self.group_kind!r}")


def column_loss_matrix(xhat: np.ndarray, x: np.ndarray, loss: str) -> np.ndarray:
    if loss == SE:
        return build_cost_se(xhat, x)
    if loss == BCE:
        return build_cost_bce(xhat, x)
    raise ValueError(f"unknown loss {loss!r}")


def build_cost_se(xhat, x) -> np.ndarray:
    """W[a, b] = squared error of putting label column a at prediction slot b.

    Summing W over an assignment pi (slot b receives column pi(b)) gives the
    full squared-error loss of the permuted label, so minimizing the
    assignment minimizes the loss.
    """
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    # (p,q,1) label columns against (p,1,q) prediction columns -> (q_src, q_dst)
    diff = xhat[:, None, :] - x[:, :, None]
    return np.einsum("pab,pab->ab", diff, diff)


def build_cost_bce(xhat, x) -> np.ndarray:
    """W[a, b] = binary cross-entropy of label column a against prediction slot b."""
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    if np.any(xhat <= 0.0) or np.any(xhat >= 1.0):
        raise ValueError("BCE cost needs predictions strictly inside (0,1)")
    log_p = np.log(xhat)
    log_q = np.log1p(-xhat)
    # W[a,b] = -sum_p x[p,a]*log(xhat[p,b]) + (1-x[p,a])*log(1-xhat[p,b])
    return -(x.T @ log_p + (1.0 - x).T @ log_q)


def permuted_loss(xhat, x, p: pm.Permutation, loss: str) -> float:
    """Direct evaluation of the loss against the column-permuted label (summed)."""
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)[:, list(p.mapping)]
    if loss == SE:
        d = xhat - x
        return float(np.sum(d * d))
    if loss == BCE:
        xh = np.clip(xhat, BCE_CLIP, 1.0 - BCE_CLIP)
        return float(-np.sum(x * np.log(xh) + (1.0 - x) * np.log1p(-xh)))
    raise ValueError(f"unknown loss {loss!r}")


def _assignment_cost(w: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(w)
    return float(w[rows, cols].sum())


def hungarian(w: np.ndarray) -> tuple[pm.Permutation, float]:
    """Minimum-cost perfect matching on a square cost matrix.

    Returns the permutation pi with slot b assigned source pi(b) and the
    matching's total cost. Among equal-cost optima the lexicographically
    smallest mapping is returned (greedy slot-by-slot refinement, re-solving
    the residual assignment to certify each candidate keeps the optimum).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"cost matrix must be square, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("cost matrix has non-finite entries")
    q = w.shape[0]
    best = _assignment_cost(w)
    tol = _TIE_TOL * max(1.0, abs(best))

    mapping: list[int] = []
    free_sources = list(range(q))
    fixed_cost = 0.0
    for b in range(q):
        chosen = None
        for a in free_sources:
            cand_fixed = fixed_cost + w[a, b]
            rest_src = [s for s in free_sources if s != a]
            if rest_src:
                rest = _assignment_cost(w[np.ix_(rest_src, range(b + 1, q))])
            else:
                rest = 0.0
            if cand_fixed + rest <= best + tol:
                chosen = a
                fixed_cost = cand_fixed
                break
        assert chosen is not None, "assignment refinement lost the optimum"
        mapping.append(chosen)
        free_sources.remove(chosen)
    return pm.Permutation(tuple(mapping)), float(w[mapping, range(q)].sum())


def _enumerated_best(problem: AlignmentProblem, elements) -> tuple[pm.Permutation, float]:
    best_perm_ = None
    best_loss = np.inf
    xh = problem.xhat
    if problem.loss == BCE:
        xh = np.clip(xh, BCE_CLIP, 1.0 - BCE_CLIP)
    for p in elements:
        val = permuted_loss(xh, problem.x, p, problem.loss)
        if val < best_loss or (val == best_loss and p.mapping < best_perm_.mapping):
            best_perm_, best_loss = p, val
    return best_perm_, best_loss


def best_perm(problem: AlignmentProblem) -> tuple[pm.Permutation, float]:
    """Loss-minimizing group element and its directly evaluated loss.

    Symmetric groups go through the assignment reduction; cyclic and dihedral
    groups are enumerated exhaustively.
    """
    q = problem.x.shape[1]
    if problem.group_kind == pm.CYCLIC:
        return _enumerated_best(problem, pm.enumerate_cyclic(q).elements)
    if problem.group_kind == pm.DIHEDRAL:
        return _enumerated_best(problem, pm.enumerate_dihedral(q).elements)
    xh = problem.xhat
    if problem.loss == BCE:
        xh = np.clip(xh, BCE_CLIP, 1.0 - BCE_CLIP)
    w = column_loss_matrix(xh, problem.x, problem.loss)
    p, _ = hungarian(w)
    return p, permuted_loss(xh, problem.x, p, problem.loss)
