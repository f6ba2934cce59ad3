"""Bipartite-graph encoding of an ILP for the prediction model.

Variables and constraints become the two node sets; every nonzero
coefficient A_jk becomes a weighted edge. Feature layout:

  variable node: [is_binary, is_integer, pos/n, lb, ub, c_k / max|c|]
  constraint node: [rhs / max(1, max|b|), sense one-hot (LE, GE, EQ)]

Edge weights are the raw coefficients scaled by the per-row max amplitude.
The encoding is a pure function of the instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import BINARY, EQ, GE, INTEGER, LE, IlpInstance

VAR_FEATS = 6
CON_FEATS = 4

_SENSE_SLOT = {LE: 1, GE: 2, EQ: 3}


@dataclass(frozen=True)
class FeatureConfig:
    # Kept for forward compatibility; the minimal feature set has no knobs.
    pass


@dataclass(frozen=True)
class BipartiteGraph:
    var_feats: np.ndarray  # n x VAR_FEATS
    con_feats: np.ndarray  # m x CON_FEATS
    edge_con: np.ndarray  # (E,) constraint index per edge
    edge_var: np.ndarray  # (E,) variable index per edge
    edge_weight: np.ndarray  # (E,)

    @property
    def num_vars(self) -> int:
        return self.var_feats.shape[0]

    @property
    def num_cons(self) -> int:
        return self.con_feats.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_var.shape[0]


def encode(instance: IlpInstance, cfg: FeatureConfig = FeatureConfig()) -> BipartiteGraph:
    n = instance.num_vars
    m = instance.num_constraints
    obj = np.asarray(instance.objective, dtype=float)
    obj_scale = float(np.max(np.abs(obj))) if n and np.any(obj) else 1.0

    var_feats = np.zeros((n, VAR_FEATS))
    for i, v in enumerate(instance.vars):
        var_feats[i] = (
            1.0 if v.kind == BINARY else 0.0,
            1.0 if v.kind == INTEGER else 0.0,
            v.pos / max(1, n),
            v.lb,
            v.ub,
            obj[i] / obj_scale,
        )

    rhs_scale = max(1.0, max((abs(c.rhs) for c in instance.constraints), default=1.0))
    con_feats = np.zeros((m, CON_FEATS))
    edge_con: list[int] = []
    edge_var: list[int] = []
    edge_weight: list[float] = []
    for j, con in enumerate(instance.constraints):
        con_feats[j, 0] = con.rhs / rhs_scale
        con_feats[j, _SENSE_SLOT[con.sense]] = 1.0
        row_scale = max((abs(v) for _, v in con.coeffs), default=1.0)
        for idx, val in con.coeffs:
            edge_con.append(j)
            edge_var.append(idx)
            edge_weight.append(val / row_scale)

    return BipartiteGraph(
        var_feats,
        con_feats,
        np.asarray(edge_con, dtype=np.intp),
        np.asarray(edge_var, dtype=np.intp),
        np.asarray(edge_weight, dtype=float),
    )
