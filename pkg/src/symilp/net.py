"""Message-passing network over the bipartite encoding, with Adam training.

Each layer runs two directed passes. The constraint side first aggregates a
learned message from every incident edge (sum over edges, no degree
normalization) and mixes it with its previous embedding; the variable side
then does the same against the already-updated constraint embeddings. A
final two-layer head with a sigmoid turns variable embeddings into values
in (0,1), interpreted as probabilities for binary variables.

All tensors are float64 and every reduction runs in a fixed order, so a
fixed seed and data order reproduce training bit-for-bit. Checkpoints are a
versioned binary file (flat little-endian float64 parameter dump) plus a
JSON sidecar describing shapes and configuration.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .graph import CON_FEATS, VAR_FEATS, BipartiteGraph

SE = "se"
BCE = "bce"

CHECKPOINT_MAGIC = b"GNN1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GnnConfig:
    hidden: int = 64
    layers: int = 2
    var_feats: int = VAR_FEATS
    con_feats: int = CON_FEATS

    def __post_init__(self):
        if self.hidden < 1 or self.layers < 1:
            raise ValueError("hidden width and layer count must be >= 1")


@dataclass
class GnnModel:
    cfg: GnnConfig
    params: dict[str, np.ndarray]  # name -> float64 array, insertion-ordered

    def param_names(self) -> list[str]:
        return list(self.params.keys())


def _mlp_shapes(d_in: int, d_hidden: int, d_out: int):
    return [("W1", (d_in, d_hidden)), ("b1", (d_hidden,)), ("W2", (d_hidden, d_out)), ("b2", (d_out,))]


def _param_layout(cfg: GnnConfig) -> list[tuple[str, tuple]]:
    h = cfg.hidden
    layout: list[tuple[str, tuple]] = [
        ("emb_v.W", (cfg.var_feats, h)),
        ("emb_v.b", (h,)),
        ("emb_c.W", (cfg.con_feats, h)),
        ("emb_c.b", (h,)),
    ]
    for l in range(cfg.layers):
        for block, d_in in (
            (f"layer{l}.g_c", 2 * h + 1),
            (f"layer{l}.f_c", 2 * h),
            (f"layer{l}.g_v", 2 * h + 1),
            (f"layer{l}.f_v", 2 * h),
        ):
            for suffix, shape in _mlp_shapes(d_in, h, h):
                layout.append((f"{block}.{suffix}", shape))
    for suffix, shape in _mlp_shapes(h, h, 1):
        layout.append((f"out.{suffix}", shape))
    return layout


def init(cfg: GnnConfig, seed: int) -> GnnModel:
    """Deterministic He-style uniform initialization; biases start at zero.

    Second layers of every perceptron start damped by 1/4: sum aggregation
    over a node's incident edges grows activations by roughly the typical
    degree per pass, and without the damping the output logits saturate the
    sigmoid at initialization.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_layout(cfg):
        if name.endswith(".b1") or name.endswith(".b2") or name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / shape[0])
            if name.endswith(".W2"):
                bound /= 4.0
            params[name] = rng.uniform(-bound, bound, size=shape)
    return GnnModel(cfg, params)


def _mlp(params, prefix: str, x: tape.Node) -> tape.Node:
    h = tape.relu(tape.add(tape.matmul(x, params[prefix + ".W1"]), params[prefix + ".b1"]))
    return tape.add(tape.matmul(h, params[prefix + ".W2"]), params[prefix + ".b2"])


def _forward_tape(model: GnnModel, graph: BipartiteGraph):
    """Build the forward graph; returns (logits node, param leaf dict)."""
    p = {name: tape.leaf(arr) for name, arr in model.params.items()}
    v = tape.relu(tape.add(tape.matmul(tape.leaf(graph.var_feats), p["emb_v.W"]), p["emb_v.b"]))
    c = tape.relu(tape.add(tape.matmul(tape.leaf(graph.con_feats), p["emb_c.W"]), p["emb_c.b"]))
    w = tape.leaf(graph.edge_weight.reshape(-1, 1))

    for l in range(model.cfg.layers):
        ce = tape.gather_rows(c, graph.edge_con)
        ve = tape.gather_rows(v, graph.edge_var)
        msg_c = _mlp(p, f"layer{l}.g_c", tape.concat_cols([ce, ve, w]))
        agg_c = tape.scatter_add_rows(msg_c, graph.edge_con, graph.num_cons)
        c = _mlp(p, f"layer{l}.f_c", tape.concat_cols([c, agg_c]))

        ce = tape.gather_rows(c, graph.edge_con)
        msg_v = _mlp(p, f"layer{l}.g_v", tape.concat_cols([ce, ve, w]))
        agg_v = tape.scatter_add_rows(msg_v, graph.edge_var, graph.num_vars)
        v = _mlp(p, f"layer{l}.f_v", tape.concat_cols([v, agg_v]))

    logits = _mlp(p, "out", v)
    return logits, p


def forward(model: GnnModel, graph: BipartiteGraph) -> np.ndarray:
    """Predicted values in (0,1), one per variable node."""
    logits, _ = _forward_tape(model, graph)
    return tape.sigmoid(logits).data.reshape(-1)


def loss_and_grad(
    model: GnnModel,
    graph: BipartiteGraph,
    target: np.ndarray,
    loss_kind: str = BCE,
    target_idx: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss (mean over predicted variables) and its gradient in parameters.

    `target_idx` restricts both prediction and target to a subset of
    variables; the default covers every variable node.
    """
    logits, p = _forward_tape(model, graph)
    if target_idx is not None:
        idx = np.asarray(target_idx, dtype=np.intp)
        logits = tape.gather_rows(logits, idx)
        t = np.asarray(target, dtype=float)[idx].reshape(-1, 1)
    else:
        t = np.asarray(target, dtype=float).reshape(-1, 1)
    if logits.data.shape != t.shape:
        raise ValueError(f"target shape {t.shape} incompatible with {logits.data.shape}")
    if loss_kind == BCE:
        if np.any((t != 0.0) & (t != 1.0)):
            raise ValueError("BCE target must be binary")
        loss = tape.bce_with_logits_mean(logits, t)
    elif loss_kind == SE:
        loss = tape.se_mean(tape.sigmoid(logits), t)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    tape.backward(loss)
    grads = {
        name: (node.grad if node.grad is not None else np.zeros_like(node.data))
        for name, node in p.items()
    }
    return float(loss.data), grads


def sample_loss(
    model: GnnModel,
    graph: BipartiteGraph,
    target: np.ndarray,
    loss_kind: str = BCE,
    target_idx: np.ndarray | None = None,
) -> float:
    """Loss only (no tape kept beyond the call)."""
    probs = forward(model, graph)
    t = np.asarray(target, dtype=float)
    if target_idx is not None:
        idx = np.asarray(target_idx, dtype=np.intp)
        probs, t = probs[idx], t[idx]
    if loss_kind == SE:
        d = probs - t
        return float(np.mean(d * d))
    if loss_kind == BCE:
        ph = np.clip(probs, 1e-12, 1.0 - 1e-12)
        return float(-np.mean(t * np.log(ph) + (1.0 - t) * np.log1p(-ph)))
    raise ValueError(f"unknown loss kind {loss_kind!r}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(model: GnnModel, state: AdamState, grads: dict[str, np.ndarray]) -> GnnModel:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, param in model.params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model


# ---------------------------------------------------------------------------
# Flat parameter views and checkpoints


def flatten_params(model: GnnModel) -> np.ndarray:
    return np.concatenate([model.params[name].reshape(-1) for name in model.param_names()])


def unflatten_params(model: GnnModel, flat: np.ndarray) -> None:
    off = 0
    for name in model.param_names():
        size = model.params[name].size
        model.params[name][...] = flat[off : off + size].reshape(model.params[name].shape)
        off += size
    if off != flat.size:
        raise ValueError("flat vector size mismatch")


def save_checkpoint(model: GnnModel, path: str) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "hidden": model.cfg.hidden,
            "layers": model.cfg.layers,
            "var_feats": model.cfg.var_feats,
            "con_feats": model.cfg.con_feats,
        },
        "params": [[name, list(model.params[name].shape)] for name in model.param_names()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    flat = flatten_params(model).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(flat.tobytes())
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> GnnModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    cfg = GnnConfig(**header["config"])
    model = init(cfg, seed=0)
    expected = [[name, list(model.params[name].shape)] for name in model.param_names()]
    if expected != header["params"]:
        raise ValueError("checkpoint parameter layout mismatch")
    unflatten_params(model, flat)
    return model
