"""Three-way graph transformer over the ligand, pocket and complex graphs.

Every block runs edge-biased multi-head attention on each graph
independently, then mixes information into the complex graph with the
intermolecular attention operator. Parameter names follow
``embed.{tower}.{node,pe}``, ``block{b}.{tower}.{role}``,
``block{b}.inter.{role}`` and ``readout.{w1,b1,w2,b2}``; see
``BLOCK_ROLES`` and ``INTER_ROLES``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ConfigError, EmptyGraphError, ShapeError
from .featurize import (
    D_NODE, LIGAND, RECEPTOR, ComplexGraph, FeatureConfig, MolGraph, apply_sign_mode,
    featurize_complex,
)

TOWERS = ("ligand", "receptor", "complex")
BLOCK_ROLES = (
    "q", "k", "v", "o", "edge",
    "ffn1_w", "ffn1_b", "ffn2_w", "ffn2_b",
    "ln1_g", "ln1_b", "ln2_g", "ln2_b",
)
INTER_ROLES = ("u_self", "u_counterpart", "u_other", "ctx")
READOUT_ROLES = ("w1", "b1", "w2", "b2")
_AGGREGATIONS = ("mean", "sum")
_HEAD_KINDS = ("activity", "pose")


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 8
    n_blocks: int = 4
    d_ffn: int = 128
    dropout: float = 0.1
    k_pe: int = 8
    d_node: int = D_NODE
    d_edge: int = 14
    one_way: bool = False
    head_kind: str = "activity"
    aggregation: str = "mean"

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.aggregation not in _AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {_AGGREGATIONS}")
        if self.head_kind not in _HEAD_KINDS:
            raise ConfigError(f"head_kind must be one of {_HEAD_KINDS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if min(self.d_model, self.n_heads, self.n_blocks, self.d_ffn, self.k_pe) < 1:
            raise ConfigError("model dimensions must be positive")

    @property
    def towers(self) -> tuple:
        return ("complex",) if self.one_way else TOWERS

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def for_features(cls, feat: FeatureConfig, **kw) -> "ModelConfig":
        return cls(k_pe=feat.k_pe, d_edge=feat.d_edge, **kw)


# ---------------------------------------------------------------- params


def init_params(cfg: ModelConfig, seed: int = 0) -> Dict[str, Tensor]:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    P: Dict[str, Tensor] = {}
    d = cfg.d_model

    def mat(name, fan_in, fan_out):
        bound = math.sqrt(1.0 / fan_in)
        P[name] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), True, name)

    def const(name, shape, value):
        P[name] = Tensor(np.full(shape, value, dtype=np.float64), True, name)

    for t in cfg.towers:
        mat(f"embed.{t}.node", cfg.d_node, d)
        mat(f"embed.{t}.pe", cfg.k_pe, d)
    for b in range(cfg.n_blocks):
        for t in cfg.towers:
            p = f"block{b}.{t}."
            for r in ("q", "k", "v", "o"):
                mat(p + r, d, d)
            mat(p + "edge", cfg.d_edge, d)
            mat(p + "ffn1_w", d, cfg.d_ffn)
            const(p + "ffn1_b", (cfg.d_ffn,), 0.0)
            mat(p + "ffn2_w", cfg.d_ffn, d)
            const(p + "ffn2_b", (d,), 0.0)
            const(p + "ln1_g", (d,), 1.0)
            const(p + "ln1_b", (d,), 0.0)
            const(p + "ln2_g", (d,), 1.0)
            const(p + "ln2_b", (d,), 0.0)
        if not cfg.one_way:
            for r in ("u_self", "u_counterpart", "u_other"):
                mat(f"block{b}.inter.{r}", d, 1)
            mat(f"block{b}.inter.ctx", d, d)
    mat("readout.w1", 3 * d, cfg.d_ffn)
    const("readout.b1", (cfg.d_ffn,), 0.0)
    mat("readout.w2", cfg.d_ffn, 1)
    const("readout.b2", (1,), 0.0)
    return P


def params_to_arrays(params: Dict[str, Tensor], cfg: ModelConfig) -> Dict[str, np.ndarray]:
    out = {name: t.data for name, t in params.items()}
    out["meta.n_heads"] = np.array(float(cfg.n_heads))
    out["meta.dropout"] = np.array(float(cfg.dropout))
    out["meta.one_way"] = np.array(float(cfg.one_way))
    out["meta.aggregation"] = np.array(float(_AGGREGATIONS.index(cfg.aggregation)))
    out["meta.head_kind"] = np.array(float(_HEAD_KINDS.index(cfg.head_kind)))
    return out


def params_from_arrays(arrays: Dict[str, np.ndarray]):
    """Rebuild ``(params, ModelConfig)``; structural sizes come from array shapes."""
    try:
        one_way = bool(arrays["meta.one_way"])
        tower = "complex"
        d_node, d_model = arrays[f"embed.{tower}.node"].shape
        k_pe = arrays[f"embed.{tower}.pe"].shape[0]
        d_edge = arrays[f"block0.{tower}.edge"].shape[0]
        d_ffn = arrays["readout.w1"].shape[1]
        n_blocks = len({k.split(".")[0] for k in arrays if k.startswith("block")})
        cfg = ModelConfig(
            d_model=int(d_model), n_heads=int(arrays["meta.n_heads"]), n_blocks=n_blocks,
            d_ffn=int(d_ffn), dropout=float(arrays["meta.dropout"]), k_pe=int(k_pe),
            d_node=int(d_node), d_edge=int(d_edge), one_way=one_way,
            head_kind=_HEAD_KINDS[int(arrays["meta.head_kind"])],
            aggregation=_AGGREGATIONS[int(arrays["meta.aggregation"])],
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckpointError(f"checkpoint lacks model structure: {exc}") from None
    expected = init_params(cfg, seed=0)
    params = {}
    for name, ref in expected.items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        arr = np.array(arrays[name], dtype=np.float64)
        if arr.shape != ref.shape:
            raise CheckpointError(f"parameter {name!r} has shape {arr.shape}, expected {ref.shape}")
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"parameter {name!r} holds non-finite values")
        params[name] = Tensor(arr, True, name)
    return params, cfg


def save_model(path, params: Dict[str, Tensor], cfg: ModelConfig) -> None:
    ad.save_checkpoint(path, params_to_arrays(params, cfg))


def load_model(path):
    return params_from_arrays(ad.load_checkpoint(path))


# ---------------------------------------------------------------- inputs


@dataclass
class TowerInput:
    """One graph with self-loops appended, in the layout the attention consumes."""

    n: int
    node_feat: np.ndarray
    pos_enc: np.ndarray
    recv: np.ndarray
    send: np.ndarray
    edge_feat: np.ndarray

    @classmethod
    def from_graph(cls, g: MolGraph) -> "TowerInput":
        if g.n_nodes == 0:
            raise EmptyGraphError("graph with zero nodes")
        loops = np.arange(g.n_nodes, dtype=np.int64)
        edges = g.edges.reshape(-1, 2)
        recv = np.concatenate([edges[:, 0], loops])
        send = np.concatenate([edges[:, 1], loops])
        ef = np.concatenate([g.edge_feat.reshape(len(edges), -1),
                             np.zeros((g.n_nodes, g.edge_feat.shape[1]))])
        return cls(g.n_nodes, g.node_feat, g.pos_enc, recv, send, ef)


@dataclass
class ComplexInputs:
    towers: Dict[str, TowerInput]
    molecule_of: np.ndarray
    lig_map: np.ndarray
    rec_map: np.ndarray

    @classmethod
    def from_graphs(cls, lig_g: MolGraph, rec_g: MolGraph, cg: ComplexGraph) -> "ComplexInputs":
        towers = {
            "ligand": TowerInput.from_graph(lig_g),
            "receptor": TowerInput.from_graph(rec_g),
            "complex": TowerInput.from_graph(cg.graph),
        }
        return cls(towers, cg.molecule_of, cg.lig_map, cg.rec_map)

    @property
    def ligand_rows(self) -> np.ndarray:
        return np.nonzero(self.molecule_of == LIGAND)[0]

    @property
    def receptor_rows(self) -> np.ndarray:
        return np.nonzero(self.molecule_of == RECEPTOR)[0]


def _head_matrix(cfg: ModelConfig) -> np.ndarray:
    """[d_model x n_heads] indicator summing each head's channels."""
    return np.kron(np.eye(cfg.n_heads), np.ones((cfg.head_dim, 1)))


# ---------------------------------------------------------------- layers


def embed(tower: TowerInput, params, name: str, cfg: ModelConfig,
          sign_mode: str = "canonical", rng=None) -> Tensor:
    """Initial embedding ``node_feat @ W_node + pos_enc @ W_pe``."""
    if tower.node_feat.shape[1] != cfg.d_node or tower.pos_enc.shape[1] != cfg.k_pe:
        raise ShapeError(
            f"embed: features {tower.node_feat.shape} / PE {tower.pos_enc.shape} do not match "
            f"d_node={cfg.d_node}, k_pe={cfg.k_pe}"
        )
    pe = apply_sign_mode(tower.pos_enc, sign_mode, rng)
    return ad.add(ad.matmul(tower.node_feat, params[f"embed.{name}.node"]),
                  ad.matmul(pe, params[f"embed.{name}.pe"]))


def gt_layer_forward(H: Tensor, tower: TowerInput, params, prefix: str, cfg: ModelConfig,
                     rng=None, training: bool = False, attention: Optional[list] = None) -> Tensor:
    """Edge-biased multi-head attention over neighbours plus self, then the FFN sub-layer.

    ``prefix`` is e.g. ``"block0.ligand."``. When ``attention`` is a list the
    per-edge weights ``[E + n, n_heads]`` are appended to it.
    """
    n = tower.n
    if n == 0:
        raise EmptyGraphError("graph with zero nodes")
    if H.shape != (n, cfg.d_model):
        raise ShapeError(f"gt_layer_forward: H {H.shape} vs graph of {n} nodes")
    heads = _head_matrix(cfg)
    inv_scale = 1.0 / math.sqrt(cfg.head_dim)
    p = lambda r: params[prefix + r]  # noqa: E731

    Q = ad.matmul(H, p("q"))
    K = ad.matmul(H, p("k"))
    V = ad.matmul(H, p("v"))
    qk = ad.mul(ad.gather_rows(Q, tower.recv), ad.gather_rows(K, tower.send))
    logits = ad.scale(ad.matmul(qk, heads), inv_scale)
    # self-loop rows of edge_feat are zero, so their bias is zero
    edge_bias = ad.scale(ad.matmul(ad.matmul(tower.edge_feat, p("edge")), heads), inv_scale)
    alpha = ad.segment_softmax(ad.add(logits, edge_bias), tower.recv, n)
    if attention is not None:
        attention.append(alpha.data.copy())
    weights = ad.matmul(alpha, heads.T)
    msg = ad.mul(weights, ad.gather_rows(V, tower.send))
    agg = ad.scatter_add_rows(msg, tower.recv, n)
    out = ad.dropout(ad.matmul(agg, p("o")), cfg.dropout, rng, training)
    H1 = ad.layer_norm(ad.add(H, out), p("ln1_g"), p("ln1_b"))

    f = ad.relu(ad.add(ad.matmul(H1, p("ffn1_w")), p("ffn1_b")))
    f = ad.dropout(f, cfg.dropout, rng, training)
    f = ad.add(ad.matmul(f, p("ffn2_w")), p("ffn2_b"))
    f = ad.dropout(f, cfg.dropout, rng, training)
    return ad.layer_norm(ad.add(H1, f), p("ln2_g"), p("ln2_b"))


_SELECT = [np.eye(3)[:, [t]] for t in range(3)]


def intermolecular_attention(Hc: Tensor, Hl: Tensor, Hr: Tensor, inputs: ComplexInputs,
                             params, block: int, cfg: ModelConfig,
                             weights_out: Optional[list] = None) -> Tensor:
    """Update complex-graph nodes from (self, counterpart, opposite-molecule pool).

    For complex node i the candidates are its own embedding, the embedding of
    the same atom in its molecule's standalone tower, and the mean embedding
    of the other molecule's tower. Each candidate s gets the logit
    ``u_t . tanh(W_ctx s)``; the softmax-weighted sum is layer-normalized.
    """
    if cfg.one_way:
        return Hc
    lig_rows, rec_rows = inputs.ligand_rows, inputs.receptor_rows
    nl, nr = len(lig_rows), len(rec_rows)
    stacked = ad.concat([ad.gather_rows(Hl, inputs.lig_map[lig_rows]),
                         ad.gather_rows(Hr, inputs.rec_map[rec_rows])], axis=0)
    pool_l, pool_r = ad.mean_rows(Hl), ad.mean_rows(Hr)
    other = ad.concat([ad.gather_rows(pool_r, np.zeros(nl, dtype=np.int64)),
                       ad.gather_rows(pool_l, np.zeros(nr, dtype=np.int64))], axis=0)
    order = np.concatenate([lig_rows, rec_rows])
    if not np.array_equal(order, np.arange(nl + nr)):
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        stacked = ad.gather_rows(stacked, inv)
        other = ad.gather_rows(other, inv)

    candidates = (Hc, stacked, other)
    ctx = params[f"block{block}.inter.ctx"]
    logits = [
        ad.matmul(ad.tanh(ad.matmul(s, ctx)), params[f"block{block}.inter.{r}"])
        for s, r in zip(candidates, ("u_self", "u_counterpart", "u_other"))
    ]
    w = ad.row_softmax(ad.concat(logits, axis=1))
    if weights_out is not None:
        weights_out.append(w.data.copy())
    mixed = None
    for t, s in enumerate(candidates):
        term = ad.mul(ad.matmul(w, _SELECT[t]), s)
        mixed = term if mixed is None else ad.add(mixed, term)
    return ad.layer_norm(mixed)


def igt_block(state: Dict[str, Tensor], inputs: ComplexInputs, params, block: int,
              cfg: ModelConfig, rng=None, training: bool = False, trace: Optional[dict] = None):
    """One block: per-graph attention layers, then intermolecular attention."""
    new = {}
    for t in cfg.towers:
        att = None if trace is None else trace.setdefault(f"block{block}.{t}", [])
        new[t] = gt_layer_forward(state[t], inputs.towers[t], params, f"block{block}.{t}.",
                                  cfg, rng, training, att)
    if not cfg.one_way:
        wo = None if trace is None else trace.setdefault(f"block{block}.inter", [])
        new["complex"] = intermolecular_attention(
            new["complex"], new["ligand"], new["receptor"], inputs, params, block, cfg, wo)
    return new


def readout(state: Dict[str, Tensor], inputs: ComplexInputs, params, cfg: ModelConfig) -> Tensor:
    """Pool each tower, concatenate, and map through the two-layer head to a [1x1] logit."""
    pool = ad.mean_rows if cfg.aggregation == "mean" else ad.sum_rows
    Hc = state["complex"]
    if cfg.one_way:
        g_l = pool(ad.gather_rows(Hc, inputs.ligand_rows))
        g_r = pool(ad.gather_rows(Hc, inputs.receptor_rows))
    else:
        g_l, g_r = pool(state["ligand"]), pool(state["receptor"])
    z = ad.concat([g_l, g_r, pool(Hc)], axis=1)
    h = ad.relu(ad.add(ad.matmul(z, params["readout.w1"]), params["readout.b1"]))
    return ad.add(ad.matmul(h, params["readout.w2"]), params["readout.b2"])


def forward(inputs: ComplexInputs, params, cfg: ModelConfig, sign_mode: str = "canonical",
            rng=None, training: bool = False, trace: Optional[dict] = None):
    """Run embed, all blocks and readout; returns ``(logit, final state)``."""
    state = {t: embed(inputs.towers[t], params, t, cfg, sign_mode, rng) for t in cfg.towers}
    for b in range(cfg.n_blocks):
        state = igt_block(state, inputs, params, b, cfg, rng, training, trace)
    return readout(state, inputs, params, cfg), state


def probability(logit: Tensor) -> float:
    return float(ad.sigmoid(logit).data.reshape(-1)[0])


def prepare_inputs(receptor, ligand, feat_cfg: FeatureConfig) -> ComplexInputs:
    return ComplexInputs.from_graphs(*featurize_complex(receptor, ligand, feat_cfg))


def predict_molecules(receptor, ligand, params, cfg: ModelConfig, feat_cfg: FeatureConfig) -> float:
    """Binding probability for one pose; canonical PE signs, no dropout."""
    inputs = prepare_inputs(receptor, ligand, feat_cfg)
    logit, _ = forward(inputs, params, cfg)
    return probability(logit)


def predict(receptor_path, ligand_path, params, cfg: ModelConfig, feat_cfg: FeatureConfig,
            pose_index: int = 0) -> float:
    from .structio import read_pdb, read_structure

    receptor = read_pdb(receptor_path)
    poses = read_structure(ligand_path)
    if pose_index >= len(poses):
        raise IndexError(f"{ligand_path} has {len(poses)} poses, asked for index {pose_index}")
    return predict_molecules(receptor, poses[pose_index], params, cfg, feat_cfg)
