"""Point-embedded transformer decoder.

L layers, each: query self-attention, query-basis cross-attention, local
point-cloud vector attention over kNN basis neighbors, and an FFN that
regresses a coordinate update.  Query points start at the hand template and
only the FFN moves them; the FFN's last layer is zero-initialized so an
untrained model reproduces template + root exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import basis, hooks, root_stage
from .hand import N_JOINTS, ToyHandModel, template_points
from .tensor import (ParamStore, Tensor, as_tensor, gather, layer_norm, relu,
                     reshape, softmax, swapaxes, tmean, transpose, tsum)


@dataclass
class ModelConfig:
    d: int = 64           # hidden feature dimension (= feature-grid channels)
    n_layers: int = 3
    k: int = 32           # kNN neighborhood of the vector attention
    n_heads: int = 4
    m_pts: int = 512      # basis point count
    q: int = 98           # query points: n_vertices + 21
    diameter: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.d % 4 != 0:
            raise ValueError(f"d={self.d} not divisible by 4 (sine PE)")
        if self.k > self.m_pts:
            raise ValueError(f"k={self.k} exceeds m_pts={self.m_pts}")
        if self.q <= N_JOINTS:
            raise ValueError(f"q={self.q} must exceed {N_JOINTS}")

    @property
    def n_vertices(self):
        return self.q - N_JOINTS

    def to_json(self, path):
        names = {"d": self.d, "L": self.n_layers, "k": self.k, "n_heads": self.n_heads,
                 "M_pts": self.m_pts, "Q": self.q, "diameter": self.diameter, "seed": self.seed}
        with open(path, "w") as f:
            json.dump(names, f, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            d = json.load(f)
        return cls(d=d["d"], n_layers=d["L"], k=d["k"], n_heads=d["n_heads"],
                   m_pts=d["M_pts"], q=d["Q"], diameter=d["diameter"], seed=d.get("seed", 0))

    def describe(self):
        return asdict(self)


@dataclass
class QuerySet:
    points: np.ndarray  # (Q, 3) template positions, constant at every forward pass
    embeddings: Tensor  # (Q, d) learnable


def init_queries(config: ModelConfig, template_pts, store: ParamStore) -> QuerySet:
    """Template-initialized query points plus learnable per-point embeddings."""
    pts = np.asarray(template_pts, dtype=np.float64)
    if pts.shape != (config.q, 3):
        raise ValueError(f"template has {pts.shape[0]} points, config expects {config.q}")
    if "query_embed" in store:
        emb = store["query_embed"]
    else:
        emb = store.linear_init("query_embed", config.d, (config.q, config.d))
    return QuerySet(points=pts, embeddings=emb)


def _attention_params(store, pfx, d):
    for name in ("wq", "wk", "wv", "wo"):
        store.xavier_init(f"{pfx}.{name}", d, d, (d, d))
    for name in ("bq", "bk", "bv", "bo"):
        store.zeros(f"{pfx}.{name}", (d,))


def build_params(config: ModelConfig, store: ParamStore | None = None,
                 mano_head: bool = False) -> ParamStore:
    """Create every learnable tensor: query embeddings, aggregation
    projections, and the decoder layers (xavier uniform, FFN output zeroed)."""
    store = store or ParamStore(seed=config.seed)
    d = config.d
    store.linear_init("query_embed", d, (config.q, d))
    store.linear_init("agg.theta", d, (d, d // 2))
    store.linear_init("agg.phi", d // 2, (d // 2, d))
    for l in range(config.n_layers):
        pfx = f"layer{l}"
        for blk in ("self", "cross"):
            store.ones(f"{pfx}.ln_{blk}.g", (d,))
            store.zeros(f"{pfx}.ln_{blk}.b", (d,))
            _attention_params(store, f"{pfx}.{blk}", d)
        store.ones(f"{pfx}.ln_vec.g", (d,))
        store.zeros(f"{pfx}.ln_vec.b", (d,))
        for name in ("alpha", "beta", "gamma", "psi"):
            store.xavier_init(f"{pfx}.vec.{name}.w", d, d, (d, d))
            store.zeros(f"{pfx}.vec.{name}.b", (d,))
        store.xavier_init(f"{pfx}.vec.xi.w1", 3, d, (3, d))
        store.zeros(f"{pfx}.vec.xi.b1", (d,))
        store.xavier_init(f"{pfx}.vec.xi.w2", d, d, (d, d))
        store.zeros(f"{pfx}.vec.xi.b2", (d,))
        store.ones(f"{pfx}.ln_ffn.g", (d,))
        store.zeros(f"{pfx}.ln_ffn.b", (d,))
        store.xavier_init(f"{pfx}.ffn.w1", d, d, (d, d))
        store.zeros(f"{pfx}.ffn.b1", (d,))
        store.zeros(f"{pfx}.ffn.w2", (d, 3))  # zero-init: identity update at init
        store.zeros(f"{pfx}.ffn.b2", (3,))
    if mano_head:
        store.zeros("head.w", (d, 58))
        store.zeros("head.b", (58,))
    return store


def multi_head_attention(queries, keys_values, p: ParamStore, pfx, n_heads,
                         return_weights=False):
    """Standard scaled dot-product attention; queries (Nq, d), keys (Nk, d)."""
    nq, d = queries.data.shape
    nk = keys_values.data.shape[0]
    dh = d // n_heads
    Q = queries @ p[f"{pfx}.wq"] + p[f"{pfx}.bq"]
    K = keys_values @ p[f"{pfx}.wk"] + p[f"{pfx}.bk"]
    V = keys_values @ p[f"{pfx}.wv"] + p[f"{pfx}.bv"]
    Qh = transpose(reshape(Q, (nq, n_heads, dh)), (1, 0, 2))
    Kh = transpose(reshape(K, (nk, n_heads, dh)), (1, 0, 2))
    Vh = transpose(reshape(V, (nk, n_heads, dh)), (1, 0, 2))
    scores = (Qh @ swapaxes(Kh, 1, 2)) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    out = transpose(attn @ Vh, (1, 0, 2))
    out = reshape(out, (nq, d)) @ p[f"{pfx}.wo"] + p[f"{pfx}.bo"]
    return (out, attn) if return_weights else out


def self_attention(emb, p: ParamStore, pfx, n_heads, return_weights=False):
    return multi_head_attention(emb, emb, p, pfx, n_heads, return_weights)


def cross_attention(emb, basis_features, p: ParamStore, pfx, n_heads, return_weights=False):
    return multi_head_attention(emb, basis_features, p, pfx, n_heads, return_weights)


def knn(query_pts, basis_pts, k):
    """Euclidean kNN indices (Q, k); ties broken toward the lower index."""
    X = np.asarray(query_pts, dtype=np.float64)
    P = np.asarray(basis_pts, dtype=np.float64)
    if k > len(P):
        raise ValueError(f"k={k} exceeds {len(P)} basis points")
    d2 = ((X[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _mlp2(x_flat, p, w1, b1, w2, b2):
    return relu(x_flat @ p[w1] + p[b1]) @ p[w2] + p[b2]


def vector_attention(emb, query_pts, basis_pts, basis_features, k, p: ParamStore, pfx,
                     return_weights=False, knn_idx=None):
    """Per-channel subtraction-vector attention over each query's kNN basis
    neighborhood; emb (Q, d), basis_features (M, d).

    query_pts may be a Tensor so position gradients flow through the relative
    positional term.  knn_idx pins the neighborhoods (the selection itself is
    piecewise constant, hence non-differentiable).
    """
    q, d = emb.data.shape
    Xq = as_tensor(query_pts)
    idx = knn(Xq.data, basis_pts, k) if knn_idx is None else knn_idx

    a = emb @ p[f"{pfx}.alpha.w"] + p[f"{pfx}.alpha.b"]
    bF = basis_features @ p[f"{pfx}.beta.w"] + p[f"{pfx}.beta.b"]
    psiF = basis_features @ p[f"{pfx}.psi.w"] + p[f"{pfx}.psi.b"]
    bN = gather(bF, idx)      # (Q, k, d)
    psiN = gather(psiF, idx)  # (Q, k, d)

    rel = reshape(Xq, (q, 1, 3)) - np.asarray(basis_pts)[idx]
    delta = reshape(_mlp2(reshape(rel, (q * k, 3)), p,
                          f"{pfx}.xi.w1", f"{pfx}.xi.b1", f"{pfx}.xi.w2", f"{pfx}.xi.b2"),
                    (q, k, d))

    pre = reshape(a, (q, 1, d)) - bN + delta
    gam = reshape(reshape(pre, (q * k, d)) @ p[f"{pfx}.gamma.w"] + p[f"{pfx}.gamma.b"], (q, k, d))
    axis = 2 if hooks.on(hooks.VEC_SOFTMAX_WRONG_AXIS) else 1
    weights = softmax(gam, axis=axis)  # per channel, over the neighbor set
    out = tsum(weights * (psiN + delta), axis=1)
    return (out, weights) if return_weights else out


def ffn_update(emb, query_pts, p: ParamStore, pfx):
    """Coordinate update: X' = X + FFN(emb); embeddings pass through."""
    upd = _mlp2(emb, p, f"{pfx}.ffn.w1", f"{pfx}.ffn.b1", f"{pfx}.ffn.w2", f"{pfx}.ffn.b2")
    return as_tensor(query_pts) + upd


def _ln(x, p, name):
    return layer_norm(x, gain=p[f"{name}.g"], bias=p[f"{name}.b"])


def decoder_forward(basis_features, basis_world, root, config: ModelConfig,
                    p: ParamStore, template_pts, return_layers=False):
    """Run all decoder layers from the template; returns world points (Q, 3).

    basis_features: (M, d) Tensor; basis_world: (M, 3) array; root: (3,).
    Pre-norm residuals; the vector attention's relative encoding is recomputed
    each layer from the current query positions.
    """
    root = np.asarray(root, dtype=np.float64)
    P_rel = np.asarray(basis_world) - root
    emb = p["query_embed"]
    X_rel = Tensor(np.asarray(template_pts, dtype=np.float64))
    layers = []
    for l in range(config.n_layers):
        pfx = f"layer{l}"
        emb = emb + self_attention(_ln(emb, p, f"{pfx}.ln_self"), p, f"{pfx}.self", config.n_heads)
        emb = emb + cross_attention(_ln(emb, p, f"{pfx}.ln_cross"), basis_features,
                                    p, f"{pfx}.cross", config.n_heads)
        emb = emb + vector_attention(_ln(emb, p, f"{pfx}.ln_vec"), X_rel, P_rel,
                                     basis_features, config.k, p, f"{pfx}.vec")
        X_rel = ffn_update(_ln(emb, p, f"{pfx}.ln_ffn"), X_rel, p, pfx)
        if return_layers:
            layers.append(X_rel + root[None, :])
    X = X_rel + root[None, :]
    return (X, layers) if return_layers else X


def mano_head(emb, p: ParamStore):
    """Pool embeddings and regress toy-hand (theta (16,3), beta (10,))."""
    pooled = reshape(tmean(emb, axis=0), (1, -1))
    out = pooled @ p["head.w"] + p["head.b"]
    theta = reshape(gather(transpose(out), np.arange(48)), (16, 3))
    beta = reshape(gather(transpose(out), np.arange(48, 58)), (10,))
    return theta, beta


def reconstruct_frame(config: ModelConfig, params: ParamStore, bps, frame,
                      hand_model: ToyHandModel, root=None, return_tensor=False):
    """Full stage-1 + stage-2 pass over one frame bundle.

    root: optional externally supplied root (required for single-view frames,
    where DLT is impossible).
    """
    if root is None:
        root = root_stage.estimate_root(frame.heatmaps, frame.rig)
    placed = basis.place_basis(bps, root)
    feats, masks = basis.sample_projected_features(placed, frame.rig, frame.feature_grids)
    fused = basis.projective_aggregation(feats, masks, params["agg.theta"], params["agg.phi"])
    X = decoder_forward(fused, placed.world, root, config, params,
                        template_points(hand_model))
    return (X, root) if return_tensor else (X.data, root)
