"""DMoN 방식 비지도 GNN 군집기 (numpy 로 직접 구현한 순전파/역전파).

Encoder layers follow H_{l+1} = selu(Â H_l W_l + X S_l) with Â the
normalized adjacency without self-loops and S_l a learnable skip from the raw
features. Logits H_L W_out go through dropout and a row softmax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from service.errors import DimensionMismatch, DivergenceDetected, DmonError, EmptyGraph
from service.graph_service import Graph, NodeFeatures, Partition

logger = logging.getLogger(__name__)

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
LOG_EVERY = 50


@dataclass(frozen=True)
class DmonHyper:
    k: int
    hidden_dims: Tuple[int, ...] = (64,)
    learning_rate: float = 0.01
    epochs: int = 500
    dropout_rate: float = 0.5
    init_scale: float = 1.0
    seed: int = 0
    dropout_enabled: bool = True
    collapse_weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.k < 2:
            raise DmonError(f"k must be at least 2, got {self.k}")
        if self.epochs < 1:
            raise DmonError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise DmonError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DmonError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise DmonError("hidden_dims needs at least one positive width")


@dataclass
class DmonParams:
    """Layer weights W_l (d_l x d_{l+1}), skips S_l (d x d_{l+1}) and W_out (d_L x k)."""

    weights: List[np.ndarray]
    skips: List[np.ndarray]
    out: np.ndarray

    def tensors(self) -> List[np.ndarray]:
        return [*self.weights, *self.skips, self.out]

    def step(self, grads: "DmonParams", learning_rate: float) -> "DmonParams":
        return DmonParams(
            weights=[w - learning_rate * gw for w, gw in zip(self.weights, grads.weights)],
            skips=[s - learning_rate * gs for s, gs in zip(self.skips, grads.skips)],
            out=self.out - learning_rate * grads.out,
        )

    def copy(self) -> "DmonParams":
        return DmonParams([w.copy() for w in self.weights], [s.copy() for s in self.skips], self.out.copy())


@dataclass(frozen=True)
class LossTerms:
    total: float
    modularity: float
    collapse: float


@dataclass
class ForwardPass:
    inputs: List[np.ndarray]
    propagated: List[np.ndarray]
    pre_activations: List[np.ndarray]
    logits: np.ndarray
    mask: Optional[np.ndarray]
    assignment: np.ndarray

    @property
    def hidden(self) -> List[np.ndarray]:
        return self.inputs[1:]


@dataclass
class TrainResult:
    assignment: np.ndarray
    loss_trace: np.ndarray
    params: DmonParams = field(repr=False)

    @property
    def partition(self) -> Partition:
        return hard_assignment(self.assignment)


def normalized_adjacency(g: Graph) -> np.ndarray:
    """Â = D^{-1/2} A D^{-1/2}; 차수 0 노드의 행/열은 0 으로 둔다."""
    deg = g.degree.astype(np.float64)
    inv = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=inv, where=deg > 0)
    return inv[:, None] * g.adjacency * inv[None, :]


def selu(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return SELU_LAMBDA * np.where(v > 0, v, SELU_ALPHA * np.expm1(np.minimum(v, 0.0)))


def selu_derivative(v: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(v > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(v, 0.0)))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_params(d: int, hyper: DmonHyper, rng: Optional[np.random.Generator] = None) -> DmonParams:
    """Glorot-uniform init with bound init_scale * sqrt(6 / (fan_in + fan_out))."""
    rng = rng if rng is not None else np.random.default_rng(hyper.seed)

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = hyper.init_scale * np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    dims = (d, *hyper.hidden_dims)
    weights = [glorot(dims[i], dims[i + 1]) for i in range(len(hyper.hidden_dims))]
    skips = [glorot(d, width) for width in hyper.hidden_dims]
    return DmonParams(weights=weights, skips=skips, out=glorot(dims[-1], hyper.k))


def dropout_mask(shape: Tuple[int, int], rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _check_shapes(params: DmonParams, a_hat: np.ndarray, x: np.ndarray) -> None:
    n, d = x.shape
    if a_hat.shape != (n, n):
        raise DimensionMismatch(f"adjacency is {a_hat.shape}, features have {n} rows")
    width = d
    for layer, (w, s) in enumerate(zip(params.weights, params.skips)):
        if w.shape[0] != width or s.shape[0] != d or s.shape[1] != w.shape[1]:
            raise DimensionMismatch(
                f"layer {layer}: W {w.shape} / skip {s.shape} do not chain from width {width}, d={d}"
            )
        width = w.shape[1]
    if params.out.shape[0] != width:
        raise DimensionMismatch(f"output projection {params.out.shape} does not follow width {width}")


def forward(
    params: DmonParams,
    a_hat: np.ndarray,
    x: NodeFeatures,
    hyper: Optional[DmonHyper] = None,
    rng: Optional[np.random.Generator] = None,
    mask: Optional[np.ndarray] = None,
) -> ForwardPass:
    """인코더 L 층과 softmax 를 적용해 소프트 할당 C 를 만든다.

    Dropout is applied to the logits when ``hyper.dropout_enabled`` and an
    ``rng`` is given, or whenever an explicit ``mask`` is supplied.
    """
    feats = x.matrix
    _check_shapes(params, a_hat, feats)
    inputs = [feats]
    propagated: List[np.ndarray] = []
    pre: List[np.ndarray] = []
    h = feats
    for w, s in zip(params.weights, params.skips):
        p_l = a_hat @ h
        z = p_l @ w + feats @ s
        propagated.append(p_l)
        pre.append(z)
        h = selu(z)
        inputs.append(h)
    logits = h @ params.out
    if mask is None and hyper is not None and hyper.dropout_enabled and hyper.dropout_rate > 0 and rng is not None:
        mask = dropout_mask(logits.shape, hyper.dropout_rate, rng)
    if mask is not None and mask.shape != logits.shape:
        raise DimensionMismatch(f"dropout mask {mask.shape} does not match logits {logits.shape}")
    used = logits * mask if mask is not None else logits
    return ForwardPass(inputs, propagated, pre, logits, mask, softmax(used))


def _graph_terms(g: Graph) -> Tuple[np.ndarray, np.ndarray, float]:
    if g.m == 0:
        raise EmptyGraph("DMoN loss needs at least one edge")
    return g.adjacency, g.degree.astype(np.float64), 2.0 * g.m


def _loss_terms(c: np.ndarray, adj: np.ndarray, deg: np.ndarray, two_m: float,
                collapse_weight: float) -> Tuple[LossTerms, np.ndarray, np.ndarray]:
    n, k = c.shape
    ac = adj @ c
    kc = deg @ c
    trace = float(np.sum(c * ac))
    modularity_term = -(trace - float(kc @ kc) / two_m) / two_m
    colsum = c.sum(axis=0)
    norm = float(np.linalg.norm(colsum))
    collapse_term = np.sqrt(k) / n * norm - 1.0
    total = modularity_term + collapse_weight * collapse_term
    return LossTerms(total, modularity_term, collapse_term), ac, kc


def dmon_loss(c: np.ndarray, g: Graph, collapse_weight: float = 1.0) -> LossTerms:
    """−(1/2m)·Tr(CᵀBC) 와 (√k/n)·‖C 열합‖ − 1 을 각각 돌려준다."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != g.n:
        raise DimensionMismatch(f"assignment has shape {c.shape}, graph has {g.n} nodes")
    adj, deg, two_m = _graph_terms(g)
    terms, _, _ = _loss_terms(c, adj, deg, two_m, collapse_weight)
    return terms


def _assignment_gradient(c: np.ndarray, ac: np.ndarray, kc: np.ndarray, deg: np.ndarray, two_m: float,
                         collapse_weight: float) -> np.ndarray:
    n, k = c.shape
    grad = -(2.0 / two_m) * (ac - np.outer(deg, kc) / two_m)
    colsum = c.sum(axis=0)
    norm = np.linalg.norm(colsum)
    if norm > 0:
        grad = grad + collapse_weight * (np.sqrt(k) / n) * (colsum / norm)[None, :]
    return grad


def loss_gradients(
    params: DmonParams,
    a_hat: np.ndarray,
    x: NodeFeatures,
    g: Graph,
    hyper: DmonHyper,
    mask: Optional[np.ndarray] = None,
) -> Tuple[DmonParams, LossTerms]:
    """dmon_loss∘forward 의 모든 가중치에 대한 정확한 역전파 기울기.

    Dropout is off unless a fixed ``mask`` is supplied.
    """
    adj, deg, two_m = _graph_terms(g)
    fp = forward(params, a_hat, x, mask=mask)
    c = fp.assignment
    terms, ac, kc = _loss_terms(c, adj, deg, two_m, hyper.collapse_weight)

    grad_c = _assignment_gradient(c, ac, kc, deg, two_m, hyper.collapse_weight)
    # softmax backward
    d_logits = c * (grad_c - np.sum(grad_c * c, axis=1, keepdims=True))
    if fp.mask is not None:
        d_logits = d_logits * fp.mask

    feats = x.matrix
    grad_out = fp.inputs[-1].T @ d_logits
    d_h = d_logits @ params.out.T
    grad_w: List[np.ndarray] = [np.empty(0)] * len(params.weights)
    grad_s: List[np.ndarray] = [np.empty(0)] * len(params.skips)
    for layer in reversed(range(len(params.weights))):
        d_z = d_h * selu_derivative(fp.pre_activations[layer])
        grad_w[layer] = fp.propagated[layer].T @ d_z
        grad_s[layer] = feats.T @ d_z
        if layer:
            d_h = a_hat.T @ (d_z @ params.weights[layer].T)
    return DmonParams(weights=grad_w, skips=grad_s, out=grad_out), terms


def train(g: Graph, x: NodeFeatures, hyper: DmonHyper, rng: Optional[np.random.Generator] = None) -> TrainResult:
    """전체 배치 경사하강으로 DMoN 을 학습한다.

    The trace holds the loss of each epoch before its update, so its length
    equals ``hyper.epochs``. The returned assignment is computed with dropout off.
    """
    if x.n != g.n:
        raise DimensionMismatch(f"features have {x.n} rows, graph has {g.n} nodes")
    rng = rng if rng is not None else np.random.default_rng(hyper.seed)
    params = init_params(x.d, hyper, rng)
    a_hat = normalized_adjacency(g)
    use_dropout = hyper.dropout_enabled and hyper.dropout_rate > 0
    trace = np.empty(hyper.epochs, dtype=np.float64)
    n_logits = (g.n, hyper.k)
    for epoch in range(hyper.epochs):
        mask = dropout_mask(n_logits, hyper.dropout_rate, rng) if use_dropout else None
        grads, terms = loss_gradients(params, a_hat, x, g, hyper, mask=mask)
        if not np.isfinite(terms.total) or not all(np.all(np.isfinite(t)) for t in grads.tensors()):
            raise DivergenceDetected(f"loss became non-finite at epoch {epoch}")
        trace[epoch] = terms.total
        params = params.step(grads, hyper.learning_rate)
        if epoch % LOG_EVERY == 0:
            logger.debug(
                "epoch %s loss=%.6f modularity=%.6f collapse=%.6f",
                epoch, terms.total, terms.modularity, terms.collapse,
            )
    final = forward(params, a_hat, x).assignment
    if not np.all(np.isfinite(final)) or not is_row_stochastic(final):
        raise DivergenceDetected("final assignment is non-finite or not row-stochastic")
    return TrainResult(assignment=final, loss_trace=trace, params=params)


def hard_assignment(c: np.ndarray) -> Partition:
    """행별 argmax (동률이면 작은 인덱스) 후 빈 군집을 제거하도록 재라벨링한다."""
    c = np.asarray(c)
    if c.ndim != 2 or c.shape[0] == 0:
        raise DimensionMismatch(f"soft assignment must be a non-empty matrix, got shape {c.shape}")
    return Partition(np.argmax(c, axis=1))


def is_row_stochastic(c: np.ndarray, atol: float = 1e-9) -> bool:
    return bool(np.all(c >= 0) and np.allclose(c.sum(axis=1), 1.0, atol=atol, rtol=0))


__all__: Sequence[str] = (
    "DmonHyper",
    "DmonParams",
    "LossTerms",
    "TrainResult",
    "dmon_loss",
    "forward",
    "hard_assignment",
    "init_params",
    "is_row_stochastic",
    "loss_gradients",
    "normalized_adjacency",
    "selu",
    "train",
)
