"""
Layout graph model - Node classification and edge classification over a
sampled page graph.

Pipeline per page:
    node inputs -> fusion MLP
    -> n_gnn_layers x (refresh graph, EdgeConv, residual max)
    -> node head (hidden FC + linear h -> c)
    -> edge head over candidate edges (hidden FC + linear -> 2)

Grouping tasks average the logits of both orientations of an undirected
candidate edge; linking scores every ordered candidate pair on its own.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from errors import (
    EmptyDataset,
    InvalidConfig,
    LengthMismatch,
    MissingLabels,
    NonFiniteValue,
    ShapeMismatch,
    UnsupportedGNN,
)
from layout.decode_eval import LayoutInstance, MatchResult, connected_components, decode_instances, f1_scores
from layout.doc_model import BOX_INFO_MODES, Page, boxes_to_array, layout_vector, layout_width
from layout.features import (
    EdgeFeatureConfig,
    ImageFeatureProvider,
    NullProvider,
    build_provider,
    polar_features_batch,
    reading_order_codes,
    rel_features_batch,
    roi_align_batch,
    sinusoidal_table,
)
from layout.sampling import SampledGraph, canonicalize, knn_pairs
from models.tensor_nn import (
    AdamState,
    ParamStore,
    Tensor,
    adam_step,
    add,
    concat_cols,
    constant,
    gather_rows,
    linear,
    relu,
    rowwise_max,
    scale,
    segment_max,
    softmax_cross_entropy,
    sub,
)

logger = logging.getLogger(__name__)

REFRESH_MODES = ('static', 'dynamic_knn', 'union')
TASKS = ('grouping', 'linking')


@dataclass(frozen=True)
class ModelConfig:
    """
    Everything that determines the parameter shapes and the forward pass.

    An empty graph_refresh resolves to the default schedule: the first layer
    uses the sampled graph, every later layer the union of the sampled graph
    and a kNN graph over (embedding || layout vector).
    """

    box_info_mode: str = 'eight'
    image_provider: str = 'null'
    image_size: int = 112
    image_mode: str = 'L'
    roi_size: int = 3
    sampling_ratio: int = 2
    hidden_dim: int = 64
    n_gnn_layers: int = 2
    gnn_type: str = 'dgcnn'
    gnn_residual: bool = True
    graph_refresh: Tuple[str, ...] = ()
    dynamic_k: int = 6
    use_pair: bool = True
    use_rope: bool = True
    use_rel: bool = True
    rope_dim: int = 32
    use_polar: bool = False
    use_node_class: bool = False
    n_node_classes: int = 5
    task: str = 'grouping'
    symmetric: bool = True
    edge_threshold: float = 0.5
    pos_weight: float = 1.0
    edge_loss_weight: float = 1.0

    def __post_init__(self):
        if self.gnn_type == 'gravnet':
            raise UnsupportedGNN(
                "gnn_type 'gravnet' is not supported: GravNet aggregation scored strictly "
                "worse than DGCNN (EdgeConv) in the layout ablations; use 'dgcnn'"
            )
        if self.gnn_type != 'dgcnn':
            raise UnsupportedGNN(f"unknown gnn_type '{self.gnn_type}', expected 'dgcnn'")
        if self.hidden_dim < 1:
            raise InvalidConfig(f"hidden_dim must be positive, got {self.hidden_dim}")
        if self.n_gnn_layers < 1:
            raise InvalidConfig(f"n_gnn_layers must be >= 1, got {self.n_gnn_layers}")
        if self.n_node_classes < 2:
            raise InvalidConfig(f"n_node_classes must be >= 2, got {self.n_node_classes}")
        if self.box_info_mode not in BOX_INFO_MODES:
            raise InvalidConfig(f"box_info_mode must be one of {BOX_INFO_MODES}")
        if self.image_provider not in ('null', 'raw'):
            raise InvalidConfig(f"image_provider must be 'null' or 'raw', got '{self.image_provider}'")
        if self.image_mode not in ('L', 'RGB'):
            raise InvalidConfig(f"image_mode must be 'L' or 'RGB', got '{self.image_mode}'")
        if self.roi_size < 1 or self.sampling_ratio < 1 or self.image_size < 1:
            raise InvalidConfig("image_size, roi_size and sampling_ratio must be positive")
        if self.dynamic_k < 1:
            raise InvalidConfig(f"dynamic_k must be >= 1, got {self.dynamic_k}")
        if self.task not in TASKS:
            raise InvalidConfig(f"task must be one of {TASKS}, got '{self.task}'")
        if self.task == 'linking' and self.symmetric:
            raise InvalidConfig("the linking task scores directed pairs; set symmetric to false")
        if not 0.0 < self.edge_threshold < 1.0:
            raise InvalidConfig(f"edge_threshold must lie in (0, 1), got {self.edge_threshold}")
        if self.pos_weight <= 0 or self.edge_loss_weight < 0:
            raise InvalidConfig("pos_weight must be positive and edge_loss_weight non-negative")

        schedule = tuple(self.graph_refresh)
        if not schedule:
            schedule = ('static',) + ('union',) * (self.n_gnn_layers - 1)
        if len(schedule) != self.n_gnn_layers:
            raise InvalidConfig(
                f"graph_refresh lists {len(schedule)} modes for {self.n_gnn_layers} layers"
            )
        for mode in schedule:
            if mode not in REFRESH_MODES:
                raise InvalidConfig(f"graph_refresh mode '{mode}' is not one of {REFRESH_MODES}")
        object.__setattr__(self, 'graph_refresh', schedule)

        self.edge_features()

    def edge_features(self) -> EdgeFeatureConfig:
        return EdgeFeatureConfig(
            use_pair=self.use_pair,
            use_rope=self.use_rope,
            use_rel=self.use_rel,
            rope_dim=self.rope_dim,
            use_polar=self.use_polar,
            use_node_class=self.use_node_class,
        )

    @property
    def image_channels(self) -> int:
        if self.image_provider == 'null':
            return 0
        return 1 if self.image_mode == 'L' else 3

    @property
    def node_input_dim(self) -> int:
        return self.roi_size * self.roi_size * self.image_channels + layout_width(self.box_info_mode)

    @property
    def edge_input_dim(self) -> int:
        width = self.edge_features().constant_dim()
        if self.use_pair:
            width += 2 * self.hidden_dim
        if self.use_node_class:
            width += 2 * self.n_node_classes
        return width

    def to_dict(self) -> Dict:
        d = asdict(self)
        d['graph_refresh'] = list(self.graph_refresh)
        return d

    @classmethod
    def from_dict(cls, data: Dict) -> 'ModelConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown model config key(s): {', '.join('model.' + k for k in unknown)}")
        kwargs = dict(data)
        if 'graph_refresh' in kwargs:
            kwargs['graph_refresh'] = tuple(kwargs['graph_refresh'])
        return cls(**kwargs)

    def diff(self, other: 'ModelConfig') -> List[str]:
        """Names of the fields whose values differ."""
        mine, theirs = self.to_dict(), other.to_dict()
        return sorted(k for k in mine if mine[k] != theirs.get(k))


@dataclass
class PreparedPage:
    """
    Per-page constants of the forward pass.

    Ordered candidate pairs are both orientations of every sampled edge:
    rows 0..E-1 are (i, j) with i < j and rows E..2E-1 the reverse.
    """

    page_id: str
    n_nodes: int
    node_input: np.ndarray
    layout: np.ndarray
    graph: SampledGraph
    ordered_src: np.ndarray
    ordered_dst: np.ndarray
    edge_const: np.ndarray
    pairs: np.ndarray
    node_targets: Optional[np.ndarray] = None
    edge_targets: Optional[np.ndarray] = None


@dataclass
class ForwardOutput:
    node_logits: Tensor
    edge_logits: Tensor
    pairs: np.ndarray
    graphs: List[SampledGraph] = field(default_factory=list)

    def node_predictions(self) -> np.ndarray:
        return self.node_logits.data.argmax(axis=1)

    def edge_probabilities(self) -> np.ndarray:
        z = self.edge_logits.data
        if z.shape[0] == 0:
            return np.zeros(0)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e[:, 1] / e.sum(axis=1)

    def edge_predictions(self, threshold: float = 0.5) -> np.ndarray:
        return (self.edge_probabilities() > threshold).astype(np.int64)


# Parameters

def init_model(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Declare every parameter with its stable name; weights Glorot-uniform, biases zero."""
    h, c = cfg.hidden_dim, cfg.n_node_classes
    params = ParamStore(seed)

    def dense(prefix: str, fan_in: int, fan_out: int, suffix: str = ''):
        params.add(f'{prefix}.W{suffix}', (fan_in, fan_out))
        params.add(f'{prefix}.b{suffix}', (fan_out,), init='zeros')

    dense('fusion', cfg.node_input_dim, h, '1')
    dense('fusion', h, h, '2')
    for layer in range(cfg.n_gnn_layers):
        dense(f'gnn.{layer}', 2 * h, h, '1')
        dense(f'gnn.{layer}', h, h, '2')
    dense('node_head', h, h, '1')
    dense('node_head', h, c, '2')
    dense('edge_head', cfg.edge_input_dim, h, '1')
    dense('edge_head', h, 2, '2')

    logger.debug(f"Initialized {len(params)} tensors, {params.n_parameters()} parameters (seed={seed})")
    return params


def _mlp(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    hidden = relu(linear(x, params[f'{prefix}.W1'], params[f'{prefix}.b1']))
    return linear(hidden, params[f'{prefix}.W2'], params[f'{prefix}.b2'])


# Graph layers

def edgeconv_layer(x: Tensor, graph: SampledGraph, params: ParamStore, layer: int) -> Tensor:
    """
    out_i = max over j in N(i) + {i} of MLP(x_i || x_j - x_i).

    Args:
        x: [n, h] node embeddings
        graph: Undirected edges over the same n nodes
        params: Store holding gnn.<layer>.*
        layer: Layer index

    Returns:
        [n, h] aggregated embeddings
    """
    n = x.shape[0]
    if graph.n_nodes != n:
        raise ShapeMismatch(f"edgeconv: graph has {graph.n_nodes} nodes, embeddings {n}")

    e = graph.as_array()
    self_ids = np.arange(n)
    receivers = np.concatenate([self_ids, e[:, 0], e[:, 1]])
    senders = np.concatenate([self_ids, e[:, 1], e[:, 0]])

    x_i = gather_rows(x, receivers)
    x_j = gather_rows(x, senders)
    messages = _mlp(concat_cols(x_i, sub(x_j, x_i)), params, f'gnn.{layer}')
    return segment_max(messages, receivers, n)


def residual_max(x: Tensor, y: Tensor, enabled: bool = True) -> Tensor:
    """Elementwise max(x, y); y alone when the residual is disabled."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"residual_max: {x.shape} vs {y.shape}")
    return rowwise_max([x, y]) if enabled else y


def refresh_graph(embeddings: np.ndarray, layout_vecs: np.ndarray, mode: str,
                  base: SampledGraph, k: int = 6) -> SampledGraph:
    """
    Graph used by one GNN layer.

    static -> base unchanged; dynamic_knn -> kNN over (embedding || layout);
    union -> base plus the kNN edges.
    """
    if mode == 'static':
        return base
    if mode not in REFRESH_MODES:
        raise InvalidConfig(f"unknown graph refresh mode '{mode}'")
    points = np.concatenate([np.asarray(embeddings, dtype=np.float64), layout_vecs], axis=1)
    dynamic = knn_pairs(points, k)
    if mode == 'dynamic_knn':
        return canonicalize(base.n_nodes, dynamic)
    return canonicalize(base.n_nodes, list(base.edges) + dynamic)


# Page preparation

def edge_targets_for(pairs: np.ndarray, page: Page, task: str) -> np.ndarray:
    labels = page.labels
    owner = labels.group_of()
    if task == 'grouping':
        return np.array([int(owner[i] == owner[j]) for i, j in pairs], dtype=np.int64)
    links = set(tuple(link) for link in labels.links)
    return np.array([int((owner[i], owner[j]) in links) for i, j in pairs], dtype=np.int64)


def prepare_page(page: Page, graph: SampledGraph, cfg: ModelConfig,
                 provider: Optional[ImageFeatureProvider] = None) -> PreparedPage:
    """
    Compute the node inputs and the embedding-independent edge features.

    Args:
        page: Ingested page
        graph: Sampled candidate graph of the page
        cfg: Model configuration
        provider: Image feature provider (built from cfg when omitted)

    Returns:
        PreparedPage; targets are filled in when the page carries labels
    """
    boxes = page.norm_boxes()
    n = len(boxes)
    if graph.n_nodes != n:
        raise ShapeMismatch(f"page {page.page_id}: graph has {graph.n_nodes} nodes for {n} boxes")

    layout = np.array([layout_vector(b, cfg.box_info_mode) for b in boxes]).reshape(n, layout_width(cfg.box_info_mode))
    arr = boxes_to_array(boxes)

    if cfg.image_provider == 'null':
        node_input = layout
    else:
        provider = provider or build_provider(cfg.image_provider, cfg.image_size, cfg.image_mode)
        if isinstance(provider, NullProvider):
            raise InvalidConfig("model expects image features but the provider yields none")
        fmap = provider.feature_map(page)
        pooled = roi_align_batch(fmap, arr, cfg.roi_size, cfg.sampling_ratio)
        node_input = np.concatenate([pooled.reshape(n, -1), layout], axis=1)
    if node_input.shape[1] != cfg.node_input_dim:
        raise ShapeMismatch(f"node input has {node_input.shape[1]} values, model expects {cfg.node_input_dim}")

    e = graph.as_array()
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])

    feat_cfg = cfg.edge_features()
    parts = []
    if feat_cfg.use_rope:
        neighbors = graph.neighbors()
        codes_by_pivot = [reading_order_codes(i, neighbors[i], boxes) for i in range(n)]
        codes = np.array([codes_by_pivot[i][j] for i, j in zip(src, dst)], dtype=np.int64)
        parts.append(sinusoidal_table(codes, feat_cfg.rope_dim))
    if feat_cfg.use_rel:
        parts.append(rel_features_batch(arr, src, dst))
    if feat_cfg.use_polar:
        parts.append(polar_features_batch(arr, src, dst))
    edge_const = np.concatenate(parts, axis=1) if parts else np.zeros((src.shape[0], 0))

    if cfg.symmetric:
        pairs = e
    else:
        ordered = np.stack([src, dst], axis=1)
        pairs = ordered[np.lexsort((dst, src))] if ordered.size else ordered.reshape(0, 2)

    node_targets = edge_targets = None
    if page.labels is not None:
        if len(page.labels.node_category) != n:
            raise LengthMismatch(
                f"page {page.page_id}: {len(page.labels.node_category)} node labels for {n} boxes"
            )
        node_targets = np.asarray(page.labels.node_category, dtype=np.int64)
        edge_targets = edge_targets_for(pairs, page, cfg.task)

    return PreparedPage(
        page_id=page.page_id,
        n_nodes=n,
        node_input=node_input,
        layout=layout,
        graph=graph,
        ordered_src=src,
        ordered_dst=dst,
        edge_const=edge_const,
        pairs=pairs,
        node_targets=node_targets,
        edge_targets=edge_targets,
    )


# Forward and loss

def forward(prepared: PreparedPage, cfg: ModelConfig, params: ParamStore) -> ForwardOutput:
    x = constant(prepared.node_input)
    emb = _mlp(x, params, 'fusion')

    graphs = []
    for layer, mode in enumerate(cfg.graph_refresh):
        graph = refresh_graph(emb.data, prepared.layout, mode, prepared.graph, cfg.dynamic_k)
        graphs.append(graph)
        emb = residual_max(emb, edgeconv_layer(emb, graph, params, layer), cfg.gnn_residual)

    node_logits = _mlp(emb, params, 'node_head')

    src, dst = prepared.ordered_src, prepared.ordered_dst
    parts = []
    if cfg.use_pair:
        parts.extend([gather_rows(emb, src), gather_rows(emb, dst)])
    if prepared.edge_const.shape[1]:
        parts.append(constant(prepared.edge_const))
    if cfg.use_node_class:
        parts.extend([gather_rows(node_logits, src), gather_rows(node_logits, dst)])
    ordered_logits = _mlp(concat_cols(parts), params, 'edge_head')

    n_edges = prepared.graph.n_edges
    if cfg.symmetric:
        forward_half = gather_rows(ordered_logits, np.arange(n_edges))
        reverse_half = gather_rows(ordered_logits, np.arange(n_edges, 2 * n_edges))
        edge_logits = scale(add(forward_half, reverse_half), 0.5)
    else:
        order = np.lexsort((dst, src))
        edge_logits = gather_rows(ordered_logits, order)

    return ForwardOutput(node_logits, edge_logits, prepared.pairs, graphs)


def loss(out: ForwardOutput, prepared: PreparedPage, cfg: ModelConfig) -> Tensor:
    """Mean node cross-entropy + edge_loss_weight * weighted mean edge cross-entropy."""
    if prepared.node_targets is None or prepared.edge_targets is None:
        raise MissingLabels(f"page {prepared.page_id} has no gold labels")
    node_term = softmax_cross_entropy(out.node_logits, prepared.node_targets)
    weights = np.where(prepared.edge_targets == 1, cfg.pos_weight, 1.0)
    edge_term = softmax_cross_entropy(out.edge_logits, prepared.edge_targets, weights)
    return add(node_term, scale(edge_term, cfg.edge_loss_weight))


# Training

@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.937
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.005

    def __post_init__(self):
        if self.lr < 0 or self.eps <= 0 or self.weight_decay < 0:
            raise InvalidConfig("optimizer needs lr >= 0, eps > 0 and weight_decay >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidConfig("optimizer betas must lie in [0, 1)")

    def new_state(self) -> AdamState:
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                         weight_decay=self.weight_decay)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 2
    warmup_epochs: int = 10
    shuffle: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.warmup_epochs < 0:
            raise InvalidConfig("training needs epochs >= 0, batch_size >= 1 and warmup_epochs >= 0")
        if self.checkpoint_every < 0:
            raise InvalidConfig("training.checkpoint_every must be >= 0 (0 keeps only the final checkpoint)")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    node_f1: float
    edge_f1: float
    lr: float

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: ParamStore
    state: AdamState
    history: List[EpochMetrics]


def warmup_lr(lr: float, step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0:
        return lr
    return lr * min(1.0, (step + 1) / warmup_steps)


def train(prepared: Sequence[PreparedPage], cfg: ModelConfig, hyper: TrainConfig,
          optimizer: Optional[OptimizerConfig] = None, seed: int = 0,
          params: Optional[ParamStore] = None, progress: bool = True,
          on_epoch=None) -> TrainResult:
    """
    Mini-batch training with linear warm-up.

    Gradients of a batch are accumulated page by page in batch order; the
    optimizer steps once per batch. Epoch metrics come from the forward
    passes made during the epoch.

    Args:
        prepared: Labeled pages
        cfg: Model configuration
        hyper: Epochs, batch size, warm-up, shuffling
        optimizer: Adam hyperparameters
        seed: Initialization and shuffling seed
        params: Start from these parameters instead of a fresh init
        progress: Show a tqdm bar
        on_epoch: Optional callback(EpochMetrics, ParamStore, AdamState)

    Returns:
        TrainResult with parameters, optimizer state and the metric log
    """
    if not prepared:
        raise EmptyDataset("training set is empty")
    optimizer = optimizer or OptimizerConfig()
    params = params if params is not None else init_model(cfg, seed)
    state = optimizer.new_state()

    n = len(prepared)
    steps_per_epoch = math.ceil(n / hyper.batch_size)
    warmup_steps = hyper.warmup_epochs * steps_per_epoch
    rng = np.random.default_rng(seed)
    order = np.arange(n)

    history: List[EpochMetrics] = []
    step = 0
    epochs = tqdm(range(hyper.epochs), desc='train', unit='epoch', disable=not progress)
    for epoch in epochs:
        if hyper.shuffle:
            order = rng.permutation(n)
        total = 0.0
        node_pred, node_gold, edge_pred, edge_gold = [], [], [], []
        lr = state.lr

        for start in range(0, n, hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            params.zero_grad()
            for k in batch:
                page = prepared[k]
                out = forward(page, cfg, params)
                page_loss = loss(out, page, cfg)
                value = page_loss.item()
                if not math.isfinite(value):
                    raise NonFiniteValue(f"loss on page {page.page_id} is {value}")
                scale(page_loss, 1.0 / len(batch)).backward()
                total += value
                node_pred.append(out.node_predictions())
                node_gold.append(page.node_targets)
                edge_pred.append(out.edge_predictions(cfg.edge_threshold))
                edge_gold.append(page.edge_targets)

            lr = warmup_lr(state.lr, step, warmup_steps)
            adam_step(params.arrays(), params.grads(), state, lr=lr)
            step += 1

        node_f1 = f1_scores(np.concatenate(node_pred), np.concatenate(node_gold),
                            'node_multiclass', cfg.n_node_classes).f1
        edge_f1 = f1_scores(np.concatenate(edge_pred), np.concatenate(edge_gold), 'edge_binary').f1
        metrics = EpochMetrics(epoch=epoch, loss=total / n, node_f1=node_f1, edge_f1=edge_f1, lr=lr)
        history.append(metrics)
        epochs.set_postfix(loss=f"{metrics.loss:.4f}", node_f1=f"{node_f1:.3f}", edge_f1=f"{edge_f1:.3f}")
        logger.info(
            f"Epoch {epoch + 1}/{hyper.epochs}: loss={metrics.loss:.6f} "
            f"node_f1={node_f1:.4f} edge_f1={edge_f1:.4f} lr={lr:.3g}"
        )
        if on_epoch is not None:
            on_epoch(metrics, params, state)

    return TrainResult(params, state, history)


class LayoutGraphModel:
    """
    A configured model with parameters, ready to score pages.

    Features:
    - Builds the image provider the config asks for
    - Prepares pages from a sampled graph
    - Decodes grouping predictions into layout instances
    """

    def __init__(self, cfg: ModelConfig, params: Optional[ParamStore] = None, seed: int = 0,
                 provider: Optional[ImageFeatureProvider] = None):
        self.cfg = cfg
        self.params = params if params is not None else init_model(cfg, seed)
        if provider is None:
            provider = build_provider(cfg.image_provider, cfg.image_size, cfg.image_mode)
        self.provider = provider

    def prepare(self, page: Page, graph: SampledGraph) -> PreparedPage:
        return prepare_page(page, graph, self.cfg, self.provider)

    def forward(self, prepared: PreparedPage) -> ForwardOutput:
        return forward(prepared, self.cfg, self.params)

    def decode(self, out: ForwardOutput, page: Page) -> Tuple[List[LayoutInstance], np.ndarray]:
        """Instances from the positive candidate edges, plus the edge decisions."""
        decisions = out.edge_predictions(self.cfg.edge_threshold)
        positive = [tuple(p) for p, d in zip(out.pairs, decisions) if d == 1]
        components = connected_components(page.n_boxes, positive)
        instances = decode_instances(components, out.node_logits.data, page.norm_boxes())
        return instances, decisions

    def score(self, out: ForwardOutput, prepared: PreparedPage) -> Tuple[MatchResult, MatchResult]:
        """Node and edge matches of one labeled page."""
        if prepared.node_targets is None:
            raise MissingLabels(f"page {prepared.page_id} has no gold labels")
        node = f1_scores(out.node_predictions(), prepared.node_targets, 'node_multiclass', self.cfg.n_node_classes)
        edge = f1_scores(out.edge_predictions(self.cfg.edge_threshold), prepared.edge_targets, 'edge_binary')
        return node, edge
