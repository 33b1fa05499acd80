"""Modular 3-layer network: parameter bank, pathway-restricted forward and
backward passes, SGD updates, and parameter accounting.

A pathway (genotype) names up to N modules per layer; the named modules run
``relu(W.T h + b)`` and their outputs are averaged to form the layer output.
A per-task linear head plus softmax produces class posteriors. Modules can be
frozen: they keep participating in forward passes but never receive updates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import HyperParams


@dataclass
class Genotype:
    """L x N integer matrix; each gene names a module in [0, M-1]."""

    genes: np.ndarray

    def __post_init__(self) -> None:
        self.genes = np.asarray(self.genes, dtype=np.int64)
        if self.genes.ndim != 2:
            raise ValueError("genes must be a 2-D (layers x slots) matrix")

    def copy(self) -> "Genotype":
        return Genotype(self.genes.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Genotype) and np.array_equal(self.genes, other.genes)


def random_genotype(hp: HyperParams, rng: np.random.Generator) -> Genotype:
    genes = rng.integers(
        0, hp.modules_per_layer, size=(hp.num_layers, hp.max_active_per_layer)
    )
    return Genotype(genes)


def active_modules(g: Genotype) -> list[list[int]]:
    """Per layer, the sorted deduplicated set of module indices named by g."""
    return [sorted(set(int(m) for m in row)) for row in g.genes]


def effective_active(g: Genotype, pinned: Genotype | None) -> list[list[int]]:
    """Active sets of g union those of the pinned pathway, when given."""
    act = active_modules(g)
    if pinned is None:
        return act
    pact = active_modules(pinned)
    if len(pact) != len(act):
        raise ValueError("pinned genotype has a different layer count")
    return [sorted(set(a) | set(p)) for a, p in zip(act, pact)]


@dataclass
class LayerModules:
    weights: np.ndarray  # (M, in_dim, width)
    biases: np.ndarray  # (M, width)


@dataclass
class Head:
    weights: np.ndarray  # (width, num_classes)
    bias: np.ndarray  # (num_classes,)


@dataclass
class ModuleBank:
    """All learnable parameters: per-layer module arrays, per-task heads,
    and the frozen mask ((L, M) bools; frozen modules never update)."""

    hp: HyperParams
    layers: list[LayerModules]
    heads: dict[str, Head] = field(default_factory=dict)
    frozen: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.frozen is None:
            self.frozen = np.zeros(
                (self.hp.num_layers, self.hp.modules_per_layer), dtype=bool
            )

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def module_bytes(self, layer: int, module: int) -> bytes:
        lm = self.layers[layer]
        return lm.weights[module].tobytes() + lm.biases[module].tobytes()

    def module_checksum(self, layer: int, module: int) -> str:
        return hashlib.sha256(self.module_bytes(layer, module)).hexdigest()


def init_params(
    hp: HyperParams, rng: np.random.Generator, dtype=np.float32
) -> ModuleBank:
    """Fresh bank: weights uniform in +-sqrt(6/in_dim), biases zero, nothing
    frozen, no heads. Deterministic given the rng state."""
    layers = []
    for layer in range(hp.num_layers):
        d = hp.in_dim(layer)
        lim = np.sqrt(6.0 / d)
        w = rng.uniform(-lim, lim, size=(hp.modules_per_layer, d, hp.module_width))
        layers.append(
            LayerModules(
                weights=w.astype(dtype),
                biases=np.zeros((hp.modules_per_layer, hp.module_width), dtype=dtype),
            )
        )
    return ModuleBank(hp=hp, layers=layers)


def add_head(
    bank: ModuleBank, task_id: str, num_classes: int, rng: np.random.Generator
) -> Head:
    """Create (or replace) the readout head for a task."""
    lim = np.sqrt(6.0 / bank.hp.module_width)
    head = Head(
        weights=rng.uniform(
            -lim, lim, size=(bank.hp.module_width, num_classes)
        ).astype(bank.dtype),
        bias=np.zeros(num_classes, dtype=bank.dtype),
    )
    bank.heads[task_id] = head
    return head


def _hidden_forward(bank: ModuleBank, active: list[list[int]], x: np.ndarray):
    """Run the module layers, returning the final hidden state plus the
    per-layer (input, pre-activation) caches needed by the backward pass."""
    h = x
    caches = []
    for layer, mods in enumerate(active):
        lm = bank.layers[layer]
        zs = [h @ lm.weights[m] + lm.biases[m] for m in mods]
        caches.append((h, zs))
        h = np.maximum(zs[0], 0.0)
        for z in zs[1:]:
            h = h + np.maximum(z, 0.0)
        h = h / len(mods)
    return h, caches


def forward(
    bank: ModuleBank,
    g: Genotype,
    x: np.ndarray,
    task_id: str,
    pinned: Genotype | None = None,
) -> np.ndarray:
    """Class-posterior vector(s) for input ``x`` ((d,) or (B, d)).

    The softmax runs in float64 so posteriors sum to 1 within 1e-9
    regardless of the bank's storage dtype.
    """
    if task_id not in bank.heads:
        raise KeyError(f"unknown task {task_id!r}")
    x = np.asarray(x, dtype=bank.dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != bank.hp.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != expected {bank.hp.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    active = effective_active(g, pinned)
    h, _ = _hidden_forward(bank, active, x)
    head = bank.heads[task_id]
    logits = h.astype(np.float64) @ head.weights.astype(np.float64) + head.bias.astype(
        np.float64
    )
    probs = _softmax(logits)
    return probs[0] if single else probs


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Grads:
    """Gradient entries for one batch: only active, unfrozen modules and the
    task head appear. Keys are (layer, module)."""

    task_id: str
    modules: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]
    head: tuple[np.ndarray, np.ndarray]


def loss_and_grads(
    bank: ModuleBank,
    g: Genotype,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    task_id: str,
    pinned: Genotype | None = None,
) -> tuple[float, Grads]:
    """Mean softmax cross-entropy over the batch, plus gradients.

    Frozen modules get no gradient entry but still propagate gradient to
    earlier layers (they take part in the forward pass).
    """
    if task_id not in bank.heads:
        raise KeyError(f"unknown task {task_id!r}")
    x = np.asarray(batch_x, dtype=bank.dtype)
    y = np.asarray(batch_y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("batch_x must be (B, d) aligned with batch_y")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    head = bank.heads[task_id]
    num_classes = head.bias.shape[0]
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError("label out of range for task head")

    active = effective_active(g, pinned)
    h, caches = _hidden_forward(bank, active, x)
    logits = h.astype(np.float64) @ head.weights.astype(np.float64) + head.bias.astype(
        np.float64
    )
    probs = _softmax(logits)
    b = x.shape[0]
    loss = float(-np.mean(np.log(probs[np.arange(b), y])))

    dlogits = probs.copy()
    dlogits[np.arange(b), y] -= 1.0
    dlogits /= b
    dlogits = dlogits.astype(bank.dtype)

    d_head_w = h.T @ dlogits
    d_head_b = dlogits.sum(axis=0)
    dh = dlogits @ head.weights.T

    module_grads: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    for layer in reversed(range(len(active))):
        mods = active[layer]
        h_prev, zs = caches[layer]
        lm = bank.layers[layer]
        scale = 1.0 / len(mods)
        dh_prev = np.zeros_like(h_prev)
        for m, z in zip(mods, zs):
            dz = (dh * scale) * (z > 0)
            if not bank.frozen[layer, m]:
                module_grads[(layer, m)] = (h_prev.T @ dz, dz.sum(axis=0))
            dh_prev += dz @ lm.weights[m].T
        dh = dh_prev

    return loss, Grads(task_id=task_id, modules=module_grads, head=(d_head_w, d_head_b))


def sgd_step(bank: ModuleBank, grads: Grads, learning_rate: float) -> None:
    """In-place ``theta -= lr * grad`` for every entry in ``grads``; all other
    parameters stay bit-identical."""
    for (layer, m), (dw, db) in grads.modules.items():
        lm = bank.layers[layer]
        if dw.shape != lm.weights[m].shape or db.shape != lm.biases[m].shape:
            raise ValueError(f"gradient shape mismatch at layer {layer} module {m}")
        lm.weights[m] -= (learning_rate * dw).astype(bank.dtype)
        lm.biases[m] -= (learning_rate * db).astype(bank.dtype)
    head = bank.heads[grads.task_id]
    dw, db = grads.head
    if dw.shape != head.weights.shape or db.shape != head.bias.shape:
        raise ValueError("head gradient shape mismatch")
    head.weights -= (learning_rate * dw).astype(bank.dtype)
    head.bias -= (learning_rate * db).astype(bank.dtype)


def count_pathway_params(hp: HyperParams, g: Genotype) -> int:
    """Parameters reachable through g: per layer, |distinct modules| *
    (in_dim * width + width). Heads excluded."""
    total = 0
    for layer, mods in enumerate(active_modules(g)):
        per_module = hp.in_dim(layer) * hp.module_width + hp.module_width
        total += len(mods) * per_module
    return total


def reinit_except(
    bank: ModuleBank, keep: Genotype, rng: np.random.Generator
) -> ModuleBank:
    """New bank for a follow-on task: modules named by ``keep`` are copied
    bit-exactly and frozen, every other module is freshly drawn, and heads
    are dropped (the new task draws its own)."""
    hp = bank.hp
    fresh = init_params(hp, rng, dtype=bank.dtype)
    for layer, mods in enumerate(active_modules(keep)):
        for m in mods:
            fresh.layers[layer].weights[m] = bank.layers[layer].weights[m].copy()
            fresh.layers[layer].biases[m] = bank.layers[layer].biases[m].copy()
            fresh.frozen[layer, m] = True
    return fresh
