import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TrainingDivergedError
from .schemas import MlpDocument, TrainConfig

logger = logging.getLogger(__name__)

# input: query corner / region side; output: count / n
INPUT_DIM = 2


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(eq=False)
class Mlp:
    # weights[i] has shape (fan_in, fan_out)
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    width: int
    input_scale: float = 1.0
    label_scale: float = 1.0

    @classmethod
    def init(cls, depth: int, width: int, rng: np.random.Generator, *,
             input_scale: float = 1.0, label_scale: float = 1.0,
             output_bias: float = 0.0) -> "Mlp":
        """Uniform fan-in initialization for hidden layers with zero biases. The output
        layer starts as the constant `output_bias`."""
        if depth < 1 or width < 1:
            raise ValueError(f"depth and width must be positive, got {depth}x{width}")
        dims = [INPUT_DIM] + [width] * (depth - 1) + [1]
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i < depth - 1:
                limit = np.sqrt(6.0 / fan_in)
                weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            else:
                weights.append(np.zeros((fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        biases[-1][:] = output_bias
        return cls(weights=weights, biases=biases, width=width,
                   input_scale=input_scale, label_scale=label_scale)

    @property
    def depth(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def with_parameters(self, params: list[np.ndarray]) -> "Mlp":
        return Mlp(
            weights=list(params[0::2]),
            biases=list(params[1::2]),
            width=self.width,
            input_scale=self.input_scale,
            label_scale=self.label_scale,
        )

    def copy(self) -> "Mlp":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def normalize_inputs(self, cx, cy) -> np.ndarray:
        return np.column_stack((np.asarray(cx, dtype=np.float64), np.asarray(cy, dtype=np.float64))) / self.input_scale

    def normalize_labels(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) / self.label_scale

    def denormalize(self, y) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.label_scale

    def predict(self, cx, cy) -> np.ndarray:
        """Raw count estimates for query corners, before scaling and clamping."""
        return self.denormalize(forward(self, self.normalize_inputs(cx, cy)))

    def to_document(self) -> MlpDocument:
        return MlpDocument(
            depth=self.depth,
            width=self.width,
            weights=[w.tolist() for w in self.weights],
            biases=[b.tolist() for b in self.biases],
            input_scale=self.input_scale,
            label_scale=self.label_scale,
        )

    @classmethod
    def from_document(cls, doc: MlpDocument) -> "Mlp":
        weights = [np.asarray(w, dtype=np.float64) for w in doc.weights]
        biases = [np.asarray(b, dtype=np.float64) for b in doc.biases]
        if len(weights) != doc.depth or len(biases) != doc.depth:
            raise ValueError("layer count does not match depth")
        fan_in = INPUT_DIM
        for w, b in zip(weights, biases):
            if w.ndim != 2 or w.shape[0] != fan_in or b.shape != (w.shape[1],):
                raise ValueError("inconsistent layer shapes")
            fan_in = w.shape[1]
        if fan_in != 1:
            raise ValueError("network must have a single output")
        return cls(weights=weights, biases=biases, width=doc.width,
                   input_scale=doc.input_scale, label_scale=doc.label_scale)


def forward(m: Mlp, x: np.ndarray) -> np.ndarray | float:
    """Normalized predictions: an array for inputs of shape (batch, 2), a float for (2,)."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    last = m.depth - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        h = h @ w + b
        if i < last:
            h = relu(h)
    out = h[:, 0]
    return out if np.ndim(x) > 1 else float(out[0])


def weighted_loss(m: Mlp, x: np.ndarray, labels: np.ndarray, weights: np.ndarray, psi: float) -> float:
    resid = forward(m, x) - labels
    return float(np.sum(weights / np.maximum(labels, psi) * resid ** 2))


def loss_and_grad(
    m: Mlp, x: np.ndarray, labels: np.ndarray, weights: np.ndarray, psi: float
) -> tuple[float, list[np.ndarray]]:
    """sum w / max(y, psi) * (f(x) - y)^2 and its gradient in ``parameters()`` order."""
    if psi <= 0:
        raise ValueError(f"psi must be positive, got {psi}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)

    acts = [x]
    pre = []
    h = x
    last = m.depth - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ w + b
        pre.append(z)
        h = relu(z) if i < last else z
        acts.append(h)

    coef = weights / np.maximum(labels, psi)
    resid = h[:, 0] - labels
    loss = float(np.sum(coef * resid ** 2))
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            "Non-finite training loss",
            extra={"max_abs_prediction": float(np.nanmax(np.abs(h))) if h.size else 0.0},
        )

    delta = (2.0 * coef * resid)[:, None]
    grads: list[np.ndarray] = [np.empty(0)] * (2 * m.depth)
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ m.weights[i].T) * (pre[i - 1] > 0)
    return loss, grads


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], cfg: Optional[TrainConfig] = None) -> "AdamState":
        cfg = cfg or TrainConfig()
        return cls(
            lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list[np.ndarray], grad: list[np.ndarray]) -> list[np.ndarray]:
    if len(params) != len(grad) or any(p.shape != g.shape for p, g in zip(params, grad)):
        raise ValueError("parameter and gradient shapes differ")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    updated = []
    for i, (p, g) in enumerate(zip(params, grad)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


def constant_fit(y: np.ndarray, weights: np.ndarray, psi: float) -> float:
    """The constant output minimizing the weighted loss on normalized labels."""
    a = weights / np.maximum(y, psi)
    total = float(np.sum(a))
    if total > 0:
        return float(np.dot(a, y) / total)
    return float(np.mean(y))


def train_with_history(
    cx: np.ndarray,
    cy: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    cfg: TrainConfig,
    *,
    input_scale: float,
    label_scale: float,
) -> tuple[Mlp, list[float]]:
    """Fit one network on fixed noisy labels. Returns the lowest-loss parameters seen
    and the full-set loss per epoch."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if labels.size == 0:
        raise ValueError("cannot train on an empty sample set")
    rng = np.random.default_rng(cfg.seed)
    y = labels / label_scale
    model = Mlp.init(cfg.depth, cfg.width, rng, input_scale=input_scale, label_scale=label_scale,
                     output_bias=constant_fit(y, weights, cfg.psi_fraction))
    x = model.normalize_inputs(cx, cy)
    psi = cfg.psi_fraction

    full_batch = y.size <= cfg.full_batch_limit
    state = AdamState.for_params(model.parameters(), cfg)
    params = model.parameters()
    history: list[float] = []
    best_loss, best_params = np.inf, params

    try:
        for epoch in range(cfg.epochs):
            if full_batch:
                loss, grad = loss_and_grad(model.with_parameters(params), x, y, weights, psi)
                if loss < best_loss:
                    best_loss, best_params = loss, params
                params = adam_step(state, params, grad)
                history.append(loss)
            else:
                order = rng.permutation(y.size)
                for start in range(0, y.size, cfg.batch_size):
                    idx = order[start:start + cfg.batch_size]
                    _, grad = loss_and_grad(model.with_parameters(params), x[idx], y[idx], weights[idx], psi)
                    params = adam_step(state, params, grad)
                loss = weighted_loss(model.with_parameters(params), x, y, weights, psi)
                if not np.isfinite(loss):
                    raise TrainingDivergedError("Non-finite training loss")
                if loss < best_loss:
                    best_loss, best_params = loss, params
                history.append(loss)
            if (epoch + 1) % max(1, cfg.epochs // 5) == 0:
                logger.debug(f"epoch {epoch + 1}/{cfg.epochs} loss={history[-1]:.6g}")
    except TrainingDivergedError as exc:
        exc.extra.update({"epoch": len(history) + 1, "config": cfg.model_dump()})
        raise

    if full_batch:
        final = weighted_loss(model.with_parameters(params), x, y, weights, psi)
        if np.isfinite(final) and final < best_loss:
            best_loss, best_params = final, params
    return model.with_parameters(best_params), history


def train(cx, cy, labels, weights, cfg: TrainConfig, *, input_scale: float, label_scale: float) -> Mlp:
    model, history = train_with_history(
        cx, cy, labels, weights, cfg, input_scale=input_scale, label_scale=label_scale
    )
    logger.info(
        f"Trained {cfg.depth}x{cfg.width} network on {np.size(labels)} samples: "
        f"loss {history[0]:.6g} -> {min(history):.6g}"
    )
    return model
