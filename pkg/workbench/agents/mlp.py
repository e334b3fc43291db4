import logging

import numpy as np

logger = logging.getLogger(__name__)


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return np.where(x > 0, 1.0, 0.0)


class MlpQNet:
    """Fully connected Q-network: rectifier on hidden layers, linear output.

    Weights are stored (out, in) and applied to row-major batches as
    x @ W.T + b.
    """

    def __init__(self, layer_sizes, rng: np.random.Generator = None):
        if len(layer_sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")

        rng = rng if rng is not None else np.random.default_rng(0)
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_actions(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list:
        """Parameter arrays in export order: W1, b1, W2, b2, ..."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def _check_input(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.input_size:
            raise ValueError(f"expected input of size {self.input_size}, got {x.shape[-1]}")
        return x

    def forward(self, states) -> np.ndarray:
        out, _ = self.forward_cached(states)
        return out

    def forward_cached(self, states):
        """Forward pass keeping each layer's input and pre-activation for backward."""
        a = self._check_input(states)
        cache = []
        last = len(self.weights) - 1
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            cache.append((a, z))
            a = z if layer == last else relu(z)
        return a, cache

    def backward(self, cache, grad_out) -> list:
        """Gradients in parameters() order given dLoss/dOutput."""
        grads = []
        dz = grad_out
        for layer in reversed(range(len(self.weights))):
            a_prev, _ = cache[layer]
            dW = dz.T @ a_prev
            db = dz.sum(axis=0)
            grads = [dW, db] + grads
            if layer > 0:
                _, z_prev = cache[layer - 1]
                dz = (dz @ self.weights[layer]) * relu_grad(z_prev)
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.parameters():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != len(flat):
            raise ValueError(f"expected {offset} parameters, got {len(flat)}")

    def copy(self) -> "MlpQNet":
        clone = MlpQNet.__new__(MlpQNet)
        clone.layer_sizes = list(self.layer_sizes)
        clone.weights = [W.copy() for W in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_from(self, other: "MlpQNet"):
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def export_parameters(self, path: str):
        """One value per line: for each layer W (row-major, out x in) then b."""
        np.savetxt(path, self.get_flat(), fmt="%.17g")
        logger.info(f"Exported {self.get_flat().size} parameters to {path}")


def mlp_forward(net: MlpQNet, state) -> np.ndarray:
    """Action values for a single state."""
    x = np.asarray(state, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_size:
        raise ValueError(f"expected state of size {net.input_size}, got shape {x.shape}")
    return net.forward(x[None, :])[0]


class AdamOptimizer:
    """Adaptive moment estimation with bias correction, updating arrays in place."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
