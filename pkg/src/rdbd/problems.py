"""Loss/gradient oracles with known constants, so bound formulas have
something checkable to run against: closed-form quadratics, the classic
banana valley, mini-batch logistic regression on synthetic clusters, and a
small ReLU network with a hand-derived backward pass."""

from __future__ import annotations

import numpy as np

from .core import GradientEstimate
from .data import Dataset, synthetic_blobs


class Problem:
    """Base oracle: a loss over a flat parameter vector of length dim.

    param_layout partitions the flat vector into named segments (one per
    schedulable weight group); single-group problems use [("x", dim)].
    Deterministic problems report n_samples == 0 and their mini-batch
    gradient is just the full gradient.
    """

    def __init__(self, name, dim, param_layout=None, known_constants=None,
                 n_samples=0):
        self.name = name
        self.dim = int(dim)
        self.param_layout = list(param_layout or [("x", self.dim)])
        self.known_constants = dict(known_constants or {})
        self.n_samples = int(n_samples)

    def loss(self, x) -> float:
        raise NotImplementedError

    def full_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def batch_loss(self, x, batch) -> float:
        return self.loss(x)

    def minibatch_gradient(self, x, batch=None, rng=None, step=0) -> GradientEstimate:
        return GradientEstimate(self.full_gradient(x), step=step)

    def initial_point(self, rng=None) -> np.ndarray:
        return np.ones(self.dim)

    def segments(self):
        """(id, slice) pairs carving the flat vector per param_layout."""
        out = []
        offset = 0
        for name, size in self.param_layout:
            out.append((name, slice(offset, offset + size)))
            offset += size
        return out


class _SampledProblem(Problem):
    """Dataset-backed problem: loss is the mean per-sample loss, and batch
    gradients average per-sample gradients over an index set."""

    def __init__(self, name, dim, n_samples, default_batch_size,
                 param_layout=None, known_constants=None):
        if default_batch_size < 1 or default_batch_size > n_samples:
            raise ValueError(
                f"batch size must be in [1, {n_samples}], got {default_batch_size}")
        super().__init__(name, dim, param_layout, known_constants,
                         n_samples=n_samples)
        self.default_batch_size = int(default_batch_size)

    def _batch_loss_grad(self, x, idx):
        raise NotImplementedError

    def loss(self, x):
        return self._batch_loss_grad(np.asarray(x, float), np.arange(self.n_samples))[0]

    def full_gradient(self, x):
        return self._batch_loss_grad(np.asarray(x, float), np.arange(self.n_samples))[1]

    def batch_loss(self, x, batch):
        return self._batch_loss_grad(np.asarray(x, float), np.asarray(batch))[0]

    def minibatch_gradient(self, x, batch=None, rng=None, step=0):
        if batch is None:
            if rng is None:
                raise ValueError("need either an index batch or an rng")
            batch = rng.choice(self.n_samples, size=self.default_batch_size,
                               replace=False)
        _, grad = self._batch_loss_grad(np.asarray(x, float), np.asarray(batch))
        return GradientEstimate(grad, step=step)


class QuadraticProblem(Problem):
    """f(x) = x'Ax/2 - b'x with A symmetric PSD; gradient Ax - b."""

    def __init__(self, A, b=None):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] < -1e-10:
            raise ValueError("A must be positive semidefinite")
        dim = A.shape[0]
        b = np.zeros(dim) if b is None else np.asarray(b, dtype=np.float64)
        if b.shape != (dim,):
            raise ValueError("b length must match A")

        constants = {"L": float(eigs[-1])}
        if eigs[0] > 1e-12:
            minimizer = np.linalg.solve(A, b)
            constants["minimizer"] = minimizer
            constants["f_star"] = float(0.5 * minimizer @ A @ minimizer - b @ minimizer)
        super().__init__("quadratic", dim, known_constants=constants)
        self.A = A
        self.b = b

    def loss(self, x):
        x = np.asarray(x, float)
        return float(0.5 * x @ self.A @ x - self.b @ x)

    def full_gradient(self, x):
        return self.A @ np.asarray(x, float) - self.b


def quadratic_problem(A, b=None) -> QuadraticProblem:
    return QuadraticProblem(A, b)


class RosenbrockProblem(Problem):
    """f(x, y) = (1-x)^2 + 100(y - x^2)^2; minimum 0 at (1, 1)."""

    def __init__(self):
        super().__init__("rosenbrock", 2,
                         known_constants={"f_star": 0.0,
                                          "minimizer": np.array([1.0, 1.0])})

    def loss(self, p):
        x, y = np.asarray(p, float)
        return float((1.0 - x) ** 2 + 100.0 * (y - x ** 2) ** 2)

    def full_gradient(self, p):
        x, y = np.asarray(p, float)
        return np.array([
            -2.0 * (1.0 - x) - 400.0 * x * (y - x ** 2),
            200.0 * (y - x ** 2),
        ])

    def initial_point(self, rng=None):
        return np.array([-1.2, 1.0])


def rosenbrock_problem() -> RosenbrockProblem:
    return RosenbrockProblem()


class LogisticProblem(_SampledProblem):
    """Binary cross-entropy with a sigmoid link on synthetic clusters."""

    def __init__(self, n_samples, dim, seed, batch_size=16, separation=4.0):
        if n_samples < dim:
            raise ValueError("need n_samples >= dim")
        dataset = synthetic_blobs(n_samples, dim, 2, seed, separation)
        X = dataset.features
        # sigmoid' <= 1/4 makes lambda_max(X'X)/(4n) a Lipschitz constant.
        L = float(np.linalg.eigvalsh(X.T @ X)[-1] / (4.0 * n_samples))
        super().__init__("logistic", dim, n_samples, batch_size,
                         known_constants={"L": L})
        self.dataset = dataset

    def _batch_loss_grad(self, w, idx):
        X = self.dataset.features[idx]
        y = self.dataset.labels[idx].astype(np.float64)
        z = X @ w
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        # Overflow-safe sigmoid, split on the sign of z.
        p = np.empty_like(z)
        pos = z >= 0
        p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        p[~pos] = ez / (1.0 + ez)
        grad = X.T @ (p - y) / idx.size
        return loss, grad

    def initial_point(self, rng=None):
        if rng is None:
            return np.zeros(self.dim)
        bound = 1.0 / np.sqrt(self.dim)
        return rng.uniform(-bound, bound, self.dim)


def logistic_problem(n_samples, dim, seed, batch_size=16, separation=4.0) -> LogisticProblem:
    return LogisticProblem(n_samples, dim, seed, batch_size, separation)


class MlpProblem(_SampledProblem):
    """Fully connected ReLU network, softmax outputs, mean cross-entropy.

    One parameter segment per weight matrix and per bias vector, so every
    tensor can carry its own scheduled rate. Backward pass is written out
    by hand (no autodiff).
    """

    def __init__(self, layer_sizes, dataset: Dataset, activation="relu",
                 batch_size=16):
        layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(layer_sizes) < 2:
            raise ValueError("need at least one weight matrix")
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        if layer_sizes[0] != dataset.dim:
            raise ValueError(
                f"input width {layer_sizes[0]} != feature dim {dataset.dim}")
        if layer_sizes[-1] != dataset.num_classes:
            raise ValueError(
                f"output width {layer_sizes[-1]} != classes {dataset.num_classes}")

        layout = []
        for i in range(1, len(layer_sizes)):
            layout.append((f"W{i}", layer_sizes[i - 1] * layer_sizes[i]))
            layout.append((f"b{i}", layer_sizes[i]))
        dim = sum(size for _, size in layout)
        super().__init__("mlp", dim, len(dataset), batch_size,
                         param_layout=layout)
        self.layer_sizes = layer_sizes
        self.dataset = dataset
        self._onehot = np.eye(dataset.num_classes)[dataset.labels]

    def _unpack(self, x):
        params = []
        offset = 0
        for i in range(1, len(self.layer_sizes)):
            n_in, n_out = self.layer_sizes[i - 1], self.layer_sizes[i]
            W = x[offset:offset + n_in * n_out].reshape(n_in, n_out)
            offset += n_in * n_out
            b = x[offset:offset + n_out]
            offset += n_out
            params.append((W, b))
        return params

    def _batch_loss_grad(self, x, idx):
        params = self._unpack(x)
        X = self.dataset.features[idx]
        Y = self._onehot[idx]
        batch = idx.size

        activations = [X]
        pre = []
        a = X
        for j, (W, b) in enumerate(params):
            z = a @ W + b
            pre.append(z)
            a = np.maximum(z, 0.0) if j < len(params) - 1 else z
            activations.append(a)

        logits = activations[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        loss = float(np.mean(logsumexp - (logits * Y).sum(axis=1)))

        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = (probs - Y) / batch
        grads = []
        for j in range(len(params) - 1, -1, -1):
            W, _ = params[j]
            a_in = activations[j]
            grads.append((a_in.T @ delta, delta.sum(axis=0)))
            if j > 0:
                delta = (delta @ W.T) * (pre[j - 1] > 0.0)
        grads.reverse()

        flat = np.concatenate([np.concatenate([gW.ravel(), gb])
                               for gW, gb in grads])
        return loss, flat

    def initial_point(self, rng=None):
        rng = rng or np.random.default_rng(0)
        parts = []
        for i in range(1, len(self.layer_sizes)):
            n_in, n_out = self.layer_sizes[i - 1], self.layer_sizes[i]
            bound = 1.0 / np.sqrt(n_in)
            parts.append(rng.uniform(-bound, bound, n_in * n_out))
            parts.append(rng.uniform(-bound, bound, n_out))
        return np.concatenate(parts)


def mlp_problem(layer_sizes, dataset, activation="relu", batch_size=16) -> MlpProblem:
    return MlpProblem(layer_sizes, dataset, activation, batch_size)


class NoisyGradientProblem(Problem):
    """Wrapper injecting zero-mean bounded noise into mini-batch gradients.

    With probability `prob` per estimate, a uniform(-scale, scale)
    perturbation is added per coordinate (prob=1 means every step; a small
    prob models rare bursts). The perturbation is zero-mean and independent of
    the batch, so estimates stay unbiased, and its norm stays below
    scale*sqrt(dim). Full gradients and losses pass through untouched; the
    noise stream is seeded, so runs sharing a seed see identical
    perturbations.
    """

    def __init__(self, inner: Problem, scale, seed=0, prob=1.0):
        if scale < 0:
            raise ValueError("noise scale must be >= 0")
        if not 0.0 <= prob <= 1.0:
            raise ValueError("noise probability must lie in [0, 1]")
        super().__init__(inner.name + "+noise", inner.dim, inner.param_layout,
                         inner.known_constants, n_samples=inner.n_samples)
        self.inner = inner
        self.scale = float(scale)
        self.prob = float(prob)
        self._noise_rng = np.random.default_rng(seed)

    def loss(self, x):
        return self.inner.loss(x)

    def full_gradient(self, x):
        return self.inner.full_gradient(x)

    def batch_loss(self, x, batch):
        return self.inner.batch_loss(x, batch)

    def minibatch_gradient(self, x, batch=None, rng=None, step=0):
        clean = self.inner.minibatch_gradient(x, batch=batch, rng=rng, step=step)
        values = clean.values
        if self._noise_rng.uniform() < self.prob:
            values = values + self._noise_rng.uniform(
                -self.scale, self.scale, self.dim)
        return GradientEstimate(values, step=step)

    def initial_point(self, rng=None):
        return self.inner.initial_point(rng)


def with_gradient_noise(problem: Problem, scale, seed=0, prob=1.0) -> NoisyGradientProblem:
    return NoisyGradientProblem(problem, scale, seed, prob)


def finite_difference_gradient(problem: Problem, x, step) -> np.ndarray:
    """Central-difference gradient of problem.loss, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be > 0")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for j in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[j] += step
        backward[j] -= step
        grad[j] = (problem.loss(forward) - problem.loss(backward)) / (2.0 * step)
    return grad


def estimate_sigma(problem: Problem, region_samples, radius=1.0, center=None,
                   rng=None, batch_size=None) -> float:
    """Empirical update-norm bound: 1.1 times the largest gradient norm
    seen over points sampled uniformly from a ball (and, for sampled
    problems, over random mini-batches at those points)."""
    if region_samples < 1:
        raise ValueError("need at least one sample")
    rng = rng or np.random.default_rng(0)
    center = np.zeros(problem.dim) if center is None else np.asarray(center, float)
    largest = 0.0
    for _ in range(int(region_samples)):
        direction = rng.normal(size=problem.dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            continue
        r = radius * rng.uniform() ** (1.0 / problem.dim)
        point = center + direction / norm * r
        largest = max(largest, float(np.linalg.norm(problem.full_gradient(point))))
        if batch_size and problem.n_samples:
            batch = rng.choice(problem.n_samples, size=batch_size, replace=False)
            g = problem.minibatch_gradient(point, batch=batch)
            largest = max(largest, g.norm2)
    return 1.1 * largest
