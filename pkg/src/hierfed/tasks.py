"""Loss/gradient oracles, synthetic datasets, and non-IID partitioning.

Model parameters are plain 1-D numpy vectors. Three task families:

* quadratic -- each device holds target points c_ij and the per-sample loss is
  ||w - c||^2 / 2, so every quantity of interest (optimum, gap, gradient
  noise) has a closed form. This is the main verification vehicle.
* logistic -- binary logistic regression on small hand-sized datasets.
* tiny_mlp -- one hidden layer with manual backprop, for qualitative
  multi-class runs at desk scale.

The quadratic task also works on exact-rational vectors (numpy object arrays
of fractions.Fraction): all its arithmetic is +, -, *, / so trajectories can
be computed without floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import Topology


class BatchTooLarge(ValueError):
    """Requested mini-batch exceeds the device's dataset."""


class InsufficientPool(ValueError):
    """Labeled pool cannot supply the requested partition."""


@dataclass
class LocalDataset:
    """One device's training data: feature rows plus (optional) labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.features)


def _sample_batch(size: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement indices, sorted for a deterministic sum order."""
    if batch > size:
        raise BatchTooLarge(f"batch {batch} > dataset size {size}")
    if batch == size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=batch, replace=False))


class Task:
    """Common surface: per-device losses and (stochastic) gradients."""

    kind: str
    dim: int
    batch_size: int
    datasets: list[LocalDataset]

    @property
    def n_devices(self) -> int:
        return len(self.datasets)

    def dataset_sizes(self) -> list[int]:
        return [d.size for d in self.datasets]

    def local_loss(self, device: int, w: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, device: int, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_gradient(self, device: int, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_gradient(
        self,
        device: int,
        w: np.ndarray,
        rng: np.random.Generator,
        batch_size: int | None = None,
    ) -> np.ndarray:
        """Gradient of the mean loss over a fresh uniform mini-batch."""
        b = self.batch_size if batch_size is None else batch_size
        idx = _sample_batch(self.datasets[device].size, b, rng)
        return self.batch_gradient(device, w, idx)

    def global_gradient(self, w: np.ndarray, weights: list | None = None) -> np.ndarray:
        """Full-batch gradient of the global objective (device average)."""
        if weights is None:
            total = self.full_gradient(0, w)
            for i in range(1, self.n_devices):
                total = total + self.full_gradient(i, w)
            return total / self.n_devices
        total = weights[0] * self.full_gradient(0, w)
        for i in range(1, self.n_devices):
            total = total + weights[i] * self.full_gradient(i, w)
        return total


class QuadraticTask(Task):
    """Per-sample loss ||w - c||^2 / 2 on device-local target points."""

    kind = "quadratic"

    def __init__(self, datasets: list[LocalDataset], batch_size: int):
        self.datasets = datasets
        self.batch_size = int(batch_size)
        self.dim = int(np.shape(datasets[0].features)[1])
        for ds in datasets:
            if ds.size < self.batch_size:
                raise BatchTooLarge("batch size exceeds a device dataset")

    def device_mean(self, device: int):
        feats = self.datasets[device].features
        return feats.sum(axis=0) / len(feats)

    def local_loss(self, device: int, w: np.ndarray):
        feats = self.datasets[device].features
        diff = feats - w[None, :]
        return (diff * diff).sum() / len(feats) / 2

    def full_gradient(self, device: int, w: np.ndarray) -> np.ndarray:
        return w - self.device_mean(device)

    def batch_gradient(self, device: int, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        batch = self.datasets[device].features[idx]
        return w - batch.sum(axis=0) / len(batch)

    def optimum(self) -> np.ndarray:
        """Unweighted global minimizer: the mean of the device means."""
        total = self.device_mean(0)
        for i in range(1, self.n_devices):
            total = total + self.device_mean(i)
        return total / self.n_devices

    def gradient_noise_sigma2(self) -> float:
        """Exact uniform bound on E||g_i(w) - grad F(w)||^2 over devices and w.

        For this task the stochastic gradient at device i deviates from the
        global full gradient by (a_bar - a_i) + (a_i - batch mean), which is
        independent of w; the two parts are uncorrelated, and the batch-mean
        variance follows the without-replacement sampling formula.
        """
        a_bar = self.optimum()
        worst = 0.0
        for i, ds in enumerate(self.datasets):
            a_i = self.device_mean(i)
            hetero = float(np.dot(a_i - a_bar, a_i - a_bar))
            d_i, b = ds.size, self.batch_size
            if d_i > 1 and b < d_i:
                centered = ds.features - a_i[None, :]
                s2 = float((centered * centered).sum()) / (d_i - 1)
                sampling = s2 / b * (1.0 - b / d_i)
            else:
                sampling = 0.0
            worst = max(worst, hetero + sampling)
        return worst


def make_quadratic_task(
    n_devices: int,
    dim: int,
    rng: np.random.Generator,
    center_spread: float = 1.0,
    sample_spread: float = 0.1,
    samples_per_device: int = 8,
    batch_size: int | None = None,
) -> QuadraticTask:
    """Random quadratic task: device centers a_i plus per-device sample clouds."""
    datasets = []
    for _ in range(n_devices):
        center = rng.normal(0.0, center_spread, size=dim)
        pts = center + rng.normal(0.0, sample_spread, size=(samples_per_device, dim))
        datasets.append(LocalDataset(features=pts))
    b = samples_per_device if batch_size is None else batch_size
    return QuadraticTask(datasets, batch_size=b)


class LogisticTask(Task):
    """Binary logistic regression, labels in {-1, +1}."""

    kind = "logistic"

    def __init__(self, datasets: list[LocalDataset], batch_size: int):
        self.datasets = datasets
        self.batch_size = int(batch_size)
        self.dim = datasets[0].features.shape[1]
        if any(ds.size < self.batch_size for ds in datasets):
            raise BatchTooLarge("batch size exceeds a device dataset")

    def _margins(self, device: int, w: np.ndarray, idx: np.ndarray | None = None):
        ds = self.datasets[device]
        x, y = ds.features, ds.labels
        if idx is not None:
            x, y = x[idx], y[idx]
        return x, y, y * (x @ w)

    def local_loss(self, device: int, w: np.ndarray) -> float:
        _, _, m = self._margins(device, w)
        return float(np.mean(np.logaddexp(0.0, -m)))

    def batch_gradient(self, device: int, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        x, y, m = self._margins(device, w, idx)
        coeff = -y / (1.0 + np.exp(m))
        return (coeff[:, None] * x).mean(axis=0)

    def full_gradient(self, device: int, w: np.ndarray) -> np.ndarray:
        return self.batch_gradient(device, w, np.arange(self.datasets[device].size))

    def accuracy(self, w: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        pred = np.where(features @ w >= 0.0, 1, -1)
        return float(np.mean(pred == labels))


class TinyMLPTask(Task):
    """One-hidden-layer softmax classifier with manual backprop.

    Parameters are flattened as [W1 (h x in), b1 (h), W2 (k x h), b2 (k)].
    Hidden activation is tanh, which keeps the loss smooth.
    """

    kind = "tiny_mlp"

    def __init__(
        self,
        datasets: list[LocalDataset],
        batch_size: int,
        n_classes: int,
        hidden: int = 16,
    ):
        if hidden > 32:
            raise ValueError("tiny MLP is capped at 32 hidden units")
        self.datasets = datasets
        self.batch_size = int(batch_size)
        if any(ds.size < self.batch_size for ds in datasets):
            raise BatchTooLarge("batch size exceeds a device dataset")
        self.n_in = datasets[0].features.shape[1]
        self.hidden = hidden
        self.n_classes = n_classes
        self.dim = hidden * self.n_in + hidden + n_classes * hidden + n_classes

    def _unpack(self, w: np.ndarray):
        h, n_in, k = self.hidden, self.n_in, self.n_classes
        ofs = 0
        w1 = w[ofs : ofs + h * n_in].reshape(h, n_in)
        ofs += h * n_in
        b1 = w[ofs : ofs + h]
        ofs += h
        w2 = w[ofs : ofs + k * h].reshape(k, h)
        ofs += k * h
        b2 = w[ofs : ofs + k]
        return w1, b1, w2, b2

    def _forward(self, w: np.ndarray, x: np.ndarray):
        w1, b1, w2, b2 = self._unpack(w)
        hid = np.tanh(x @ w1.T + b1)
        logits = hid @ w2.T + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return hid, probs

    def _loss_grad(self, w: np.ndarray, x: np.ndarray, y: np.ndarray):
        w1, b1, w2, b2 = self._unpack(w)
        hid, probs = self._forward(w, x)
        n = len(x)
        loss = -float(np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        dw2 = dlogits.T @ hid
        db2 = dlogits.sum(axis=0)
        dhid = (dlogits @ w2) * (1.0 - hid * hid)
        dw1 = dhid.T @ x
        db1 = dhid.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
        return loss, grad

    def local_loss(self, device: int, w: np.ndarray) -> float:
        ds = self.datasets[device]
        loss, _ = self._loss_grad(w, ds.features, ds.labels)
        return loss

    def batch_gradient(self, device: int, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        ds = self.datasets[device]
        _, grad = self._loss_grad(w, ds.features[idx], ds.labels[idx])
        return grad

    def full_gradient(self, device: int, w: np.ndarray) -> np.ndarray:
        return self.batch_gradient(device, w, np.arange(self.datasets[device].size))

    def accuracy(self, w: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        _, probs = self._forward(w, features)
        return float(np.mean(probs.argmax(axis=1) == labels))


def flat_global_loss(task: Task, weighted: bool = False):
    """Straight device average (or dataset-size-weighted average) of local losses."""

    def value(w: np.ndarray):
        losses = [task.local_loss(i, w) for i in range(task.n_devices)]
        if not weighted:
            return sum(losses) / task.n_devices
        sizes = task.dataset_sizes()
        return sum(d * l for d, l in zip(sizes, losses)) / sum(sizes)

    return value


def global_loss(task: Task, topology: Topology, w: np.ndarray, weighted: bool = False):
    """Global loss computed bottom-up through the hierarchy.

    Unweighted mode averages each node's children by device counts; weighted
    mode uses total dataset sizes instead. Both agree with the flat average
    over devices (see tests), the hierarchy only reorders the reduction.
    """
    if topology.n_devices != task.n_devices:
        raise ValueError("topology and task disagree on the device count")
    sizes = task.dataset_sizes()
    values = [task.local_loss(i, w) for i in range(task.n_devices)]
    mass = [float(s) for s in sizes] if weighted else [1.0] * task.n_devices
    for layer in range(1, topology.num_layers + 1):
        new_values, new_mass = [], []
        for node in range(topology.layer_sizes[layer]):
            kids = topology.children_of(layer, node)
            m = sum(mass[c] for c in kids)
            v = sum(mass[c] * values[c] for c in kids) / m
            new_values.append(v)
            new_mass.append(m)
        values, mass = new_values, new_mass
    return values[0]


_CASE_CLASSES = {1: 2, 2: 6, 3: None}  # None: all classes


def partition(
    features: np.ndarray,
    labels: np.ndarray,
    n_devices: int,
    case: int,
    size_range: tuple[int, int],
    rng: np.random.Generator,
) -> list[LocalDataset]:
    """Split a labeled pool across devices under one of three heterogeneity cases.

    Case 1 gives each device 2 randomly selected classes, case 2 gives 6, and
    case 3 draws uniformly from all classes. Device sizes are uniform in
    [lo, hi]. Draws are without replacement across devices, so the pool must
    be large enough; otherwise InsufficientPool is raised.
    """
    if case not in _CASE_CLASSES:
        raise ValueError(f"case must be 1, 2, or 3, got {case}")
    lo, hi = int(size_range[0]), int(size_range[1])
    if not 1 <= lo <= hi:
        raise ValueError(f"bad size range [{lo}, {hi}]")
    classes = np.unique(labels)
    k = _CASE_CLASSES[case] or len(classes)
    if k > len(classes):
        raise InsufficientPool(f"case {case} needs {k} classes, pool has {len(classes)}")

    pools = {int(c): list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    out = []
    for _ in range(n_devices):
        size = int(rng.integers(lo, hi + 1))
        chosen = rng.choice(classes, size=k, replace=False)
        per_class = np.full(k, size // k)
        per_class[rng.permutation(k)[: size % k]] += 1
        idx: list[int] = []
        for c, want in zip(chosen, per_class):
            pool = pools[int(c)]
            if len(pool) < want:
                raise InsufficientPool(f"class {c} exhausted ({len(pool)} < {want})")
            idx.extend(pool[:want])
            del pool[:want]
        idx_arr = np.sort(np.asarray(idx, dtype=int))
        out.append(LocalDataset(features=features[idx_arr], labels=labels[idx_arr]))
    return out


@dataclass
class SyntheticPool:
    """Gaussian-blob classification pool for desk-scale runs."""

    features: np.ndarray
    labels: np.ndarray
    holdout_features: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    holdout_labels: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def make_blob_pool(
    n_samples: int,
    n_classes: int,
    dim: int,
    rng: np.random.Generator,
    spread: float = 0.6,
    holdout_fraction: float = 0.2,
) -> SyntheticPool:
    centers = rng.normal(0.0, 2.0, size=(n_classes, dim))
    labels = rng.integers(0, n_classes, size=n_samples)
    features = centers[labels] + rng.normal(0.0, spread, size=(n_samples, dim))
    n_hold = int(n_samples * holdout_fraction)
    return SyntheticPool(
        features=features[n_hold:],
        labels=labels[n_hold:],
        holdout_features=features[:n_hold],
        holdout_labels=labels[:n_hold],
    )


def estimate_sigma2(
    task: Task,
    w0: np.ndarray,
    rng: np.random.Generator,
    trials: int = 200,
) -> float:
    """Empirical gradient-variance bound at w0: worst device's mean squared
    deviation of stochastic gradients from the global full-batch gradient."""
    g_ref = task.global_gradient(w0)
    worst = 0.0
    for i in range(task.n_devices):
        acc = 0.0
        for _ in range(trials):
            g = task.stochastic_gradient(i, w0, rng)
            diff = g - g_ref
            acc += float(np.dot(diff, diff))
        worst = max(worst, acc / trials)
    return worst
