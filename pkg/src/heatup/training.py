"""Embedding network, SGD with momentum and temperature schedules.

The heated-up schedule trains at a starting ``alpha`` and then fine-tunes at
a smaller ``alpha`` (a higher temperature) with a reduced learning rate:
``TemperatureSchedule.step([(16, lr, E1), (4, lr / 10, E2)])``.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import BatchNormNoScale, L2NormLayer, LinearLayer, ReLU
from .loss_head import ClassifierHead, ce_loss, check_labels, grad_logits
from .numerics import as_matrix

EMBEDDING_NORMS = ("none", "l2", "batchnorm")


@dataclass
class Architecture:
    input_dim: int
    n_classes: int
    hidden: tuple = (256, 128)
    embedding_dim: int = 64
    embedding_norm: str = "l2"
    weight_norm: str = "l2"
    head_bias: bool | None = None
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    l2_epsilon: float = 1e-12

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.embedding_norm not in EMBEDDING_NORMS:
            raise ValueError(f"embedding_norm must be one of {EMBEDDING_NORMS}, "
                             f"got {self.embedding_norm!r}")
        widths = (self.input_dim, *self.hidden, self.embedding_dim, self.n_classes)
        if any(int(w) < 1 for w in widths):
            raise ValueError(f"all layer widths must be positive, got {widths}")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class EmbeddingNet:
    """MLP ``input -> (Linear, ReLU)* -> Linear(k)`` followed by an embedding normalizer."""

    def __init__(self, arch):
        self.arch = arch
        widths = (arch.input_dim, *arch.hidden)
        self.layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            self.layers += [LinearLayer(a, b), ReLU()]
        self.layers.append(LinearLayer(widths[-1], arch.embedding_dim))
        if arch.embedding_norm == "l2":
            self.norm = L2NormLayer(arch.l2_epsilon)
        elif arch.embedding_norm == "batchnorm":
            self.norm = BatchNormNoScale(arch.embedding_dim, arch.bn_epsilon, arch.bn_momentum)
        else:
            self.norm = None

    @property
    def linear_layers(self):
        return [layer for layer in self.layers if isinstance(layer, LinearLayer)]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def set_mode(self, mode):
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        if isinstance(self.norm, BatchNormNoScale):
            self.norm.training = mode == "train"

    def embed(self, x):
        """Unnormalized embedding ``f``."""
        h = x
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def forward(self, x):
        f = self.embed(x)
        f_hat = self.norm.forward(f) if self.norm is not None else f
        return f, f_hat

    def backward(self, grad_f_hat):
        g = self.norm.backward(grad_f_hat) if self.norm is not None else grad_f_hat
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


def glorot_uniform(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(arch, rng):
    """Build a network and head with Glorot-uniform weights and zero biases."""
    net = EmbeddingNet(arch)
    for layer in net.linear_layers:
        layer.weight.value[...] = glorot_uniform(rng, layer.in_dim, layer.out_dim)
    head = ClassifierHead(arch.embedding_dim, arch.n_classes, arch.weight_norm,
                          alpha=1.0, bias=arch.head_bias)
    head.weight.value[...] = glorot_uniform(rng, arch.embedding_dim, arch.n_classes)
    return net, head


def all_parameters(net, head):
    return net.parameters() + head.parameters()


def forward(net, head, x, mode="train"):
    """Return ``(f, f_hat, logits)`` for a batch of inputs."""
    x = as_matrix(x, "input")
    if x.shape[1] != net.arch.input_dim:
        raise ValueError(f"network expects {net.arch.input_dim} input columns, got shape {x.shape}")
    net.set_mode(mode)
    f, f_hat = net.forward(x)
    return f, f_hat, head.forward(f_hat)


def correct_mask(logits, labels):
    """Strictly correct predictions: the true logit beats every other logit."""
    z = np.asarray(logits)
    idx = np.arange(z.shape[0])
    others = z.copy()
    others[idx, labels] = -np.inf
    return z[idx, labels] > others.max(axis=1)


class SgdMomentum:
    """``v <- mu v - lr g``; ``theta <- theta + v``."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def reset(self):
        for v in self.velocity:
            v[...] = 0.0

    def step(self):
        for p, v in zip(self.params, self.velocity):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            v *= self.momentum
            v -= self.lr * g
            p.value += v


def backward_loss(net, head, logits, labels, alpha):
    """Backpropagate the batch-mean loss through head, normalizer and MLP."""
    grad_z = grad_logits(logits, labels, alpha)
    grad_f_hat = head.backward(grad_z)
    return net.backward(grad_f_hat)


def train_step(net, head, x, y, opt, alpha):
    """One forward/backward/update on a mini-batch; returns the batch loss."""
    loss, _ = _train_step(net, head, x, y, opt, alpha)
    return loss


def _train_step(net, head, x, y, opt, alpha):
    head.alpha = alpha
    _, _, z = forward(net, head, x, "train")
    y = check_labels(y, z.shape[0], head.n_classes)
    loss = ce_loss(z, y, alpha)
    net.zero_grad()
    head.zero_grad()
    backward_loss(net, head, z, y, alpha)
    opt.step()
    return loss, int(correct_mask(z, y).sum())


def embed_dataset(net, x, batch_size=1024):
    """Infer-mode ``(f, f_hat)`` for all rows, computed in chunks."""
    net.set_mode("infer")
    fs, fhs = [], []
    for start in range(0, x.shape[0], batch_size):
        f, f_hat = net.forward(x[start:start + batch_size])
        fs.append(f)
        fhs.append(f_hat)
    if not fs:
        k = net.arch.embedding_dim
        return np.zeros((0, k)), np.zeros((0, k))
    return np.concatenate(fs), np.concatenate(fhs)


def accuracy(net, head, batch):
    _, f_hat = embed_dataset(net, batch.x)
    return float(correct_mask(head.logits(f_hat), batch.y).mean())


# ---------------------------------------------------------------------------
# Schedules


@dataclass
class Phase:
    alpha: float
    lr: float
    epochs: int


@dataclass
class TemperatureSchedule:
    """Ordered ``(alpha, lr, epochs)`` phases, or a linear ramp in temperature."""

    mode: str = "step"
    phases: list = field(default_factory=list)
    alpha_start: float | None = None
    alpha_end: float | None = None
    total_epochs: int | None = None
    lr: float | None = None

    def __post_init__(self):
        self.phases = [p if isinstance(p, Phase) else Phase(*p) if not isinstance(p, dict)
                       else Phase(**p) for p in self.phases]
        if self.mode == "step":
            if not self.phases:
                raise ValueError("step schedule needs at least one phase")
            for p in self.phases:
                if not (p.alpha > 0 and p.lr > 0 and int(p.epochs) >= 1):
                    raise ValueError(f"invalid phase {p}: need alpha > 0, lr > 0, epochs >= 1")
                p.epochs = int(p.epochs)
        elif self.mode == "ramp":
            if not (self.alpha_start and self.alpha_start > 0 and self.alpha_end
                    and self.alpha_end > 0 and self.lr and self.lr > 0
                    and self.total_epochs and int(self.total_epochs) >= 1):
                raise ValueError("ramp schedule needs positive alpha_start, alpha_end, lr "
                                 "and total_epochs >= 1")
            self.total_epochs = int(self.total_epochs)
        else:
            raise ValueError(f"schedule mode must be 'step' or 'ramp', got {self.mode!r}")

    @classmethod
    def step(cls, phases):
        return cls("step", list(phases))

    @classmethod
    def fixed(cls, alpha, lr, epochs):
        return cls("step", [Phase(alpha, lr, epochs)])

    @classmethod
    def heat_up(cls, lr, epochs=(30, 20), alphas=(16.0, 4.0), lr_factor=0.1):
        return cls("step", [Phase(alphas[0], lr, epochs[0]),
                            Phase(alphas[1], lr * lr_factor, epochs[1])])

    @classmethod
    def ramp(cls, alpha_start, alpha_end, total_epochs, lr):
        return cls("ramp", [], alpha_start, alpha_end, total_epochs, lr)

    def epoch_plan(self):
        """List of ``(phase_index, alpha, lr)``, one entry per epoch."""
        if self.mode == "step":
            return [(i, p.alpha, p.lr) for i, p in enumerate(self.phases) for _ in range(p.epochs)]
        t0, t1 = 1.0 / self.alpha_start, 1.0 / self.alpha_end
        n = self.total_epochs
        plan = []
        for e in range(n):
            if e == n - 1:
                alpha = self.alpha_end
            elif e == 0:
                alpha = self.alpha_start
            else:
                alpha = 1.0 / (t0 + (t1 - t0) * e / (n - 1))
            plan.append((0, alpha, self.lr))
        return plan

    @property
    def n_epochs(self):
        return len(self.epoch_plan())

    def to_dict(self):
        d = {"mode": self.mode}
        if self.mode == "step":
            d["phases"] = [asdict(p) for p in self.phases]
        else:
            d.update(alpha_start=self.alpha_start, alpha_end=self.alpha_end,
                     total_epochs=self.total_epochs, lr=self.lr)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# Training log


LOG_FIELDS = ("epoch", "alpha", "lr", "mean_loss", "train_acc")


class TrainingLog:
    def __init__(self, records=None):
        self.records = list(records or [])

    def append(self, **record):
        self.records.append({k: record[k] for k in LOG_FIELDS})

    def column(self, name):
        return [r[name] for r in self.records]

    def __len__(self):
        return len(self.records)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(LOG_FIELDS) + "\n")
        for r in self.records:
            buf.write(f"{r['epoch']},{r['alpha']!r},{r['lr']!r},{r['mean_loss']!r},"
                      f"{r['train_acc']!r}\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([{"epoch": int(r["epoch"]), **{k: float(r[k]) for k in LOG_FIELDS[1:]}}
                    for r in rows])


# ---------------------------------------------------------------------------
# Trainer


class Trainer:
    """Runs a schedule epoch by epoch; its full state can be checkpointed.

    Each epoch shuffles the training set with the trainer's RNG and iterates
    over mini-batches, skipping a trailing batch with fewer than 2 rows.
    Optimizer velocity is reset to zero at the start of every phase.
    """

    def __init__(self, net, head, schedule, rng, batch_size=32, momentum=0.9,
                 weight_decay=0.0):
        self.net = net
        self.head = head
        self.schedule = schedule
        self.rng = rng
        self.batch_size = int(batch_size)
        self.opt = SgdMomentum(all_parameters(net, head), lr=schedule.epoch_plan()[0][2],
                               momentum=momentum, weight_decay=weight_decay)
        self.epoch = 0
        self.log = TrainingLog()

    @property
    def done(self):
        return self.epoch >= self.schedule.n_epochs

    def run_epoch(self, train):
        plan = self.schedule.epoch_plan()
        phase, alpha, lr = plan[self.epoch]
        if self.epoch == 0 or plan[self.epoch - 1][0] != phase:
            self.opt.reset()
        self.opt.lr = lr
        n = len(train)
        order = self.rng.permutation(n)
        total_loss, seen, correct = 0.0, 0, 0
        for start in range(0, n, self.batch_size):
            idx = order[start:start + self.batch_size]
            if idx.size < 2:
                continue
            loss, ok = _train_step(self.net, self.head, train.x[idx], train.y[idx], self.opt, alpha)
            total_loss += loss * idx.size
            seen += idx.size
            correct += ok
        self.epoch += 1
        self.log.append(epoch=self.epoch, alpha=float(alpha), lr=float(lr),
                        mean_loss=total_loss / seen, train_acc=correct / seen)

    def run(self, train, until_epoch=None, on_epoch=None):
        if len(train) < 2:
            raise ValueError("training set must contain at least 2 samples")
        stop = self.schedule.n_epochs if until_epoch is None else min(until_epoch,
                                                                      self.schedule.n_epochs)
        while self.epoch < stop:
            self.run_epoch(train)
            if on_epoch is not None:
                on_epoch(self)
        return self.log


def run_schedule(net, head, dataset, schedule, rng, batch_size=32, momentum=0.9,
                 weight_decay=0.0):
    """Train on ``dataset.train`` (or a :class:`SampleBatch`) following ``schedule``."""
    train = getattr(dataset, "train", dataset)
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    trainer = Trainer(net, head, schedule, rng, batch_size, momentum, weight_decay)
    return trainer.run(train)
