"""Reusable experiment protocols behind the acceptance suite.

Each function trains small models from scratch with fixed seeds and returns
plain dictionaries of measurements, so results are reproducible bit for bit
on one machine.
"""

import numpy as np

from .data import BlobSpec, gen_blobs
from .evaluation import EmbeddingSet, compactness_report, evaluate
from .numerics import Rng
from .training import (Architecture, TemperatureSchedule, Trainer, accuracy, embed_dataset,
                       init_params, run_schedule)


def _all_samples(ds):
    return np.concatenate([ds.train.x, ds.test.x]), np.concatenate([ds.train.y, ds.test.y])


def anatomy_model(kind="l2", seed=0, epochs=30, lr=0.01):
    """Train a head on shared-class blobs for gradient-anatomy sweeps.

    ``kind="l2"`` normalizes embeddings and weights and trains at alpha 16;
    ``kind="sm"`` is the unnormalized softmax baseline at alpha 1. Returns
    ``(net, head, f, f_hat, labels)`` over every generated sample.
    """
    ds = gen_blobs(BlobSpec(n_classes=8, sigma=0.3, split_mode="shared_classes", seed=seed))
    norm, wn, alpha = ("l2", "l2", 16.0) if kind == "l2" else ("none", "off", 1.0)
    net, head = init_params(Architecture(32, 8, (64, 64), 16, norm, wn), Rng(seed))
    run_schedule(net, head, ds, TemperatureSchedule.fixed(alpha, lr, epochs), Rng(seed + 1))
    x, y = _all_samples(ds)
    f, f_hat = embed_dataset(net, x)
    return net, head, f, f_hat, y


HEATING_MODELS = ("fixed16", "heated", "fixed64")


def heating_benchmark(seeds=range(5), sigma=0.15, lr=0.01, epochs=(30, 20), hidden=(64, 64),
                      k=16, n_init=50):
    """Compare fixed alpha 16, the 16 -> 4 heat-up and fixed alpha 64 on unseen classes.

    Every model uses batch-normalized embeddings. The blob benchmark has 8
    training classes and 8 unseen test classes; test embeddings are scored
    with Recall@1 and NMI. Returns ``{model: {"recall1", "nmi", "runs"}}``.
    """
    e1, e2 = epochs
    schedules = {
        "fixed16": TemperatureSchedule.fixed(16.0, lr, e1),
        "heated": TemperatureSchedule.step([(16.0, lr, e1), (4.0, lr / 10, e2)]),
        "fixed64": TemperatureSchedule.fixed(64.0, lr, e1),
    }
    runs = {name: [] for name in schedules}
    for seed in seeds:
        ds = gen_blobs(BlobSpec(sigma=sigma, seed=seed))
        for name, sched in schedules.items():
            arch = Architecture(ds.train.dim, ds.train_class_count, hidden, k, "batchnorm", "l2")
            net, head = init_params(arch, Rng(seed))
            run_schedule(net, head, ds, sched, Rng(seed + 100))
            _, f_hat = embed_dataset(net, ds.test.x)
            rep = evaluate(EmbeddingSet(f_hat, ds.test.y), ks=(1,), rng=Rng(seed), n_init=n_init)
            runs[name].append({"seed": seed, "recall1": rep.recall[1], "nmi": rep.nmi})
    return {name: {"recall1": float(np.mean([r["recall1"] for r in rs])),
                   "nmi": float(np.mean([r["nmi"] for r in rs])), "runs": rs}
            for name, rs in runs.items()}


def compactness_study(dataset, alphas=(0.25, 4.0, 16.0, 64.0), seeds=range(3), epochs=25,
                      lr=0.01, hidden=(256, 128)):
    """Fixed-alpha training with 2-D L2-normalized embeddings.

    Returns ``{alpha: {"intra", "train_acc"}}`` averaged over seeds: the
    intra-class cosine of test embeddings and the final training accuracy.
    """
    out = {}
    for alpha in alphas:
        intra, acc = [], []
        for seed in seeds:
            arch = Architecture(dataset.train.dim, dataset.train_class_count, hidden, 2,
                                "l2", "l2")
            net, head = init_params(arch, Rng(seed))
            run_schedule(net, head, dataset, TemperatureSchedule.fixed(alpha, lr, epochs),
                         Rng(seed + 100))
            _, f_hat = embed_dataset(net, dataset.test.x)
            intra.append(compactness_report(EmbeddingSet(f_hat, dataset.test.y))[0])
            acc.append(accuracy(net, head, dataset.train))
        out[alpha] = {"intra": float(np.mean(intra)), "train_acc": float(np.mean(acc))}
    return out


def heatup_compactness(dataset, seeds=range(3), epochs=(25, 10), lr=0.01, hidden=(256, 128)):
    """Test intra-class cosine at the end of the alpha-16 phase and after heating to 4.

    Returns ``{"before": mean, "after": mean}`` over seeds.
    """
    before, after = [], []
    for seed in seeds:
        arch = Architecture(dataset.train.dim, dataset.train_class_count, hidden, 2, "l2", "l2")
        net, head = init_params(arch, Rng(seed))
        trainer = Trainer(net, head, TemperatureSchedule.heat_up(lr, epochs), Rng(seed + 100))
        for stop, sink in ((epochs[0], before), (sum(epochs), after)):
            trainer.run(dataset.train, until_epoch=stop)
            _, f_hat = embed_dataset(net, dataset.test.x)
            sink.append(compactness_report(EmbeddingSet(f_hat, dataset.test.y))[0])
    return {"before": float(np.mean(before)), "after": float(np.mean(after))}
