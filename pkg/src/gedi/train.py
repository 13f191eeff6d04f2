"""Training loop: Adam over the composite objective with persistent SGLD chains.

One master seed fans out (via SeedSequence) into independent streams for data
generation, weight init, the batch/augmentation stream, and the replay buffer,
so runs are reproducible and checkpoints resume bit-for-bit.
"""

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from .autodiff import backward
from .config import resolved_text, write_resolved
from .evaluate import evaluate_clustering, addition_accuracy, nmi, write_summary
from .nn import init_model, predict, CHECKPOINT_VERSION
from .objectives import LossWeights, TrainBatch, composite
from .sampler import ReplayBuffer, SgldConfig

METRIC_COLUMNS = ("step", "loss_inv", "loss_prior", "loss_gen_surrogate", "loss_nesy", "nmi")


class TrainingAbort(RuntimeError):
    """Composite loss went non-finite; carries the step and the last report."""

    def __init__(self, step, report):
        self.step = step
        self.report = report
        super().__init__(f"non-finite loss at step {step}: {report}")


@dataclass
class Task:
    """Arrays and hooks the loop needs, independent of where data came from."""

    train_x: np.ndarray
    test_x: np.ndarray
    train_labels: np.ndarray | None
    test_labels: np.ndarray | None
    augment: callable
    bounds: tuple
    addition_train: object = None
    addition_test: object = None

    @property
    def input_dim(self):
        return self.train_x.shape[1]

    @property
    def n_examples(self):
        return len(self.addition_train.digits) if self.addition_train else len(self.train_x)


def _toy_task(cfg, maker, train_seed, test_seed):
    d = cfg["data"]
    train = maker(d["n_train"], train_seed)
    test = maker(d["n_test"], test_seed)
    sigma = d["aug_sigma"]
    return Task(
        train_x=train.points, test_x=test.points,
        train_labels=train.labels, test_labels=test.labels,
        augment=lambda x, rng: data_mod.augment_gaussian(x, sigma, rng),
        bounds=data_mod.data_bounds(train.points))


def _image_pools(cfg, train_seed, test_seed):
    d = cfg["data"]
    if d["dataset"] == "mnist":
        found = data_mod.find_mnist(d["data_dir"] or None, "train")
        found_test = data_mod.find_mnist(d["data_dir"] or None, "test")
        if not found or not found_test:
            raise FileNotFoundError(
                "MNIST IDX files not found; set data_dir or the "
                f"{data_mod.DATA_DIR_ENV} environment variable, or use dataset=digits")
        return data_mod.load_mnist_idx(*found), data_mod.load_mnist_idx(*found_test)
    if d["task"] == "addition":
        # enough slack for without-replacement triplet draws
        n_train_pool = max(6 * d["n_examples"], 600)
        n_test_pool = max(6 * d["n_test_examples"], 600)
    else:
        n_train_pool, n_test_pool = d["n_train"], d["n_test"]
    return (data_mod.make_digits(n_train_pool, train_seed),
            data_mod.make_digits(n_test_pool, test_seed))


def setup_task(cfg):
    """Materialize train/test data for a resolved config dict."""
    d = cfg["data"]
    seq = np.random.SeedSequence(cfg["train"]["seed"])
    train_seed, test_seed, tri_train_seed, tri_test_seed = seq.spawn(4)
    if d["dataset"] == "moons":
        return _toy_task(cfg, lambda n, s: data_mod.make_moons(n, d["noise_std"], s),
                         train_seed, test_seed)
    if d["dataset"] == "circles":
        return _toy_task(cfg, lambda n, s: data_mod.make_circles(
            n, d["noise_std"], d["inner_ratio"], s), train_seed, test_seed)

    train_pool, test_pool = _image_pools(cfg, train_seed, test_seed)
    pad, noise = d["image_pad"], d["image_noise"]
    augment = lambda x, rng: data_mod.augment_image(x, rng, pad, noise)
    bounds = (np.zeros(train_pool.points.shape[1]), np.ones(train_pool.points.shape[1]))
    if d["task"] == "cluster":
        n_train = min(d["n_train"], len(train_pool))
        n_test = min(d["n_test"], len(test_pool))
        return Task(
            train_x=train_pool.points[:n_train], test_x=test_pool.points[:n_test],
            train_labels=train_pool.labels[:n_train], test_labels=test_pool.labels[:n_test],
            augment=augment, bounds=bounds)
    add_train = data_mod.make_addition_dataset(train_pool, d["n_examples"], tri_train_seed)
    add_test = data_mod.make_addition_dataset(test_pool, d["n_test_examples"], tri_test_seed)
    test_x = add_test.stacked_images()
    test_labels = np.concatenate([add_test.digits[:, 0], add_test.digits[:, 1], add_test.digits[:, 2]])
    return Task(
        train_x=add_train.stacked_images(), test_x=test_x,
        train_labels=None, test_labels=test_labels,
        augment=augment, bounds=bounds,
        addition_train=add_train, addition_test=add_test)


@dataclass
class OptimConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


class Adam:
    """Bias-corrected Adam; weight decay enters as an L2 gradient term."""

    def __init__(self, tensors, cfg):
        self.tensors = list(tensors)
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.tensors]
        self.v = [np.zeros_like(p.data) for p in self.tensors]

    def step(self):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for i, p in enumerate(self.tensors):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if c.weight_decay:
                g = g + c.weight_decay * p.data
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)

    def zero_grad(self):
        for p in self.tensors:
            p.zero_grad()


class _BatchStream:
    """Shuffled epoch iterator whose position is part of the checkpoint."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self.perm = rng.permutation(n)
        self.cursor = 0

    def next_batch(self):
        if self.cursor + self.batch_size > self.n:
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.perm[self.cursor:self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return idx


def _sgld_config(cfg, bounds):
    s = cfg["sgld"]
    init = s["init"]
    use_bounds = None
    if init == "data_box":
        init = "uniform_box"
        use_bounds = bounds
    if s["clamp"] and use_bounds is None:
        use_bounds = bounds
    return SgldConfig(steps=s["steps"], step_size=s["step_size"], noise=s["noise"],
                      reinit_prob=s["reinit_prob"], init=init,
                      bounds=use_bounds, clamp=s["clamp"])


@dataclass
class TrainResult:
    params: object
    buffer: object
    step: int
    metrics: list
    summary: object
    out_dir: str | None


def _rng_state(rng):
    return json.dumps(rng.bit_generator.state)


def _set_rng_state(rng, payload):
    rng.bit_generator.state = json.loads(payload)


def save_checkpoint(path, params, adam, buffer, stream, run_rng, step):
    arrays = {"step": np.asarray(step), "adam_t": np.asarray(adam.t)}
    for i, p in enumerate(params.parameters()):
        arrays[f"p{i}"] = p.data
        arrays[f"m{i}"] = adam.m[i]
        arrays[f"v{i}"] = adam.v[i]
    arrays["buffer"] = buffer.states
    arrays["perm"] = stream.perm
    arrays["cursor"] = np.asarray(stream.cursor)
    meta = {
        "version": CHECKPOINT_VERSION,
        "descriptor": params.descriptor(),
        "run_rng": _rng_state(run_rng),
        "buffer_rng": _rng_state(buffer.rng),
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    with np.load(path) as z:
        out = {k: z[k] for k in z.files}
    out["meta"] = json.loads(bytes(out["meta"]).decode("utf-8"))
    if out["meta"]["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {out['meta']['version']!r}")
    return out


def _restore(params, adam, buffer, stream, run_rng, ckpt):
    for i, p in enumerate(params.parameters()):
        p.data = ckpt[f"p{i}"]
        adam.m[i] = ckpt[f"m{i}"]
        adam.v[i] = ckpt[f"v{i}"]
    adam.t = int(ckpt["adam_t"])
    buffer.states = ckpt["buffer"].copy()
    stream.perm = ckpt["perm"].copy()
    stream.cursor = int(ckpt["cursor"])
    _set_rng_state(run_rng, ckpt["meta"]["run_rng"])
    _set_rng_state(buffer.rng, ckpt["meta"]["buffer_rng"])
    return int(ckpt["step"])


def _fmt(value):
    return "" if value is None or (isinstance(value, float) and np.isnan(value)) else repr(value)


def run_training(cfg, task=None, out_dir=None, resume=None, log=None):
    """Train per a resolved config dict; returns a TrainResult.

    out_dir, when given, receives resolved.cfg, metrics.csv, timings.csv,
    checkpoint.npz, summary.txt, and (for 2-D data) points.csv / samples.csv.
    """
    if task is None:
        task = setup_task(cfg)
    seq = np.random.SeedSequence(cfg["train"]["seed"])
    _, _, _, _, init_seed, run_seed, buffer_seed = seq.spawn(7)
    init_rng = np.random.default_rng(init_seed)
    run_rng = np.random.default_rng(run_seed)

    m = cfg["model"]
    params = init_model(task.input_dim, m["encoder_hidden"], m["embed_dim"],
                        m["head_hidden"], m["n_clusters"], m["temperature"],
                        m["activation"], init_rng)
    weights = LossWeights(cfg["loss"]["w_gen"], cfg["loss"]["w_inv"],
                          cfg["loss"]["w_prior"], cfg["loss"]["w_nesy"])
    prior_mode = cfg["loss"]["prior_mode"]
    sgld_cfg = _sgld_config(cfg, task.bounds)
    buffer = ReplayBuffer(cfg["sgld"]["buffer_size"], task.input_dim, sgld_cfg,
                          np.random.default_rng(buffer_seed))
    o = cfg["optim"]
    adam = Adam(params.parameters(), OptimConfig(
        o["learning_rate"], o["beta1"], o["beta2"], o["eps"], o["weight_decay"]))

    batch_examples = cfg["train"]["batch_size"]
    if task.addition_train is not None:
        batch_examples = max(1, batch_examples // 3)
    stream = _BatchStream(task.n_examples, batch_examples, run_rng)

    start_step = 0
    if resume is not None:
        start_step = _restore(params, adam, buffer, stream, run_rng, resume)

    iterations = cfg["train"]["iterations"]
    eval_every = cfg["train"]["eval_every"]
    metrics_rows = []
    timing_rows = []
    t0 = time.perf_counter()

    for step in range(start_step + 1, iterations + 1):
        idx = stream.next_batch()
        if task.addition_train is not None:
            tri = task.addition_train
            triplet = (tri.x1[idx], tri.x2[idx], tri.x3[idx])
            x = np.concatenate(triplet, axis=0)
        else:
            triplet = None
            x = task.train_x[idx]
        x_aug = task.augment(x, run_rng) if weights.w_inv > 0 else None
        batch = TrainBatch(x=x, x_aug=x_aug, triplet=triplet)

        total, report = composite(params, batch, weights, buffer, sgld_cfg, prior_mode)
        if not np.isfinite(report.composite):
            raise TrainingAbort(step, report)
        params.zero_grad()
        backward(total)
        adam.step()

        row_nmi = None
        if eval_every and (step % eval_every == 0 or step == iterations):
            pred = predict(params, task.test_x).data.argmax(axis=1)
            if task.test_labels is not None:
                row_nmi = nmi(pred, task.test_labels)
            if log:
                log(f"step {step:6d}  inv={report.loss_inv:.4f} prior={report.loss_prior:.4f} "
                    f"gen={report.loss_gen:.4f} nesy={report.loss_nesy:.4f} nmi={row_nmi}")
        metrics_rows.append({
            "step": step, "loss_inv": report.loss_inv, "loss_prior": report.loss_prior,
            "loss_gen_surrogate": report.loss_gen, "loss_nesy": report.loss_nesy,
            "nmi": row_nmi})
        timing_rows.append((step, (time.perf_counter() - t0) * 1000.0))

    summary = evaluate_clustering(params, task.test_x, task.test_labels)
    if task.addition_test is not None:
        summary.accuracy = addition_accuracy(params, task.addition_test)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_resolved(cfg, os.path.join(out_dir, "resolved.cfg"))
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(METRIC_COLUMNS)
            for row in metrics_rows:
                w.writerow([_fmt(row[c]) if c != "step" else row["step"] for c in METRIC_COLUMNS])
        with open(os.path.join(out_dir, "timings.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("step", "wall_ms"))
            for step_i, ms in timing_rows:
                w.writerow((step_i, f"{ms:.3f}"))
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"),
                        params, adam, buffer, stream, run_rng, iterations)
        write_summary(summary, os.path.join(out_dir, "summary.txt"))
        if task.input_dim == 2:
            pred = predict(params, task.test_x).data.argmax(axis=1)
            with open(os.path.join(out_dir, "points.csv"), "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(("x0", "x1", "label", "cluster"))
                labels = task.test_labels if task.test_labels is not None else np.full(len(task.test_x), -1)
                for p, lab, c in zip(task.test_x, labels, pred):
                    w.writerow((repr(float(p[0])), repr(float(p[1])), int(lab), int(c)))
            if weights.w_gen > 0:
                show = buffer.states[:min(400, buffer.capacity)]
                with open(os.path.join(out_dir, "samples.csv"), "w", newline="") as f:
                    w = csv.writer(f)
                    w.writerow(("x0", "x1"))
                    for p in show:
                        w.writerow((repr(float(p[0])), repr(float(p[1]))))

    return TrainResult(params=params, buffer=buffer, step=iterations,
                       metrics=metrics_rows, summary=summary, out_dir=out_dir)
