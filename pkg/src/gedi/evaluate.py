"""Clustering quality, collapse detectors, and density-based OOD scoring."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, grad_wrt_input, tsum, scale
from .nn import encode, energy, predict

REPR_COLLAPSE_TOL = 1e-6
CLUSTER_COLLAPSE_TOL = 0.99


def nmi(labels_a, labels_b):
    """Normalized mutual information with arithmetic-mean normalization.

    NMI = I(a; b) / ((H(a) + H(b)) / 2), with 0/0 defined as 0. Symmetric,
    bounded in [0, 1], and invariant to relabeling either side.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if len(a) != len(b):
        raise ValueError(f"label arrays differ in length: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("label arrays are empty")
    n = len(a)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    counts = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(counts, (ai, bi), 1.0)
    pij = counts / n
    pa = pij.sum(axis=1)
    pb = pij.sum(axis=0)
    nz = pij > 0
    outer = pa[:, None] * pb[None, :]
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    ha = -float(np.sum(pa[pa > 0] * np.log(pa[pa > 0])))
    hb = -float(np.sum(pb[pb > 0] * np.log(pb[pb > 0])))
    denom = 0.5 * (ha + hb)
    if denom == 0.0:
        return 0.0
    # clip tiny negatives from rounding
    return float(max(0.0, mi / denom))


def detect_representational_collapse(params, x, tol=REPR_COLLAPSE_TOL):
    """(flag, statistic): trace of the embedding covariance under tol.

    Needs at least two points for a covariance to mean anything.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise ValueError(f"need at least 2 points to test for collapse, got {len(x)}")
    z = encode(params, x).data
    stat = float(np.sum(np.var(z, axis=0)))
    return stat < tol, stat


def detect_cluster_collapse(params, x, tol=CLUSTER_COLLAPSE_TOL):
    """(flag, statistic): max coordinate of the batch-mean prediction over tol."""
    q_bar = predict(params, np.asarray(x, dtype=np.float64)).data.mean(axis=0)
    stat = float(q_bar.max())
    return stat > tol, stat


def energy_gradient_score(energy_fn, x):
    """s(x) = -|| d(energy)/dx ||_2 per row; higher means more in-distribution."""
    xt = Tensor(np.asarray(x, dtype=np.float64))
    root = tsum(scale(energy_fn(xt), -1.0))
    g = grad_wrt_input(root, xt)
    return -np.linalg.norm(g, axis=1)


def ood_score(params, x):
    """Approximate-mass OOD score: minus the input-gradient norm of log density.

    The normalizer drops under d/dx, so the score needs only the energy.
    """
    return energy_gradient_score(lambda t: energy(params, t), x)


def auroc(scores_in, scores_out):
    """Probability a random in-distribution score outranks an out one, ties at 1/2.

    Rank-based Mann-Whitney with midranks, so exact under ties.
    """
    s_in = np.asarray(scores_in, dtype=np.float64).ravel()
    s_out = np.asarray(scores_out, dtype=np.float64).ravel()
    if len(s_in) == 0 or len(s_out) == 0:
        raise ValueError("auroc needs at least one score on each side")
    both = np.concatenate([s_in, s_out])
    order = np.argsort(both, kind="mergesort")
    ranks = np.empty(len(both))
    sorted_vals = both[order]
    # midranks over tied runs
    i = 0
    while i < len(both):
        j = i
        while j + 1 < len(both) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[:len(s_in)].sum() - len(s_in) * (len(s_in) + 1) / 2.0
    return float(u / (len(s_in) * len(s_out)))


def addition_accuracy(params, dataset):
    """Fraction of digit slots where argmax p(y|x) equals the true digit.

    Counts all three slots of every triplet, so chance is about 1/10 under an
    arbitrary cluster-to-digit assignment.
    """
    imgs = np.concatenate([dataset.x1, dataset.x2, dataset.x3], axis=0)
    truth = np.concatenate([dataset.digits[:, 0], dataset.digits[:, 1], dataset.digits[:, 2]])
    pred = predict(params, imgs).data.argmax(axis=1)
    return float(np.mean(pred == truth))


@dataclass
class EvalReport:
    nmi: float = float("nan")
    accuracy: float = float("nan")
    repr_collapse: bool = False
    repr_collapse_stat: float = float("nan")
    cluster_collapse: bool = False
    cluster_collapse_stat: float = float("nan")
    mean_energy: float = float("nan")
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {
            "nmi": self.nmi,
            "accuracy": self.accuracy,
            "repr_collapse": self.repr_collapse,
            "repr_collapse_stat": self.repr_collapse_stat,
            "cluster_collapse": self.cluster_collapse,
            "cluster_collapse_stat": self.cluster_collapse_stat,
            "mean_energy": self.mean_energy,
        }
        d.update(self.extra)
        return d


def evaluate_clustering(params, points, labels=None):
    """EvalReport on a labeled point set; NMI only when labels are given."""
    points = np.asarray(points, dtype=np.float64)
    report = EvalReport()
    pred = predict(params, points).data.argmax(axis=1)
    if labels is not None:
        report.nmi = nmi(pred, labels)
    report.repr_collapse, report.repr_collapse_stat = detect_representational_collapse(params, points)
    report.cluster_collapse, report.cluster_collapse_stat = detect_cluster_collapse(params, points)
    report.mean_energy = float(energy(params, points).data.mean())
    return report


def write_summary(report, path):
    """key=value lines, one metric per line."""
    with open(path, "w") as f:
        for key, value in report.as_dict().items():
            f.write(f"{key}={value}\n")
