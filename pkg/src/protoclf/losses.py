"""Composite training objective, its analytic gradients, and a
finite-difference validator.

The objective combines class-weighted cross-entropy with four prototype
shaping terms and an L1 penalty on the head:

* clustering pulls each training example toward its nearest own-class
  prototype, and separation pushes it away from the nearest other-class
  prototype;
* distribution keeps every prototype near some training patch, and
  diversity keeps prototypes away from each other;
* an optional soft-feedback term pulls one chosen prototype toward a
  user-suggested vector until their similarity reaches the stated
  certainty (hinge; inactive once similarity >= certainty).

Every "nearest" is a similarity maximization. The inner reductions are
piecewise argmax selections, so gradients are subgradients through the
selected pair; ties break to the lowest (prototype, patch) index. A
``literal_min`` compatibility flag flips the four shaping reductions to
minimization for side-by-side comparison.

Gradients are derived by hand (prototypes and head only; the encoder is
frozen and external) and validated by :func:`fd_check`, which excludes
coordinates whose argmax selection switches inside the probe interval.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CertaintyRange,
    FrozenTarget,
    NoOtherClassPrototype,
    NoOwnClassPrototype,
    UnknownPrototype,
    ZeroProbability,
)
from .model import ClassifierHead, PrototypeSet
from .patching import COSINE, NEG_L2, pairwise_similarity

LOG_FLOOR = 1e-12


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LossWeights:
    """Term weights for the composite objective plus the similarity choice.

    Defaults follow the strongest sentence-level configuration reported for
    review-sentiment data (clst 0.5, sep 0.2, distr 0.1, divers 0.3,
    l1 0.001, interact 0.5).
    """

    clst: float = 0.5
    sep: float = 0.2
    distr: float = 0.1
    divers: float = 0.3
    l1: float = 0.001
    interact: float = 0.5
    sim_kind: str = COSINE
    literal_min: bool = False

    def __post_init__(self):
        for name in ("clst", "sep", "distr", "divers", "l1", "interact"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")

    def as_dict(self) -> dict:
        return {
            "clst": self.clst,
            "sep": self.sep,
            "distr": self.distr,
            "divers": self.divers,
            "l1": self.l1,
            "interact": self.interact,
            "sim_kind": self.sim_kind,
            "literal_min": self.literal_min,
        }


@dataclass
class InteractionTarget:
    """Soft-feedback request: pull prototype ``prototype_id`` toward ``vec``
    until their similarity reaches ``certainty``."""

    prototype_id: int
    vec: np.ndarray
    certainty: float

    def validate(self, protos: PrototypeSet) -> None:
        if not 0.0 <= self.certainty <= 1.0:
            raise CertaintyRange(f"certainty must be in [0, 1], got {self.certainty}")
        if not 0 <= self.prototype_id < protos.m:
            raise UnknownPrototype(f"no prototype {self.prototype_id}")
        if protos.frozen[self.prototype_id]:
            raise FrozenTarget(f"prototype {self.prototype_id} is frozen")


@dataclass
class LossBreakdown:
    """All term values (unweighted), the weighted total, and gradients."""

    ce: float
    clst: float
    sep: float
    distr: float
    divers: float
    l1: float
    interact: float
    total: float
    grads: dict[str, np.ndarray]
    active: tuple = field(default=(), repr=False)

    def terms_dict(self) -> dict[str, float]:
        return {
            "ce": self.ce,
            "clst": self.clst,
            "sep": self.sep,
            "distr": self.distr,
            "divers": self.divers,
            "l1": self.l1,
            "interact": self.interact,
            "total": self.total,
        }


# ---------------------------------------------------------------------------
# similarity derivatives

def _sim_grad_wrt_p(z: np.ndarray, p: np.ndarray, kind: str) -> np.ndarray:
    """d sim(z_i, p) / dp for each row z_i of ``z``; returns rows."""
    if kind == COSINE:
        nz = np.linalg.norm(z, axis=1)
        npp = np.linalg.norm(p)
        dots = z @ p
        return z / (nz * npp)[:, None] - np.outer(dots / (nz * npp**3), p)
    if kind == NEG_L2:
        diff = z - p[None, :]
        dist = np.linalg.norm(diff, axis=1)
        safe = np.where(dist > 0, dist, 1.0)
        return np.where(dist[:, None] > 0, diff / safe[:, None], 0.0)
    raise ValueError(f"unknown similarity kind {kind!r}")


def _sim_grad_pair(a: np.ndarray, b: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """(d sim/d a, d sim/d b) for a single vector pair."""
    ga = _sim_grad_wrt_p(b[None, :], a, kind)[0]
    gb = _sim_grad_wrt_p(a[None, :], b, kind)[0]
    return ga, gb


# ---------------------------------------------------------------------------
# per-example similarity profiles

def _profiles(
    patches: list[np.ndarray], vecs: np.ndarray, sim_kind: str, use_min: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Per example and prototype, the best similarity over patches and the
    index of the achieving patch (ties to the lowest patch index)."""
    n, m = len(patches), vecs.shape[0]
    s = np.empty((n, m))
    arg = np.empty((n, m), dtype=np.int64)
    for i, pm in enumerate(patches):
        sims = pairwise_similarity(pm, vecs, sim_kind)
        if use_min:
            s[i] = sims.min(axis=0)
            arg[i] = sims.argmin(axis=0)
        else:
            s[i] = sims.max(axis=0)
            arg[i] = sims.argmax(axis=0)
    return s, arg


def _gather(patches: list[np.ndarray], arg_col: np.ndarray) -> np.ndarray:
    """Stack, per example, the patch row selected for one prototype."""
    return np.stack([patches[i][arg_col[i]] for i in range(len(patches))])


# ---------------------------------------------------------------------------
# individual terms

def compute_class_weights(labels: np.ndarray, classes: int) -> np.ndarray:
    """Inverse-frequency weights n / (C * n_c); absent classes get 0."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=classes).astype(np.float64)
    weights = np.zeros(classes)
    present = counts > 0
    weights[present] = len(labels) / (classes * counts[present])
    return weights


def ce_loss(
    probs: np.ndarray, labels: np.ndarray, class_weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Class-weighted mean negative log-likelihood and its gradient with
    respect to the logits."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    n = probs.shape[0]
    if (probs < 0).any():
        raise ZeroProbability("probabilities must be nonnegative")
    w = class_weights[labels]
    picked = np.maximum(probs[np.arange(n), labels], LOG_FLOOR)
    loss = float(np.mean(w * -np.log(picked)))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    dlogits = (w[:, None] / n) * (probs - onehot)
    return loss, dlogits


@dataclass
class ClstSepResult:
    clst: float
    sep: float
    d_clst: np.ndarray
    d_sep: np.ndarray
    active: tuple


def clst_sep(
    patches: list[np.ndarray],
    labels: np.ndarray,
    protos: PrototypeSet,
    sim_kind: str,
    literal_min: bool = False,
) -> ClstSepResult:
    """Clustering and separation terms with subgradients through the
    selected (prototype, patch) pair of each example."""
    labels = np.asarray(labels)
    n = len(patches)
    s, arg = _profiles(patches, protos.vecs, sim_kind, use_min=literal_min)
    pick = np.argmin if literal_min else np.argmax

    d_clst = np.zeros_like(protos.vecs)
    d_sep = np.zeros_like(protos.vecs)
    clst_vals = np.empty(n)
    sep_vals = np.empty(n)
    chosen: list[tuple[int, int, int, int]] = []
    for i in range(n):
        own = np.flatnonzero(protos.class_of == labels[i])
        other = np.flatnonzero(protos.class_of != labels[i])
        if own.size == 0:
            raise NoOwnClassPrototype(f"class {int(labels[i])} owns no prototype")
        if other.size == 0:
            raise NoOtherClassPrototype(f"every prototype belongs to class {int(labels[i])}")
        j_own = own[int(pick(s[i, own]))]
        j_oth = other[int(pick(s[i, other]))]
        clst_vals[i] = s[i, j_own]
        sep_vals[i] = s[i, j_oth]
        z_own = patches[i][arg[i, j_own]]
        z_oth = patches[i][arg[i, j_oth]]
        d_clst[j_own] -= _sim_grad_wrt_p(z_own[None, :], protos.vecs[j_own], sim_kind)[0] / n
        d_sep[j_oth] += _sim_grad_wrt_p(z_oth[None, :], protos.vecs[j_oth], sim_kind)[0] / n
        chosen.append((int(j_own), int(arg[i, j_own]), int(j_oth), int(arg[i, j_oth])))
    return ClstSepResult(
        clst=float(-np.mean(clst_vals)),
        sep=float(np.mean(sep_vals)),
        d_clst=d_clst,
        d_sep=d_sep,
        active=tuple(chosen),
    )


@dataclass
class DistrDiversResult:
    distr: float
    divers: float
    d_distr: np.ndarray
    d_divers: np.ndarray
    active: tuple


def distr_divers(
    patches: list[np.ndarray] | np.ndarray,
    protos: PrototypeSet,
    sim_kind: str,
    literal_min: bool = False,
) -> DistrDiversResult:
    """Distribution term over all given patches and diversity term over
    prototype pairs (self-similarity excluded).

    ``patches`` may arrive pre-stacked as one (N, d) matrix; a list is
    concatenated in example order (so argmax ties stay index-ordered).
    """
    m = protos.m
    all_rows = patches if isinstance(patches, np.ndarray) else np.concatenate(patches, axis=0)
    sims = pairwise_similarity(all_rows, protos.vecs, sim_kind)
    if literal_min:
        best = sims.min(axis=0)
        best_idx = sims.argmin(axis=0)
    else:
        best = sims.max(axis=0)
        best_idx = sims.argmax(axis=0)

    d_distr = np.zeros_like(protos.vecs)
    for j in range(m):
        z = all_rows[best_idx[j]]
        d_distr[j] = -_sim_grad_wrt_p(z[None, :], protos.vecs[j], sim_kind)[0] / m
    distr = float(-np.mean(best))

    d_divers = np.zeros_like(protos.vecs)
    pair_choice: list[int] = []
    if m < 2:
        warnings.warn("diversity term undefined for a single prototype; reporting 0")
        divers = 0.0
    else:
        pp = pairwise_similarity(protos.vecs, protos.vecs, sim_kind)
        fill = np.inf if literal_min else -np.inf
        np.fill_diagonal(pp, fill)
        vals = np.empty(m)
        for jh in range(m):
            js = int(np.argmin(pp[jh]) if literal_min else np.argmax(pp[jh]))
            vals[jh] = pp[jh, js]
            ga, gb = _sim_grad_pair(protos.vecs[jh], protos.vecs[js], sim_kind)
            d_divers[jh] += ga / m
            d_divers[js] += gb / m
            pair_choice.append(js)
        divers = float(np.mean(vals))
    return DistrDiversResult(
        distr=distr,
        divers=divers,
        d_distr=d_distr,
        d_divers=d_divers,
        active=(tuple(int(v) for v in best_idx), tuple(pair_choice)),
    )


def _interact_hinge(
    protos: PrototypeSet, target: InteractionTarget, sim_kind: str
) -> tuple[float, np.ndarray]:
    """Unweighted hinge ``max(c - sim(p_target, p_new), 0)`` and its gradient."""
    target.validate(protos)
    dP = np.zeros_like(protos.vecs)
    if target.certainty == 0.0:
        return 0.0, dP
    j = target.prototype_id
    p_new = np.asarray(target.vec, dtype=np.float64)
    sim = float(
        pairwise_similarity(p_new[None, :], protos.vecs[j][None, :], sim_kind)[0, 0]
    )
    gap = target.certainty - sim
    if gap <= 0.0:
        return 0.0, dP
    dP[j] = -_sim_grad_wrt_p(p_new[None, :], protos.vecs[j], sim_kind)[0]
    return gap, dP


def interact_loss(
    protos: PrototypeSet,
    target: InteractionTarget,
    lam: float,
    sim_kind: str = COSINE,
) -> tuple[float, np.ndarray]:
    """Soft-feedback loss ``lam * max(c - sim(p_target, p_new), 0)``.

    Certainty 0 is a strict no-op (zero loss and gradient for any pair), so
    declining to push a prototype never perturbs training. The certainty
    scale is calibrated for cosine similarity.
    """
    hinge, dP = _interact_hinge(protos, target, sim_kind)
    return lam * hinge, lam * dP


# ---------------------------------------------------------------------------
# full objective

def total_loss(
    patches: list[np.ndarray],
    labels: np.ndarray,
    protos: PrototypeSet,
    head: ClassifierHead,
    weights: LossWeights,
    class_weights: np.ndarray | None = None,
    interaction: InteractionTarget | None = None,
    distr_patches: list[np.ndarray] | None = None,
) -> LossBreakdown:
    """Assemble every term and its gradients for one batch.

    ``distr_patches`` lets the distribution/diversity terms range over the
    full training set while cross-entropy/clustering/separation see only the
    minibatch. Frozen prototypes receive exactly zero gradient.
    """
    labels = np.asarray(labels)
    classes = head.classes
    if class_weights is None:
        class_weights = np.ones(classes)

    s, arg = _profiles(patches, protos.vecs, weights.sim_kind)
    w_eff = head.effective()
    logits = s @ w_eff.T
    probs = softmax_rows(logits)
    ce, dlogits = ce_loss(probs, labels, class_weights)

    dW = (dlogits.T @ s) * head.class_mask
    ds = dlogits @ w_eff
    dP = np.zeros_like(protos.vecs)
    for j in range(protos.m):
        zs = _gather(patches, arg[:, j])
        rows = _sim_grad_wrt_p(zs, protos.vecs[j], weights.sim_kind)
        dP[j] = ds[:, j] @ rows

    cs = clst_sep(patches, labels, protos, weights.sim_kind, weights.literal_min)
    dd = distr_divers(
        distr_patches if distr_patches is not None else patches,
        protos,
        weights.sim_kind,
        weights.literal_min,
    )

    l1 = float(np.abs(head.effective()).sum())
    dW_l1 = head.class_mask * np.sign(head.weights)

    interact_val = 0.0
    dP_interact = np.zeros_like(protos.vecs)
    hinge_active = False
    if interaction is not None:
        hinge, d_hinge = _interact_hinge(protos, interaction, weights.sim_kind)
        interact_val = hinge
        dP_interact = weights.interact * d_hinge
        hinge_active = hinge > 0.0

    total = (
        ce
        + weights.clst * cs.clst
        + weights.sep * cs.sep
        + weights.distr * dd.distr
        + weights.divers * dd.divers
        + weights.l1 * l1
        + weights.interact * interact_val
    )
    dP_total = (
        dP
        + weights.clst * cs.d_clst
        + weights.sep * cs.d_sep
        + weights.distr * dd.d_distr
        + weights.divers * dd.d_divers
        + dP_interact
    )
    dW_total = dW + weights.l1 * dW_l1
    dP_total[protos.frozen] = 0.0

    active = (
        tuple(int(v) for v in arg.ravel()),
        cs.active,
        dd.active,
        hinge_active,
    )
    return LossBreakdown(
        ce=ce,
        clst=cs.clst,
        sep=cs.sep,
        distr=dd.distr,
        divers=dd.divers,
        l1=l1,
        interact=interact_val,
        total=float(total),
        grads={"prototypes": dP_total, "head": dW_total},
        active=active,
    )


# ---------------------------------------------------------------------------
# finite-difference validation

@dataclass
class FdReport:
    """Outcome of a central finite-difference sweep over all coordinates."""

    max_rel_err: float
    checked: int
    excluded_ties: int
    worst: tuple | None = None

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def fd_check(f, arrays: list[np.ndarray], grads: list[np.ndarray], h: float = 1e-4) -> FdReport:
    """Compare analytic gradients against central finite differences.

    ``f(*arrays)`` must return ``(value, signature)`` where the signature
    identifies the active argmax selections; coordinates whose signature
    changes inside the probe interval sit on a subgradient kink and are
    excluded (counted, not compared). Relative error is guarded by
    ``max(1, |analytic|, |fd|)`` so near-zero gradients compare absolutely.
    """
    _, sig0 = f(*arrays)
    max_rel = 0.0
    checked = 0
    excluded = 0
    worst = None
    for a_idx, base in enumerate(arrays):
        flat = base.ravel()
        for c in range(flat.size):
            orig = flat[c]
            flat[c] = orig + h
            f_plus, sig_plus = f(*arrays)
            flat[c] = orig - h
            f_minus, sig_minus = f(*arrays)
            flat[c] = orig
            if sig_plus != sig0 or sig_minus != sig0:
                excluded += 1
                continue
            fd = (f_plus - f_minus) / (2 * h)
            an = grads[a_idx].ravel()[c]
            rel = abs(an - fd) / max(1.0, abs(an), abs(fd))
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (a_idx, c, float(an), float(fd))
    return FdReport(max_rel_err=max_rel, checked=checked, excluded_ties=excluded, worst=worst)
