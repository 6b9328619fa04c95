"""Optimization loop: Adam with a triangular warm-up/decay schedule, phased
training (joint, then projection, then head-only fine-tune), periodic
validation with best-model retention, and balanced-accuracy evaluation.

The whole loop is deterministic for a fixed seed: initialization, batch
order, and every argmax tie-break are seeded or index-ordered, so two runs
with the same seed produce byte-identical checkpoints and reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as model_mod
from .errors import Diverged, EmptyInput, IndivisibleM
from .losses import (
    InteractionTarget,
    LossWeights,
    compute_class_weights,
    total_loss,
)
from .model import (
    ClassifierHead,
    ProtoModel,
    PrototypeSet,
    example_patch_matrix,
)
from .patching import SelectorConfig
from .store import SENTENCE, WORD, Dataset


@dataclass
class TrainConfig:
    """Everything the trainer needs besides the data and the model."""

    epochs: int = 100
    lr_base: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    seed: int = 0
    m: int = 10
    loss_weights: LossWeights = field(default_factory=LossWeights)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    validate_every: int = 10
    project_at_epoch: int | None = None  # None = auto (0.8*epochs, sentence mode); 0 disables
    head_finetune_epochs: int = 20

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def resolve_project_epoch(self, mode: str) -> int | None:
        """Epoch after which projection happens, or None when disabled."""
        if mode != SENTENCE:
            return None
        if self.project_at_epoch is None:
            return max(1, round(0.8 * self.epochs))
        if self.project_at_epoch <= 0:
            return None
        return min(self.project_at_epoch, self.epochs)


def lr_at(step_i: int | float, epochs: int, lr_base: float = 0.001) -> float:
    """Learning rate at epoch ``step_i`` of a run with ``epochs`` total:
    ``lr_base * min(step/e_wup, (e - step)/(e - e_wup))`` with
    ``e_wup = min(10, e/20)`` warm-up epochs."""
    e_wup = min(10.0, epochs / 20.0)
    return lr_base * min(step_i / e_wup, (epochs - step_i) / (epochs - e_wup))


def balanced_accuracy(preds, labels, classes: int) -> float:
    """Mean per-class recall over the classes present in ``labels``."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptyInput("balanced accuracy of an empty batch is undefined")
    recalls = []
    for c in range(classes):
        mask = labels == c
        if mask.any():
            recalls.append(float(np.mean(preds[mask] == c)))
    return float(np.mean(recalls))


def init_prototypes(cfg: TrainConfig, dataset: Dataset) -> PrototypeSet:
    """Seeded unit-scale Gaussian prototypes with a balanced class mask
    (m/C prototypes per class, assigned in class blocks)."""
    classes = dataset.classes
    if cfg.m % classes != 0:
        raise IndivisibleM(f"m={cfg.m} is not divisible by {classes} classes")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    per_class = cfg.m // classes
    return PrototypeSet(
        vecs=rng.standard_normal((cfg.m, dataset.dim)),
        class_of=np.repeat(np.arange(classes), per_class).astype(np.int32),
        frozen=np.zeros(cfg.m, dtype=bool),
        display=[None] * cfg.m,
    )


def build_model(cfg: TrainConfig, dataset: Dataset, sim_kind: str = "cosine") -> ProtoModel:
    """Fresh model for a dataset: random prototypes plus an identity-masked
    head initialized to 1 on every on-class connection."""
    protos = init_prototypes(cfg, dataset)
    head = ClassifierHead.for_prototypes(protos.class_of, dataset.classes)
    return ProtoModel(
        mode=dataset.mode,
        sim_kind=sim_kind,
        selector=cfg.selector,
        protos=protos,
        head=head,
        seed=cfg.seed,
    )


class Adam:
    """Plain Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


class PatchCache:
    """Patch matrices per example index. Token vectors never change while
    prototypes train, so each matrix is computed once."""

    def __init__(self, dataset: Dataset, mode: str, selector: SelectorConfig):
        self.dataset = dataset
        self.mode = mode
        self.selector = selector
        self._data: dict[int, np.ndarray] = {}

    def get(self, idx: int) -> np.ndarray:
        mat = self._data.get(idx)
        if mat is None:
            mat = example_patch_matrix(self.dataset.examples[idx], self.mode, self.selector)
            self._data[idx] = mat
        return mat


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    lr: float
    terms: dict[str, float]
    val_acc: float | None = None

    def as_dict(self) -> dict:
        return {
            "phase": self.phase,
            "epoch": self.epoch,
            "lr": self.lr,
            "terms": self.terms,
            "val_acc": self.val_acc,
        }


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0
    final_test_acc: float | None = None
    projection: dict | None = None
    phase_best: dict[str, dict] = field(default_factory=dict)
    diverged: bool = False

    def as_dict(self) -> dict:
        return {
            "epochs": [r.as_dict() for r in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "final_test_acc": self.final_test_acc,
            "projection": self.projection,
            "phase_best": self.phase_best,
            "diverged": self.diverged,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class EpochEvent:
    """Snapshot emitted to the progress hook after every epoch."""

    phase: str
    epoch: int
    lr: float
    terms: dict[str, float]
    val_acc: float | None
    m: int


class Trainer:
    """Owns the model during optimization.

    A hook, when given, runs at every epoch boundary; it may mutate the
    model through the interaction engine and must return True if it changed
    the parameter shapes (the optimizer state is then rebuilt).
    """

    def __init__(self, model: ProtoModel, dataset: Dataset, cfg: TrainConfig, hook=None):
        if dataset.dim != model.dim:
            raise ValueError(f"dataset dim {dataset.dim} != model dim {model.dim}")
        self.model = model
        self.dataset = dataset
        self.cfg = cfg
        self.hook = hook
        self.weights = replace(cfg.loss_weights, sim_kind=model.sim_kind)
        self.cache = PatchCache(dataset, model.mode, model.selector)
        self.labels = np.array([ex.label for ex in dataset.examples])
        self.train_idx = np.asarray(dataset.split.train)
        self.class_weights = compute_class_weights(
            self.labels[self.train_idx], model.classes
        )
        self._all_train_rows: np.ndarray | None = None
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    # -- helpers ------------------------------------------------------------

    def all_train_rows(self) -> np.ndarray:
        if self._all_train_rows is None:
            self._all_train_rows = np.concatenate(
                [self.cache.get(i) for i in self.train_idx], axis=0
            )
        return self._all_train_rows

    def predictions(self, indices: np.ndarray) -> np.ndarray:
        w_eff = self.model.head.effective()
        preds = np.empty(len(indices), dtype=np.int64)
        for pos, i in enumerate(indices):
            _, s = model_mod.forward(
                self.dataset.examples[i], self.model, patches=self.cache.get(i)
            )
            preds[pos] = int(np.argmax(w_eff @ s))
        return preds

    def evaluate(self, indices: np.ndarray) -> float:
        return balanced_accuracy(
            self.predictions(indices), self.labels[indices], self.model.classes
        )

    # -- core epoch ---------------------------------------------------------

    def run_epoch(
        self,
        lr: float,
        adam_p: Adam | None,
        adam_w: Adam | None,
        trainable: np.ndarray | None = None,
        interaction: InteractionTarget | None = None,
    ) -> dict[str, float]:
        """One pass over the training split in shuffled minibatches.

        ``adam_p``/``adam_w`` being None freezes prototypes/head for the
        epoch; ``trainable`` further restricts which prototype rows move.
        Returns mean term values over the epoch's steps.
        """
        order = self.train_idx[self.rng.permutation(len(self.train_idx))]
        protos, head = self.model.protos, self.model.head
        sums: dict[str, float] = {}
        steps = 0
        full_rows = self.all_train_rows()
        for start in range(0, len(order), self.cfg.batch_size):
            batch = order[start : start + self.cfg.batch_size]
            bd = total_loss(
                patches=[self.cache.get(i) for i in batch],
                labels=self.labels[batch],
                protos=protos,
                head=head,
                weights=self.weights,
                class_weights=self.class_weights,
                interaction=interaction,
                distr_patches=full_rows,
            )
            if not np.isfinite(bd.total):
                raise Diverged(f"non-finite loss {bd.total} at step {steps}")
            dP = bd.grads["prototypes"]
            if trainable is not None:
                dP = dP * trainable[:, None]
            if adam_p is not None:
                adam_p.step([protos.vecs], [dP], lr)
            if adam_w is not None:
                adam_w.step([head.weights], [bd.grads["head"]], lr)
                np.maximum(head.weights, 0.0, out=head.weights)
                head.weights *= head.class_mask
            for key, val in bd.terms_dict().items():
                sums[key] = sums.get(key, 0.0) + val
            steps += 1
        return {k: v / steps for k, v in sums.items()}

    # -- phases -------------------------------------------------------------

    def _run_phase(
        self,
        name: str,
        steps: range,
        schedule_epochs: int,
        report: TrainReport,
        train_protos: bool,
        train_head: bool,
    ) -> None:
        """Run one training phase with validation and best-model retention.

        The learning rate follows the global schedule, clamped to its final
        (zero) value if a phase extends past ``schedule_epochs``.
        """
        adam_p = Adam([self.model.protos.vecs], self.cfg.beta1, self.cfg.beta2, self.cfg.eps) if train_protos else None
        adam_w = Adam([self.model.head.weights], self.cfg.beta1, self.cfg.beta2, self.cfg.eps) if train_head else None
        best: tuple[float, int, ProtoModel] | None = None
        last_good = self.model.clone()
        last = steps[-1]
        for step in steps:
            lr = lr_at(min(step, schedule_epochs), schedule_epochs, self.cfg.lr_base)
            try:
                terms = self.run_epoch(lr, adam_p, adam_w)
            except Diverged as exc:
                self._restore(last_good)
                report.diverged = True
                err = Diverged(f"{name} phase, epoch {step}: {exc}")
                err.report = report
                raise err from exc
            last_good = self.model.clone()
            val_acc = None
            if step % self.cfg.validate_every == 0 or step == last:
                val_acc = (
                    self.evaluate(self.dataset.split.val)
                    if len(self.dataset.split.val)
                    else None
                )
                if val_acc is not None and (best is None or val_acc > best[0]):
                    best = (val_acc, step, self.model.clone())
            record = EpochRecord(phase=name, epoch=step, lr=lr, terms=terms, val_acc=val_acc)
            report.epochs.append(record)
            self.model.epoch = step
            if self.hook is not None:
                changed = self.hook(
                    EpochEvent(name, step, lr, terms, val_acc, self.model.m)
                )
                if changed:
                    adam_p = Adam([self.model.protos.vecs], self.cfg.beta1, self.cfg.beta2, self.cfg.eps) if train_protos else None
                    adam_w = Adam([self.model.head.weights], self.cfg.beta1, self.cfg.beta2, self.cfg.eps) if train_head else None
        if best is not None:
            self._restore(best[2])
            report.phase_best[name] = {"epoch": best[1], "val_acc": best[0]}
            report.best_epoch = best[1]
            report.best_val_acc = best[0]

    def _restore(self, snapshot: ProtoModel) -> None:
        self.model.protos = snapshot.protos
        self.model.head = snapshot.head
        self.model.epoch = snapshot.epoch

    def run(self) -> TrainReport:
        """Full training pipeline for the configured phases."""
        report = TrainReport()
        cfg = self.cfg
        project_at = cfg.resolve_project_epoch(self.model.mode)
        joint_end = project_at if project_at is not None else cfg.epochs

        self._run_phase(
            "joint",
            range(1, joint_end + 1),
            schedule_epochs=cfg.epochs,
            report=report,
            train_protos=True,
            train_head=True,
        )

        if project_at is not None:
            pre_val = self.evaluate(self.dataset.split.val) if len(self.dataset.split.val) else None
            pre_test = self.evaluate(self.dataset.split.test) if len(self.dataset.split.test) else None
            entries = model_mod.project(self.model, self.dataset)
            post_val = self.evaluate(self.dataset.split.val) if len(self.dataset.split.val) else None
            post_test = self.evaluate(self.dataset.split.test) if len(self.dataset.split.test) else None
            report.projection = {
                "at_epoch": project_at,
                "entries": [e.as_dict() for e in entries],
                "pre_val_acc": pre_val,
                "post_val_acc": post_val,
                "pre_test_acc": pre_test,
                "post_test_acc": post_test,
            }
            self._run_phase(
                "head_finetune",
                range(joint_end + 1, joint_end + cfg.head_finetune_epochs + 1),
                schedule_epochs=cfg.epochs,
                report=report,
                train_protos=False,
                train_head=True,
            )

        if self.model.mode == WORD:
            model_mod.nn_display(self.model, self.dataset)

        if len(self.dataset.split.test):
            report.final_test_acc = self.evaluate(self.dataset.split.test)
        return report


def train(dataset: Dataset, model: ProtoModel, cfg: TrainConfig, hook=None):
    """Train ``model`` in place; returns ``(model, report)``."""
    trainer = Trainer(model, dataset, cfg, hook=hook)
    report = trainer.run()
    return model, report
