"""Interaction command engine.

Strong-knowledge edits (remove / add / replace) restructure the prototype
set directly; weak-knowledge edits (re-initialize / fine-tune / prune)
relearn or compress a prototype the user dislikes without demanding a
replacement; soft feedback pulls a prototype toward a suggested one with a
user-stated certainty. Every op except a rejected prune ends with a
head-only retrain so the classification layer adapts to the new prototype
setup.

Frozen prototypes are protected from every targeted edit; unfreeze first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .errors import (
    CertaintyRange,
    FrozenTarget,
    InvalidCommand,
    ProviderCapability,
    UnknownPrototype,
)
from .losses import InteractionTarget
from .model import DisplayRef, ProtoModel
from .patching import pairwise_similarity
from .store import SENTENCE, Dataset, EmbeddingProvider
from .trainer import Adam, TrainConfig, Trainer, lr_at

VALID_OPS = ("remove", "add", "replace", "reinit", "finetune", "prune", "soft_replace")
SENTENCE_END = (".", "!", "?")
PRUNE_MAX_SENTENCES = 2
PRUNE_MAX_TOKENS = 15


@dataclass
class InteractionCommand:
    """One typed user edit. ``target`` is required for every op except add;
    add/replace/soft_replace need a payload (example id, raw text, or a raw
    vector); soft_replace needs a certainty."""

    op: str
    target: int | None = None
    example_id: str | None = None
    text: str | None = None
    vector: np.ndarray | None = None
    certainty: float | None = None
    prune_threshold: float = 0.8
    new_class: int | None = None

    def validate(self) -> None:
        if self.op not in VALID_OPS:
            raise InvalidCommand(f"op must be one of {VALID_OPS}, got {self.op!r}")
        if self.op != "add" and self.target is None:
            raise InvalidCommand(f"op {self.op!r} requires a target prototype")
        if self.op in ("add", "replace", "soft_replace") and not self._has_payload():
            raise InvalidCommand(f"op {self.op!r} requires a payload (example_id, text or vector)")
        if self.op == "soft_replace":
            if self.certainty is None:
                raise CertaintyRange("soft_replace requires a certainty")
            if not 0.0 <= self.certainty <= 1.0:
                raise CertaintyRange(f"certainty must be in [0, 1], got {self.certainty}")

    def _has_payload(self) -> bool:
        return self.example_id is not None or self.text is not None or self.vector is not None

    @staticmethod
    def from_json(body: dict) -> "InteractionCommand":
        known = {"op", "target", "example_id", "text", "certainty", "prune_threshold", "class"}
        unknown = set(body) - known
        if unknown:
            raise InvalidCommand(f"unknown command fields: {sorted(unknown)}")
        if "op" not in body:
            raise InvalidCommand("command needs an op")
        return InteractionCommand(
            op=body["op"],
            target=body.get("target"),
            example_id=body.get("example_id"),
            text=body.get("text"),
            certainty=body.get("certainty"),
            prune_threshold=body.get("prune_threshold", 0.8),
            new_class=body.get("class"),
        )


@dataclass
class InteractionOutcome:
    accepted: bool
    before: dict
    after: dict
    retrain_epochs_used: int
    message: str
    command_op: str = ""

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "before": self.before,
            "after": self.after,
            "retrain_epochs_used": self.retrain_epochs_used,
            "message": self.message,
            "op": self.command_op,
        }


class InteractionEngine:
    """Applies commands to a model with exclusive access (the caller
    serializes; the gateway drains its queue at epoch boundaries)."""

    def __init__(
        self,
        model: ProtoModel,
        dataset: Dataset,
        cfg: TrainConfig,
        provider: EmbeddingProvider | None = None,
    ):
        self.model = model
        self.dataset = dataset
        self.cfg = cfg
        self.provider = provider
        self.trainer = Trainer(model, dataset, cfg)
        self._counter = 0

    # -- public -------------------------------------------------------------

    def apply(self, command: InteractionCommand) -> InteractionOutcome:
        command.validate()
        before = self._snapshot_metrics()
        self._counter += 1

        handler = getattr(self, f"_op_{command.op}")
        accepted, message, retrain = handler(command)

        retrain_used = 0
        if retrain:
            retrain_used = self.retrain_head()
        after = self._snapshot_metrics()
        return InteractionOutcome(
            accepted=accepted,
            before=before,
            after=after,
            retrain_epochs_used=retrain_used,
            message=message,
            command_op=command.op,
        )

    def freeze(self, prototype_ids, flag: bool = True) -> ProtoModel:
        for j in prototype_ids:
            self._check_id(j)
            self.model.protos.frozen[j] = flag
        return self.model

    # -- op handlers: return (accepted, message, retrain_head) ---------------

    def _op_remove(self, cmd: InteractionCommand):
        j = self._check_target(cmd)
        protos = self.model.protos
        cls = int(protos.class_of[j])
        if np.count_nonzero(protos.class_of == cls) <= 1:
            return False, f"cannot remove the last prototype of class {cls}", False
        self._remove_row(j)
        return True, f"removed prototype {j} (class {cls})", True

    def _op_add(self, cmd: InteractionCommand):
        vec, display, cls = self._resolve_payload(cmd)
        if cls is None:
            raise InvalidCommand("add needs a class (explicit, or implied by example_id)")
        new_id = self._append_row(vec, display, cls)
        return True, f"added prototype {new_id} (class {cls})", True

    def _op_replace(self, cmd: InteractionCommand):
        j = self._check_target(cmd)
        vec, display, cls = self._resolve_payload(cmd)
        if cls is None:
            cls = int(self.model.protos.class_of[j])
        self._remove_row(j)
        new_id = self._append_row(vec, display, cls)
        return True, f"replaced prototype {j} with new prototype {new_id} (class {cls})", True

    def _op_reinit(self, cmd: InteractionCommand):
        j = self._check_target(cmd)
        rng = np.random.default_rng(
            np.random.SeedSequence([self.cfg.seed, 2, self._counter])
        )
        self.model.protos.vecs[j] = rng.standard_normal(self.model.dim)
        self.model.protos.display[j] = None
        epochs = self._optimize_single(j)
        return True, f"re-initialized prototype {j} and relearned it for {epochs} epochs", True

    def _op_finetune(self, cmd: InteractionCommand):
        j = self._check_target(cmd)
        epochs = self._optimize_single(j)
        return True, f"fine-tuned prototype {j} for {epochs} epochs", True

    def _op_soft_replace(self, cmd: InteractionCommand):
        c = float(cmd.certainty)
        if c == 1.0:
            # full certainty means a hard replacement
            return self._op_replace(cmd)
        j = self._check_target(cmd)
        vec, display, _ = self._resolve_payload(cmd)
        if c == 0.0:
            return True, "certainty 0: prototype left unchanged", True
        target = InteractionTarget(prototype_id=j, vec=vec, certainty=c)
        epochs = self._optimize_single(j, interaction=target, stop_when_closed=True)
        sim = float(
            pairwise_similarity(
                vec[None, :], self.model.protos.vecs[j][None, :], self.model.sim_kind
            )[0, 0]
        )
        return True, (
            f"soft feedback on prototype {j}: similarity {sim:.3f} "
            f"after {epochs} epochs (certainty {c})"
        ), True

    def _op_prune(self, cmd: InteractionCommand):
        j = self._check_target(cmd)
        display = self.model.protos.display[j]
        if display is None:
            raise InvalidCommand(
                f"prototype {j} has no display text to prune; project first or add by text"
            )
        tokens = display.text.split()
        cut = prune_cut_length(tokens)
        if cut >= len(tokens):
            return True, "display text already within prune limits", True
        provider = self._require_novel_text("prune")
        pruned = tokens[:cut]
        new_vec, _ = provider.encode(pruned)
        new_vec = np.asarray(new_vec, dtype=np.float64)
        sim = float(
            pairwise_similarity(
                new_vec[None, :], self.model.protos.vecs[j][None, :], "cosine"
            )[0, 0]
        )
        if sim < cmd.prune_threshold:
            return False, (
                f"prune rejected: similarity {sim:.3f} below threshold {cmd.prune_threshold}"
            ), False
        self.model.protos.vecs[j] = new_vec
        self.model.protos.display[j] = DisplayRef(
            source_id=display.source_id, text=" ".join(pruned)
        )
        return True, (
            f"pruned prototype {j} from {len(tokens)} to {cut} tokens "
            f"(similarity {sim:.3f})"
        ), True

    # -- internals ------------------------------------------------------------

    def _snapshot_metrics(self) -> dict:
        val_idx = self.dataset.split.val
        acc = self.trainer.evaluate(val_idx) if len(val_idx) else None
        return {"val_acc": acc, "digest": model_mod.digest(self.model)}

    def _check_id(self, j) -> int:
        if j is None or not 0 <= int(j) < self.model.m:
            raise UnknownPrototype(f"no prototype {j}")
        return int(j)

    def _check_target(self, cmd: InteractionCommand) -> int:
        j = self._check_id(cmd.target)
        if self.model.protos.frozen[j]:
            raise FrozenTarget(f"prototype {j} is frozen; unfreeze it before editing")
        return j

    def _require_novel_text(self, what: str) -> EmbeddingProvider:
        if self.provider is None or not self.provider.novel_text:
            raise ProviderCapability(
                f"{what} requires an embedding provider that handles novel text"
            )
        return self.provider

    def _resolve_payload(self, cmd: InteractionCommand):
        """Payload vector, display reference, and (maybe) class."""
        if cmd.vector is not None:
            vec = np.asarray(cmd.vector, dtype=np.float64)
            display = DisplayRef(source_id="user", text=cmd.text or "(user vector)")
            return vec, display, cmd.new_class
        if cmd.example_id is not None:
            ex = self.dataset.by_id(cmd.example_id)
            if self.model.mode == SENTENCE:
                vec = np.asarray(ex.sentence_vec, dtype=np.float64)
            else:
                from .store import mean_pool

                vec = mean_pool(ex.token_vecs)
            cls = cmd.new_class if cmd.new_class is not None else ex.label
            return vec, DisplayRef(source_id=ex.id, text=ex.text), cls
        provider = self._require_novel_text("add/replace by text")
        tokens = cmd.text.split()
        if not tokens:
            raise InvalidCommand("payload text is empty")
        sentence_vec, _ = provider.encode(tokens)
        vec = np.asarray(sentence_vec, dtype=np.float64)
        return vec, DisplayRef(source_id="user", text=cmd.text), cmd.new_class

    def _remove_row(self, j: int) -> None:
        protos, head = self.model.protos, self.model.head
        keep = np.arange(protos.m) != j
        protos.vecs = protos.vecs[keep].copy()
        protos.class_of = protos.class_of[keep].copy()
        protos.frozen = protos.frozen[keep].copy()
        protos.display = [d for i, d in enumerate(protos.display) if keep[i]]
        head.weights = head.weights[:, keep].copy()
        head.class_mask = head.class_mask[:, keep].copy()

    def _append_row(self, vec: np.ndarray, display: DisplayRef, cls: int) -> int:
        if not 0 <= cls < self.model.classes:
            raise InvalidCommand(f"class {cls} out of range [0, {self.model.classes})")
        protos, head = self.model.protos, self.model.head
        protos.vecs = np.vstack([protos.vecs, vec[None, :]])
        protos.class_of = np.append(protos.class_of, np.int32(cls))
        protos.frozen = np.append(protos.frozen, False)
        protos.display = list(protos.display) + [display]
        mask_col = np.zeros((self.model.classes, 1))
        mask_col[cls, 0] = 1.0
        head.weights = np.hstack([head.weights, mask_col.copy()])
        head.class_mask = np.hstack([head.class_mask, mask_col])
        return protos.m - 1

    def _optimize_single(
        self,
        j: int,
        interaction: InteractionTarget | None = None,
        stop_when_closed: bool = False,
    ) -> int:
        """Train prototype j alone (all other prototypes and the head fixed)
        under the full objective, bounded by cfg.epochs; with soft feedback,
        stop as soon as the hinge closes (similarity >= certainty)."""
        trainable = np.zeros(self.model.m, dtype=bool)
        trainable[j] = True
        adam_p = Adam([self.model.protos.vecs], self.cfg.beta1, self.cfg.beta2, self.cfg.eps)
        epochs = 0
        for step in range(1, self.cfg.epochs + 1):
            if stop_when_closed and interaction is not None:
                sim = float(
                    pairwise_similarity(
                        interaction.vec[None, :],
                        self.model.protos.vecs[j][None, :],
                        self.model.sim_kind,
                    )[0, 0]
                )
                if sim >= interaction.certainty:
                    break
            lr = lr_at(step, self.cfg.epochs, self.cfg.lr_base)
            self.trainer.run_epoch(
                lr, adam_p, None, trainable=trainable.astype(np.float64),
                interaction=interaction,
            )
            epochs = step
        return epochs

    def retrain_head(self) -> int:
        """Head-only retraining over a fresh triangular schedule."""
        epochs = self.cfg.head_finetune_epochs
        adam_w = Adam([self.model.head.weights], self.cfg.beta1, self.cfg.beta2, self.cfg.eps)
        for step in range(1, epochs + 1):
            lr = lr_at(step, epochs, self.cfg.lr_base)
            self.trainer.run_epoch(lr, None, adam_w)
        return epochs


def prune_cut_length(tokens: list[str]) -> int:
    """Tokens to keep when pruning: everything beyond two sentences or 15
    tokens in total is dropped (whichever limit comes first)."""
    boundary = 0
    two_sentence_end = len(tokens)
    for i, tok in enumerate(tokens):
        if tok and tok.rstrip("\"')]")[-1:] in SENTENCE_END:
            boundary += 1
            if boundary == PRUNE_MAX_SENTENCES:
                two_sentence_end = i + 1
                break
    return min(two_sentence_end, PRUNE_MAX_TOKENS)


def apply(model, command, dataset, cfg, provider=None) -> InteractionOutcome:
    """One-shot command application (constructs a transient engine)."""
    return InteractionEngine(model, dataset, cfg, provider).apply(command)


def freeze(model, prototype_ids, flag: bool = True) -> ProtoModel:
    """Set frozen flags; frozen prototypes receive zero gradients."""
    for j in prototype_ids:
        if not 0 <= int(j) < model.m:
            raise UnknownPrototype(f"no prototype {j}")
        model.protos.frozen[int(j)] = flag
    return model
