"""Faithfulness evaluation of prototype explanations.

Two probes:

* rationale perturbation: re-embed each input with its rationale tokens
  removed (comprehensiveness) or retained alone (sufficiency) and measure
  the drop in the predicted-class probability. High comprehensiveness with
  near-zero sufficiency indicates the model really keys on the rationale.
* prototype removal: for each test example, mask out its top-importance
  prototype (per-example head-column masking, not global deletion) and
  measure the balanced-accuracy drop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllTokensRemoved, EmptyInput, MaskLengthMismatch, ProviderCapability
from .model import ProtoModel, explain, forward
from .store import (
    RATIONALE_ONLY,
    RATIONALE_REMOVED,
    Dataset,
    EmbeddingProvider,
    perturb,
)
from .trainer import balanced_accuracy


def load_rationales(path: str | Path) -> dict[str, list[bool]]:
    """Read ``rationales.jsonl``: one ``{"id": ..., "mask": [0/1, ...]}`` per line."""
    rationales: dict[str, list[bool]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            rationales[rec["id"]] = [bool(v) for v in rec["mask"]]
    return rationales


def validate_rationales(rationales: dict[str, list[bool]], dataset: Dataset) -> None:
    if not any(any(mask) for mask in rationales.values()):
        raise EmptyInput("every rationale mask is empty")
    for ex_id, mask in rationales.items():
        ex = dataset.by_id(ex_id)
        if len(mask) != len(ex.tokens):
            raise MaskLengthMismatch(
                f"rationale for {ex_id!r} has {len(mask)} entries, "
                f"example has {len(ex.tokens)} tokens"
            )


@dataclass
class FaithfulnessReport:
    comprehensiveness: float
    sufficiency: float
    acc_before: float | None = None
    acc_after: float | None = None
    details: list[dict] = field(default_factory=list)
    skipped_comp: int = 0
    skipped_suff: int = 0

    def as_dict(self) -> dict:
        return {
            "comprehensiveness": self.comprehensiveness,
            "sufficiency": self.sufficiency,
            "acc_before": self.acc_before,
            "acc_after": self.acc_after,
            "skipped_comp": self.skipped_comp,
            "skipped_suff": self.skipped_suff,
            "details": self.details,
        }


def comp_suff(
    model: ProtoModel,
    dataset: Dataset,
    rationales: dict[str, list[bool]],
    provider: EmbeddingProvider,
    indices: np.ndarray | None = None,
) -> FaithfulnessReport:
    """Mean comprehensiveness and sufficiency over the examples that have
    rationales. Degenerate perturbations (nothing left to embed) are skipped
    and counted rather than averaged in."""
    if not provider.novel_text:
        raise ProviderCapability("faithfulness perturbation needs a novel-text provider")
    if indices is None:
        indices = np.arange(len(dataset.examples))
    comp_vals: list[float] = []
    suff_vals: list[float] = []
    details = []
    skipped_comp = 0
    skipped_suff = 0
    for i in indices:
        ex = dataset.examples[int(i)]
        mask = rationales.get(ex.id)
        if mask is None:
            continue
        if len(mask) != len(ex.tokens):
            raise MaskLengthMismatch(
                f"rationale for {ex.id!r} has {len(mask)} entries, "
                f"example has {len(ex.tokens)} tokens"
            )
        probs, _ = forward(ex, model)
        t = int(np.argmax(probs))
        p_full = float(probs[t])
        detail = {"id": ex.id, "predicted_class": t, "p_full": p_full}
        try:
            removed = perturb(ex, mask, RATIONALE_REMOVED, provider)
            p_removed = float(forward(removed, model)[0][t])
            comp_vals.append(p_full - p_removed)
            detail["comp"] = p_full - p_removed
        except AllTokensRemoved:
            skipped_comp += 1
            detail["comp"] = None
        try:
            only = perturb(ex, mask, RATIONALE_ONLY, provider)
            p_only = float(forward(only, model)[0][t])
            suff_vals.append(p_full - p_only)
            detail["suff"] = p_full - p_only
        except AllTokensRemoved:
            skipped_suff += 1
            detail["suff"] = None
        details.append(detail)
    return FaithfulnessReport(
        comprehensiveness=float(np.mean(comp_vals)) if comp_vals else 0.0,
        sufficiency=float(np.mean(suff_vals)) if suff_vals else 0.0,
        details=details,
        skipped_comp=skipped_comp,
        skipped_suff=skipped_suff,
    )


def prototype_removal(
    model: ProtoModel,
    dataset: Dataset,
    indices: np.ndarray | None = None,
    global_deletion: bool = False,
) -> tuple[float, float, list[dict]]:
    """Balanced accuracy before and after masking each test example's top
    explanation out of its own prediction.

    ``global_deletion`` instead masks the one prototype that is most often
    the top explanation, for every example alike (comparison mode).
    """
    if indices is None:
        indices = dataset.split.test if len(dataset.split.test) else np.arange(len(dataset.examples))
    labels = np.array([dataset.examples[int(i)].label for i in indices])
    w_eff = model.head.effective()

    preds_before = np.empty(len(labels), dtype=np.int64)
    tops = np.empty(len(labels), dtype=np.int64)
    sims = []
    for pos, i in enumerate(indices):
        ex = dataset.examples[int(i)]
        result = explain(ex, model, top_k=1)
        preds_before[pos] = result.predicted_class
        tops[pos] = result.items[0].prototype_id
        _, s = forward(ex, model)
        sims.append(s)

    if global_deletion:
        counts = np.bincount(tops, minlength=model.m)
        fixed = int(np.argmax(counts))
        tops = np.full_like(tops, fixed)

    preds_after = np.empty_like(preds_before)
    details = []
    for pos in range(len(labels)):
        masked = w_eff.copy()
        masked[:, tops[pos]] = 0.0
        preds_after[pos] = int(np.argmax(masked @ sims[pos]))
        details.append(
            {
                "id": dataset.examples[int(indices[pos])].id,
                "top_prototype": int(tops[pos]),
                "pred_before": int(preds_before[pos]),
                "pred_after": int(preds_after[pos]),
            }
        )
    acc_before = balanced_accuracy(preds_before, labels, model.classes)
    acc_after = balanced_accuracy(preds_after, labels, model.classes)
    return acc_before, acc_after, details


def evaluate(
    model: ProtoModel,
    dataset: Dataset,
    rationales: dict[str, list[bool]],
    provider: EmbeddingProvider,
    indices: np.ndarray | None = None,
) -> FaithfulnessReport:
    """Full faithfulness report: rationale perturbation plus prototype removal."""
    report = comp_suff(model, dataset, rationales, provider, indices)
    acc_before, acc_after, _ = prototype_removal(model, dataset, indices)
    report.acc_before = acc_before
    report.acc_after = acc_after
    return report
