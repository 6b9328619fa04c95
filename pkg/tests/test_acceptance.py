"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with the measured value (run with ``pytest -s`` to see them
inline). Tolerances are pinned here and nowhere else."""

import math
import time

import numpy as np
import pytest

from protoclf.faithfulness import comp_suff, prototype_removal
from protoclf.interaction import InteractionCommand, InteractionEngine
from protoclf.losses import (
    InteractionTarget,
    LossWeights,
    compute_class_weights,
    fd_check,
    total_loss,
)
from protoclf.model import (
    ClassifierHead,
    PrototypeSet,
    explain,
    format_importance,
    from_bytes,
    to_bytes,
)
from protoclf.patching import (
    ATTENTION,
    BRUTE_FORCE,
    COSINE,
    NEG_L2,
    SLIDING,
    SelectorConfig,
    attention_select,
    enumerate_patches,
    generate_patches,
    patch_matrix,
    sliding_patches,
)
from protoclf.store import ToyEncoder, load_dataset_dir, write_dataset
from protoclf.synthetic import (
    class_centroids,
    planted_token_dataset,
    two_cluster_dataset,
)
from protoclf.trainer import TrainConfig, build_model, lr_at, train


def report(name: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: gradient suite

def _gradient_config(seed: int):
    r = np.random.default_rng(seed)
    classes = int(r.integers(2, 4))
    m = classes * int(r.integers(1, 6 // classes + 1))
    d = int(r.integers(2, 17))
    n = int(r.integers(classes, 33))
    sim = COSINE if seed % 2 == 0 else NEG_L2
    word = seed % 4 >= 2
    if word:
        k = int(r.integers(1, 4))
        kind = BRUTE_FORCE if seed % 8 < 4 else SLIDING
        sel = SelectorConfig(kind=kind, k=k)
        patches = []
        for _ in range(n):
            l = int(r.integers(max(k, 2), 9))
            patches.append(patch_matrix(generate_patches(r.standard_normal((l, d)), sel)))
    else:
        patches = [r.standard_normal((1, d)) for _ in range(n)]
    labels = np.concatenate([np.arange(classes), r.integers(0, classes, size=n - classes)])
    protos = PrototypeSet(
        vecs=r.standard_normal((m, d)),
        class_of=np.repeat(np.arange(classes), m // classes).astype(np.int32),
        frozen=np.zeros(m, dtype=bool),
        display=[None] * m,
    )
    head = ClassifierHead.for_prototypes(protos.class_of, classes)
    head.weights = head.class_mask * np.abs(r.standard_normal((classes, m)))
    weights = LossWeights(sim_kind=sim)
    cw = compute_class_weights(labels, classes)
    interaction = (
        InteractionTarget(0, r.standard_normal(d), float(r.uniform(0, 1)))
        if seed % 2 == 0
        else None
    )
    return patches, labels, protos, head, weights, cw, interaction


def test_gradient_suite():
    t0 = time.time()
    worst = 0.0
    excluded = 0
    checked = 0
    for seed in range(100):
        patches, labels, protos, head, weights, cw, interaction = _gradient_config(seed)
        bd = total_loss(patches, labels, protos, head, weights, cw, interaction=interaction)

        def f(vecs, w):
            p = PrototypeSet(vecs, protos.class_of, protos.frozen, protos.display)
            h = ClassifierHead(w, head.class_mask)
            b = total_loss(patches, labels, p, h, weights, cw, interaction=interaction)
            return b.total, b.active

        rep = fd_check(
            f,
            [protos.vecs.copy(), head.weights.copy()],
            [bd.grads["prototypes"], bd.grads["head"]],
            h=1e-4,
        )
        worst = max(worst, rep.max_rel_err)
        excluded += rep.excluded_ties
        checked += rep.checked
    elapsed = time.time() - t0
    report(
        "gradient-suite",
        worst < 1e-4 and elapsed < 60.0,
        f"100 configs, {checked} coords checked, {excluded} tie coords excluded, "
        f"max rel err {worst:.3e} (< 1e-4), {elapsed:.1f}s (< 60s)",
    )


# ---------------------------------------------------------------------------
# criterion 2: patch oracle

def test_patch_oracle():
    t0 = time.time()
    rng = np.random.default_rng(99)
    checked = 0
    for l in range(1, 11):
        vecs = rng.standard_normal((l, 3))
        for k in range(1, min(l, 3) + 1):
            full = {p.token_indices for p in enumerate_patches(vecs, k)}
            assert len(full) == math.comb(l, k)
            for dilation in range(3):
                span = 1 + (k - 1) * (dilation + 1)
                if l < span:
                    continue
                slid = {p.token_indices for p in sliding_patches(vecs, k, dilation)}
                assert slid <= full
                assert len(slid) == l - (k - 1) * (dilation + 1)
                checked += 1
            cfg = SelectorConfig(kind=ATTENTION, k=k, k_lim=10)
            selected, attn = attention_select(vecs, cfg)
            n_w = min(10, 2 * k, l)
            assert len(selected) == n_w
            attn_sets = {p.token_indices for p in attn}
            assert attn_sets <= full
            assert len(attn_sets) == math.comb(n_w, k)
            checked += 1
    # the reported configuration: k=4, k_lim=10 selects 8 words, 70 patches
    vecs = rng.standard_normal((12, 6))
    selected, patches = attention_select(vecs, SelectorConfig(kind=ATTENTION, k=4, k_lim=10))
    assert len(selected) == 8
    assert len(patches) == 70 == math.comb(8, 4)
    elapsed = time.time() - t0
    report(
        "patch-oracle",
        elapsed < 10.0,
        f"{checked} selector/enumeration comparisons incl. C(8,4)=70 attention case, "
        f"{elapsed:.1f}s (< 10s)",
    )


# ---------------------------------------------------------------------------
# criterion 3: synthetic end-to-end

SYNTH_CFG = dict(
    epochs=100, batch_size=64, seed=7, m=4, validate_every=10,
    head_finetune_epochs=20, lr_base=0.01,
)


@pytest.fixture(scope="module")
def synthetic_run():
    dataset = two_cluster_dataset(n_train=400, n_val=100, n_test=100, dim=8, seed=7)
    cfg = TrainConfig(**SYNTH_CFG)
    model = build_model(cfg, dataset)
    t0 = time.time()
    model, rep = train(dataset, model, cfg)
    elapsed = time.time() - t0
    return dataset, cfg, model, rep, elapsed


def test_synthetic_end_to_end(synthetic_run):
    dataset, _, model, rep, elapsed = synthetic_run
    drop = rep.projection["pre_test_acc"] - rep.final_test_acc
    centroids = class_centroids(dataset)
    cosines = []
    for j in range(model.m):
        c = centroids[model.protos.class_of[j]]
        p = model.protos.vecs[j]
        cosines.append(float(p @ c / (np.linalg.norm(p) * np.linalg.norm(c))))
    ok = (
        rep.final_test_acc >= 0.98
        and elapsed < 30.0
        and drop <= 0.02
        and min(cosines) >= 0.9
    )
    report(
        "synthetic-end-to-end",
        ok,
        f"balanced test acc {rep.final_test_acc:.4f} (>= 0.98) in {elapsed:.1f}s (< 30s), "
        f"projection drop {drop * 100:.2f} pts (<= 2), "
        f"min prototype-centroid cosine {min(cosines):.3f} (>= 0.9)",
    )


# ---------------------------------------------------------------------------
# criterion 4: interaction semantics

def test_interaction_semantics(synthetic_run):
    dataset, cfg, model, rep, _ = synthetic_run
    provider = ToyEncoder(dim=dataset.dim, seed=1)

    def fresh_engine():
        return InteractionEngine(model.clone(), dataset, cfg, provider=provider)

    # soft_replace(c=1.0) bit-equals replace
    a, b = fresh_engine(), fresh_engine()
    a.apply(InteractionCommand(op="soft_replace", target=1, example_id="e8", certainty=1.0))
    b.apply(InteractionCommand(op="replace", target=1, example_id="e8"))
    hard_equal = to_bytes(a.model) == to_bytes(b.model)

    # soft_replace(c=0) leaves the vector bit-identical
    c_eng = fresh_engine()
    before = c_eng.model.protos.vecs.copy()
    c_eng.apply(InteractionCommand(op="soft_replace", target=1, example_id="e8", certainty=0.0))
    zero_noop = c_eng.model.protos.vecs.tobytes() == before.tobytes()

    # monotone certainty grid
    axis = model.protos.vecs[0] / np.linalg.norm(model.protos.vecs[0])
    ortho = np.eye(8)[5] - axis * axis[5]
    ortho /= np.linalg.norm(ortho)
    payload = 0.2 * axis + math.sqrt(1 - 0.04) * ortho
    sims = []
    for c in (0.0, 0.25, 0.5, 0.75, 1.0):
        eng = fresh_engine()
        eng.apply(InteractionCommand(op="soft_replace", target=0, certainty=c, vector=payload))
        row = 0 if c < 1.0 else eng.model.m - 1
        p = eng.model.protos.vecs[row]
        sims.append(float(payload @ p / (np.linalg.norm(payload) * np.linalg.norm(p))))
    monotone = all(hi >= lo - 1e-9 for lo, hi in zip(sims, sims[1:]))

    # every edit keeps balanced accuracy within 2 points of baseline
    baseline = InteractionEngine(model.clone(), dataset, cfg).trainer.evaluate(dataset.split.val)
    deltas = {}
    edits = [
        InteractionCommand(op="prune", target=0),  # within limits: retrain-only row
        InteractionCommand(op="remove", target=0),
        InteractionCommand(op="add", example_id="e11"),
        InteractionCommand(op="replace", target=0, example_id="e12"),
        InteractionCommand(op="reinit", target=1),
        InteractionCommand(op="finetune", target=1),
        InteractionCommand(op="soft_replace", target=1, example_id="e10", certainty=0.5),
        InteractionCommand(op="soft_replace", target=1, example_id="e10", certainty=0.9),
        InteractionCommand(op="soft_replace", target=1, example_id="e10", certainty=1.0),
    ]
    for cmd in edits:
        eng = fresh_engine()
        outcome = eng.apply(cmd)
        deltas[f"{cmd.op}({cmd.certainty})" if cmd.certainty is not None else cmd.op] = (
            outcome.after["val_acc"] - baseline
        )
    stable = all(abs(v) <= 0.02 for v in deltas.values())

    ok = hard_equal and zero_noop and monotone and stable
    report(
        "interaction-semantics",
        ok,
        f"c=1.0 bit-equals replace: {hard_equal}; c=0 no-op: {zero_noop}; "
        f"certainty grid sims {[round(s, 3) for s in sims]} monotone: {monotone}; "
        f"max |acc delta| {max(abs(v) for v in deltas.values()) * 100:.2f} pts (<= 2)",
    )


# ---------------------------------------------------------------------------
# criterion 5: explanation arithmetic

def test_explanation_arithmetic(synthetic_run):
    dataset, _, model, _, _ = synthetic_run
    worst = 0.0
    count = 0
    for i in dataset.split.test[:50]:
        result = explain(dataset.examples[int(i)], model, top_k=model.m)
        for item in result.items:
            worst = max(worst, abs(item.importance - item.similarity * item.head_weight))
            count += 1
        imps = [it.importance for it in result.items]
        assert imps == sorted(imps, reverse=True)
    rendered = format_importance(0.52, 8.07)
    ok = worst < 1e-9 and rendered.endswith("4.20")
    report(
        "explanation-arithmetic",
        ok,
        f"{count} items, max |importance - sim*weight| = {worst:.2e} (< 1e-9); "
        f"0.52 x 8.07 renders as {rendered!r}",
    )


# ---------------------------------------------------------------------------
# criterion 6: faithfulness harness

def test_faithfulness_harness():
    dataset, encoder, rationales = planted_token_dataset(seed=3)
    cfg = TrainConfig(
        epochs=150, batch_size=16, seed=5, m=2, validate_every=10,
        head_finetune_epochs=20, lr_base=0.02,
    )
    model = build_model(cfg, dataset)
    model, rep = train(dataset, model, cfg)
    faith = comp_suff(model, dataset, rationales, encoder, indices=dataset.split.test)

    acc_before, acc_after, _ = prototype_removal(model, dataset)
    drop = acc_before - acc_after

    # identity perturbations are exact zeros
    test_ids = dataset.split.test[:10]
    empty_masks = {
        dataset.examples[int(i)].id: [False] * len(dataset.examples[int(i)].tokens)
        for i in test_ids
    }
    full_masks = {
        dataset.examples[int(i)].id: [True] * len(dataset.examples[int(i)].tokens)
        for i in test_ids
    }
    comp_zero = comp_suff(model, dataset, empty_masks, encoder, indices=test_ids).comprehensiveness
    suff_zero = comp_suff(model, dataset, full_masks, encoder, indices=test_ids).sufficiency

    ok = (
        faith.comprehensiveness > 0.3
        and faith.sufficiency < 0.05
        and drop >= 0.2
        and comp_zero == 0.0
        and suff_zero == 0.0
    )
    report(
        "faithfulness-harness",
        ok,
        f"comp {faith.comprehensiveness:.3f} (> 0.3), suff {faith.sufficiency:.3f} (< 0.05), "
        f"removal drop {drop * 100:.1f} pts (>= 20), "
        f"identity comp/suff = {comp_zero}/{suff_zero} (exact 0)",
    )


# ---------------------------------------------------------------------------
# criterion 7: determinism & formats

def test_determinism_and_formats(tmp_path):
    dataset = two_cluster_dataset(n_train=120, n_val=40, n_test=40, seed=9)
    cfg = TrainConfig(
        epochs=30, batch_size=32, seed=13, m=4, validate_every=10, head_finetune_epochs=6
    )
    blobs, reports = [], []
    for _ in range(2):
        model = build_model(cfg, dataset)
        model, rep = train(dataset, model, cfg)
        blobs.append(to_bytes(model))
        reports.append(rep.to_json())
    checkpoints_identical = blobs[0] == blobs[1]
    reports_identical = reports[0] == reports[1]

    # dataset round trip is bit-exact
    write_dataset(dataset, tmp_path / "a")
    loaded = load_dataset_dir(tmp_path / "a")
    write_dataset(loaded, tmp_path / "b")
    files_equal = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("dataset.jsonl", "embeddings.bin")
    )

    # checkpoint container round trip is bit-exact
    ckpt_roundtrip = to_bytes(from_bytes(blobs[0])) == blobs[0]

    lr_ok = lr_at(5, 200) == pytest.approx(0.0005, abs=1e-15)

    ok = checkpoints_identical and reports_identical and files_equal and ckpt_roundtrip and lr_ok
    report(
        "determinism-and-formats",
        ok,
        f"checkpoints identical: {checkpoints_identical}; reports identical: {reports_identical}; "
        f"dataset round-trip bit-exact: {files_equal}; checkpoint round-trip bit-exact: "
        f"{ckpt_roundtrip}; lr_at(5, e=200) = {lr_at(5, 200):.6f} (= 0.0005)",
    )
