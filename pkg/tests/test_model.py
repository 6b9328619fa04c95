import math

import numpy as np
import pytest

from protoclf import errors
from protoclf.model import (
    ClassifierHead,
    DisplayRef,
    ProtoModel,
    PrototypeSet,
    digest,
    explain,
    format_importance,
    forward,
    from_bytes,
    load_checkpoint,
    nn_display,
    project,
    save_checkpoint,
    to_bytes,
)
from protoclf.patching import (
    BRUTE_FORCE,
    COSINE,
    SelectorConfig,
    enumerate_patches,
    similarity,
)
from protoclf.store import SENTENCE, WORD, Dataset, EmbeddedExample, Split

from conftest import make_model, make_sentence_example, make_word_dataset, make_word_example


def fixed_model(vecs, class_of, weights=None, mode=SENTENCE, sim_kind=COSINE, selector=None):
    vecs = np.asarray(vecs, dtype=np.float64)
    class_of = np.asarray(class_of, dtype=np.int32)
    classes = int(class_of.max()) + 1
    head = ClassifierHead.for_prototypes(class_of, classes)
    if weights is not None:
        head.weights = np.asarray(weights, dtype=np.float64) * head.class_mask
    protos = PrototypeSet(
        vecs=vecs,
        class_of=class_of,
        frozen=np.zeros(len(class_of), dtype=bool),
        display=[None] * len(class_of),
    )
    return ProtoModel(
        mode=mode,
        sim_kind=sim_kind,
        selector=selector or SelectorConfig(kind=BRUTE_FORCE, k=2),
        protos=protos,
        head=head,
    )


class TestForward:
    def test_closed_form_softmax(self):
        # s = (1, 0) with diagonal weights 2 -> logits (2, 0)
        model = fixed_model(
            vecs=[[1.0, 0.0], [0.0, 1.0]],
            class_of=[0, 1],
            weights=[[2.0, 0.0], [0.0, 2.0]],
        )
        ex = make_sentence_example(np.random.default_rng(0), dim=2, vec=[1.0, 0.0])
        probs, s = forward(ex, model)
        assert np.allclose(s, [1.0, 0.0], atol=1e-12)
        expected = np.array([math.exp(2), 1.0])
        expected /= expected.sum()
        assert np.allclose(probs, expected, atol=1e-12)

    def test_embedding_equal_to_prototype(self, rng):
        model = make_model(rng, dim=4, m=4)
        target = model.protos.vecs[3].copy()
        ex = make_sentence_example(rng, dim=4, vec=target)
        _, s = forward(ex, model)
        assert s[3] == pytest.approx(1.0, abs=1e-12)

    def test_word_mode_matches_enumeration_oracle(self, rng):
        selector = SelectorConfig(kind=BRUTE_FORCE, k=2)
        model = make_model(rng, mode=WORD, dim=3, m=4, selector=selector)
        ex = make_word_example(rng, length=6, dim=3)
        _, s = forward(ex, model)
        for j in range(4):
            oracle = max(
                similarity(p.vec, model.protos.vecs[j], COSINE)
                for p in enumerate_patches(ex.token_vecs, 2)
            )
            assert s[j] == pytest.approx(oracle, rel=1e-12)

    def test_dim_mismatch(self, rng):
        model = make_model(rng, dim=4)
        ex = make_sentence_example(rng, dim=5)
        with pytest.raises(errors.DimMismatch):
            forward(ex, model)

    def test_word_mode_too_short(self, rng):
        selector = SelectorConfig(kind=BRUTE_FORCE, k=4)
        model = make_model(rng, mode=WORD, dim=3, selector=selector)
        ex = make_word_example(rng, length=2, dim=3)
        with pytest.raises(errors.TooShort):
            forward(ex, model)

    def test_cosine_scale_invariance(self, rng):
        model = make_model(rng, dim=4, m=4)
        ex = make_sentence_example(rng, dim=4)
        probs1, s1 = forward(ex, model)
        scaled = make_sentence_example(rng, dim=4, vec=ex.sentence_vec * 7.5)
        probs2, s2 = forward(scaled, model)
        assert np.allclose(s1, s2, atol=1e-9)
        assert np.allclose(probs1, probs2, atol=1e-9)


class TestExplain:
    def test_importance_is_product_and_sorted(self, rng):
        model = make_model(rng, dim=4, m=6)
        model.head.weights = model.head.class_mask * np.abs(
            rng.standard_normal(model.head.weights.shape)
        )
        ex = make_sentence_example(rng, dim=4)
        result = explain(ex, model, top_k=3)
        imps = [it.importance for it in result.items]
        assert imps == sorted(imps, reverse=True)
        for item in result.items:
            assert item.importance == pytest.approx(
                item.similarity * item.head_weight, abs=1e-9
            )

    def test_rendering_matches_reported_table(self):
        assert format_importance(0.52, 8.07) == "0.52·8.07 = 4.20"
        assert format_importance(0.84, 3.04) == "0.84·3.04 = 2.55"

    def test_top_k_m_covers_predicted_class(self, rng):
        model = make_model(rng, dim=4, m=6)
        ex = make_sentence_example(rng, dim=4)
        result = explain(ex, model, top_k=model.m)
        own = np.flatnonzero(model.protos.class_of == result.predicted_class)
        assert {it.prototype_id for it in result.items} == set(own.tolist())

    def test_probs_sum_to_one(self, rng):
        model = make_model(rng, dim=4, m=4)
        ex = make_sentence_example(rng, dim=4)
        result = explain(ex, model)
        assert result.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_prediction_recomputable_from_reported_s(self, rng):
        # the explanation's similarity values drive the reported prediction
        model = make_model(rng, dim=4, m=4)
        ex = make_sentence_example(rng, dim=4)
        probs, s = forward(ex, model)
        logits = model.head.effective() @ s
        assert int(np.argmax(logits)) == int(np.argmax(probs))
        result = explain(ex, model, top_k=model.m)
        for item in result.items:
            assert item.similarity == pytest.approx(s[item.prototype_id], abs=1e-12)


def cluster_dataset(rng, n=10, dim=4):
    examples = []
    centers = {0: np.array([3.0, 0, 0, 0]), 1: np.array([0, 3.0, 0, 0])}
    for i in range(n):
        label = i % 2
        vec = centers[label] + 0.2 * rng.standard_normal(dim)
        examples.append(
            EmbeddedExample(
                id=f"c{i}",
                label=label,
                text=f"cluster {label} member {i}",
                tokens=["cluster", str(label), "member", str(i)],
                sentence_vec=vec.astype(np.float32),
            )
        )
    return Dataset(SENTENCE, dim, 2, examples, Split.all_train(n))


class TestProject:
    def test_fixed_point(self, rng):
        ds = cluster_dataset(rng)
        model = make_model(rng, dim=4, m=2)
        model.protos.vecs[0] = np.asarray(ds.examples[0].sentence_vec, dtype=np.float64)
        entries = project(model, ds)
        entry = next(e for e in entries if e.prototype_id == 0)
        assert entry.source_id == "c0"
        assert entry.pre_similarity == pytest.approx(1.0, abs=1e-6)
        assert np.array_equal(
            model.protos.vecs[0], np.asarray(ds.examples[0].sentence_vec, dtype=np.float64)
        )

    def test_matches_exhaustive_scan(self, rng):
        ds = cluster_dataset(rng, n=12)
        model = make_model(rng, dim=4, m=2)
        before = model.protos.vecs.copy()
        project(model, ds)
        for j in range(2):
            cls = model.protos.class_of[j]
            candidates = [ex for ex in ds.examples if ex.label == cls]
            best = max(
                candidates,
                key=lambda ex: similarity(
                    np.asarray(ex.sentence_vec, np.float64), before[j], COSINE
                ),
            )
            assert np.array_equal(
                model.protos.vecs[j], np.asarray(best.sentence_vec, np.float64)
            )
            assert model.protos.display[j].source_id == best.id

    def test_every_prototype_lands_on_same_class_example(self, rng):
        ds = cluster_dataset(rng, n=10)
        model = make_model(rng, dim=4, m=4)
        class_before = model.protos.class_of.copy()
        project(model, ds)
        assert np.array_equal(model.protos.class_of, class_before)
        for j in range(model.m):
            matches = [
                ex
                for ex in ds.examples
                if np.array_equal(
                    np.asarray(ex.sentence_vec, np.float64), model.protos.vecs[j]
                )
            ]
            assert matches, f"prototype {j} not on any training embedding"
            assert all(ex.label == model.protos.class_of[j] for ex in matches)

    def test_frozen_prototypes_skipped(self, rng):
        ds = cluster_dataset(rng)
        model = make_model(rng, dim=4, m=2)
        model.protos.frozen[1] = True
        before = model.protos.vecs[1].copy()
        entries = project(model, ds)
        assert np.array_equal(model.protos.vecs[1], before)
        assert all(e.prototype_id != 1 for e in entries)

    def test_empty_class_raises(self, rng):
        ds = cluster_dataset(rng)
        only_zero = [ex for ex in ds.examples if ex.label == 0]
        ds0 = Dataset(SENTENCE, 4, 2, only_zero, Split.all_train(len(only_zero)))
        model = make_model(rng, dim=4, m=2)
        with pytest.raises(errors.EmptyClass):
            project(model, ds0)

    def test_word_mode_rejected(self, rng):
        ds = make_word_dataset(rng)
        model = make_model(rng, mode=WORD, dim=4, m=2)
        with pytest.raises(errors.ConfigInvalid):
            project(model, ds)

    def test_post_projection_similarity_is_one(self, rng):
        ds = cluster_dataset(rng)
        model = make_model(rng, dim=4, m=2)
        project(model, ds)
        for j in range(model.m):
            src = ds.by_id(model.protos.display[j].source_id)
            _, s = forward(src, model)
            assert s[j] == pytest.approx(1.0, abs=1e-12)


class TestNnDisplay:
    def test_single_example_full_length_patch(self, rng):
        selector = SelectorConfig(kind=BRUTE_FORCE, k=3)
        ds = make_word_dataset(rng, n=1, dim=3, length=3)
        model = make_model(rng, mode=WORD, dim=3, m=2, selector=selector)
        refs = nn_display(model, ds)
        assert all(r.source_id == "w0" for r in refs)
        assert all(r.highlight == [0, 1, 2] for r in refs)

    def test_planted_patch_recovered(self, rng):
        selector = SelectorConfig(kind=BRUTE_FORCE, k=2)
        ds = make_word_dataset(rng, n=3, dim=3, length=5)
        model = make_model(rng, mode=WORD, dim=3, m=2, selector=selector)
        target = enumerate_patches(ds.examples[1].token_vecs, 2)[4]
        model.protos.vecs[0] = target.vec
        before = model.protos.vecs.copy()
        nn_display(model, ds)
        assert np.array_equal(model.protos.vecs, before)  # latent untouched
        ref = model.protos.display[0]
        assert ref.source_id == "w1"
        assert ref.highlight == list(target.token_indices)

    def test_matches_exhaustive_patch_scan(self, rng):
        selector = SelectorConfig(kind=BRUTE_FORCE, k=2)
        ds = make_word_dataset(rng, n=4, dim=3, length=5)
        model = make_model(rng, mode=WORD, dim=3, m=3, selector=selector)
        model.protos.class_of = np.array([0, 1, 0], dtype=np.int32)
        nn_display(model, ds)
        for j in range(model.m):
            best_sim, best = -np.inf, None
            for ex in ds.examples:
                for p in enumerate_patches(ex.token_vecs, 2):
                    sim = similarity(p.vec, model.protos.vecs[j], COSINE)
                    if sim > best_sim:
                        best_sim, best = sim, (ex.id, list(p.token_indices))
            ref = model.protos.display[j]
            assert (ref.source_id, ref.highlight) == best

    def test_empty_dataset(self, rng):
        ds = make_word_dataset(rng, n=1)
        ds.split.train = np.arange(0)
        model = make_model(rng, mode=WORD, dim=4, m=2)
        with pytest.raises(errors.EmptyDataset):
            nn_display(model, ds)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        model = make_model(rng, dim=5, m=4)
        model.protos.display[1] = DisplayRef("e7", "some text with ünicode", [0, 2])
        model.protos.frozen[2] = True
        model.epoch = 42
        blob = to_bytes(model)
        back = from_bytes(blob)
        assert to_bytes(back) == blob
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert to_bytes(loaded) == blob
        assert loaded.epoch == 42
        assert loaded.protos.frozen[2]
        assert loaded.protos.display[1].highlight == [0, 2]

    def test_digest_tracks_state(self, rng):
        model = make_model(rng, dim=4, m=2)
        d1 = digest(model)
        assert d1 == digest(model)
        model.protos.vecs[0, 0] += 1.0
        assert digest(model) != d1

    def test_bad_magic(self):
        with pytest.raises(errors.MagicMismatch):
            from_bytes(b"JUNKJUNKJUNKJUNK")

    def test_head_mask_zeroes_off_class(self, rng):
        model = make_model(rng, dim=4, m=4)
        s = rng.standard_normal(4)
        logits = model.head.effective() @ s
        for c in range(model.classes):
            own = model.protos.class_of == c
            manual = float(np.sum(model.head.weights[c][own] * s[own]))
            assert logits[c] == pytest.approx(manual, rel=1e-12)
