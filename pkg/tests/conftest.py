import numpy as np
import pytest

from protoclf.model import ClassifierHead, ProtoModel, PrototypeSet
from protoclf.patching import SelectorConfig
from protoclf.store import SENTENCE, WORD, Dataset, EmbeddedExample, Split


def make_word_example(rng, ex_id="w0", label=0, length=6, dim=4, tokens=None):
    tokens = tokens or [f"t{i}" for i in range(length)]
    return EmbeddedExample(
        id=ex_id,
        label=label,
        text=" ".join(tokens),
        tokens=tokens,
        token_vecs=rng.standard_normal((len(tokens), dim)).astype(np.float32),
    )


def make_sentence_example(rng, ex_id="s0", label=0, dim=4, vec=None):
    if vec is None:
        vec = rng.standard_normal(dim)
    return EmbeddedExample(
        id=ex_id,
        label=label,
        text=f"example {ex_id}",
        tokens=["example", ex_id],
        sentence_vec=np.asarray(vec, dtype=np.float32),
    )


def make_sentence_dataset(rng, n=8, dim=4, classes=2):
    examples = [
        make_sentence_example(rng, ex_id=f"s{i}", label=i % classes, dim=dim)
        for i in range(n)
    ]
    return Dataset(
        mode=SENTENCE,
        dim=dim,
        classes=classes,
        examples=examples,
        split=Split.all_train(n),
    )


def make_word_dataset(rng, n=6, dim=4, classes=2, length=6):
    examples = [
        make_word_example(rng, ex_id=f"w{i}", label=i % classes, length=length, dim=dim)
        for i in range(n)
    ]
    return Dataset(
        mode=WORD,
        dim=dim,
        classes=classes,
        examples=examples,
        split=Split.all_train(n),
    )


def make_model(rng, mode=SENTENCE, dim=4, m=4, classes=2, sim_kind="cosine", selector=None):
    per = m // classes
    protos = PrototypeSet(
        vecs=rng.standard_normal((m, dim)),
        class_of=np.repeat(np.arange(classes), per).astype(np.int32),
        frozen=np.zeros(m, dtype=bool),
        display=[None] * m,
    )
    head = ClassifierHead.for_prototypes(protos.class_of, classes)
    return ProtoModel(
        mode=mode,
        sim_kind=sim_kind,
        selector=selector or SelectorConfig(kind="brute_force", k=2),
        protos=protos,
        head=head,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
