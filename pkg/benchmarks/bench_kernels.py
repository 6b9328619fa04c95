"""Benchmark the compiled similarity kernels against the NumPy fallback.

Times the pairwise similarity matrix (the hot inner loop of every forward
and loss pass) and a full word-mode training epoch under each backend.

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from protoclf.kernels import get_backend


def time_fn(fn, *args, repeats=5, min_time=0.2):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        n = 0
        start = time.perf_counter()
        while time.perf_counter() - start < min_time:
            fn(*args)
            n += 1
        best = min(best, (time.perf_counter() - start) / n)
    return best


def bench_pairwise():
    backends = {"pure": get_backend("pure")}
    try:
        backends["native"] = get_backend("native")
    except ImportError:
        print("native kernel not built; showing pure only")

    shapes = [(64, 10, 16), (512, 10, 64), (2048, 32, 128), (8192, 16, 384)]
    print(f"{'rows x protos x dim':>22} | {'kind':>7} | " + " | ".join(f"{b:>10}" for b in backends) + " | speedup")
    print("-" * (26 + 10 + 13 * len(backends) + 10))
    rng = np.random.default_rng(0)
    for n, m, d in shapes:
        a = rng.standard_normal((n, d))
        b = rng.standard_normal((m, d))
        for kind in ("pairwise_cosine", "pairwise_neg_l2"):
            times = {name: time_fn(getattr(mod, kind), a, b) for name, mod in backends.items()}
            ratio = times["pure"] / times["native"] if "native" in times else float("nan")
            cells = " | ".join(f"{times[name] * 1e6:>8.1f}us" for name in backends)
            print(f"{n:>8} x {m:>3} x {d:>4} | {kind[9:]:>7} | {cells} | {ratio:>6.2f}x")


def bench_training_epoch():
    import os

    from protoclf.patching import SLIDING, SelectorConfig
    from protoclf.store import WORD, Dataset, EmbeddedExample, Split
    from protoclf.trainer import Adam, TrainConfig, Trainer, build_model

    rng = np.random.default_rng(0)
    examples = []
    for i in range(256):
        label = i % 2
        vecs = rng.standard_normal((24, 32)).astype(np.float32)
        vecs[:, label] += 2.0
        examples.append(
            EmbeddedExample(
                id=f"b{i}",
                label=label,
                text="bench",
                tokens=[f"t{k}" for k in range(24)],
                token_vecs=vecs,
            )
        )
    dataset = Dataset(WORD, 32, 2, examples, Split.all_train(256))
    cfg = TrainConfig(
        epochs=1, batch_size=64, m=8, seed=0,
        selector=SelectorConfig(kind=SLIDING, k=4),
    )
    model = build_model(cfg, dataset)
    trainer = Trainer(model, dataset, cfg)
    adam_p = Adam([model.protos.vecs])
    adam_w = Adam([model.head.weights])
    elapsed = time_fn(trainer.run_epoch, 1e-3, adam_p, adam_w, repeats=3)
    backend = os.environ.get("PROTOCLF_KERNEL", "auto")
    from protoclf.kernels import BACKEND

    print(f"\nword-mode epoch (256 ex, l=24, k=4, m=8, d=32) with {BACKEND} kernels "
          f"(PROTOCLF_KERNEL={backend}): {elapsed * 1e3:.1f} ms")
    print("rerun with PROTOCLF_KERNEL=pure to compare the fallback end to end")


if __name__ == "__main__":
    bench_pairwise()
    bench_training_epoch()
