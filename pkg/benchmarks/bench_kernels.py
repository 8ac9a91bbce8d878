"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Without a built extension only the Python column is shown.
"""
import argparse
import random
import timeit

from stkit import _kernels


def workloads(rng):
    words = [[rng.randrange(50) for _ in range(rng.randint(5, 40))] for _ in range(200)]
    pairs = list(zip(words[::2], words[1::2]))
    letters = "abcdefghij"
    vocab = ["".join(rng.choice(letters) for _ in range(rng.randint(3, 12))) for _ in range(2000)]
    ranks = {}
    for w in vocab[:400]:
        for a, b in zip(w, w[1:]):
            ranks.setdefault((a, b), len(ranks))
    symbols = [tuple(w[:-1]) + (w[-1] + "</w>",) for w in vocab]
    return {
        "edit_distance": lambda k: [k.edit_distance(a, b) for a, b in pairs],
        "bpe_merge": lambda k: [k.bpe_merge(s, ranks) for s in symbols],
        "replace_pair": lambda k: [k.replace_pair(s, "a", "b") for s in symbols],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = _kernels.implementations()
    jobs = workloads(random.Random(0))
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<15}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for name, job in jobs.items():
        times = {b: min(timeit.repeat(lambda: job(mod), number=1, repeat=args.repeat)) for b, mod in impls.items()}
        own = "".join(f"{1e3 * t:>10.2f}ms" for t in times.values())
        speedup = f"{times['python'] / times['compiled']:>9.1f}x" if "compiled" in times else f"{'n/a':>10}"
        print(f"{name:<15}{own}{speedup}")


if __name__ == "__main__":
    main()
