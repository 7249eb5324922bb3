"""Stand-alone PHOLD reference used to generate the golden digest files.

Shares no code with the Rust crates. Usage: python3 reference.py > oracle.txt
"""
import heapq
import math
import struct

M = (1 << 64) - 1


def mix64(z):
    z &= M
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return z ^ (z >> 31)


def hash_words(words):
    h = 0x6A09E667F3BCC908
    for w in words:
        h = mix64(h ^ mix64((w + 0x9E3779B97F4A7C15) & M))
    return h


def bits(x):
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def sample_words(seed, e, c):
    h = mix64(mix64(mix64(seed ^ 0x5851F42D4C957F2D) ^ e) ^ c)
    return mix64((h + 0x9E3779B97F4A7C15) & M), mix64((h + 0x3C6EF372FE94F82A) & M)


def exp_sample(seed, e, c, mean):
    w, _ = sample_words(seed, e, c)
    return -mean * math.log(((w >> 12) + 0.5) * 2.0**-52)


def uniform(seed, e, c, n, exclude_self):
    _, w = sample_words(seed, e, c)
    if exclude_self and n > 1:
        pick = (w * (n - 1)) >> 64
        return pick + 1 if pick >= e else pick
    return (w * n) >> 64


def workload(n, sender, seq):
    start = 1.0 + (mix64(((sender << 32) ^ seq) & M) >> 11) * 2.0**-53
    acc = start
    for _ in range(n):
        acc = acc * 0.9999999 + 1.0e-7
    return acc - start


def advance(t, d):
    s = t + d
    return s if s > t else math.nextafter(t, math.inf)


def population(density, entities):
    exact = density * entities
    nearest = round(exact)
    n = nearest if abs(exact - nearest) < 1e-9 else math.ceil(exact)
    return min(int(n), entities)


def fmt(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def run(entities, density, wl, end, seed, mean=5.0, exclude_self=False):
    counter = [0] * entities
    checksum = [0.0] * entities
    heap = []
    for e in range(population(density, entities)):
        t = advance(0.0, exp_sample(seed, e, 0, mean))
        heapq.heappush(heap, (t, uniform(seed, e, 0, entities, exclude_self), e, 0))
    digest = count = 0
    while heap and heap[0][0] <= end:
        t, tgt, snd, seq = heapq.heappop(heap)
        digest = (digest + hash_words([bits(t), tgt, snd, seq])) & M
        count += 1
        checksum[tgt] += workload(wl, snd, seq)
        counter[tgt] += 1
        c = counter[tgt]
        nt = advance(t, exp_sample(seed, tgt, c, mean))
        heapq.heappush(heap, (nt, uniform(seed, tgt, c, entities, exclude_self), tgt, c))
    state = 0
    for e in range(entities):
        state = (state + hash_words([e, counter[e], bits(checksum[e])])) & M
    key = (
        f"entities={entities} density={fmt(density)} workload={wl} mean={fmt(mean)} "
        f"end={fmt(end)} seed={seed} exclude_self={'true' if exclude_self else 'false'}"
    )
    return f"{key} => {digest:016x} {state:016x} {count}"


if __name__ == "__main__":
    for entities in (16, 64, 256):
        for density in (0.5, 1.0):
            for wl in (0, 1000):
                for seed in range(1, 6):
                    print(run(entities, density, wl, 100.0, seed))
    print(run(1, 1.0, 0, 20.0, 1))
    print(run(10, 0.0, 0, 100.0, 1))
    print(run(33, 0.3, 10, 50.0, 77, mean=2.5, exclude_self=True))
