"""Independent oracles used to freeze expected values in the C++ tests.

Run with: python3 tests/oracles/precompute.py
"""
import math
from fractions import Fraction

EVAL = {"sadness": 4666, "joy": 5362, "love": 1304, "anger": 2159, "fear": 1937, "surprise": 572}
FINETUNE = {"sadness": 581, "joy": 695, "love": 159, "anger": 275, "fear": 224, "surprise": 66}

def entropy_bits(counts):
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h

print("entropy eval      = %.17g" % entropy_bits(EVAL.values()))
print("entropy finetune  = %.17g" % entropy_bits(FINETUNE.values()))
print("entropy uniform6  = %.17g" % entropy_bits([1] * 6))
# induced under the 3- and 2-class groupings
print("entropy eval pi3  = %.17g" % entropy_bits([EVAL["love"], EVAL["fear"], EVAL["surprise"]]))
print("entropy eval pi2  = %.17g" % entropy_bits([EVAL["joy"] + EVAL["love"], EVAL["anger"] + EVAL["sadness"]]))

def hamilton(counts, n):
    total = sum(counts.values())
    quotas = {k: Fraction(v * n, total) for k, v in counts.items()}
    alloc = {k: int(q) for k, q in quotas.items()}
    rest = n - sum(alloc.values())
    order = sorted(counts, key=lambda k: (-(quotas[k] - alloc[k]), list(counts).index(k)))
    for k in order[:rest]:
        alloc[k] += 1
    return alloc

print("subsample 600     =", hamilton(EVAL, 600))

MASK = (1 << 64) - 1
def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)

def unit(seed, a, b):
    h = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
    return (h >> 11) * (2.0 ** -53)

def exhausted(seed, n_samples, rate, attempts):
    return sum(all(unit(seed, i, a) < rate for a in range(1, attempts + 1)) for i in range(n_samples))

for seed in range(1, 200):
    if exhausted(seed, 1000, 0.3, 5) == 0:
        print("first flaky seed with zero exhaustions over 1000 samples:", seed)
        print("  exhaustions over 10000 samples with that seed:", exhausted(seed, 10000, 0.3, 5))
        break
