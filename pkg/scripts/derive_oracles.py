"""Independent reference values for the unit tests.

Pure Python with ``math`` only and no package imports, so the numbers do
not share code with the implementation. Run it and compare against the
constants frozen in tests/test_infotheory.py, tests/test_traces.py,
tests/test_diagnostics.py and tests/test_acceptance.py.
"""

import itertools
import math
from fractions import Fraction


def H(ps):
    return -sum(p * math.log(p) for p in ps if p > 0)


def h2(e):
    return H([e, 1 - e])


def f(delta, m):
    e = math.sqrt(delta / 2)
    return e * math.log(m - 1) + h2(e)


def exact_plugin_bias(p, n):
    """E[H(counts / n)] - H(p) under Multinomial(n, p), by enumeration (4 outcomes)."""
    logp = [math.log(x) for x in p]
    lgn = math.lgamma(n + 1)
    total = 0.0
    for a in range(n + 1):
        for b in range(n + 1 - a):
            for c in range(n + 1 - a - b):
                counts = (a, b, c, n - a - b - c)
                lw = lgn + sum(k * lp - math.lgamma(k + 1) for k, lp in zip(counts, logp))
                total += math.exp(lw) * H([k / n for k in counts])
    return total - H(p)


def main():
    out = {}
    out["entropy(.5,.25,.25)"] = H([0.5, 0.25, 0.25])
    joint = {(0, 0): 0.4, (0, 1): 0.1, (1, 0): 0.1, (1, 1): 0.4}
    px = {x: sum(v for (a, _), v in joint.items() if a == x) for x in (0, 1)}
    py = {y: sum(v for (_, b), v in joint.items() if b == y) for y in (0, 1)}
    out["H(Y|X) 2x2"] = -sum(v * math.log(v / px[x]) for (x, _), v in joint.items())
    out["I(X;Y) 2x2"] = sum(v * math.log(v / (px[x] * py[y])) for (x, y), v in joint.items())
    out["KL((1,0)||(.5,.5))"] = 1.0 * math.log(1.0 / 0.5)
    out["TV((.7,.3),(.5,.5))"] = 0.5 * (abs(0.7 - 0.5) + abs(0.3 - 0.5))
    out["stepwise_gain .25->.5"] = -math.log(0.25) + math.log(0.5)
    out["cumulative_gain (.25,.5,1)"] = [0.0, math.log(0.5 / 0.25), math.log(1 / 0.25)]
    out["h2(.5)"] = h2(0.5)
    out["pinsker(0.5)"] = math.sqrt(0.5 / 2)
    out["f(m=4, delta=.02)"] = f(0.02, 4)
    out["f(m=2, delta=.02)"] = f(0.02, 2)
    out["g(2,2,.02)"] = f(0.02, 4) + f(0.02, 2)
    out["fano(ln4, m=4)"] = (math.log(4) - math.log(2)) / math.log(3)
    # empirical distributions
    out["plugin H {A:8,B:8}"] = H([0.5, 0.5])
    gold_mass = Fraction(1, 2) / (16 + Fraction(1, 2) * 3)
    out["smoothed gold mass"] = float(gold_mass)
    out["smoothed gold surprisal"] = -math.log(gold_mass)
    # rank-enumeration AUC for correct {0.1, 0.2} vs incorrect {0.3, 0.4} with score -H
    pos, neg = [-0.1, -0.2], [-0.3, -0.4]
    wins = sum((p > n) + 0.5 * (p == n) for p, n in itertools.product(pos, neg))
    out["auc hand-set"] = wins / (len(pos) * len(neg))
    # checkpoint default rule at K=600
    s = max(1, 600 // 20)
    pos = list(range(0, 601, s))
    out["checkpoints K=600"] = len(pos) + (pos[-1] != 600)
    # plug-in estimator bias on a known 4-answer posterior
    for n in (16, 64, 256):
        out[f"plugin bias N={n}"] = exact_plugin_bias([0.3, 0.3, 0.2, 0.2], n)
    for k, v in out.items():
        print(f"{k:30s} {v}")


if __name__ == "__main__":
    main()
