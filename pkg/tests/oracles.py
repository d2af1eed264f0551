"""Independent reference implementations used to cross-check the package."""

from __future__ import annotations

from oasd.detector import NOT_DETERMINED


def delay_oracle(raw, D):
    """Fill the zeros between two 1s that are at most D apart."""
    out = list(raw)
    ones = [k for k, v in enumerate(raw) if v]
    for p, q in zip(ones, ones[1:]):
        if q - p <= D:
            for k in range(p, q):
                out[k] = 1
    return out


def expected_rule(out_deg, in_deg, prev_label):
    if out_deg == 1 and in_deg == 1:
        return prev_label
    if out_deg == 1 and in_deg > 1 and prev_label == 0:
        return 0
    if out_deg > 1 and in_deg == 1 and prev_label == 1:
        return 1
    return NOT_DETERMINED


def rule_violations(net, segs, labels):
    """Interior positions whose label contradicts a rule that applies there."""
    bad = []
    for i in range(1, len(segs) - 1):
        forced = expected_rule(net.out_degree(segs[i - 1]), net.in_degree(segs[i]),
                               labels[i - 1])
        if forced is not NOT_DETERMINED and labels[i] != forced:
            bad.append(i)
    return bad


def metrics_oracle(corpus, phi):
    """Scores from runs found by scanning for 0->1 edges with a zero pad."""
    n_gt = n_det = 0
    J = 0.0
    hits = 0
    for _, gt, det in corpus:
        pad_g = [0, *gt]
        pad_d = [0, *det]
        n_det += sum(1 for a, b in zip(pad_d, pad_d[1:]) if (a, b) == (0, 1))
        g_runs = sum(1 for a, b in zip(pad_g, pad_g[1:]) if (a, b) == (0, 1))
        if g_runs == 0:
            continue
        n_gt += g_runs
        both = sum(1 for a, b in zip(gt, det) if a and b)
        either = sum(1 for a, b in zip(gt, det) if a or b)
        j = both / either
        J += j
        hits += j > phi

    def prf(x):
        p = x / n_det if n_det else 0.0
        r = x / n_gt if n_gt else 0.0
        return p, r, (2 * p * r / (p + r) if p + r else 0.0)

    return prf(J), prf(float(hits))
