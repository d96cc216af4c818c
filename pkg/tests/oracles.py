"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: explicit loops, threshold sweeps,
pairwise comparisons and quadrature, sharing no code with ``igt.metrics``.
"""

from __future__ import annotations

import math

import numpy as np


def roc_sweep(scores, labels):
    """(fpr, tpr) after admitting every score >= t, for each distinct t high to low."""
    scores = list(map(float, scores))
    labels = list(map(int, labels))
    P = sum(labels)
    N = len(labels) - P
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        pts.append((fp / N, tp / P))
    return pts


def auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def ranked(scores, labels):
    """Labels listed by descending score, ties in input order."""
    idx = sorted(range(len(scores)), key=lambda k: (-float(scores[k]), k))
    return [int(labels[k]) for k in idx]


def auprc(scores, labels):
    ys = ranked(scores, labels)
    hits, acc = 0, 0.0
    for k, y in enumerate(ys, start=1):
        if y:
            hits += 1
            acc += hits / k
    return acc / sum(ys)


def _segments(pts):
    """Open FPR intervals (a, b) with the TPR value leaving a and arriving at b."""
    top, bottom = {}, {}
    for f, t in pts:
        top[f] = max(top.get(f, t), t)
        bottom[f] = min(bottom.get(f, t), t)
    xs = sorted(top)
    return [(a, b, top[a], bottom[b]) for a, b in zip(xs[:-1], xs[1:])], top


def tpr_at(pts, x):
    segs, top = _segments(pts)
    if x in top:
        return top[x]
    for a, b, ta, tb in segs:
        if a < x < b:
            return ta + (tb - ta) * (x - a) / (b - a)
    raise ValueError(x)


def roc_enrichment(scores, labels, fpr):
    return tpr_at(roc_sweep(scores, labels), fpr) / fpr


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def adjusted_logauc(scores, labels, lam=0.001):
    """Gauss-Legendre quadrature of TPR over u = log10(FPR) on [log10 lam, 0], per linear piece."""
    segs, _ = _segments(roc_sweep(scores, labels))
    lo_u = math.log10(lam)
    area = 0.0
    for a, b, ta, tb in segs:
        if b <= lam:
            continue
        u0, u1 = math.log10(max(a, lam)), math.log10(b)
        if u1 <= u0:
            continue
        mid, half = (u0 + u1) / 2.0, (u1 - u0) / 2.0
        for x, w in zip(_GL_X, _GL_W):
            f = 10.0 ** (mid + half * x)
            area += w * half * (ta + (tb - ta) * (f - a) / (b - a))
    width = -lo_u
    random = (1.0 - lam) / math.log(1.0 / lam)
    return area / width - random


def enrichment_factor(scores, labels, fraction):
    n = len(scores)
    k = min(n, max(1, math.ceil(round(fraction * n, 9))))
    ys = ranked(scores, labels)
    return (sum(ys[:k]) / k) / (sum(ys) / n)


def balanced_accuracy(scores, labels, threshold=0.5):
    tp = fn = tn = fp = 0
    for s, y in zip(scores, labels):
        if y == 1:
            tp += s >= threshold
            fn += s < threshold
        else:
            tn += s < threshold
            fp += s >= threshold
    return (tp / (tp + fn) + tn / (tn + fp)) / 2.0


def pairs_within(a, b, cutoff):
    out = []
    for i, p in enumerate(a):
        for j, q in enumerate(b):
            if math.dist(p, q) <= cutoff:
                out.append((i, j))
    return out


def count_pdb_heavy_atoms(text):
    """grep-style count: ATOM/HETATM lines, altLoc blank or A, element column not H."""
    n = 0
    for line in text.splitlines():
        if not line.startswith(("ATOM  ", "HETATM")):
            continue
        if line[16:17] not in (" ", "A"):
            continue
        if line[76:78].strip().upper() in ("H", "D"):
            continue
        n += 1
    return n


def count_sdf_blocks(text):
    """Atom and bond row counts per record, read from row shapes rather than the counts line."""
    out = []
    for rec in text.split("$$$$"):
        lines = rec.strip("\n").splitlines()
        if not lines or not any("V2000" in ln for ln in lines):
            continue
        start = next(k for k, ln in enumerate(lines) if "V2000" in ln) + 1
        atoms = bonds = 0
        for ln in lines[start:]:
            if ln.startswith("M  "):
                break
            parts = ln.split()
            if len(parts) >= 4 and parts[3].isalpha():
                atoms += 1
            elif len(parts) >= 3 and all(p.lstrip("-").isdigit() for p in parts[:3]):
                bonds += 1
        out.append((atoms, bonds))
    return out
