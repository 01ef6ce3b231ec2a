from __future__ import annotations

from typing import Sequence

import numpy as np

from ..data import GENUINE, FaceImage, sample_pairs
from .network import SiameseNetwork, embed_batch


def best_threshold(distances: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Threshold ``t`` maximising accuracy of the rule "genuine iff d <= t".

    Candidates are every observed distance plus -inf (call everything an
    impostor). Returns ``(t, accuracy)``; the smallest best ``t`` wins ties.
    """
    d = np.asarray(distances, dtype=np.float64)
    genuine = np.asarray(labels) == GENUINE
    n = d.size
    order = np.argsort(d, kind="stable")
    ds, gs = d[order], genuine[order]
    cum_gen = np.cumsum(gs)
    cum_imp = np.cumsum(~gs)
    total_imp = int((~genuine).sum())
    acc = (cum_gen + (total_imp - cum_imp)) / n
    # a cut is only realisable after the last of a run of equal distances
    valid = np.append(ds[1:] != ds[:-1], True)
    best_t, best_acc = float("-inf"), total_imp / n
    if valid.any():
        idx = np.flatnonzero(valid)
        k = idx[np.argmax(acc[idx])]
        if acc[k] > best_acc:
            best_t, best_acc = float(ds[k]), float(acc[k])
    return best_t, float(best_acc)


def evaluate(net: SiameseNetwork, test: Sequence[FaceImage], pair_budget: int = 500, seed: int = 0) -> dict:
    """Verification metrics over sampled held-out pairs (half genuine in expectation)."""
    net.eval()
    pairs = sample_pairs(test, pair_budget, 0.5, seed)
    index = {id(img): i for i, img in enumerate(test)}
    emb = embed_batch(net, list(test)).astype(np.float64)
    a = emb[[index[id(p.a)] for p in pairs]]
    b = emb[[index[id(p.b)] for p in pairs]]
    d = np.sqrt(((a - b) ** 2).sum(axis=1))
    labels = np.array([p.label for p in pairs])
    gen = d[labels == GENUINE]
    imp = d[labels != GENUINE]
    t, acc = best_threshold(d, labels)
    return {
        "pairs": len(pairs),
        "genuine_pairs": int(gen.size),
        "impostor_pairs": int(imp.size),
        "median_genuine_d": float(np.median(gen)) if gen.size else float("nan"),
        "median_impostor_d": float(np.median(imp)) if imp.size else float("nan"),
        "accuracy_at_best_threshold": acc,
        "best_threshold": t,
        "seed": seed,
    }
