"""Slow, obviously-correct reference implementations used as test oracles."""

import math

import numpy as np


def recount_confusion(true, pred, n=4):
    counts = [[0] * n for _ in range(n)]
    for t, p in zip(true, pred):
        counts[t][p] += 1
    return counts


def recount_scores(true, pred, n=4):
    """Per-class precision/recall/F1 lists and accuracy by direct counting."""
    precision, recall, f1 = [], [], []
    for c in range(n):
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        predicted = sum(1 for p in pred if p == c)
        actual = sum(1 for t in true if t == c)
        pr = tp / predicted if predicted else 0.0
        rc = tp / actual if actual else 0.0
        precision.append(pr)
        recall.append(rc)
        f1.append(2 * pr * rc / (pr + rc) if pr + rc else 0.0)
    acc = sum(1 for t, p in zip(true, pred) if t == p) / len(true)
    return precision, recall, f1, acc


def recount_fault_accuracy(true, pred):
    return sum(1 for t, p in zip(true, pred) if (t == 0) == (p == 0)) / len(true)


def mann_whitney_auc(scores, positive):
    """Probability a random positive outranks a random negative, ties count half."""
    pos = [s for s, y in zip(scores, positive) if y]
    neg = [s for s, y in zip(scores, positive) if not y]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def naive_pr_sweep(scores, positive):
    """(recall, precision) at every distinct threshold, highest first."""
    points = []
    n_pos = sum(positive)
    for thr in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, positive) if s >= thr and y)
        fp = sum(1 for s, y in zip(scores, positive) if s >= thr and not y)
        points.append((tp / n_pos, tp / (tp + fp)))
    return points


def extended_precision_loss(params, X, labels):
    """Mean cross-entropy of the stacked LSTM, recomputed in ``np.longdouble``.

    Written from the gate equations, independent of the package's forward pass.
    Gate blocks are stacked in (f, i, g, o) order along the last axis.
    """
    ld = np.longdouble
    seq = np.asarray(X, dtype=ld)
    n_layers = sum(1 for name in params if name.endswith(".U"))
    for n in range(n_layers):
        U, W, b = (params[f"layer{n}.{k}"].astype(ld) for k in "UWb")
        H = W.shape[0]
        h = np.zeros((seq.shape[0], H), dtype=ld)
        c = np.zeros_like(h)
        out = []
        for t in range(seq.shape[1]):
            z = seq[:, t] @ U + h @ W + b
            f, i, o = (1 / (1 + np.exp(-z[:, k * H:(k + 1) * H])) for k in (0, 1, 3))
            c = f * c + i * np.tanh(z[:, 2 * H:3 * H])
            h = o * np.tanh(c)
            out.append(h)
        seq = np.stack(out, axis=1)
    logits = seq[:, -1] @ params["head.W"].astype(ld) + params["head.b"].astype(ld)
    logits -= logits.max(axis=1, keepdims=True)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return -log_probs[np.arange(len(labels)), labels].mean()


def central_difference_gradient_error(net, X, labels, step=1e-5):
    """Max relative error between ``net.backward`` and central differences.

    The perturbed losses come from :func:`extended_precision_loss`, so the
    difference quotient is not swamped by float64 rounding on tiny entries.
    """
    _, cache = net.forward(X)
    analytic = net.backward(cache, labels)
    params = net.parameters()
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        a = analytic[name].reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            up = extended_precision_loss(params, X, labels)
            flat[j] = keep - step
            down = extended_precision_loss(params, X, labels)
            flat[j] = keep
            num = float((up - down) / (2 * step))
            denom = max(abs(a[j]) + abs(num), 1e-8)
            worst = max(worst, abs(a[j] - num) / denom)
    return worst


def rate_law_current(t, i0, beta, power, n, mu0, ea, temperature, boltzmann=8.617333262e-5):
    k = power**n * math.exp(mu0 - ea / (boltzmann * temperature))
    return i0 + beta * math.exp(k * t)
