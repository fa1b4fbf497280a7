"""Independent reference implementations used to check the package.

Everything in here is written the slow, obvious way (explicit Python loops,
direct formulas) so that agreement with the vectorized implementations is
meaningful.  Test modules and the acceptance suite import from this file.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# mlp oracles
# ---------------------------------------------------------------------------

# (widths, activation) pairs exercised by the gradient checks.
MLP_SHAPE_MATRIX = [
    ((1, 1), "relu"),
    ((1, 8, 1), "relu"),
    ((2, 16, 4), "leaky_relu"),
    ((3, 8, 8, 2), "elu"),
    ((5, 4, 3), "elu"),
    ((2, 12, 12, 1), "leaky_relu"),
]


def _act_scalar(name: str, z: float) -> float:
    if name == "relu":
        return z if z > 0.0 else 0.0
    if name == "leaky_relu":
        return z if z > 0.0 else 0.2 * z
    if name == "elu":
        return z if z >= 0.0 else math.exp(z) - 1.0
    raise ValueError(name)


def mlp_forward_oracle(params, x: np.ndarray) -> np.ndarray:
    """Pure-Python, loop-by-loop forward pass for a single input vector."""
    h = [float(v) for v in x]
    last = params.spec.n_layers - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        nxt = []
        for j in range(w.shape[1]):
            acc = float(b[j])
            for i in range(w.shape[0]):
                acc += h[i] * float(w[i, j])
            if li != last:
                acc = _act_scalar(params.spec.activation, acc)
            nxt.append(acc)
        h = nxt
    return np.asarray(h)


def finite_diff_grads(loss_fn, params, h: float = 1e-5):
    """Central finite-difference gradients of loss_fn(params) w.r.t. every entry.

    ``loss_fn`` must treat ``params`` as read-only apart from the transient
    perturbations applied here.  Returns (grad_weights, grad_biases) lists of
    arrays shaped like the parameters.
    """
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    for li, w in enumerate(params.weights):
        it = np.nditer(w, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss_fn(params)
            w[idx] = orig - h
            dn = loss_fn(params)
            w[idx] = orig
            gw[li][idx] = (up - dn) / (2.0 * h)
            it.iternext()
    for li, b in enumerate(params.biases):
        for idx in range(b.shape[0]):
            orig = b[idx]
            b[idx] = orig + h
            up = loss_fn(params)
            b[idx] = orig - h
            dn = loss_fn(params)
            b[idx] = orig
            gb[li][idx] = (up - dn) / (2.0 * h)
    return gw, gb


def grad_rel_err(analytic, numeric) -> float:
    """max over entries of |a - n| / max(1, |a|, |n|)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# ---------------------------------------------------------------------------
# attention oracles
# ---------------------------------------------------------------------------


def self_attention_oracle(X: np.ndarray, w_q, w_k, w_v) -> np.ndarray:
    """Row-by-row softmax attention computed with scalar loops."""
    n, d = X.shape
    out = np.zeros((n, w_v.shape[1]))
    for i in range(n):
        scores = []
        for j in range(n):
            q = [sum(X[i, a] * w_q[a, c] for a in range(d)) for c in range(w_q.shape[1])]
            k = [sum(X[j, a] * w_k[a, c] for a in range(d)) for c in range(w_k.shape[1])]
            scores.append(sum(qc * kc for qc, kc in zip(q, k)))
        mx = max(scores)
        es = [math.exp(s - mx) for s in scores]
        z = sum(es)
        for j in range(n):
            vj = [sum(X[j, a] * w_v[a, c] for a in range(d)) for c in range(w_v.shape[1])]
            for c in range(len(vj)):
                out[i, c] += (es[j] / z) * vj[c]
    return out


def unnorm_score_oracle(u, v, w_q, w_k) -> float:
    """u^T (Wq Wk^T) v expanded as a triple loop."""
    d = len(u)
    dd = w_q.shape[1]
    acc = 0.0
    for a in range(d):
        for b in range(d):
            dot = 0.0
            for c in range(dd):
                dot += w_q[a, c] * w_k[b, c]
            acc += u[a] * dot * v[b]
    return acc


def kernelized_attention_pairwise(X: np.ndarray, w_q, w_k, w_v, phi_fn) -> np.ndarray:
    """Kernelized attention in per-pair form: no regrouping of the sums.

    row_i = sum_j (phi(q_i) . phi(k_j)) v_j / sum_j (phi(q_i) . phi(k_j))
    """
    n = X.shape[0]
    Q = X @ w_q
    K = X @ w_k
    V = X @ w_v
    out = np.zeros_like(V)
    for i in range(n):
        pq = phi_fn(Q[i])
        num = np.zeros(V.shape[1])
        den = 0.0
        for j in range(n):
            sim = float(pq @ phi_fn(K[j]))
            num += sim * V[j]
            den += sim
        out[i] = num / den
    return out


def gatv2_score_oracle(u, v, a, w, b, slope: float = 0.2) -> float:
    """a^T LeakyReLU(W [u ; v] + b), expanded entry by entry."""
    uv = list(u) + list(v)
    acc = 0.0
    for r in range(w.shape[0]):
        pre = float(b[r])
        for c in range(w.shape[1]):
            pre += float(w[r, c]) * uv[c]
        acc += float(a[r]) * (pre if pre > 0 else slope * pre)
    return acc


# ---------------------------------------------------------------------------
# graph / calendar oracles
# ---------------------------------------------------------------------------


def grid_degree_census(rows: int, cols: int, neighborhood: int):
    """Count nodes by degree via explicit neighbor enumeration."""
    if neighborhood == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    census: dict[int, int] = {}
    total_deg = 0
    for r in range(rows):
        for c in range(cols):
            deg = 0
            for dr, dc in steps:
                if 0 <= r + dr < rows and 0 <= c + dc < cols:
                    deg += 1
            census[deg] = census.get(deg, 0) + 1
            total_deg += deg
    assert total_deg % 2 == 0
    return census, total_deg // 2


def calendar_days_oracle(start_year: int, end_year: int) -> int:
    """Day count via per-year leap-rule enumeration (no date library)."""

    def is_leap(y):
        return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)

    return sum(366 if is_leap(y) else 365 for y in range(start_year, end_year + 1))


# ---------------------------------------------------------------------------
# deep-construction trace oracle
# ---------------------------------------------------------------------------


def deep_trace_oracle(X: np.ndarray, selectors: np.ndarray, w_q, w_k, w_v, time: int):
    """Closed-form node states of the depth-(n+2) program at a given time.

    Times follow the layer clock: state 0 is the initial embedding, state t is
    the synchronous result after layer t.  Selection is assumed perfect
    (oracle mode), so the feature picked at layer k is exactly X[k-1].

    Returns (gn_states (n, 2d+1), vn_state (2d+1,)).
    """
    n, d = X.shape
    if not 0 <= time <= n + 2:
        raise ValueError(f"time {time} outside program range 0..{n + 2}")

    def score_exp(i: int, k: int) -> float:
        # exp of the unnormalized attention score between x_i and x_k;
        # np.exp (not math.exp) so the oracle and the engine share one
        # elementary-function implementation and can agree bitwise
        return float(np.exp(float((X[i] @ w_q) @ (X[k] @ w_k))))

    vn = np.zeros(2 * d + 1)
    if time <= n:
        if time >= 1:
            vn[:d] = X[time - 1]
        if time <= n - 1:
            # selector for the next layer; zeroed once selection is finished
            vn[d : 2 * d] = selectors[time]
    else:
        vn[:] = 1.0

    gn = np.zeros((n, 2 * d + 1))
    gn[:, :d] = X
    upto = min(max(time - 1, 0), n)  # accumulation covers features 1..time-1
    for i in range(n):
        acc = np.zeros(d)
        ps = 0.0
        for k in range(upto):
            e = score_exp(i, k)
            acc = acc + e * (X[k] @ w_v)
            ps = ps + e
        if time == n + 2:
            gn[i, :d] = acc / ps
            gn[i, d : 2 * d] = 0.0
            gn[i, 2 * d] = 0.0
        else:
            gn[i, d : 2 * d] = acc
            gn[i, 2 * d] = ps
    return gn, vn


def deepsets_linear_oracle(X, A, B, c):
    """Explicit-summation evaluation of X A + (1/n) 1 1^T X B + 1 c^T."""
    n, d_in = X.shape
    d_out = A.shape[1]
    mean = [sum(float(X[i, p]) for i in range(n)) / n for p in range(d_in)]
    out = np.zeros((n, d_out))
    for i in range(n):
        for q in range(d_out):
            v = float(c[q])
            for p in range(d_in):
                v += float(X[i, p]) * float(A[p, q])
                v += mean[p] * float(B[p, q])
            out[i, q] = v
    return out
