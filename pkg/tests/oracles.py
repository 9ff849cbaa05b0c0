"""Independent brute-force reimplementations used as test oracles.

Everything here is written with plain Python loops over lists so that it
shares no code path with the vectorised package implementation.
"""

import math


# ---------------------------------------------------------------- telegrams

def raster(events, t0, t1):
    """events: list of (t, state) for one device; state before the first is 0."""
    out = []
    for t in range(t0, t1 + 1):
        st = 0
        for te, s in events:
            if te <= t:
                st = s
        out.append(st)
    return out


def cycles(s):
    """(start_k, red, green) for each complete red-onset-to-red-onset cycle (1-based)."""
    onsets = [k + 1 for k in range(1, len(s)) if s[k - 1] == 1 and s[k] == 0]
    res = []
    for a, b in zip(onsets, onsets[1:]):
        seg = s[a - 1:b - 1]
        res.append((a, seg.count(0), seg.count(1)))
    return res


# ---------------------------------------------------------------- features

def durations(s):
    return s.count(0), s.count(1)


def flows(d, s):
    qr = qg = 0
    for k in range(1, len(d)):
        if d[k - 1] == 1 and d[k] == 0:
            if s[k] == 0:
                qr += 1
            else:
                qg += 1
    return qr, qg


def occ(d):
    return sum(d) / len(d)


def last_gap(d):
    last = 0
    for k, v in enumerate(d, 1):
        if v == 1:
            last = k
    return len(d) - last if last else len(d)


def qc(d, s, p):
    qi = ci = 0
    k = 0
    while k < len(d):
        if d[k] == 1:
            j = k
            while j < len(d) and d[j] == 1:
                j += 1
            if j - k > p:
                phases = set(s[k:j])
                qi = qi or (0 in phases)
                ci = ci or (1 in phases)
            k = j
        else:
            k += 1
    return int(qi), int(ci)


# ---------------------------------------------------------------- metrics

def round_half_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)


def metrics(pred, truth):
    n = len(pred)
    abs_err = [abs(round_half_away(p) - t) for p, t in zip(pred, truth)]
    mae = sum(abs_err) / n
    rmse = math.sqrt(sum(e * e for e in abs_err) / n)
    eh = 100.0 * sum(1 for e in abs_err if e == 0) / n
    nm = 100.0 * sum(1 for e in abs_err if e <= 2) / n
    return mae, rmse, eh, nm


# ---------------------------------------------------------------- CART

def sse(vals):
    if not vals:
        return 0.0
    m = sum(vals) / len(vals)
    return sum((v - m) ** 2 for v in vals)


def exhaustive_split(X, y, min_leaf=1):
    """Best (gain, feature, threshold) over all (feature, midpoint) pairs."""
    n = len(y)
    parent = sse(list(y))
    best = None
    for f in range(len(X[0])):
        vals = sorted(set(row[f] for row in X))
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2.0
            left = [y[i] for i in range(n) if X[i][f] <= thr]
            right = [y[i] for i in range(n) if X[i][f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = parent - sse(left) - sse(right)
            if best is None or gain > best[0] + 1e-9 * max(parent, 1.0):
                best = (gain, f, thr)
    return best


# ---------------------------------------------------------------- LSTM

def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def _matvec(W, v):
    return [sum(W[r][c] * v[c] for c in range(len(v))) for r in range(len(W))]


def lstm_scalar(layers, head, window):
    """Step-by-step scalar evaluation of the six gate equations.

    ``layers`` is a list of dicts of nested lists; ``window`` a list of rows.
    """
    seq = [list(r) for r in window]
    for lay in layers:
        H = len(lay["b_i"])
        m = [0.0] * H
        c = [0.0] * H
        out = []
        for x in seq:
            wx = {g: _matvec(lay[f"W_{g}x"], x) for g in "ifco"}
            wm = {g: _matvec(lay[f"W_{g}m"], m) for g in "ifco"}
            pic = _matvec(lay["W_ic"], c)
            pfc = _matvec(lay["W_fc"], c)
            i = [_sig(wx["i"][u] + wm["i"][u] + pic[u] + lay["b_i"][u]) for u in range(H)]
            f = [_sig(wx["f"][u] + wm["f"][u] + pfc[u] + lay["b_f"][u]) for u in range(H)]
            c = [f[u] * c[u] + i[u] * math.tanh(wx["c"][u] + wm["c"][u] + lay["b_c"][u]) for u in range(H)]
            poc = _matvec(lay["W_oc"], c)
            o = [_sig(wx["o"][u] + wm["o"][u] + poc[u] + lay["b_o"][u]) for u in range(H)]
            m = [o[u] * math.tanh(c[u]) for u in range(H)]
            out.append(m)
        seq = out
    last = seq[-1]
    z = [max(0.0, v + b) for v, b in zip(_matvec(head["W_dm"], last), head["b_d"])]
    return _matvec(head["W_ym"], z)[0] + head["b_y"][0]
