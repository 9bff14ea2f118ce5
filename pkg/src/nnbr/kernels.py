"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every kernel exists twice (``*_numba`` and ``*_numpy``); the unsuffixed name
is bound to whichever backend :mod:`nnbr._accel` selected. Both paths are
deterministic; they agree to rounding but not bitwise, because the
summation order differs.

MLP parameter layout (flat float64 vector), per layer in order:
``W`` of shape ``(fan_in, fan_out)`` row-major, then ``b`` of length
``fan_out``. Hidden layers use ReLU; the last layer is linear followed by
the output link.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit  # noqa: F401

LINK_CODES = {"softplus": 0, "exp": 1, "sigmoid_clamped": 2}


def n_params(widths) -> int:
    widths = list(widths)
    return int(sum(a * b + b for a, b in zip(widths[:-1], widths[1:])))


# ---------------------------------------------------------------- links ---

def link_numpy(z, code, eps):
    z = np.asarray(z, dtype=np.float64)
    if code == 0:
        return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    if code == 1:
        with np.errstate(over="ignore"):
            return np.exp(z)
    return np.clip(eps + (1.0 - 2.0 * eps) * _sigmoid_numpy(z), eps, 1.0 - eps)


def link_deriv_numpy(z, code, eps):
    z = np.asarray(z, dtype=np.float64)
    if code == 0:
        return _sigmoid_numpy(z)
    if code == 1:
        with np.errstate(over="ignore"):
            return np.exp(z)
    s = _sigmoid_numpy(z)
    return (1.0 - 2.0 * eps) * s * (1.0 - s)


def _sigmoid_numpy(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@njit(cache=True)
def _sigmoid_nb(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _link_nb(z, code, eps):
    if code == 0:
        return max(z, 0.0) + math.log1p(math.exp(-abs(z)))
    if code == 1:
        if z > 709.0:
            return math.inf
        return math.exp(z)
    return min(max(eps + (1.0 - 2.0 * eps) * _sigmoid_nb(z), eps), 1.0 - eps)


@njit(cache=True)
def _link_deriv_nb(z, code, eps):
    if code == 0:
        return _sigmoid_nb(z)
    if code == 1:
        if z > 709.0:
            return math.inf
        return math.exp(z)
    s = _sigmoid_nb(z)
    return (1.0 - 2.0 * eps) * s * (1.0 - s)


# ----------------------------------------------------------- MLP forward ---

def mlp_forward_numpy(X, theta, widths, code, eps):
    """Returns ``(r, z, hidden)``: outputs, pre-link logits and the
    concatenated post-ReLU hidden activations (n, sum(hidden widths))."""
    n = X.shape[0]
    n_layers = len(widths) - 1
    hidden = np.empty((n, int(sum(widths[1:-1]))))
    off = 0
    hoff = 0
    inp = X
    z = None
    for l in range(n_layers):
        fin, fout = widths[l], widths[l + 1]
        W = theta[off:off + fin * fout].reshape(fin, fout)
        b = theta[off + fin * fout:off + fin * fout + fout]
        off += fin * fout + fout
        a = inp @ W + b
        if l == n_layers - 1:
            z = a[:, 0].copy()
        else:
            h = hidden[:, hoff:hoff + fout]
            np.maximum(a, 0.0, out=h)
            inp = h
            hoff += fout
    return link_numpy(z, code, eps), z, hidden


@njit(cache=True)
def mlp_forward_numba(X, theta, widths, code, eps):
    n = X.shape[0]
    n_layers = widths.shape[0] - 1
    total_hidden = 0
    for l in range(1, n_layers):
        total_hidden += widths[l]
    hidden = np.empty((n, total_hidden))
    z = np.empty(n)
    r = np.empty(n)
    off = 0
    hin = 0
    hout = 0
    for l in range(n_layers):
        fin = widths[l]
        fout = widths[l + 1]
        boff = off + fin * fout
        acc = np.empty(fout)
        for i in range(n):
            for k in range(fout):
                acc[k] = theta[boff + k]
            for j in range(fin):
                if l == 0:
                    a = X[i, j]
                else:
                    a = hidden[i, hin + j]
                if a != 0.0:
                    row = off + j * fout
                    for k in range(fout):
                        acc[k] += a * theta[row + k]
            if l == n_layers - 1:
                z[i] = acc[0]
                r[i] = _link_nb(acc[0], code, eps)
            else:
                for k in range(fout):
                    v = acc[k]
                    hidden[i, hout + k] = v if v > 0.0 else 0.0
        off = boff + fout
        if l < n_layers - 1:
            hin = hout
            hout += fout
    return r, z, hidden


# ---------------------------------------------------------- MLP backward ---

def mlp_backward_numpy(X, theta, widths, hidden, z, upstream, code, eps):
    """Gradient of ``sum_i upstream_i * r(x_i)`` w.r.t. the flat parameters."""
    n_layers = len(widths) - 1
    grad = np.zeros_like(theta)
    offsets = []
    off = 0
    for l in range(n_layers):
        offsets.append(off)
        off += widths[l] * widths[l + 1] + widths[l + 1]
    hoffs = np.concatenate(([0], np.cumsum(widths[1:-1]))).astype(int)
    delta = (upstream * link_deriv_numpy(z, code, eps))[:, None]
    for l in range(n_layers - 1, -1, -1):
        fin, fout = widths[l], widths[l + 1]
        off = offsets[l]
        inp = X if l == 0 else hidden[:, hoffs[l - 1]:hoffs[l - 1] + fin]
        grad[off:off + fin * fout] = (inp.T @ delta).ravel()
        grad[off + fin * fout:off + fin * fout + fout] = delta.sum(axis=0)
        if l > 0:
            W = theta[off:off + fin * fout].reshape(fin, fout)
            delta = (delta @ W.T) * (inp > 0.0)
    return grad


@njit(cache=True)
def mlp_backward_numba(X, theta, widths, hidden, z, upstream, code, eps):
    n = X.shape[0]
    n_layers = widths.shape[0] - 1
    grad = np.zeros(theta.shape[0])
    offsets = np.empty(n_layers, dtype=np.int64)
    hoffs = np.zeros(n_layers, dtype=np.int64)
    off = 0
    for l in range(n_layers):
        offsets[l] = off
        off += widths[l] * widths[l + 1] + widths[l + 1]
    for l in range(2, n_layers):
        hoffs[l] = hoffs[l - 1] + widths[l - 1]
    delta = np.empty((n, 1))
    for i in range(n):
        delta[i, 0] = upstream[i] * _link_deriv_nb(z[i], code, eps)
    for l in range(n_layers - 1, -1, -1):
        fin = widths[l]
        fout = widths[l + 1]
        off = offsets[l]
        boff = off + fin * fout
        hin = hoffs[l]
        for i in range(n):
            for j in range(fin):
                if l == 0:
                    a = X[i, j]
                else:
                    a = hidden[i, hin + j]
                if a != 0.0:
                    row = off + j * fout
                    for k in range(fout):
                        grad[row + k] += a * delta[i, k]
            for k in range(fout):
                grad[boff + k] += delta[i, k]
        if l > 0:
            prev = np.zeros((n, fin))
            for i in range(n):
                for j in range(fin):
                    if hidden[i, hin + j] > 0.0:
                        row = off + j * fout
                        s = 0.0
                        for k in range(fout):
                            s += delta[i, k] * theta[row + k]
                        prev[i, j] = s
            delta = prev
    return grad


# ---------------------------------------------------------- kernel gram ---

def gaussian_gram_numpy(X, centers, sigma):
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(centers * centers, axis=1)[None, :]
        - 2.0 * X @ centers.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


@njit(cache=True)
def gaussian_gram_numba(X, centers, sigma):
    n, d = X.shape
    b = centers.shape[0]
    out = np.empty((n, b))
    scale = -1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        for j in range(b):
            s = 0.0
            for k in range(d):
                t = X[i, k] - centers[j, k]
                s += t * t
            out[i, j] = math.exp(s * scale)
    return out


# ------------------------------------------------------- pairwise AUROC ---

def pairwise_auc_numpy(pos, neg):
    """O(n_pos * n_neg) Mann-Whitney count; ties count one half."""
    total = 0.0
    for start in range(0, pos.shape[0], 256):
        p = pos[start:start + 256, None]
        total += np.sum(p > neg[None, :]) + 0.5 * np.sum(p == neg[None, :])
    return total / (pos.shape[0] * neg.shape[0])


@njit(cache=True)
def pairwise_auc_numba(pos, neg):
    total = 0.0
    for i in range(pos.shape[0]):
        p = pos[i]
        for j in range(neg.shape[0]):
            q = neg[j]
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (pos.shape[0] * neg.shape[0])


# ------------------------------------------------------- fused training ---

FAMILY_CODES = {"LSIF": 0, "UKL": 1, "BKL": 2, "PULog": 3}
CORRECTION_CODES = {"identity": 0, "relu": 1}

STATUS_OK = 0
STATUS_DOMAIN = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def _loss_terms_nb(fam, C, t):
    """(l1, l2, l1', l2') for one output value; display forms."""
    if fam == 0:
        return 0.5 * t * t, 0.5 * C * t * t - t, t, C * t - 1.0
    if fam == 1:
        return t, C * t - math.log(t), 1.0, C - 1.0 / t
    if fam == 2:
        lp = math.log1p(t)
        return lp, -math.log(t) + (1.0 + C) * lp, 1.0 / (1.0 + t), -1.0 / t + (1.0 + C) / (1.0 + t)
    return -math.log1p(-t), -C * math.log(t), 1.0 / (1.0 - t), -C / t


@njit(cache=True)
def _in_domain_nb(t, lo, hi, lo_closed, hi_closed):
    if not math.isfinite(t):
        return False
    if lo_closed:
        if t < lo:
            return False
    elif t <= lo:
        return False
    if hi_closed:
        if t > hi:
            return False
    elif t >= hi:
        return False
    return True


@njit(cache=True)
def train_epoch_mlp_numba(X_nu, X_de, nu_idx, nu_ptr, de_idx, de_ptr, theta, m, v, t,
                          widths, code, eps, fam, C, lo, hi, lo_closed, hi_closed,
                          corr, lr, beta1, beta2, adam_eps, lam, reg):
    """One epoch of the corrected-risk Adam loop for an MLP, in place.

    Batches are given in CSR form (``*_idx`` rows, ``*_ptr`` offsets).
    ``reg``: 0 = L2 penalty, 1 = L1. Returns
    ``(t, sum_clip_raw, n_ascent, n_done, status)``; on a bad status the
    parameters are those before the failing step.
    """
    n_batches = nu_ptr.shape[0] - 1
    sum_raw = 0.0
    n_ascent = 0
    for j in range(n_batches):
        xb_nu = X_nu[nu_idx[nu_ptr[j]:nu_ptr[j + 1]]]
        xb_de = X_de[de_idx[de_ptr[j]:de_ptr[j + 1]]]
        n_nu = xb_nu.shape[0]
        n_de = xb_de.shape[0]
        r_nu, z_nu, h_nu = mlp_forward_numba(xb_nu, theta, widths, code, eps)
        r_de, z_de, h_de = mlp_forward_numba(xb_de, theta, widths, code, eps)
        s1_nu = 0.0
        s2_nu = 0.0
        s1_de = 0.0
        d1_nu = np.empty(n_nu)
        d2_nu = np.empty(n_nu)
        d1_de = np.empty(n_de)
        for i in range(n_nu):
            if not _in_domain_nb(r_nu[i], lo, hi, lo_closed, hi_closed):
                return t, sum_raw, n_ascent, j, STATUS_DOMAIN
            a, b, c, d = _loss_terms_nb(fam, C, r_nu[i])
            s1_nu += a
            s2_nu += b
            d1_nu[i] = c
            d2_nu[i] = d
        for i in range(n_de):
            if not _in_domain_nb(r_de[i], lo, hi, lo_closed, hi_closed):
                return t, sum_raw, n_ascent, j, STATUS_DOMAIN
            a, b, c, d = _loss_terms_nb(fam, C, r_de[i])
            s1_de += a
            d1_de[i] = c
        raw = s1_de / n_de - C * s1_nu / n_nu
        total = s2_nu / n_nu + (max(raw, 0.0) if corr == 1 else raw)
        if not math.isfinite(total):
            return t, sum_raw, n_ascent, j, STATUS_NONFINITE
        u_nu = np.empty(n_nu)
        u_de = np.empty(n_de)
        if corr == 1 and raw < 0.0:
            n_ascent += 1
            for i in range(n_nu):
                u_nu[i] = C * d1_nu[i] / n_nu
            for i in range(n_de):
                u_de[i] = -d1_de[i] / n_de
        else:
            for i in range(n_nu):
                u_nu[i] = (d2_nu[i] - C * d1_nu[i]) / n_nu
            for i in range(n_de):
                u_de[i] = d1_de[i] / n_de
        g = mlp_backward_numba(xb_nu, theta, widths, h_nu, z_nu, u_nu, code, eps)
        g += mlp_backward_numba(xb_de, theta, widths, h_de, z_de, u_de, code, eps)
        if lam != 0.0:
            for k in range(theta.shape[0]):
                if reg == 0:
                    g[k] += lam * theta[k]
                else:
                    th = theta[k]
                    g[k] += lam * (1.0 if th > 0.0 else (-1.0 if th < 0.0 else 0.0))
        for k in range(theta.shape[0]):
            if not math.isfinite(g[k]):
                return t, sum_raw, n_ascent, j, STATUS_NONFINITE
        tt = t + 1
        c1 = 1.0 - beta1 ** tt
        c2 = 1.0 - beta2 ** tt
        new = np.empty_like(theta)
        for k in range(theta.shape[0]):
            mk = beta1 * m[k] + (1.0 - beta1) * g[k]
            vk = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
            new[k] = theta[k] - lr * (mk / c1) / (math.sqrt(vk / c2) + adam_eps)
            if not math.isfinite(new[k]):
                return t, sum_raw, n_ascent, j, STATUS_NONFINITE
        for k in range(theta.shape[0]):
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k]
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
            theta[k] = new[k]
        t = tt
        sum_raw += raw
    return t, sum_raw, n_ascent, n_batches, STATUS_OK


# -------------------------------------------------------------- dispatch ---

def _as_widths(widths):
    return np.ascontiguousarray(widths, dtype=np.int64)


if USE_NUMBA:
    def mlp_forward(X, theta, widths, code, eps):
        return mlp_forward_numba(np.ascontiguousarray(X, dtype=np.float64), theta,
                                 _as_widths(widths), code, eps)

    def mlp_backward(X, theta, widths, hidden, z, upstream, code, eps):
        return mlp_backward_numba(np.ascontiguousarray(X, dtype=np.float64), theta,
                                  _as_widths(widths), hidden, z,
                                  np.ascontiguousarray(upstream, dtype=np.float64),
                                  code, eps)

    def gaussian_gram(X, centers, sigma):
        return gaussian_gram_numba(np.ascontiguousarray(X, dtype=np.float64),
                                   np.ascontiguousarray(centers, dtype=np.float64),
                                   float(sigma))

    def pairwise_auc(pos, neg):
        return pairwise_auc_numba(np.ascontiguousarray(pos, dtype=np.float64),
                                  np.ascontiguousarray(neg, dtype=np.float64))
else:
    def mlp_forward(X, theta, widths, code, eps):
        return mlp_forward_numpy(np.asarray(X, dtype=np.float64), theta,
                                 [int(w) for w in widths], code, eps)

    def mlp_backward(X, theta, widths, hidden, z, upstream, code, eps):
        return mlp_backward_numpy(np.asarray(X, dtype=np.float64), theta,
                                  [int(w) for w in widths], hidden, z,
                                  np.asarray(upstream, dtype=np.float64), code, eps)

    def gaussian_gram(X, centers, sigma):
        return gaussian_gram_numpy(np.asarray(X, dtype=np.float64),
                                   np.asarray(centers, dtype=np.float64), float(sigma))

    def pairwise_auc(pos, neg):
        return pairwise_auc_numpy(np.asarray(pos, dtype=np.float64),
                                  np.asarray(neg, dtype=np.float64))
