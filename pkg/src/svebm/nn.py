"""Minimal neural-network building blocks on float64 numpy.

Every layer keeps its arrays in a ``params`` dict (name -> ndarray) so a
model can be flattened into named checkpoint entries, and every forward
pass returns the cache its hand-written backward pass needs.  Gradients
come back as dicts with the same keys as ``params``; callers accumulate
them with :func:`add_grads` and apply them through :class:`Adam` or
:class:`Sgd`.

Conventions:
  * batches are leading: ``x`` is ``(B, in_dim)``, sequences ``(T, B, in_dim)``;
  * backward passes compute d(scalar)/d(param) for whatever scalar the
    upstream gradient refers to -- no sign convention is imposed here;
  * all arrays are float64.
"""

from __future__ import annotations

import numpy as np

# ---------------------------------------------------------------------------
# Numerics helpers
# ---------------------------------------------------------------------------

LOG_2PI = float(np.log(2.0 * np.pi))


def logsumexp(a, axis=-1):
    """Max-shifted log(sum(exp(a))) along ``axis``; finite for finite input."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))
    return out


def softmax(a, axis=-1):
    """Max-shifted softmax along ``axis``."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(a, axis=-1):
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    shifted = a - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def standard_normal_logpdf(z):
    """log N(z; 0, I) summed over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[-1]
    return -0.5 * np.sum(z * z, axis=-1) - 0.5 * d * LOG_2PI


def _tanh_backward(dy, y):
    return dy * (1.0 - y * y)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


# ---------------------------------------------------------------------------
# Parameter initialisation
# ---------------------------------------------------------------------------


def init_matrix(rng, fan_in, fan_out, scale=1.0):
    """Gaussian init with variance 1/fan_in, optionally rescaled."""
    return rng.standard_normal((fan_in, fan_out)) * (scale / np.sqrt(fan_in))


# ---------------------------------------------------------------------------
# Gradient-dict utilities
# ---------------------------------------------------------------------------


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def add_grads(total, part, weight=1.0):
    """In-place ``total += weight * part`` for matching gradient dicts."""
    for k, v in part.items():
        if k in total:
            total[k] = total[k] + weight * v
        else:
            total[k] = weight * v
    return total


def global_norm(grads):
    sq = 0.0
    for v in grads.values():
        sq += float(np.sum(v * v))
    return np.sqrt(sq)


def clip_grads(grads, max_norm):
    """Scale the whole gradient dict so its global norm is at most max_norm."""
    if max_norm is None or max_norm <= 0:
        return grads
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor
    return grads


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Mlp:
    """Fully-connected stack with tanh hidden units and a linear final layer.

    ``sizes`` lists the widths including input and output, e.g. (2, 200, 200, 8).
    With ``final_activation=True`` the last layer is also passed through tanh
    (used for encoder trunks).
    """

    def __init__(self, sizes, rng, out_scale=1.0, final_activation=False):
        if len(sizes) < 2:
            raise ValueError("Mlp needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.final_activation = final_activation
        self.params = {}
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            scale = out_scale if i == n_layers - 1 else 1.0
            self.params[f"w{i}"] = init_matrix(rng, self.sizes[i], self.sizes[i + 1], scale)
            self.params[f"b{i}"] = np.zeros(self.sizes[i + 1])

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, x):
        """Returns (output, cache); ``x`` is (B, in_dim) or (in_dim,)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        acts = [x]
        h = x
        for i in range(self.n_layers):
            h = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1 or self.final_activation:
                h = np.tanh(h)
            acts.append(h)
        out = h[0] if squeeze else h
        return out, (acts, squeeze)

    def backward(self, cache, dout):
        """Backprop; returns (param grads, gradient w.r.t. the input)."""
        acts, squeeze = cache
        dout = np.asarray(dout, dtype=np.float64)
        if squeeze:
            dout = dout[None, :]
        grads = {}
        dh = dout
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1 or self.final_activation:
                dh = _tanh_backward(dh, acts[i + 1])
            grads[f"w{i}"] = acts[i].T @ dh
            grads[f"b{i}"] = dh.sum(axis=0)
            dh = dh @ self.params[f"w{i}"].T
        dx = dh[0] if cache[1] else dh
        return grads, dx


class Affine:
    """Single linear layer ``y = x W + b``."""

    def __init__(self, in_dim, out_dim, rng, scale=1.0):
        self.params = {
            "w": init_matrix(rng, in_dim, out_dim, scale),
            "b": np.zeros(out_dim),
        }

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x @ self.params["w"] + self.params["b"], x

    def backward(self, cache, dout):
        x = cache
        grads = {"w": x.T @ dout, "b": dout.sum(axis=0)}
        return grads, dout @ self.params["w"].T


class Embedding:
    """Token embedding table (vocab, dim) with scatter-add backward."""

    def __init__(self, vocab_size, dim, rng):
        self.params = {"table": rng.standard_normal((vocab_size, dim)) / np.sqrt(dim)}

    def forward(self, ids):
        ids = np.asarray(ids)
        return self.params["table"][ids], ids

    def backward(self, cache, dout):
        ids = cache
        dtable = np.zeros_like(self.params["table"])
        np.add.at(dtable, ids.reshape(-1), dout.reshape(-1, dout.shape[-1]))
        return {"table": dtable}


class GruCell:
    """Single-layer gated recurrent cell.

    Gate layout inside the 3H-wide combined matrices is [reset | update | cand]:

        r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
        u = sigmoid(x Wx_u + bx_u + h Wh_u + bh_u)
        n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
        h' = (1 - u) * n + u * h

    Steps where ``mask`` is 0 leave the state untouched, so the final state
    of a padded batch row equals the state at that row's true last step.
    """

    def __init__(self, input_size, hidden_size, rng):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        h = self.hidden_size
        self.params = {
            "wx": init_matrix(rng, self.input_size, 3 * h),
            "wh": init_matrix(rng, h, 3 * h),
            "bx": np.zeros(3 * h),
            "bh": np.zeros(3 * h),
        }

    def step(self, x, h, mask=None):
        """One step; x (B, I), h (B, H), mask (B,) of {0,1} or None."""
        hsz = self.hidden_size
        gx = x @ self.params["wx"] + self.params["bx"]
        gh = h @ self.params["wh"] + self.params["bh"]
        r = _sigmoid(gx[:, :hsz] + gh[:, :hsz])
        u = _sigmoid(gx[:, hsz : 2 * hsz] + gh[:, hsz : 2 * hsz])
        c = gh[:, 2 * hsz :]
        n = np.tanh(gx[:, 2 * hsz :] + r * c)
        h_core = (1.0 - u) * n + u * h
        if mask is None:
            h_new = h_core
        else:
            m = mask[:, None]
            h_new = m * h_core + (1.0 - m) * h
        cache = (x, h, r, u, n, c, mask)
        return h_new, cache

    def step_backward(self, cache, dh_new, grads):
        """Backward for one step; accumulates into ``grads`` and returns (dx, dh)."""
        x, h, r, u, n, c, mask = cache
        hsz = self.hidden_size
        if mask is None:
            dcore = dh_new
            dh = np.zeros_like(dh_new)
        else:
            m = mask[:, None]
            dcore = dh_new * m
            dh = dh_new * (1.0 - m)
        du = dcore * (h - n)
        dn = dcore * (1.0 - u)
        dh = dh + dcore * u
        dn_pre = dn * (1.0 - n * n)
        dr = dn_pre * c
        dc = dn_pre * r
        da_r = dr * r * (1.0 - r)
        da_u = du * u * (1.0 - u)
        dgx = np.concatenate([da_r, da_u, dn_pre], axis=1)
        dgh = np.concatenate([da_r, da_u, dc], axis=1)
        grads["wx"] += x.T @ dgx
        grads["wh"] += h.T @ dgh
        grads["bx"] += dgx.sum(axis=0)
        grads["bh"] += dgh.sum(axis=0)
        dx = dgx @ self.params["wx"].T
        dh = dh + dgh @ self.params["wh"].T
        return dx, dh

    def run(self, xs, h0, mask=None):
        """Full unroll; xs (T, B, I), h0 (B, H), mask (T, B) or None.

        Returns (hs, caches) where hs is (T, B, H), hs[t] the state after
        consuming xs[t].
        """
        T = xs.shape[0]
        h = h0
        hs = np.empty((T,) + h0.shape)
        caches = []
        for t in range(T):
            h, cache = self.step(xs[t], h, None if mask is None else mask[t])
            hs[t] = h
            caches.append(cache)
        return hs, caches

    def run_backward(self, caches, dhs, dh_final=None):
        """Backward through a full unroll.

        ``dhs`` is (T, B, H) with the direct upstream gradient on each step's
        output (zeros where a step's state is not used directly); ``dh_final``
        is an extra gradient on the last state.  Returns (grads, dxs, dh0).
        """
        T = len(caches)
        grads = zeros_like_params(self.params)
        B, H = caches[0][1].shape
        dxs = np.empty((T, B, self.input_size))
        dh = np.zeros((B, H)) if dh_final is None else dh_final.copy()
        for t in reversed(range(T)):
            dh = dh + dhs[t]
            dx, dh = self.step_backward(caches[t], dh, grads)
            dxs[t] = dx
        return grads, dxs, dh


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


class Adam:
    """Adam over a dict of named arrays; ``step`` applies a descent update in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_dict(self):
        out = {"t": np.asarray(self.t)}
        for k in self.params:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = np.array(state[f"m.{k}"], dtype=np.float64)
            self.v[k] = np.array(state[f"v.{k}"], dtype=np.float64)


class Sgd:
    """Plain stochastic gradient descent with the same interface as Adam."""

    def __init__(self, params, lr):
        self.params = params
        self.lr = float(lr)
        self.t = 0

    def step(self, grads):
        self.t += 1
        for k, p in self.params.items():
            g = grads.get(k)
            if g is not None:
                p -= self.lr * g

    def state_dict(self):
        return {"t": np.asarray(self.t)}

    def load_state_dict(self, state):
        self.t = int(state["t"])


def make_optimizer(kind, params, lr, **kwargs):
    if kind == "adam":
        return Adam(params, lr, **kwargs)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer kind: {kind!r}")
