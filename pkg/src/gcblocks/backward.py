"""Analytic reverse-mode gradients for the global blocks, plus the packing
helpers the finite-difference check is run through.

Gradients are taken of the scalar ``sum(upstream * z)`` with respect to the
input map and every weight, including the softmax-through-pooling path and
the layer-norm path.  Supported kinds: ``snl_factored``, ``se``, ``gc`` and
all four ``framework`` variants; the full non-local block is outside the
verification surface.
"""

import numpy as np

from .blocks import (
    BlockOutput,
    BlockParams,
    BlockSpec,
    block_forward,
    param_shapes,
)
from .kernels import (
    finite_diff_gradient,
    layer_norm,
    linear_vec,
    max_relative_error,
    relu,
    sigmoid,
    softmax_positions,
)
from .types import DimensionError, FeatureMap, LayerNormParams, LinearWeight, SpecError

BACKWARD_KINDS = ("snl_factored", "se", "gc", "framework")


def block_backward(
    x: FeatureMap, spec: BlockSpec, p: BlockParams, upstream: FeatureMap
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gradients of ``sum(upstream * z)`` w.r.t. ``x`` and all parameters.

    Returns ``(grad_x, grads)`` where ``grads`` is keyed by parameter role
    (``key``, ``value``, ``down``, ``up``, ``ln_gamma``, ``ln_beta``).
    """
    if upstream.data.shape != x.data.shape:
        raise DimensionError(
            f"upstream shape {upstream.data.shape} must match input {x.data.shape}"
        )
    if spec.kind == "snl_factored":
        return _snl_factored_backward(x, p, upstream.data)
    if spec.kind in ("se", "gc", "framework"):
        return _global_backward(
            x, p, upstream.data, spec.effective_pooling, spec.effective_fusion
        )
    raise SpecError(f"analytic backward not provided for kind {spec.kind!r}")


def _softmax_backward(alpha: np.ndarray, d_alpha: np.ndarray) -> np.ndarray:
    return alpha * (d_alpha - float(alpha @ d_alpha))


def _layer_norm_backward(v, p: LayerNormParams, d_out):
    mu = v.mean()
    var = np.mean((v - mu) ** 2)
    inv = 1.0 / np.sqrt(var + p.epsilon)
    vhat = (v - mu) * inv
    d_gamma = d_out * vhat
    d_beta = d_out.copy()
    d_vhat = d_out * p.gamma
    d_v = inv * (d_vhat - d_vhat.mean() - vhat * np.mean(d_vhat * vhat))
    return d_v, d_gamma, d_beta


def _attention_path(x: FeatureMap, p: BlockParams):
    """Recompute the scorer/softmax/pool intermediates of the forward."""
    logits = (p.key.data @ x.data)[0]
    alpha = softmax_positions(logits)
    context = x.data @ alpha
    return logits, alpha, context


def _attention_path_backward(x, p, alpha, d_context, grad_x, grads):
    grad_x += np.outer(d_context, alpha)
    d_alpha = x.data.T @ d_context
    d_logits = _softmax_backward(alpha, d_alpha)
    grads["key"] = (x.data @ d_logits)[None, :]
    grad_x += np.outer(p.key.data[0], d_logits)


def _snl_factored_backward(x, p, u):
    _, alpha, pooled = _attention_path(x, p)
    grad_x = u.copy()
    d_term = u.sum(axis=1)
    grads = {"value": np.outer(d_term, pooled)}
    d_pooled = p.value.data.T @ d_term
    _attention_path_backward(x, p, alpha, d_pooled, grad_x, grads)
    return grad_x, grads


def _global_backward(x, p, u, pooling, fusion):
    n = x.positions
    grads: dict[str, np.ndarray] = {}
    if pooling == "att":
        _, alpha, context = _attention_path(x, p)
    else:
        alpha = None
        uniform = np.full(n, 1.0 / n, dtype=x.dtype)
        context = x.data @ uniform

    pre_down = linear_vec(p.down, context)
    if fusion == "add":
        normed = layer_norm(pre_down, p.ln)
        hidden = relu(normed)
        grad_x = u.copy()
        d_term = u.sum(axis=1)
    else:
        hidden = relu(pre_down)
        gate = sigmoid(linear_vec(p.up, hidden))
        grad_x = u * gate[:, None]
        d_gate = (u * x.data).sum(axis=1)
        d_term = d_gate * gate * (1.0 - gate)

    grads["up"] = np.outer(d_term, hidden)
    d_hidden = p.up.data.T @ d_term
    if fusion == "add":
        d_normed = d_hidden * (normed > 0)
        d_pre_down, grads["ln_gamma"], grads["ln_beta"] = _layer_norm_backward(
            pre_down, p.ln, d_normed
        )
    else:
        d_pre_down = d_hidden * (pre_down > 0)
    grads["down"] = np.outer(d_pre_down, context)
    d_context = p.down.data.T @ d_pre_down

    if pooling == "att":
        _attention_path_backward(x, p, alpha, d_context, grad_x, grads)
    else:
        grad_x += np.outer(d_context, uniform)
    return grad_x, grads


# ---------------------------------------------------------------------------
# Finite-difference harness


def parameter_order(spec: BlockSpec) -> list[str]:
    """Canonical gradient-vector layout: weights in construction order, then
    the layer-norm affine pair when present."""
    names = list(param_shapes(spec))
    if spec.kind in ("gc", "framework") and spec.effective_fusion == "add":
        names += ["ln_gamma", "ln_beta"]
    return names


def _entry(p: BlockParams, name: str) -> np.ndarray:
    if name == "ln_gamma":
        return p.ln.gamma
    if name == "ln_beta":
        return p.ln.beta
    return getattr(p, name).data


def pack_theta(x: FeatureMap, spec: BlockSpec, p: BlockParams) -> np.ndarray:
    pieces = [x.data.ravel()]
    pieces += [_entry(p, name).ravel() for name in parameter_order(spec)]
    return np.concatenate(pieces)


def unpack_theta(theta: np.ndarray, x: FeatureMap, spec: BlockSpec, p: BlockParams):
    """Rebuild ``(x, params)`` from a flat vector laid out by ``pack_theta``."""
    pos = x.data.size
    new_x = x.with_data(theta[:pos].reshape(x.data.shape))
    fields = {
        name: getattr(p, name)
        for name in ("query", "key", "value", "out", "down", "up")
        if getattr(p, name) is not None
    }
    ln_gamma, ln_beta = None, None
    for name in parameter_order(spec):
        arr = _entry(p, name)
        chunk = theta[pos : pos + arr.size].reshape(arr.shape)
        pos += arr.size
        if name == "ln_gamma":
            ln_gamma = chunk
        elif name == "ln_beta":
            ln_beta = chunk
        else:
            fields[name] = LinearWeight(chunk)
    ln = p.ln
    if ln_gamma is not None:
        ln = LayerNormParams(ln_gamma, ln_beta, p.ln.epsilon)
    return new_x, BlockParams(**fields, ln=ln)


def pack_gradients(
    grad_x: np.ndarray, grads: dict[str, np.ndarray], spec: BlockSpec
) -> np.ndarray:
    pieces = [grad_x.ravel()]
    pieces += [grads[name].ravel() for name in parameter_order(spec)]
    return np.concatenate(pieces)


def gradcheck_block(
    spec: BlockSpec,
    x: FeatureMap,
    p: BlockParams,
    upstream: FeatureMap,
    h: float = 1e-5,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Compare the analytic backward against central differences.

    Returns ``(max_rel_err, analytic, numeric)`` over the input map and
    every parameter, flattened in canonical order.
    """
    grad_x, grads = block_backward(x, spec, p, upstream)
    analytic = pack_gradients(grad_x, grads, spec)

    def objective(theta):
        xt, pt = unpack_theta(theta, x, spec, p)
        out: BlockOutput = block_forward(xt, spec, pt)
        return float(np.sum(upstream.data * out.z.data))

    numeric = finite_diff_gradient(objective, pack_theta(x, spec, p), h=h)
    return max_relative_error(analytic, numeric), analytic, numeric
