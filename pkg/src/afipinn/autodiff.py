"""Dense tanh networks with exact input derivatives and parameter gradients.

Input derivatives are propagated as a jet: alongside each activation we carry
its first and second derivative with respect to every input coordinate (only
the diagonal of the input Hessian). All jet streams share one weight matrix
per layer, so a layer is a single matmul over a ``(S*N, width)`` stack with
``S = 1 + order*d`` streams. Parameter gradients are obtained by reverse
accumulation through that computation.

Parameters live in one flat float64 vector, layer-major, each layer's weight
matrix (``(n_in, n_out)``, row-major) followed by its bias. ``Network.weights``
and ``Network.biases`` are views into that vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, NumericalError
from .kernels import jet_tanh_backward, jet_tanh_forward

CHECKPOINT_FORMAT = "afipinn-network-v1"


class Network:
    """Fully connected network, tanh on hidden layers, scalar linear output."""

    def __init__(self, layer_widths: Sequence[int], params: Optional[np.ndarray] = None):
        widths = tuple(int(w) for w in layer_widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ConfigError(f"invalid layer widths {list(layer_widths)}")
        if widths[-1] != 1:
            raise ConfigError(f"output width must be 1, got {widths[-1]}")
        self.layer_widths = widths
        n = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
        if params is None:
            self.params = np.zeros(n)
        else:
            params = np.array(params, dtype=np.float64).ravel()
            if params.size != n:
                raise ConfigError(f"expected {n} parameters, got {params.size}")
            if not np.all(np.isfinite(params)):
                raise NumericalError("non-finite network parameters")
            self.params = params
        self.weights = []
        self.biases = []
        self._slices = []
        pos = 0
        for a, b in zip(widths[:-1], widths[1:]):
            w_sl = slice(pos, pos + a * b)
            b_sl = slice(pos + a * b, pos + a * b + b)
            self.weights.append(self.params[w_sl].reshape(a, b))
            self.biases.append(self.params[b_sl])
            self._slices.append((w_sl, b_sl))
            pos = b_sl.stop

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_params(self) -> int:
        return self.params.size

    def set_params(self, values: np.ndarray) -> None:
        # in place, so the weight/bias views stay valid
        self.params[:] = values

    def copy(self) -> "Network":
        return Network(self.layer_widths, self.params.copy())

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return evaluate_batch(self, X, order=0).value

    def __repr__(self):
        return f"Network(layer_widths={list(self.layer_widths)})"


def init_network(layer_widths: Sequence[int], seed: int, init: str = "glorot") -> Network:
    """Glorot-uniform weights and zero biases from a seeded generator."""
    net = Network(layer_widths)
    if init == "zeros":
        return net
    if init != "glorot":
        raise ConfigError(f"unknown init scheme {init!r}")
    rng = np.random.default_rng(seed)
    for W in net.weights:
        fan_in, fan_out = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return net


@dataclass
class EvalBundle:
    value: float
    input_grad: np.ndarray
    input_hess_diag: np.ndarray


@dataclass
class BatchBundle:
    """Per-point network output and input derivatives for a batch.

    ``grad`` and ``hess_diag`` have shape ``(N, d)``; they are ``None`` when
    the forward pass was run at a lower order. The same type carries
    cotangents (loss sensitivities) for the backward pass.
    """

    value: np.ndarray
    grad: Optional[np.ndarray] = None
    hess_diag: Optional[np.ndarray] = None


def n_streams(d: int, order: int) -> int:
    return 1 + order * d


@dataclass
class Tape:
    X: np.ndarray
    order: int
    inputs: list   # stream stacks entering each layer, (S, N, n_in)
    pre: list      # hidden pre-activations, (S, N, n_out)
    tanh: list     # tanh values of hidden layers, (N, n_out)
    out: np.ndarray  # (S, N)
    workspace: Optional[Workspace] = None

    def bundle(self) -> BatchBundle:
        d = self.X.shape[1]
        b = BatchBundle(self.out[0])
        if self.order >= 1:
            b.grad = self.out[1:1 + d].T
        if self.order == 2:
            b.hess_diag = self.out[1 + d:].T
        return b


class Workspace:
    """Reusable scratch buffers for repeated passes over same-shaped batches.

    A tape produced with a workspace is only valid until the next forward
    pass that uses the same workspace.
    """

    def __init__(self):
        self._buffers = {}

    def get(self, key, shape):
        buf = self._buffers.get(key)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape)
            self._buffers[key] = buf
        return buf


def _scratch(ws, key, shape):
    return np.empty(shape) if ws is None else ws.get(key, shape)


def _check_input(net: Network, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ContractError(
            f"input of shape {X.shape} does not match network input dim {net.input_dim}")
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise NumericalError("non-finite input", index=bad, point=X[bad])
    return np.ascontiguousarray(X)


def forward(net: Network, X: np.ndarray, order: int = 2,
            workspace: Optional[Workspace] = None) -> Tape:
    """Run the jet forward pass and keep what the backward pass needs."""
    if order not in (0, 1, 2):
        raise ContractError(f"order must be 0, 1 or 2, got {order}")
    X = _check_input(net, X)
    N, d = X.shape
    S = n_streams(d, order)
    n_layers = len(net.weights)

    inputs, pre, tanh_vals = [], [], []
    A = None
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        n_out = W.shape[1]
        Z = _scratch(workspace, ("z", layer), (S, N, n_out))
        if layer == 0:
            # input jet is (x, e_i, 0): no need to multiply the constant streams
            np.matmul(X, W, out=Z[0])
            if order >= 1:
                Z[1:1 + d] = W[:, None, :]
            if order == 2:
                Z[1 + d:] = 0.0
        else:
            np.matmul(A.reshape(S * N, -1), W, out=Z.reshape(S * N, n_out))
        Z[0] += b
        inputs.append(A)
        if layer == n_layers - 1:
            out = Z[:, :, 0]
            break
        H = _scratch(workspace, ("h", layer), Z.shape)
        jet_tanh_forward(Z, H, d, order)
        pre.append(Z)
        tanh_vals.append(H[0])
        A = H

    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out).all(axis=0))[0])
        raise NumericalError("non-finite network output", index=bad, point=X[bad])
    return Tape(X, order, inputs, pre, tanh_vals, out, workspace)


def backward(net: Network, tape: Tape, cotangent: np.ndarray) -> np.ndarray:
    """Pull a ``(S, N)`` output cotangent back to a flat parameter gradient."""
    X, order = tape.X, tape.order
    N, d = X.shape
    S = n_streams(d, order)
    cot = np.ascontiguousarray(cotangent, dtype=np.float64).reshape(S, N)
    grad = np.zeros(net.n_params)
    n_layers = len(net.weights)

    dZ = cot.reshape(S, N, 1)
    for layer in range(n_layers - 1, -1, -1):
        W = net.weights[layer]
        w_sl, b_sl = net._slices[layer]
        n_in, n_out = W.shape
        gW = grad[w_sl].reshape(n_in, n_out)
        grad[b_sl] = dZ[0].sum(axis=0)
        if layer == 0:
            gW[...] = X.T @ dZ[0]
            if order >= 1:
                gW += dZ[1:1 + d].sum(axis=1)
            break
        A = tape.inputs[layer]
        dZf = dZ.reshape(S * N, n_out)
        np.matmul(A.reshape(S * N, n_in).T, dZf, out=gW)
        dA = _scratch(tape.workspace, ("da", layer), (S, N, n_in))
        np.matmul(dZf, W.T, out=dA.reshape(S * N, n_in))
        dZ = _scratch(tape.workspace, ("dz", layer), dA.shape)
        jet_tanh_backward(tape.tanh[layer - 1], tape.pre[layer - 1], dA, dZ, d, order)
    return grad


def evaluate_batch(net: Network, X: np.ndarray, order: int = 2) -> BatchBundle:
    return forward(net, X, order).bundle()


def evaluate(net: Network, x: np.ndarray) -> EvalBundle:
    """Value, input gradient and diagonal input Hessian at one point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError(f"expected a single point, got shape {x.shape}")
    b = evaluate_batch(net, x[None, :], order=2)
    return EvalBundle(float(b.value[0]), b.grad[0].copy(), b.hess_diag[0].copy())


def bundle_to_cotangent(cot: BatchBundle, N: int, d: int, order: int) -> np.ndarray:
    out = np.zeros((n_streams(d, order), N))
    out[0] = cot.value
    if order >= 1 and cot.grad is not None:
        out[1:1 + d] = np.asarray(cot.grad).T
    if order == 2 and cot.hess_diag is not None:
        out[1 + d:] = np.asarray(cot.hess_diag).T
    return out


LossFn = Callable[[BatchBundle], "tuple[float, BatchBundle]"]


def parameter_gradient(net: Network, X: np.ndarray, loss_fn: LossFn, order: int = 2):
    """Gradient of a scalar batch loss with respect to all parameters.

    ``loss_fn`` receives the batch bundle and returns ``(loss, cotangent)``
    where the cotangent bundle holds dloss/du, dloss/du_x and dloss/du_xx per
    point. Returns ``(loss, flat_gradient)`` in the parameter layout described
    in the module docstring.
    """
    tape = forward(net, X, order)
    bundle = tape.bundle()
    loss, cot = loss_fn(bundle)
    loss = float(loss)
    N, d = tape.X.shape
    C = bundle_to_cotangent(cot, N, d, order)
    if not np.isfinite(loss) or not np.all(np.isfinite(C)):
        bad = ~np.isfinite(C).all(axis=0)
        idx = int(np.flatnonzero(bad)[0]) if bad.any() else None
        raise NumericalError("non-finite loss", index=idx,
                             point=None if idx is None else tape.X[idx])
    return loss, backward(net, tape, C)


def save_network(path, net: Network) -> None:
    """Write widths and the flat parameter vector to an ``.npz`` checkpoint."""
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(CHECKPOINT_FORMAT),
                 layer_widths=np.array(net.layer_widths, dtype=np.int64),
                 params=net.params)


def load_network(path) -> Network:
    with np.load(path) as data:
        if str(data["format"]) != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: not a network checkpoint")
        return Network(data["layer_widths"].tolist(), data["params"].copy())
