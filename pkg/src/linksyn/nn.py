"""Minimal dense network with hand-derived backward passes.

The nets here are small and fixed-shape (a context encoder and a denoiser
head), so reverse-mode gradients are written out layer by layer instead of
pulling in an autodiff framework; grad_check verifies them against central
finite differences. Everything is float64: gradient checking at single
precision is unreliable.

Layer stack: affine -> (optional FiLM scale/shift on one hidden layer,
applied before the activation) -> ReLU, with an identity output layer. One
hidden layer may additionally receive an auxiliary vector concatenated to
its input (used for the diffusion timestep embedding).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch

CHECKPOINT_MAGIC = b"LSCK"
CHECKPOINT_VERSION = 1


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class MlpParams:
    """Weights of an affine/ReLU stack.

    sizes[k] is the width of layer k's main input; when aux_layer == k the
    actual weight matrix is (sizes[k] + aux_dim, sizes[k+1]).
    """

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    film_layer: int | None = None
    aux_layer: int | None = None
    aux_dim: int = 0

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, film_layer: int | None = None,
             aux_layer: int | None = None, aux_dim: int = 0) -> "MlpParams":
        sizes = tuple(int(s) for s in sizes)
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            fan_in = sizes[k] + (aux_dim if k == aux_layer else 0)
            weights.append(glorot_uniform(rng, fan_in, sizes[k + 1]))
            biases.append(np.zeros(sizes[k + 1]))
        return cls(sizes, weights, biases, film_layer, aux_layer, aux_dim)

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class MlpCache:
    inputs: list[np.ndarray]    # per-layer input, after any aux concat
    pre_film: list[np.ndarray]  # affine output before FiLM
    post: list[np.ndarray]      # pre-activation after FiLM
    film: tuple[np.ndarray, np.ndarray] | None
    aux: np.ndarray | None


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x: np.ndarray
    aux: np.ndarray | None = None
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None


def mlp_forward(params: MlpParams, x: np.ndarray, aux: np.ndarray | None = None,
                film: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[np.ndarray, MlpCache]:
    """Forward pass over a (batch, d0) input; returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise DimMismatch(f"input must be (batch, {params.sizes[0]}), got {x.shape}")
    if params.aux_layer is not None:
        if aux is None:
            raise DimMismatch("net expects an aux vector")
        aux = np.asarray(aux, dtype=np.float64)
        if aux.shape != (x.shape[0], params.aux_dim):
            raise DimMismatch(f"aux must be ({x.shape[0]}, {params.aux_dim}), got {aux.shape}")
    if film is not None:
        gamma, beta = film
        width = params.sizes[params.film_layer + 1] if params.film_layer is not None else -1
        if params.film_layer is None or gamma.shape[-1] != width or beta.shape[-1] != width:
            raise DimMismatch("FiLM vectors do not match the modulated layer width")

    inputs, pre_film, post = [], [], []
    h = x
    last = params.n_layers - 1
    for k in range(params.n_layers):
        if k == params.aux_layer:
            h = np.concatenate([h, aux], axis=1)
        inputs.append(h)
        z = h @ params.weights[k] + params.biases[k]
        pre_film.append(z)
        if k == params.film_layer and film is not None:
            z = film[0] * z + film[1]
        post.append(z)
        h = np.maximum(z, 0.0) if k < last else z
    return h, MlpCache(inputs, pre_film, post, film, aux)


def mlp_infer(params: MlpParams, x: np.ndarray, aux: np.ndarray | None = None,
              film: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Forward pass without the backward cache (hot path for sampling)."""
    h = x
    last = params.n_layers - 1
    for k in range(params.n_layers):
        if k == params.aux_layer:
            h = np.concatenate([h, aux], axis=1)
        z = h @ params.weights[k] + params.biases[k]
        if k == params.film_layer and film is not None:
            z = film[0] * z + film[1]
        h = np.maximum(z, 0.0) if k < last else z
    return h


def mlp_backward(params: MlpParams, cache: MlpCache, dout: np.ndarray) -> MlpGrads:
    """Exact reverse-mode gradients of mlp_forward, including the FiLM path."""
    dout = np.asarray(dout, dtype=np.float64)
    if dout.shape != cache.post[-1].shape:
        raise DimMismatch(f"output gradient shape {dout.shape} != {cache.post[-1].shape}")

    last = params.n_layers - 1
    d_weights: list[np.ndarray] = [np.empty(0)] * params.n_layers
    d_biases: list[np.ndarray] = [np.empty(0)] * params.n_layers
    d_gamma = d_beta = d_aux = None

    dh = dout
    for k in range(last, -1, -1):
        dz = dh if k == last else dh * (cache.post[k] > 0)
        if k == params.film_layer and cache.film is not None:
            gamma, _ = cache.film
            dg = dz * cache.pre_film[k]
            db = dz
            if gamma.ndim == 1:
                d_gamma = dg.sum(axis=0)
                d_beta = db.sum(axis=0)
            else:
                d_gamma = dg
                d_beta = db
            dz = dz * gamma
        d_weights[k] = cache.inputs[k].T @ dz
        d_biases[k] = dz.sum(axis=0)
        dinp = dz @ params.weights[k].T
        if k == params.aux_layer:
            main = dinp.shape[1] - params.aux_dim
            d_aux = dinp[:, main:]
            dh = dinp[:, :main]
        else:
            dh = dinp
    return MlpGrads(d_weights, d_biases, dh, d_aux, d_gamma, d_beta)


# --- FiLM conditioning: two affine maps cond -> (gamma, beta) ---

@dataclass
class FilmParams:
    w_gamma: np.ndarray  # (cond_dim, width)
    b_gamma: np.ndarray  # (width,)
    w_beta: np.ndarray
    b_beta: np.ndarray

    @classmethod
    def init(cls, cond_dim: int, width: int, rng: np.random.Generator) -> "FilmParams":
        # gamma starts at 1 (identity modulation) so an untrained FiLM does
        # not crush the activations it scales.
        return cls(
            w_gamma=glorot_uniform(rng, cond_dim, width),
            b_gamma=np.ones(width),
            w_beta=glorot_uniform(rng, cond_dim, width),
            b_beta=np.zeros(width),
        )


@dataclass
class FilmGrads:
    w_gamma: np.ndarray
    b_gamma: np.ndarray
    w_beta: np.ndarray
    b_beta: np.ndarray
    cond: np.ndarray


def film_apply(fp: FilmParams, cond: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim != 2 or cond.shape[1] != fp.w_gamma.shape[0]:
        raise DimMismatch(f"conditioning must be (batch, {fp.w_gamma.shape[0]}), got {cond.shape}")
    return cond @ fp.w_gamma + fp.b_gamma, cond @ fp.w_beta + fp.b_beta


def film_backward(fp: FilmParams, cond: np.ndarray, d_gamma: np.ndarray,
                  d_beta: np.ndarray) -> FilmGrads:
    return FilmGrads(
        w_gamma=cond.T @ d_gamma,
        b_gamma=d_gamma.sum(axis=0),
        w_beta=cond.T @ d_beta,
        b_beta=d_beta.sum(axis=0),
        cond=d_gamma @ fp.w_gamma.T + d_beta @ fp.w_beta.T,
    )


# --- gradient checking ---

def grad_check(params: MlpParams, x: np.ndarray, loss_fn, epsilon: float = 1e-5,
               aux: np.ndarray | None = None, film_params: FilmParams | None = None,
               cond: np.ndarray | None = None) -> float:
    """Max relative error between backprop and central finite differences.

    loss_fn maps the net output to (scalar loss, dloss/doutput). Every
    weight and bias entry is perturbed, including the FiLM maps when given.
    Error metric: |g_fd - g_bp| / max(1e-8, |g_fd| + |g_bp|).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")

    def run_loss() -> float:
        film = film_apply(film_params, cond) if film_params is not None else None
        y, _ = mlp_forward(params, x, aux=aux, film=film)
        return float(loss_fn(y)[0])

    film = film_apply(film_params, cond) if film_params is not None else None
    y, cache = mlp_forward(params, x, aux=aux, film=film)
    _, dy = loss_fn(y)
    grads = mlp_backward(params, cache, dy)

    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(params.n_layers):
        pairs.append((params.weights[k], grads.weights[k]))
        pairs.append((params.biases[k], grads.biases[k]))
    if film_params is not None:
        fg = film_backward(film_params, cond, np.atleast_2d(grads.gamma),
                           np.atleast_2d(grads.beta))
        pairs.append((film_params.w_gamma, fg.w_gamma))
        pairs.append((film_params.b_gamma, fg.b_gamma))
        pairs.append((film_params.w_beta, fg.w_beta))
        pairs.append((film_params.b_beta, fg.b_beta))

    worst = 0.0
    for array, grad in pairs:
        for idx in np.ndindex(array.shape):
            orig = array[idx]
            array[idx] = orig + epsilon
            plus = run_loss()
            array[idx] = orig - epsilon
            minus = run_loss()
            array[idx] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            bp = float(grad[idx])
            err = abs(fd - bp) / max(1e-8, abs(fd) + abs(bp))
            worst = max(worst, err)
    return worst


# --- adaptive-moment optimizer ---

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()}, t=0)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """One update; parameters are modified in place and returned."""
    if set(grads) != set(params):
        raise DimMismatch("gradient keys do not match parameter keys")
    state.t += 1
    t = state.t
    for key in sorted(params):
        g = grads[key]
        if g.shape != params[key].shape:
            raise DimMismatch(f"shape mismatch for {key}: {g.shape} vs {params[key].shape}")
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


# --- checkpoint file: magic, version, JSON header, raw little-endian f64 ---
#
# Layout:
#   bytes 0-3   b"LSCK"
#   bytes 4-7   format version, uint32 LE
#   bytes 8-11  header length H, uint32 LE
#   H bytes     UTF-8 JSON: {"arrays": [{"name", "shape"}...], "meta": {...}}
#   rest        for each header entry in order: C-order float64 LE data

def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(arrays)
    header = {
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
        "meta": meta,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
            arrays[entry["name"]] = data.reshape(shape)
    return arrays, header["meta"]
