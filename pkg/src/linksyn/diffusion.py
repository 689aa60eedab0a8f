"""Conditional denoising diffusion over single node feature rows.

One node of the mechanism is a 24-vector (validity, type, x, y, 20 adjacency
slots). Discrete slots diffuse in a continuous relaxation at their embedded
alphabet values {-1, 0, 1}; the denoiser predicts clean attributes directly
(logits for the discrete slots, coordinates for the position), which are
snapped back to alphabet values to form the clean estimate at every reverse
step. Conditioning combines three signals:

  - the curve embedding, which both joins the input and drives FiLM
    scale/shift modulation of the first hidden layer,
  - a context summary: the mean of the already-generated rows pushed
    through a small encoder (empty prefix pools to the zero vector),
  - a one-hot of the node index being generated.

The diffusion timestep enters as a sinusoidal embedding concatenated into
the second hidden layer's input. The whole model is a pair of small dense
nets plus the FiLM maps; training uses a mix of binary cross-entropy
(validity, type, adjacency with a positive-class weight for sparse edges)
and a Huber loss on the position.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .curves import Curve, curve_features
from .errors import BadSchedule, EmptyBatch, StepOutOfRange
from .graph import ADJ_SLOTS, N_MAX, ROW_DIM, NodeRecord, encode_mechanism, record_from_row
from .nn import (AdamState, FilmParams, MlpParams, adam_step, film_apply, film_backward,
                 load_checkpoint, mlp_backward, mlp_forward, mlp_infer, save_checkpoint)
from .seeds import DOMAIN_INIT, DOMAIN_TRAIN_BATCH, DOMAIN_TRAIN_NOISE, make_rng


# --- noise schedule ---

@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    # reverse-process coefficients, precomputed:
    #   mean = post_c1[t] * x0_hat + post_c2[t] * x_t,  std = post_sigma[t]
    post_c1: np.ndarray
    post_c2: np.ndarray
    post_sigma: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.05) -> NoiseSchedule:
    """Linear variance schedule with precomputed posterior coefficients.

    The default range is sized for T=200 so the terminal alpha_bar drops
    below 0.01 (x_T is then close to the standard normal the sampler
    starts from).
    """
    if T < 2:
        raise BadSchedule(f"need T >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise BadSchedule(f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    denom = 1.0 - alpha_bar
    post_c1 = np.sqrt(alpha_bar_prev) * beta / denom
    post_c2 = np.sqrt(alpha) * (1.0 - alpha_bar_prev) / denom
    post_var = beta * (1.0 - alpha_bar_prev) / denom
    return NoiseSchedule(beta, alpha, alpha_bar, post_c1, post_c2, np.sqrt(post_var))


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward corruption: sqrt(ab_t)*x0 + sqrt(1-ab_t)*eps."""
    if not 0 <= t < schedule.T:
        raise StepOutOfRange(f"t={t} outside [0, {schedule.T})")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def timestep_table(T: int, dim: int) -> np.ndarray:
    """Sinusoidal timestep embeddings, (T, dim)."""
    if dim % 2 != 0:
        raise ValueError("timestep embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.arange(T, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


# --- model assembly ---

@dataclass(frozen=True)
class ModelConfig:
    n_max: int = N_MAX
    row_dim: int = ROW_DIM
    curve_dim: int = 128
    summary_dim: int = 64
    encoder_hidden: int = 64
    hidden: int = 256
    tstep_dim: int = 32
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.05
    w_pos: float = 1.0
    w_val: float = 1.0
    w_type: float = 1.0
    w_adj: float = 2.0
    huber_delta: float = 0.1
    adj_pos_weight: float = 1.0  # (#absent / #present) over the training set

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @property
    def input_dim(self) -> int:
        return self.row_dim + self.summary_dim + self.n_max + self.curve_dim


@dataclass(frozen=True)
class ConditioningContext:
    """Everything node sampling conditions on; depends only on rows < t."""

    curve_embedding: np.ndarray
    summary: np.ndarray
    t: int
    onehot: np.ndarray
    film: tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class DenoiserOutput:
    """Raw per-slot predictions; adjacency entries for slots >= t are masked."""

    validity_logit: float
    type_logit: float
    position: np.ndarray
    adjacency_logits: np.ndarray

    @classmethod
    def from_vector(cls, out: np.ndarray, t: int) -> "DenoiserOutput":
        adj = out[4:].copy()
        adj[t:] = 0.0
        return cls(float(out[0]), float(out[1]), out[2:4].copy(), adj)


def _pool_prefix(prefix_rows: np.ndarray) -> np.ndarray:
    prefix_rows = np.asarray(prefix_rows, dtype=np.float64).reshape(-1, ROW_DIM)
    if prefix_rows.shape[0] == 0:
        return np.zeros(ROW_DIM)
    return prefix_rows.mean(axis=0)


def _one_hot(t: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[t] = 1.0
    return v


class DenoiserModel:
    """Denoiser + context encoder + FiLM maps with their noise schedule."""

    def __init__(self, config: ModelConfig, denoiser: MlpParams, encoder: MlpParams,
                 film: FilmParams):
        self.config = config
        self.denoiser = denoiser
        self.encoder = encoder
        self.film = film
        self.schedule = make_schedule(config.T, config.beta_start, config.beta_end)
        self.tsteps = timestep_table(config.T, config.tstep_dim)

    @classmethod
    def init_random(cls, config: ModelConfig, seed: int) -> "DenoiserModel":
        rng = make_rng(seed, DOMAIN_INIT)
        denoiser = MlpParams.init(
            (config.input_dim, config.hidden, config.hidden, config.row_dim),
            rng, film_layer=0, aux_layer=1, aux_dim=config.tstep_dim)
        encoder = MlpParams.init((config.row_dim, config.encoder_hidden, config.summary_dim), rng)
        film = FilmParams.init(config.curve_dim, config.hidden, rng)
        return cls(config, denoiser, encoder, film)

    # -- parameter plumbing --

    def params_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, net in (("denoiser", self.denoiser), ("encoder", self.encoder)):
            for k in range(net.n_layers):
                out[f"{name}.w{k}"] = net.weights[k]
                out[f"{name}.b{k}"] = net.biases[k]
        out["film.w_gamma"] = self.film.w_gamma
        out["film.b_gamma"] = self.film.b_gamma
        out["film.w_beta"] = self.film.w_beta
        out["film.b_beta"] = self.film.b_beta
        return out

    def set_params(self, arrays: dict[str, np.ndarray]) -> None:
        for name, net in (("denoiser", self.denoiser), ("encoder", self.encoder)):
            for k in range(net.n_layers):
                net.weights[k] = arrays[f"{name}.w{k}"].copy()
                net.biases[k] = arrays[f"{name}.b{k}"].copy()
        self.film.w_gamma = arrays["film.w_gamma"].copy()
        self.film.b_gamma = arrays["film.b_gamma"].copy()
        self.film.w_beta = arrays["film.w_beta"].copy()
        self.film.b_beta = arrays["film.b_beta"].copy()

    # -- conditioning --

    def embed_curve(self, curve) -> np.ndarray:
        if not isinstance(curve, Curve):
            curve = Curve(np.asarray(curve, dtype=np.float64))
        return curve_features(curve)

    def make_context(self, prefix_rows: np.ndarray, t: int,
                     curve_embedding: np.ndarray) -> ConditioningContext:
        """Encode the generated prefix for node index t (0-based)."""
        if not 0 <= t < self.config.n_max:
            raise StepOutOfRange(f"node index {t} outside [0, {self.config.n_max})")
        pooled = _pool_prefix(prefix_rows)
        summary = mlp_infer(self.encoder, pooled[None, :])[0]
        gamma, beta = film_apply(self.film, curve_embedding[None, :])
        return ConditioningContext(
            curve_embedding=np.asarray(curve_embedding, dtype=np.float64),
            summary=summary, t=t, onehot=_one_hot(t, self.config.n_max),
            film=(gamma, beta))

    def denoise_step(self, x: np.ndarray, tau: int, ctx: ConditioningContext) -> np.ndarray:
        """Raw attribute predictions for one noisy row at timestep tau."""
        inp = np.concatenate([x, ctx.summary, ctx.onehot, ctx.curve_embedding])[None, :]
        return mlp_infer(self.denoiser, inp, aux=self.tsteps[tau][None, :], film=ctx.film)[0]

    # -- sampling convenience used by the synthesis strategies --

    def sample_node_from_context(self, ctx: "ConditioningContext",
                                 rng: np.random.Generator) -> tuple[NodeRecord, DenoiserOutput]:
        return p_sample_node(self, ctx, self.schedule, rng)

    def sample_node(self, prefix_rows: np.ndarray, t: int, curve_embedding: np.ndarray,
                    rng: np.random.Generator) -> tuple[NodeRecord, DenoiserOutput]:
        ctx = self.make_context(prefix_rows, t, curve_embedding)
        return p_sample_node(self, ctx, self.schedule, rng)


def context_encode(model: DenoiserModel, prefix_rows: np.ndarray, t: int,
                   curve_embedding: np.ndarray) -> ConditioningContext:
    """Module-level alias for DenoiserModel.make_context."""
    return model.make_context(prefix_rows, t, curve_embedding)


# --- logits <-> alphabet values ---

def clean_estimate(out: np.ndarray, t: int) -> np.ndarray:
    """Snap raw predictions onto embedded alphabet values (the x0 estimate)."""
    out = np.nan_to_num(out)  # a diverged net must still yield legal rows
    xhat = np.empty(ROW_DIM)
    xhat[0] = 1.0 if out[0] > 0.0 else 0.0
    xhat[1] = 1.0 if out[1] > 0.0 else 0.0
    xhat[2:4] = np.clip(out[2:4], -1.0, 1.0)
    xhat[4:] = np.where(out[4:] > 0.0, 1.0, 0.0)
    xhat[4 + t:] = -1.0  # slots >= t are structurally pad
    return xhat


def discretize_output(out: np.ndarray, t: int) -> np.ndarray:
    """Final feature row: logit signs for discrete slots, clamped position,
    full pad row when the validity logit says the node is inactive."""
    out = np.nan_to_num(out)
    row = np.full(ROW_DIM, -1.0)
    if out[0] <= 0.0:
        row[0] = 0.0
        return row
    row[0] = 1.0
    row[1] = 1.0 if out[1] > 0.0 else 0.0
    row[2:4] = np.clip(out[2:4], -1.0, 1.0)
    row[4:4 + t] = np.where(out[4:4 + t] > 0.0, 1.0, 0.0)
    return row


def p_sample_node(model: DenoiserModel, ctx: ConditioningContext,
                  schedule: NoiseSchedule | None,
                  rng: np.random.Generator) -> tuple[NodeRecord, DenoiserOutput]:
    """Ancestral reverse sampling of one node row.

    Starts from standard-normal noise; each step forms the clean estimate
    from the predicted attributes, takes the posterior mean, and adds
    posterior noise for all but the final step. The result always decodes
    into a legal NodeRecord (it may of course still fail mechanism-level
    validation downstream).
    """
    if schedule is None:
        schedule = model.schedule
    x = rng.standard_normal(ROW_DIM)
    out = None
    for tau in range(schedule.T - 1, -1, -1):
        out = model.denoise_step(x, tau, ctx)
        xhat = clean_estimate(out, ctx.t)
        mean = schedule.post_c1[tau] * xhat + schedule.post_c2[tau] * x
        if tau > 0:
            x = mean + schedule.post_sigma[tau] * rng.standard_normal(ROW_DIM)
        else:
            x = mean
    row = discretize_output(out, ctx.t)
    return record_from_row(row, ctx.t), DenoiserOutput.from_vector(out, ctx.t)


# --- training ---

@dataclass
class TrainingBatch:
    t_index: np.ndarray   # (B,) int
    clean: np.ndarray     # (B, 24)
    pooled: np.ndarray    # (B, 24) mean of rows < t
    onehot: np.ndarray    # (B, n_max)
    curve_emb: np.ndarray  # (B, curve_dim)

    def __len__(self) -> int:
        return int(self.t_index.shape[0])


@dataclass
class TrainingData:
    """Dataset tensors precomputed once before the step loop."""

    matrices: np.ndarray    # (R, n_max, 24)
    curve_embs: np.ndarray  # (R, curve_dim)
    n_valid: np.ndarray     # (R,)
    adj_pos_weight: float


def prepare_training_data(records) -> TrainingData:
    matrices = np.stack([encode_mechanism(r.graph) for r in records])
    curve_embs = np.stack([curve_features(Curve(r.curve)) for r in records])
    n_valid = np.array([r.graph.n_valid for r in records], dtype=np.int64)

    present = 0
    absent = 0
    for m, n in zip(matrices, n_valid):
        for i in range(1, int(n)):
            row = m[i, 4:4 + i]
            present += int((row == 1.0).sum())
            absent += int((row == 0.0).sum())
    weight = (absent / present) if present > 0 else 1.0
    return TrainingData(matrices, curve_embs, n_valid, float(weight))


def make_training_batch(data: TrainingData, batch_size: int, n_max: int,
                        rng: np.random.Generator) -> TrainingBatch:
    """Sample (mechanism, node index) pairs; t = n_valid is the stop row."""
    r_idx = rng.integers(0, data.matrices.shape[0], size=batch_size)
    t_index = np.empty(batch_size, dtype=np.int64)
    clean = np.empty((batch_size, ROW_DIM))
    pooled = np.empty((batch_size, ROW_DIM))
    onehot = np.zeros((batch_size, n_max))
    for b, r in enumerate(r_idx):
        n = int(data.n_valid[r])
        t = int(rng.integers(0, min(n, n_max - 1) + 1))
        t_index[b] = t
        clean[b] = data.matrices[r, t]
        pooled[b] = _pool_prefix(data.matrices[r, :t])
        onehot[b, t] = 1.0
    return TrainingBatch(t_index, clean, pooled, onehot, data.curve_embs[r_idx])


def _bce(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Numerically stable binary cross-entropy with logits; exact 0 at
    saturated correct predictions."""
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mixed_loss_terms(out: np.ndarray, batch: TrainingBatch,
                     cfg: ModelConfig) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """Loss value, gradient w.r.t. the raw outputs, and per-term breakdown.

    Terms per item:
      pos   mean Huber over the two coordinates,
      val   CE on the validity logit,
      type  CE on the type logit, masked for invalid rows,
      adj   class-weighted CE over adjacency slots < t, masked for invalid
            rows, averaged over the active slots.
    Masked slots contribute nothing to the loss and carry no gradient.
    """
    B = out.shape[0]
    valid_t = batch.clean[:, 0]
    type_t = np.where(valid_t == 1.0, batch.clean[:, 1], 0.0)
    pos_t = batch.clean[:, 2:4]
    adj_t = batch.clean[:, 4:]

    slot_mask = np.zeros((B, ADJ_SLOTS))
    for b in range(B):
        if valid_t[b] == 1.0:
            slot_mask[b, :batch.t_index[b]] = 1.0
    adj_y = np.where(adj_t == 1.0, 1.0, 0.0)
    slot_w = np.where(adj_y == 1.0, cfg.adj_pos_weight, 1.0) * slot_mask
    n_slots = np.maximum(batch.t_index.astype(np.float64), 1.0)

    err = out[:, 2:4] - pos_t
    small = np.abs(err) <= cfg.huber_delta
    huber = np.where(small, 0.5 * err * err, cfg.huber_delta * (np.abs(err) - 0.5 * cfg.huber_delta))
    huber_grad = np.where(small, err, cfg.huber_delta * np.sign(err))

    terms = {
        "val": _bce(out[:, 0], valid_t),
        "type": valid_t * _bce(out[:, 1], type_t),
        "pos": huber.mean(axis=1),
        "adj": (slot_w * _bce(out[:, 4:], adj_y)).sum(axis=1) / n_slots,
        "adj_per_slot": _bce(out[:, 4:], adj_y) * slot_mask,
    }
    per_item = (cfg.w_pos * terms["pos"] + cfg.w_val * terms["val"]
                + cfg.w_type * terms["type"] + cfg.w_adj * terms["adj"])
    loss = float(per_item.mean())

    dout = np.zeros_like(out)
    dout[:, 0] = cfg.w_val * (_sigmoid(out[:, 0]) - valid_t) / B
    dout[:, 1] = cfg.w_type * valid_t * (_sigmoid(out[:, 1]) - type_t) / B
    dout[:, 2:4] = cfg.w_pos * huber_grad / 2.0 / B
    dout[:, 4:] = cfg.w_adj * slot_w * (_sigmoid(out[:, 4:]) - adj_y) / n_slots[:, None] / B
    return loss, dout, terms


def training_loss(model: DenoiserModel, batch: TrainingBatch,
                  rng: np.random.Generator,
                  schedule: NoiseSchedule | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean mixed loss over the batch and gradients for every parameter.

    Each clean row is corrupted at a uniformly drawn timestep; the denoiser
    predicts clean attributes from the noisy row plus conditioning, and the
    mixed loss above is backpropagated through the denoiser, the context
    encoder, and the FiLM maps.
    """
    if len(batch) == 0:
        raise EmptyBatch("training batch is empty")
    if schedule is None:
        schedule = model.schedule
    cfg = model.config
    B = len(batch)

    tau = rng.integers(0, schedule.T, size=B)
    eps = rng.standard_normal((B, ROW_DIM))
    ab = schedule.alpha_bar[tau][:, None]
    x_tau = np.sqrt(ab) * batch.clean + np.sqrt(1.0 - ab) * eps

    summary, enc_cache = mlp_forward(model.encoder, batch.pooled)
    gamma, beta = film_apply(model.film, batch.curve_emb)
    inp = np.concatenate([x_tau, summary, batch.onehot, batch.curve_emb], axis=1)
    out, cache = mlp_forward(model.denoiser, inp, aux=model.tsteps[tau], film=(gamma, beta))

    loss, dout, _ = mixed_loss_terms(out, batch, cfg)

    dgrads = mlp_backward(model.denoiser, cache, dout)
    d_summary = dgrads.x[:, ROW_DIM:ROW_DIM + cfg.summary_dim]
    egrads = mlp_backward(model.encoder, enc_cache, d_summary)
    fgrads = film_backward(model.film, batch.curve_emb, dgrads.gamma, dgrads.beta)

    grads: dict[str, np.ndarray] = {}
    for name, g in (("denoiser", dgrads), ("encoder", egrads)):
        for k in range(len(g.weights)):
            grads[f"{name}.w{k}"] = g.weights[k]
            grads[f"{name}.b{k}"] = g.biases[k]
    grads["film.w_gamma"] = fgrads.w_gamma
    grads["film.b_gamma"] = fgrads.b_gamma
    grads["film.w_beta"] = fgrads.w_beta
    grads["film.b_beta"] = fgrads.b_beta
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch_size: int = 256
    lr: float = 3e-3
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def train_model(model: DenoiserModel, data: TrainingData, tcfg: TrainConfig,
                start_step: int = 0, state: AdamState | None = None,
                log=None) -> tuple[AdamState, list[float]]:
    """Run optimizer steps start_step .. start_step+steps-1 (absolute indices).

    Every step draws its batch and its noise from streams derived from
    (seed, step index), so training is resumable: continuing from a
    checkpoint reproduces exactly the run that never stopped.
    """
    params = model.params_dict()
    if state is None:
        state = AdamState.init(params)
    losses: list[float] = []
    for step in range(start_step, start_step + tcfg.steps):
        batch_rng = make_rng(tcfg.seed, DOMAIN_TRAIN_BATCH, step)
        noise_rng = make_rng(tcfg.seed, DOMAIN_TRAIN_NOISE, step)
        batch = make_training_batch(data, tcfg.batch_size, model.config.n_max, batch_rng)
        loss, grads = training_loss(model, batch, noise_rng)
        adam_step(state, params, grads, tcfg.lr)
        losses.append(loss)
        if log is not None and (step % 50 == 0 or step == start_step + tcfg.steps - 1):
            log(f"step={step} loss={loss:.6f}")
    return state, losses


# --- model checkpointing ---

def save_model(path, model: DenoiserModel, state: AdamState | None = None,
               extra_meta: dict | None = None) -> None:
    arrays = {k: v for k, v in model.params_dict().items()}
    meta = {"kind": "linksyn-denoiser", "config": model.config.to_dict(), "step": 0}
    if extra_meta:
        meta.update(extra_meta)
    if state is not None:
        for k, v in state.m.items():
            arrays[f"opt_m.{k}"] = v
        for k, v in state.v.items():
            arrays[f"opt_v.{k}"] = v
        meta["opt_t"] = state.t
    save_checkpoint(path, arrays, meta)


def load_model(path) -> tuple[DenoiserModel, AdamState | None, dict]:
    arrays, meta = load_checkpoint(path)
    config = ModelConfig.from_dict(meta["config"])
    model = DenoiserModel.init_random(config, seed=0)
    model.set_params({k: v for k, v in arrays.items() if not k.startswith("opt_")})
    state = None
    if "opt_t" in meta:
        params = model.params_dict()
        state = AdamState(
            m={k: arrays[f"opt_m.{k}"].copy() for k in params},
            v={k: arrays[f"opt_v.{k}"].copy() for k in params},
            t=int(meta["opt_t"]),
        )
    return model, state, meta
