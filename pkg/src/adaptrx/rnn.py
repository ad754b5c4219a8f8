"""Recurrent neural receiver: input assembly, three bidirectional LSTM
layers alternating between frequency and time sequencing, two per-position
dense layers, and from-scratch training (BCE loss, exact backpropagation
through time, Adam).

Everything is plain NumPy. Parameters live in flat name->array dicts so
checkpoints, gradients and optimizer state stay transparent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .fec import Interleaver
from .link import BITS_PER_SYMBOL, PilotPattern


def _softplus(x):
    return np.logaddexp(0.0, x)


# --- layers -----------------------------------------------------------------


class LstmDirection:
    """Single-direction LSTM over (batch, time, features) sequences.

    Gates are fused in one kernel with column order [input, forget, output,
    candidate], so the three sigmoid gates occupy one contiguous block;
    candidate and cell outputs use tanh.
    """

    def __init__(self, n_in: int, n_units: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.n_in = n_in
        self.n_units = n_units
        lim_x = np.sqrt(6.0 / (n_in + 4 * n_units))
        lim_h = 1.0 / np.sqrt(n_units)
        bias = np.zeros(4 * n_units)
        bias[n_units:2 * n_units] = 1.0       # forget-gate bias
        self.params = {
            "Wx": rng.uniform(-lim_x, lim_x, (n_in, 4 * n_units)).astype(dtype),
            "Wh": rng.uniform(-lim_h, lim_h, (n_units, 4 * n_units)).astype(dtype),
            "b": bias.astype(dtype),
        }
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        b, t, _ = x.shape
        h_n = self.n_units
        wx, wh, bias = self.params["Wx"], self.params["Wh"], self.params["b"]
        xw = x.reshape(b * t, -1) @ wx
        xw = xw.reshape(b, t, 4 * h_n) + bias

        h = np.zeros((b, h_n), dtype=x.dtype)
        c = np.zeros((b, h_n), dtype=x.dtype)
        gates = np.empty((b, t, 4 * h_n), dtype=x.dtype)
        cells = np.empty((b, t, h_n), dtype=x.dtype)
        out = np.empty((b, t, h_n), dtype=x.dtype)
        for step in range(t):
            z = xw[:, step] + h @ wh
            zs = gates[:, step]
            _sigmoid(z[:, :3 * h_n], out=zs[:, :3 * h_n])
            np.tanh(z[:, 3 * h_n:], out=zs[:, 3 * h_n:])
            i = zs[:, :h_n]
            f = zs[:, h_n:2 * h_n]
            o = zs[:, 2 * h_n:3 * h_n]
            g = zs[:, 3 * h_n:]
            c = f * c + i * g
            h = o * np.tanh(c)
            cells[:, step] = c
            out[:, step] = h
        self._cache = (x, gates, cells, out) if keep_cache else None
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, gates, cells, out = self._cache
        b, t, _ = x.shape
        h_n = self.n_units
        wx, wh = self.params["Wx"], self.params["Wh"]
        i = gates[..., :h_n]
        f = gates[..., h_n:2 * h_n]
        o = gates[..., 2 * h_n:3 * h_n]
        g = gates[..., 3 * h_n:]
        tanh_c = np.tanh(cells)

        dz_all = np.empty((b, t, 4 * h_n), dtype=x.dtype)
        dh_next = np.zeros((b, h_n), dtype=x.dtype)
        dc_next = np.zeros((b, h_n), dtype=x.dtype)
        for step in range(t - 1, -1, -1):
            dh = dout[:, step] + dh_next
            dc = dc_next + dh * o[:, step] * (1.0 - tanh_c[:, step] ** 2)
            c_prev = cells[:, step - 1] if step > 0 else np.zeros_like(dc)
            dz = dz_all[:, step]
            dz[:, :h_n] = dc * g[:, step] * i[:, step] * (1.0 - i[:, step])
            dz[:, h_n:2 * h_n] = (dc * c_prev * f[:, step]
                                  * (1.0 - f[:, step]))
            dz[:, 2 * h_n:3 * h_n] = (dh * tanh_c[:, step] * o[:, step]
                                      * (1.0 - o[:, step]))
            dz[:, 3 * h_n:] = dc * i[:, step] * (1.0 - g[:, step] ** 2)
            dh_next = dz @ wh.T
            dc_next = dc * f[:, step]

        flat_dz = dz_all.reshape(b * t, 4 * h_n)
        # recurrent input h_{t-1}: zero at step 0
        h_prev = np.concatenate(
            [np.zeros((b, 1, h_n), dtype=x.dtype), out[:, :-1]], axis=1)
        self.grads = {
            "Wx": x.reshape(b * t, -1).T @ flat_dz,
            "Wh": h_prev.reshape(b * t, h_n).T @ flat_dz,
            "b": flat_dz.sum(axis=0),
        }
        return (flat_dz @ wx.T).reshape(x.shape)


class BiLstm:
    """Forward and backward LSTM over the same sequence, outputs concatenated."""

    def __init__(self, n_in: int, n_units: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.fwd = LstmDirection(n_in, n_units, rng, dtype)
        self.bwd = LstmDirection(n_in, n_units, rng, dtype)
        self.n_units = n_units

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        a = self.fwd.forward(x, keep_cache)
        b = self.bwd.forward(x[:, ::-1], keep_cache)[:, ::-1]
        return np.concatenate([a, b], axis=2)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        h = self.n_units
        dx = self.fwd.backward(np.ascontiguousarray(dout[..., :h]))
        dx = dx + self.bwd.backward(
            np.ascontiguousarray(dout[:, ::-1, h:]))[:, ::-1]
        return dx


class Dense:
    """Position-wise affine layer with optional rectifier."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 relu: bool = False, dtype=np.float32):
        lim = np.sqrt(6.0 / (n_in + n_out))
        self.params = {
            "W": rng.uniform(-lim, lim, (n_in, n_out)).astype(dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }
        self.relu = relu
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        out = x @ self.params["W"] + self.params["b"]
        if self.relu:
            out = np.maximum(out, 0.0)
        if keep_cache:
            self._cache = (x, out)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, out = self._cache
        if self.relu:
            dout = dout * (out > 0)
        self.grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


# --- the receiver ------------------------------------------------------------

N_INPUT_FEATURES = 7


class RnnReceiver:
    """Three bidirectional LSTM layers (frequency, time, frequency) followed
    by two shared per-position dense layers producing one logit per bit."""

    def __init__(self, n_units: int = 64, n_dense: int = 8,
                 bits_per_symbol: int = BITS_PER_SYMBOL,
                 rng_seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(rng_seed)
        self.n_units = n_units
        self.n_dense = n_dense
        self.bits_per_symbol = bits_per_symbol
        self.dtype = dtype
        width = 2 * n_units
        self.lstm1 = BiLstm(N_INPUT_FEATURES, n_units, rng, dtype)
        self.lstm2 = BiLstm(width, n_units, rng, dtype)
        self.lstm3 = BiLstm(width, n_units, rng, dtype)
        self.dense1 = Dense(width, n_dense, rng, relu=True, dtype=dtype)
        self.dense2 = Dense(n_dense, bits_per_symbol, rng, dtype=dtype)
        self._shape = None

    @property
    def _layers(self):
        return {"lstm1.fwd": self.lstm1.fwd, "lstm1.bwd": self.lstm1.bwd,
                "lstm2.fwd": self.lstm2.fwd, "lstm2.bwd": self.lstm2.bwd,
                "lstm3.fwd": self.lstm3.fwd, "lstm3.bwd": self.lstm3.bwd,
                "dense1": self.dense1, "dense2": self.dense2}

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr
                for ln, layer in self._layers.items()
                for pn, arr in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr
                for ln, layer in self._layers.items()
                for pn, arr in layer.grads.items()}

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        for ln, layer in self._layers.items():
            for pn in layer.params:
                layer.params[pn] = np.asarray(
                    values[f"{ln}.{pn}"], dtype=self.dtype)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def forward(self, x: np.ndarray, keep_cache: bool = True) -> np.ndarray:
        """(n_frames, n_t, n_f, 7) inputs -> (n_frames, n_t, n_f, m) logits."""
        x = np.asarray(x, dtype=self.dtype)
        n_frames, n_t, n_f, n_feat = x.shape
        self._shape = (n_frames, n_t, n_f)

        # layer 1: each time row is a sequence along frequency
        h = self.lstm1.forward(x.reshape(n_frames * n_t, n_f, n_feat),
                               keep_cache)
        w = h.shape[-1]
        # layer 2: each subcarrier is a sequence along time
        h = h.reshape(n_frames, n_t, n_f, w).transpose(0, 2, 1, 3)
        h = self.lstm2.forward(h.reshape(n_frames * n_f, n_t, w), keep_cache)
        # layer 3: back to frequency sequences
        h = h.reshape(n_frames, n_f, n_t, w).transpose(0, 2, 1, 3)
        h = self.lstm3.forward(h.reshape(n_frames * n_t, n_f, w), keep_cache)

        flat = h.reshape(n_frames * n_t * n_f, w)
        logits = self.dense2.forward(self.dense1.forward(flat, keep_cache),
                                     keep_cache)
        return logits.reshape(n_frames, n_t, n_f, self.bits_per_symbol)

    def backward(self, dlogits: np.ndarray) -> None:
        """Populate parameter gradients from d(loss)/d(logits)."""
        n_frames, n_t, n_f = self._shape
        d = np.asarray(dlogits, dtype=self.dtype).reshape(
            n_frames * n_t * n_f, self.bits_per_symbol)
        d = self.dense1.backward(self.dense2.backward(d))
        w = 2 * self.n_units
        d = self.lstm3.backward(d.reshape(n_frames * n_t, n_f, w))
        d = d.reshape(n_frames, n_t, n_f, w).transpose(0, 2, 1, 3)
        d = self.lstm2.backward(d.reshape(n_frames * n_f, n_t, w))
        d = d.reshape(n_frames, n_f, n_t, w).transpose(0, 2, 1, 3)
        self.lstm1.backward(d.reshape(n_frames * n_t, n_f, w))


# --- input/output plumbing ---------------------------------------------------


def assemble_input(y: np.ndarray, pattern: PilotPattern,
                   h_ls: np.ndarray, sigma: float | np.ndarray) -> np.ndarray:
    """Stack receiver observables into the (..., n_t, n_f, 7) input tensor.

    Channels: Re/Im of Y, Re/Im of the pilot grid (zero off-pilot), Re/Im of
    the LS estimates (zero off-pilot), and the noise standard deviation
    broadcast over the grid.
    """
    y = np.asarray(y)
    h_ls = np.asarray(h_ls)
    if y.shape != h_ls.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {h_ls.shape}")
    x_p = np.zeros(y.shape[-2:], dtype=complex)
    x_p[pattern.mask] = pattern.values[pattern.mask]
    x_p = np.broadcast_to(x_p, y.shape)
    sig = np.asarray(sigma, dtype=np.float64)
    if sig.ndim == 0:
        sig = np.full(y.shape, float(sig))
    else:          # one value per frame
        sig = np.broadcast_to(sig[..., None, None], y.shape)
    return np.stack([y.real, y.imag, x_p.real, x_p.imag,
                     h_ls.real, h_ls.imag, sig], axis=-1).astype(np.float32)


def extract_data_llrs(logits: np.ndarray, bit_map: np.ndarray,
                      interleaver: Interleaver) -> np.ndarray:
    """Grid logits -> decoder-ready LLR vector.

    Pilot positions are dropped, the remaining logits are ordered by
    ``bit_map`` and deinterleaved. The network scores z give
    P(bit=1) = sigmoid(z), so decoder LLRs log(P0/P1) are their negatives.
    """
    lg = np.asarray(logits)
    gathered = lg[..., bit_map[:, 0], bit_map[:, 1], :]
    flat = gathered.reshape(*lg.shape[:-3], -1)
    return -interleaver.deinterleave(flat.astype(np.float64))


def bce_loss(logits: np.ndarray, labels: np.ndarray,
             mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Masked mean binary cross-entropy from logits; returns (loss, dlogits).

    ``logits`` and ``labels`` share a shape; ``mask`` broadcasts to it and
    marks the positions that count (filler bits are excluded upstream).
    """
    z = np.asarray(logits, dtype=np.float64)
    c = np.asarray(labels, dtype=np.float64)
    if mask is None:
        m = np.ones_like(z)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=np.float64), z.shape)
    count = m.sum()
    if count == 0:
        raise ValueError("empty mask")
    loss = float((_softplus((1.0 - 2.0 * c) * z) * m).sum() / count)
    dlogits = (_sigmoid(z) - c) * m / count
    return loss, dlogits


# --- optimization ------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    clip_norm: float = 10.0
    batch_size: int = 128
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
                   v={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()})


def clip_global_norm(grads: dict[str, np.ndarray],
                     max_norm: float) -> dict[str, np.ndarray]:
    total = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum())
                        for g in grads.values()))
    if max_norm <= 0 or total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, config: TrainConfig) -> dict[str, np.ndarray]:
    """One Adam update; returns new parameter dict, mutates ``state``."""
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new = {}
    for k, p in params.items():
        g = grads[k].astype(np.float64)
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / corr1
        v_hat = state.v[k] / corr2
        new[k] = (p.astype(np.float64)
                  - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
                  ).astype(p.dtype)
    return new


def train_step(receiver: RnnReceiver, inputs: np.ndarray, labels: np.ndarray,
               mask: np.ndarray, state: AdamState, config: TrainConfig,
               bit_map: np.ndarray,
               micro_batch: int = 8) -> float:
    """One Adam update on a batch of frames; returns the batch BCE loss.

    Frames are processed in ``micro_batch`` slices with gradient
    accumulation, so memory stays bounded at adaptation batch sizes.
    """
    n_frames = inputs.shape[0]
    acc: dict[str, np.ndarray] | None = None
    loss_sum = 0.0
    count_sum = 0.0
    m_all = np.broadcast_to(np.asarray(mask, dtype=np.float64),
                            labels.shape)
    for lo in range(0, n_frames, micro_batch):
        sl = slice(lo, min(lo + micro_batch, n_frames))
        logits = receiver.forward(inputs[sl])
        z = gather_data_logits(logits, bit_map)
        loss, dz = bce_loss(z, labels[sl], m_all[sl])
        w = float(m_all[sl].sum())
        loss_sum += loss * w
        count_sum += w
        # undo the per-slice mean so the accumulated total is a global mean
        receiver.backward(scatter_data_grad(dz * w, logits.shape, bit_map))
        g = receiver.gradients()
        if acc is None:
            acc = {k: v.astype(np.float64) for k, v in g.items()}
        else:
            for k in acc:
                acc[k] += g[k]
    grads = {k: v / count_sum for k, v in acc.items()}
    grads = clip_global_norm(grads, config.clip_norm)
    receiver.set_parameters(adam_step(receiver.parameters(), grads, state,
                                      config))
    return loss_sum / count_sum


def gather_data_logits(logits: np.ndarray, bit_map: np.ndarray) -> np.ndarray:
    """(F, n_t, n_f, m) -> (F, n_data*m) in interleaved frame-bit order."""
    g = logits[:, bit_map[:, 0], bit_map[:, 1], :]
    return g.reshape(logits.shape[0], -1)


def scatter_data_grad(dflat: np.ndarray, grid_shape: tuple,
                      bit_map: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`gather_data_logits`; pilots get zero gradient."""
    out = np.zeros(grid_shape, dtype=np.float64)
    d = dflat.reshape(dflat.shape[0], -1, grid_shape[-1])
    out[:, bit_map[:, 0], bit_map[:, 1], :] = d
    return out


# --- initial training ---------------------------------------------------------


@dataclass
class TrainSchedule:
    """Randomized-ensemble training plan; every knob is scalable."""

    epochs: int = 100
    iters_per_epoch: int = 1000
    batch_size: int = 128
    ebn0_range_db: tuple[float, float] = (8.0, 30.0)
    velocity_range_kmh: tuple[float, float] = (0.0, 200.0)
    taps_range_first: tuple[int, int] = (4, 10)
    taps_range_second: tuple[int, int] = (1, 14)
    rng_seed: int = 1234

    def taps_range(self, epoch: int) -> tuple[int, int]:
        """First half of the epochs uses the narrow tap range."""
        return (self.taps_range_first if epoch < self.epochs / 2
                else self.taps_range_second)


def initial_train(receiver: RnnReceiver, codec, schedule: TrainSchedule,
                  config: TrainConfig | None = None,
                  state: AdamState | None = None,
                  log_every: int = 0) -> tuple[AdamState, list[float]]:
    """Train from scratch over random channel ensembles; returns loss history."""
    from .channel import ChannelParams
    from .link import ls_estimate_at_pilots
    from .simulate import generate_frames

    if config is None:
        config = TrainConfig(batch_size=schedule.batch_size)
    if state is None:
        state = AdamState.init(receiver.parameters())
    rng = np.random.default_rng(schedule.rng_seed)
    mask = codec.coded_mask
    bit_map = codec.pattern.data_positions()
    history = []

    for epoch in range(schedule.epochs):
        lo, hi = schedule.taps_range(epoch)
        for it in range(schedule.iters_per_epoch):
            inputs = np.empty((schedule.batch_size, codec.geometry.n_symbols,
                               codec.geometry.n_subcarriers,
                               N_INPUT_FEATURES), dtype=np.float32)
            labels = np.empty((schedule.batch_size, codec.n_frame_bits),
                              dtype=np.uint8)
            for i in range(schedule.batch_size):
                params = ChannelParams(
                    num_taps=int(rng.integers(lo, hi + 1)),
                    velocity_kmh=float(rng.uniform(*schedule.velocity_range_kmh)))
                ebn0 = float(rng.uniform(*schedule.ebn0_range_db))
                batch = generate_frames(codec, params, ebn0, 1, rng)
                h_ls = ls_estimate_at_pilots(batch.y, codec.pattern)
                inputs[i] = assemble_input(batch.y, codec.pattern, h_ls,
                                           batch.sigma)[0]
                labels[i] = batch.frame_bits[0]
            loss = train_step(receiver, inputs, labels, mask, state, config,
                              bit_map)
            history.append(loss)
            if log_every and (len(history) % log_every == 0):
                print(f"epoch {epoch + 1} iter {it + 1}: bce {loss:.4f}",
                      flush=True)
    return state, history


# --- checkpoints --------------------------------------------------------------


CHECKPOINT_VERSION = 1


def save_checkpoint(path, receiver: RnnReceiver,
                    state: AdamState | None = None,
                    extra: dict | None = None) -> None:
    """Serialize weights (+ optional Adam state) to a flat ``.npz`` container.

    Arrays are stored under ``param/<name>``, ``adam_m/<name>``,
    ``adam_v/<name>``; scalars and architecture metadata live in a JSON
    string under ``meta``.
    """
    payload = {f"param/{k}": v for k, v in receiver.parameters().items()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_units": receiver.n_units,
        "n_dense": receiver.n_dense,
        "bits_per_symbol": receiver.bits_per_symbol,
        "adam_step": state.step if state is not None else None,
        "extra": extra or {},
    }
    if state is not None:
        payload.update({f"adam_m/{k}": v for k, v in state.m.items()})
        payload.update({f"adam_v/{k}": v for k, v in state.v.items()})
    payload["meta"] = np.array(json.dumps(meta))
    np.savez(path, **payload)


def load_checkpoint(path, dtype=np.float32) -> tuple[RnnReceiver, AdamState | None]:
    """Rebuild a receiver (and Adam state when present) from ``.npz``."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        receiver = RnnReceiver(n_units=meta["n_units"],
                               n_dense=meta["n_dense"],
                               bits_per_symbol=meta["bits_per_symbol"],
                               dtype=dtype)
        receiver.set_parameters(
            {k[len("param/"):]: data[k] for k in data.files
             if k.startswith("param/")})
        state = None
        if meta.get("adam_step") is not None:
            state = AdamState(
                m={k[len("adam_m/"):]: data[k].astype(np.float64)
                   for k in data.files if k.startswith("adam_m/")},
                v={k[len("adam_v/"):]: data[k].astype(np.float64)
                   for k in data.files if k.startswith("adam_v/")},
                step=int(meta["adam_step"]))
    return receiver, state
