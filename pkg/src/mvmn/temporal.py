"""Time-series matching: a shared LSTM over time-bin embeddings, the
Hadamard matching vector, and a recurrent point-process likelihood.

Given the hidden state ``h`` after an event and the elapsed time ``dt`` (in
hours), the conditional intensity is ``exp(v.h + omega*dt + b)`` and the
log-density of the next event time is

    a + omega*dt - exp(a) * (exp(omega*dt) - 1) / omega,   a = v.h + b,

which reduces to ``a - dt*exp(a)`` as omega -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EXP_CLAMP = 50.0
# below this |omega*dt| the omega-division is replaced by its Taylor series
SERIES_THRESHOLD = 1e-4


@dataclass(frozen=True)
class TimeSeriesInput:
    bins: np.ndarray
    hours: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        hours = np.asarray(self.hours, dtype=np.float64)
        if bins.shape != hours.shape:
            raise ValueError("bins and hours must have equal length")
        if np.any(np.diff(hours) < 0):
            raise ValueError("event times must be non-decreasing")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "hours", hours)

    def __len__(self) -> int:
        return len(self.bins)


@dataclass
class LSTMParams:
    w_x: Tensor
    w_h: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]


@dataclass
class PPParams:
    v: Tensor
    omega: Tensor
    b: Tensor


def encode(series: TimeSeriesInput, emb_time: Tensor, lstm: LSTMParams) -> list[Tensor]:
    """Hidden states h_1..h_l of one series, starting from zero state."""
    if len(series) == 0:
        raise ValueError("cannot encode an empty time series")
    states = encode_batch(series.bins[None, :], np.ones((1, len(series)), bool), emb_time, lstm)
    return [ad.index(states, (0, t)) for t in range(len(series))]


def encode_batch(bins: np.ndarray, mask: np.ndarray, emb_time: Tensor, lstm: LSTMParams) -> Tensor:
    """LSTM states (B, T, H) over padded (B, T) bin ids.

    Rows shorter than T carry their last state forward, so ``[:, -1]`` is each
    row's final real hidden state.
    """
    x = ad.embedding_lookup(emb_time, bins)  # (B, T, d)
    return ad.lstm_sequence(x, mask, lstm.w_x, lstm.w_h, lstm.b)


def last_state(states: Tensor) -> Tensor:
    return ad.index(states, (slice(None), -1))


def v_time(h_m, h_n) -> Tensor:
    """tanh of the elementwise product of two final hidden states."""
    h_m, h_n = ad.as_tensor(h_m), ad.as_tensor(h_n)
    if h_m.shape != h_n.shape:
        raise ad.ShapeError(f"v_time: shapes {h_m.shape} and {h_n.shape} differ")
    return ad.tanh(h_m * h_n)


def intensity(h, dt, pp: PPParams) -> np.ndarray:
    """Conditional intensity at ``dt`` hours after the last event."""
    h = np.asarray(h.data if isinstance(h, Tensor) else h)
    a = h @ pp.v.data + pp.b.data + pp.omega.data * np.asarray(dt, dtype=float)
    return np.exp(np.clip(a, -EXP_CLAMP, EXP_CLAMP))


def log_density_from_activation(a, omega, dt: np.ndarray) -> Tensor:
    """Elementwise log-density given ``a = v.h + b``, scalar ``omega`` and gaps ``dt``."""
    a, omega = ad.as_tensor(a), ad.as_tensor(omega)
    dt = np.asarray(dt, dtype=a.data.dtype)
    if np.any(dt < 0):
        raise ValueError("negative inter-event gap")
    w = float(omega.data)
    x = w * dt
    series = np.abs(x) < SERIES_THRESHOLD
    ea = np.exp(np.clip(a.data, -EXP_CLAMP, EXP_CLAMP))
    a_live = (a.data >= -EXP_CLAMP) & (a.data <= EXP_CLAMP)
    x_safe = np.minimum(x, EXP_CLAMP)
    x_live = x <= EXP_CLAMP
    w_safe = w if w != 0.0 else 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        # G = expm1(omega*dt)/omega and its omega-derivative
        g_main = np.expm1(x_safe) / w_safe
        dg_main = np.where(x_live, (dt * np.exp(x_safe) - g_main) / w_safe, 0.0)
    g_series = dt * (1.0 + x / 2.0 + x * x / 6.0)
    dg_series = dt * dt * (0.5 + x / 3.0)
    g = np.where(series, g_series, g_main)
    dg = np.where(series, dg_series, dg_main)
    out = a.data + x - ea * g

    def pullback(cot):
        ga = cot * (1.0 - np.where(a_live, ea, 0.0) * g)
        gw = np.sum(cot * (dt - ea * dg))
        return ga, np.reshape(gw, omega.shape)

    return ad._result(out, (a, omega), pullback)


def log_density(h, dt, pp: PPParams) -> Tensor:
    """Log-density of the next event ``dt`` hours after the event that produced ``h``."""
    a = ad.matmul(h, pp.v) + pp.b
    return log_density_from_activation(a, pp.omega, dt)


def sequence_nll(states: Tensor, hours: np.ndarray, mask: np.ndarray, pp: PPParams) -> Tensor:
    """Per-row negative log-likelihood of the observed gaps, shape (B,).

    ``states`` is (B, T, H).  The i-th term pairs state h_i with the gap
    t_{i+1} - t_i; rows of length one contribute zero.
    """
    bsz, steps = mask.shape
    if steps < 2:
        return Tensor(np.zeros(bsz))
    a = ad.matmul(ad.index(states, (slice(None), slice(0, steps - 1))), pp.v) + pp.b  # (B, T-1)
    valid = mask[:, 1:] & mask[:, :-1]
    gaps = np.where(valid, np.diff(hours, axis=1), 0.0)
    if np.any(gaps < 0):
        raise ValueError("negative inter-event gap")
    logf = log_density_from_activation(a, pp.omega, gaps)
    return -ad.sum(logf * valid, axis=1)


def pp_loss(states_m, hours_m, states_n, hours_n, pp: PPParams) -> Tensor:
    """Joint negative log-likelihood of two users' event times.

    ``states_*`` are the per-event hidden states, as a list of H-vectors or
    an (l, H) tensor.
    """
    total = ad.as_tensor(0.0)
    for states, hours in ((states_m, hours_m), (states_n, hours_n)):
        hours = np.asarray(hours, dtype=float)
        if len(hours) < 2:
            continue
        seq = ad.stack(states, axis=0) if isinstance(states, (list, tuple)) else ad.as_tensor(states)
        seq = ad.reshape(seq, (1, *seq.shape))
        nll = sequence_nll(seq, hours[None, :], np.ones((1, len(hours)), bool), pp)
        total = total + ad.sum_all(nll)
    return total
