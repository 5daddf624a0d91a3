"""Inference on unbounded frame streams.

The convolutional front end runs through per-layer ring buffers, so every
input frame is touched once per layer. Each front-end output step then
feeds a recurrent stage that must only ever see ``t'`` consecutive steps
from a zero state. Two interchangeable runtimes handle that:

``"bank"``
    ``t'`` staggered GRU decoders. Decoder ``w % t'`` owns window ``w``
    (steps ``w .. w+t'-1``), starts it from zero and restarts as soon as
    it emits, so after warm-up every new step completes exactly one
    window.
``"vectorized"``
    buffer ``2t'-1`` steps, unfold them into a ``t' x t' x f'c'`` overlap
    block and run all ``t'`` windows through one GRU with a ``t'`` row
    state matrix. Emits ``t'`` windows per ``t'`` steps.

Each completed window goes through the rest of the network (attention,
time sum, classifier) to give one posterior. Window ``w`` covers input
frames ``[w*k, w*k + frames)`` where ``k`` is the product of the front-end
time strides.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BuildError, DimensionError, InputError, ParameterError
from .nn.config import DeltaFixedConv, Dropout
from .nn.layers import DELTA_KERNEL, activate, gru_step
from .nn.model import Posterior, forward_batch, run_layers
from .nn.profile import frames_per_step
from .tensors import as_tensor, conv_time_step

RUNTIMES = ("bank", "vectorized")


class ConvRing:
    """Ring buffer of the last ``k_t`` input columns of one conv layer."""

    def __init__(self, kernel, bias, s_t, s_f, f, c_in, activation="linear"):
        self.kernel = kernel
        self.bias = bias
        self.k_t = kernel.shape[0]
        self.s_t = s_t
        self.s_f = s_f
        self.activation = activation
        self.buf = np.zeros((self.k_t, f, c_in), dtype=kernel.dtype)
        self.pos = 0
        self.pushes = 0

    @classmethod
    def for_layer(cls, layer, params, in_shape):
        _, f, c_in = in_shape
        if isinstance(layer, DeltaFixedConv):
            return cls(DELTA_KERNEL, None, 1, 1, f, c_in)
        if layer.batchnorm:
            raise BuildError("stream state needs batchnorm folded into the conv layers")
        return cls(params["kernel"], params["bias"], layer.s_t, layer.s_f, f, c_in, layer.activation)

    def push(self, col):
        """Insert one ``(f, c_in)`` input column; return an output column or None."""
        if col.shape != self.buf.shape[1:]:
            raise DimensionError(f"ring expects columns of shape {self.buf.shape[1:]}, got {col.shape}")
        self.buf[self.pos] = col
        self.pos = (self.pos + 1) % self.k_t
        self.pushes += 1
        if self.pushes < self.k_t or (self.pushes - self.k_t) % self.s_t:
            return None
        window = np.concatenate([self.buf[self.pos:], self.buf[:self.pos]])
        return activate(conv_time_step(window, self.kernel, self.s_f, self.bias), self.activation)


def streaming_conv_push(ring, col):
    return ring.push(col)


class DecoderBank:
    """``t'`` staggered GRU decoders over a sliding window of front-end steps."""

    def __init__(self, t_steps, gru_params):
        self.t = t_steps
        self.p = gru_params
        d = gru_params["W_z"].shape[0]
        dtype = gru_params["W_z"].dtype
        self.states = np.zeros((t_steps, d), dtype=dtype)
        self.history = np.zeros((t_steps, t_steps, d), dtype=dtype)
        self.counts = np.zeros(t_steps, dtype=int)
        self.window_of = np.full(t_steps, -1)
        self.steps_seen = 0
        self.completed = 0

    @property
    def cycle(self):
        """Number of full rounds in which every decoder emitted once."""
        return self.completed // self.t

    def push(self, step):
        """Feed one flattened ``f'c'`` step; return ``(window_index, t' x d)`` or None."""
        slot = self.steps_seen % self.t
        self.states[slot] = 0
        self.counts[slot] = 0
        self.window_of[slot] = self.steps_seen
        x = step.reshape(1, -1)
        emitted = None
        for i in range(self.t):
            if self.window_of[i] < 0 or self.counts[i] >= self.t:
                continue
            h = gru_step(x, self.states[i:i + 1], self.p)
            self.states[i] = h[0]
            self.history[i, self.counts[i]] = h[0]
            self.counts[i] += 1
            if self.counts[i] == self.t:
                emitted = (int(self.window_of[i]), self.history[i].copy())
                self.completed += 1
        self.steps_seen += 1
        return emitted

    def push_step(self, step):
        out = self.push(step)
        return [] if out is None else [out]

    def flush(self):
        return []


def decoder_bank_push(bank, step):
    return bank.push(step)


@dataclass
class OverlapBlock:
    """``X`` of shape ``(t', t', f'c')``; row ``i`` holds steps ``i .. i+t'-1``."""

    X: np.ndarray


def _overlap_rows(steps, t_steps, n_rows):
    idx = np.arange(n_rows)[:, None] + np.arange(t_steps)[None, :]
    return steps[idx]


def make_overlap_block(buffer):
    """Unfold ``2t'-1`` buffered steps into overlapping ``t'``-step windows."""
    buffer = np.asarray(buffer)
    n = buffer.shape[0]
    if buffer.ndim != 2 or n % 2 == 0:
        raise InputError(f"overlap block needs 2t'-1 buffered steps, got shape {buffer.shape}")
    t = (n + 1) // 2
    return OverlapBlock(_overlap_rows(buffer, t, t))


def _run_rows(X, p):
    rows, t = X.shape[:2]
    d = p["W_z"].shape[0]
    h = np.zeros((rows, d), dtype=X.dtype)
    out = np.empty((rows, t, d), dtype=X.dtype)
    for j in range(t):
        h = gru_step(X[:, j], h, p)
        out[:, j] = h
    return out


def vectorized_gru(block, gru_params):
    """Run all windows of an overlap block at once; returns ``(t', t', d)``."""
    return _run_rows(block.X, gru_params)


class VectorizedGru:
    """Streaming wrapper around :func:`vectorized_gru`."""

    def __init__(self, t_steps, gru_params):
        self.t = t_steps
        self.p = gru_params
        self.buffer = []
        self.next_window = 0

    def push_step(self, step):
        self.buffer.append(step.reshape(-1))
        if len(self.buffer) < 2 * self.t - 1:
            return []
        out = vectorized_gru(make_overlap_block(np.stack(self.buffer)), self.p)
        windows = [(self.next_window + i, out[i]) for i in range(self.t)]
        self.next_window += self.t
        self.buffer = self.buffer[self.t:]
        return windows

    def flush(self):
        """Emit the windows already fully buffered but not yet run."""
        n_rows = len(self.buffer) - self.t + 1
        if n_rows <= 0:
            return []
        out = _run_rows(_overlap_rows(np.stack(self.buffer), self.t, n_rows), self.p)
        windows = [(self.next_window + i, out[i]) for i in range(n_rows)]
        self.next_window += n_rows
        self.buffer = self.buffer[n_rows:]
        return windows


class WindowBuffer:
    """Sliding window of raw steps for models without a recurrent layer."""

    def __init__(self, t_steps):
        self.t = t_steps
        self.buffer = []
        self.steps_seen = 0

    def push_step(self, step):
        self.buffer.append(step)
        self.steps_seen += 1
        if len(self.buffer) > self.t:
            self.buffer.pop(0)
        if len(self.buffer) < self.t:
            return []
        return [(self.steps_seen - self.t, np.stack(self.buffer))]

    def flush(self):
        return []


class StreamState:
    """Per-channel streaming inference state for a folded model.

    Parameters
    ----------
    cfg : ModelConfig
        Must contain no batchnorm (see :func:`tinycrnn.nn.fold_batchnorm`).
    weights : Weights
    runtime : {"bank", "vectorized"}
    """

    def __init__(self, cfg, weights, runtime="bank"):
        if runtime not in RUNTIMES:
            raise BuildError(f"runtime must be one of {RUNTIMES}, got {runtime!r}")
        if cfg.has_batchnorm():
            raise BuildError("stream state needs batchnorm folded into the conv layers")
        weights.check(cfg)
        self.cfg = cfg
        self.weights = weights
        self.runtime = runtime
        front = cfg.front_end
        self.rings = [ConvRing.for_layer(cfg.layers[i], weights.layer(i), cfg.shape_before(i))
                      for i in front]
        last_front = front[-1] if front else -1
        step_shape = cfg.shapes[last_front] if front else (cfg.frames, cfg.n_mels, 1)
        self.t_steps = step_shape[0]
        gi = cfg.gru_index
        if gi is not None:
            between = cfg.layers[last_front + 1:gi]
            if not all(isinstance(l, Dropout) for l in between):
                raise BuildError("only dropout may sit between the front end and the GRU")
            p = weights.layer(gi)
            self.stage = DecoderBank(self.t_steps, p) if runtime == "bank" else VectorizedGru(self.t_steps, p)
            self.tail_start = gi + 1
        else:
            self.stage = WindowBuffer(self.t_steps)
            self.tail_start = last_front + 1
        self.hop = frames_per_step(cfg)
        self.window = cfg.frames
        self.frames_seen = 0
        self.pending = []  # posteriors whose window has not fully arrived yet
        self.dtype = next(iter(weights.params.values())).dtype if len(weights) else np.float32

    def frame_of(self, window_index):
        """Input frame index of the last frame of window ``window_index``."""
        return window_index * self.hop + self.window - 1

    def _posteriors(self, windows):
        for w, seq in windows:
            probs = run_layers(self.cfg, self.weights, seq[None], start=self.tail_start)[0]
            self.pending.append((w, Posterior(probs)))
        # a front end that ignores the window's last frames finishes early; hold
        # each posterior until its full window has been pushed
        ready = [wp for wp in self.pending if self.frame_of(wp[0]) < self.frames_seen]
        self.pending = self.pending[len(ready):]
        return ready

    def push_frame(self, frame):
        """Push one ``n_mels`` frame; return the newly completed ``(window, Posterior)`` pairs."""
        col = as_tensor(frame, self.dtype)
        if col.shape != (self.cfg.n_mels,):
            raise DimensionError(f"expected a frame of {self.cfg.n_mels} bins, got {col.shape}")
        col = col[:, None]
        self.frames_seen += 1
        for ring in self.rings:
            col = ring.push(col)
            if col is None:
                return self._posteriors([])
        step = col if isinstance(self.stage, WindowBuffer) else col.reshape(-1)
        return self._posteriors(self.stage.push_step(step))

    def push_frames(self, frames):
        out = []
        for frame in frames:
            out.extend(self.push_frame(frame))
        return out

    def flush(self):
        """Emit any windows the runtime is still holding (vectorized only)."""
        return self._posteriors(self.stage.flush())


def stream_push_frame(state, frame):
    return state.push_frame(frame)


def stream_frames(cfg, weights, frames, runtime="bank"):
    """Stream a whole frame matrix and flush; returns ``[(window, Posterior)]``."""
    state = StreamState(cfg, weights, runtime)
    return state.push_frames(frames) + state.flush()


@dataclass(frozen=True)
class Detection:
    score: float
    start_frame: int
    end_frame: int
    trigger_frame: int


def detect(posteriors, threshold, hangover=3, hop_frames=8, window_frames=100):
    """Turn a posterior sequence into wakeword detections.

    A detection opens when ``p_wakeword >= threshold``, follows the peak,
    and closes after ``hangover`` consecutive sub-threshold posteriors (or
    at the end of the sequence). Its end is the last frame of the peak's
    window and its start lies ``window_frames - 1`` frames earlier.
    Detections whose frame spans overlap are merged, keeping the higher
    score.
    """
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    if hangover < 0:
        raise ParameterError("hangover must be >= 0")
    detections = []
    current = None
    below = 0
    last_step = None

    def close(c):
        det = Detection(c["score"], c["end"] - (window_frames - 1), c["end"], c["trigger"])
        if detections and detections[-1].end_frame >= det.start_frame:
            prev = detections.pop()
            best = prev if prev.score >= det.score else det
            det = Detection(best.score, best.start_frame, best.end_frame,
                            min(prev.trigger_frame, det.trigger_frame))
        detections.append(det)

    for step, post in posteriors:
        if last_step is not None and step <= last_step:
            raise InputError("posteriors must be in increasing alignment order")
        last_step = step
        p = post.p_wakeword if isinstance(post, Posterior) else float(post)
        end = step * hop_frames + window_frames - 1
        if p >= threshold:
            if current is None:
                current = {"score": p, "end": end, "trigger": end}
            elif p > current["score"]:
                current["score"], current["end"] = p, end
            below = 0
        elif current is not None:
            below += 1
            if below >= hangover:
                close(current)
                current = None
                below = 0
    if current is not None:
        close(current)
    return detections


def aligned_windows(frames, cfg):
    """All model windows of a (T, n_mels) stream that streaming would emit, stacked."""
    frames = np.asarray(frames)
    k = frames_per_step(cfg)
    n = (len(frames) - cfg.frames) // k + 1 if len(frames) >= cfg.frames else 0
    if n == 0:
        return np.zeros((0, cfg.frames, frames.shape[-1]), dtype=frames.dtype)
    idx = np.arange(n)[:, None] * k + np.arange(cfg.frames)[None, :]
    return frames[idx]


def window_posteriors(cfg, weights, frames, batch_size=256):
    """``p_wakeword`` for every aligned window via the batch forward pass."""
    wins = aligned_windows(frames, cfg)
    out = [forward_batch(cfg, weights, wins[i:i + batch_size])[:, 1]
           for i in range(0, len(wins), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.float32)


def peak_scores(cfg, weights, feats, batch_size=256):
    """Per-example score: the largest window posterior over each (T, n_mels) example."""
    if feats.shape[1] < cfg.frames:
        raise InputError(f"examples have {feats.shape[1]} frames, model window is {cfg.frames}")
    if feats.shape[1] == cfg.frames:
        out = [forward_batch(cfg, weights, feats[i:i + batch_size])[:, 1]
               for i in range(0, len(feats), batch_size)]
        return np.concatenate(out).astype(np.float64)
    return np.array([float(window_posteriors(cfg, weights, f).max()) for f in feats])
