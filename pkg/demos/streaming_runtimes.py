"""Frame-by-frame inference with the two GRU runtimes.

The decoder bank advances t' staggered GRUs one step per front-end step;
the vectorized runtime waits for 2t'-1 steps and runs t' windows in one
matrix product per step. Both must agree with a batch forward pass.

Run: python demos/streaming_runtimes.py
"""

import time

import numpy as np

from tinycrnn.nn import fold_batchnorm, forward_batch, init_weights, profile, reference_config
from tinycrnn.streaming import StreamState, aligned_windows, detect

cfg = reference_config("crnn239k-ref")
weights = init_weights(cfg, 3)
rng = np.random.default_rng(3)
for key in weights.trainable():
    if key.endswith(".b"):  # give the zero-initialised output layer something to say
        weights[key] = rng.standard_normal(weights[key].shape).astype(np.float32)
    if key.endswith(".W") and not weights[key].any():
        weights[key] = (0.1 * rng.standard_normal(weights[key].shape)).astype(np.float32)

# streaming needs batchnorm folded into the convolutions
fcfg, fw = fold_batchnorm(cfg, weights)
print(f"folded: {profile(cfg).params} -> {profile(fcfg).params} parameters")

frames = rng.standard_normal((400, cfg.n_mels)).astype(np.float32)
batch = forward_batch(fcfg, fw, aligned_windows(frames, fcfg))[:, 1]

for runtime in ("bank", "vectorized"):
    state = StreamState(fcfg, fw, runtime)
    t0 = time.perf_counter()
    out = state.push_frames(frames) + state.flush()
    ms = 1000 * (time.perf_counter() - t0) / len(frames)
    p = np.array([post.p_wakeword for _, post in out])
    print(f"{runtime:>10}: {len(out)} posteriors, {ms:.2f} ms/frame, "
          f"max |stream - batch| = {np.abs(p - batch).max():.1e}")
    print(f"            first at frame {state.frame_of(out[0][0])}, hop {state.hop} frames")

threshold = float(np.quantile(batch, 0.9))
for d in detect(out, threshold, hop_frames=state.hop, window_frames=cfg.frames):
    print(f"detection frames {d.start_frame}..{d.end_frame}, score {d.score:.3f}")
