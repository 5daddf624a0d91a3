"""Train the small CRNN on synthetic chirps and score it on held-out clips.

Run: python demos/training.py   (about twenty seconds)
"""

from tinycrnn.evaluation import det_curve, fa_at_mr
from tinycrnn.nn import init_weights, reference_config
from tinycrnn.streaming import peak_scores
from tinycrnn.train import SyntheticSpec, TrainConfig, gen_synthetic, matched_filter_accuracy, train_loop

cfg = reference_config("crnn58k-ref")
train = gen_synthetic(SyntheticSpec.for_bins(20, seed=0))
test_spec = SyntheticSpec.for_bins(20, seed=1, n_frames=160)
test = gen_synthetic(test_spec)

# a matched filter that knows the exact pattern gives a ceiling for the task
print(f"matched-filter accuracy on held-out data: {matched_filter_accuracy(test, test_spec):.3f}")

weights, history = train_loop(cfg, TrainConfig(steps=400, eval_every=50), train)
print(history.to_csv())

# held-out clips are longer than the model window, so each clip is scored by
# its best-scoring window
for label, w in (("untrained", init_weights(cfg, 0)), ("trained", weights)):
    op = fa_at_mr(det_curve(peak_scores(cfg, w, test.feats), test.labels))
    print(f"{label:>9}: {op.false_detects} false detects out of {len(test.labels) // 2} "
          f"at 15% miss rate (threshold {op.threshold:.3f})")
