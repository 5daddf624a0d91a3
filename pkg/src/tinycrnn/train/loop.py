"""Minibatch training loop."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import TrainingError
from ..nn.config import Dropout
from ..nn.model import forward_batch
from ..nn.weights import init_weights
from .backprop import loss_and_grads
from .optim import adam_init, adam_step


@dataclass
class History:
    records: list = field(default_factory=list)  # (step, loss, accuracy)
    losses: list = field(default_factory=list)   # every step's batch loss

    def __len__(self):
        return len(self.records)

    def to_csv(self):
        lines = ["step,loss,acc"]
        lines += [f"{s},{l:.6g},{a:.6g}" for s, l, a in self.records]
        return "\n".join(lines) + "\n"


def history_steps(steps, every):
    """Steps at which the history records: every ``every`` steps plus the last."""
    marks = list(range(0, steps, every))
    if steps and steps - 1 not in marks:
        marks.append(steps - 1)
    return marks


def predict(cfg, weights, feats, batch_size=256):
    """Inference-mode wakeword probabilities for many windows."""
    out = [forward_batch(cfg, weights, feats[i:i + batch_size])[:, 1]
           for i in range(0, len(feats), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.float32)


def accuracy(cfg, weights, dataset):
    return float(np.mean((predict(cfg, weights, dataset.feats) >= 0.5) == (dataset.labels == 1)))


def _index_stream(n, rng):
    while True:
        yield from rng.permutation(n)


def train_loop(cfg, tcfg, dataset, eval_set=None, weights=None):
    """Train ``cfg`` on ``dataset`` with Adam.

    Returns ``(weights, history)``. Weights are initialised from
    ``tcfg.seed`` unless given; shuffling and dropout masks are derived
    from the same seed, so a run is reproducible bit for bit. Batchnorm
    running statistics track the batch statistics with momentum
    ``tcfg.bn_momentum``. Accuracy is measured on ``eval_set`` (default:
    the training set).
    """
    if len(np.unique(dataset.labels)) < 2:
        raise TrainingError("training data must contain both classes")
    train_cfg = replace(cfg, layers=tuple(Dropout(tcfg.dropout) if isinstance(l, Dropout) else l
                                          for l in cfg.layers))
    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(tcfg.seed).spawn(3)
    if weights is None:
        weights = init_weights(cfg, int(init_seq.generate_state(1)[0]))
    weights.check(cfg)
    shuffle = _index_stream(len(dataset), np.random.default_rng(shuffle_seq))
    dropout_rng = np.random.default_rng(dropout_seq)
    state = adam_init(weights)
    history = History()
    marks = set(history_steps(tcfg.steps, tcfg.eval_every))
    evaluate_on = eval_set if eval_set is not None else dataset
    mom = tcfg.bn_momentum

    for step in range(tcfg.steps):
        idx = np.array([next(shuffle) for _ in range(tcfg.batch_size)])
        batch = (dataset.feats[idx], dataset.labels[idx])
        try:
            loss, grads, bn_stats = loss_and_grads(train_cfg, weights, batch,
                                                  int(dropout_rng.integers(2 ** 63)))
        except TrainingError as exc:
            raise TrainingError(f"step {step}: {exc}", exc.batch_index, history.records) from exc
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"step {step}: training diverged", history=history.records)
        history.losses.append(loss)
        weights, state = adam_step(weights, grads, state, tcfg, step + 1)
        for i, stats in bn_stats.items():
            for name, batch_value in zip(("bn_mean", "bn_var"), stats):
                run = weights[f"{i}.{name}"]
                weights[f"{i}.{name}"] = (mom * run + (1 - mom) * batch_value).astype(run.dtype)
        if step in marks:
            history.records.append((step, loss, accuracy(cfg, weights, evaluate_on)))
    return weights, history
