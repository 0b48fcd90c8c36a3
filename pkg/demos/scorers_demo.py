"""Transferability scorers on synthetic feature families.

Simulates three "pre-trained models" whose features separate the target
classes to different degrees, then checks that every scorer ranks them
in the same (correct) order.

Run:  python demos/scorers_demo.py
"""

import numpy as np

from transfer_bench import FeatureSet, score_all

rng = np.random.default_rng(7)

N, D, K = 150, 16, 4
labels = rng.integers(0, K, size=N)
labels[:K] = np.arange(K)
class_directions = rng.normal(size=(K, D))


def features_with_separation(separation):
    """Class-informative features plus isotropic noise."""
    return class_directions[labels] * separation + rng.normal(size=(N, D))


def soft_probs(quality):
    """Source-head probabilities that peak on the true class with the
    given quality (rows sum to 1)."""
    logits = rng.normal(size=(N, K)) + quality * np.eye(K)[labels] * 3.0
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


models = {
    "strong": (features_with_separation(2.0), soft_probs(2.0)),
    "medium": (features_with_separation(1.0), soft_probs(1.0)),
    "weak": (features_with_separation(0.3), soft_probs(0.2)),
}

all_scorers = ["h_score", "reg_h_score", "logme", "nce", "leep", "gbc", "parc"]
table = {}
for name, (feats, probs) in models.items():
    fs = FeatureSet(feats, labels, probs)
    table[name] = {r.scorer: r.value for r in score_all(fs, all_scorers)}

header = f"{'model':<8}" + "".join(f"{s:>13}" for s in all_scorers)
print(header)
print("-" * len(header))
for name in models:
    print(f"{name:<8}" + "".join(f"{table[name][s]:>13.4f}" for s in all_scorers))

print()
print("every scorer is higher-is-better; each column should decrease")
for s in all_scorers:
    col = [table[m][s] for m in ("strong", "medium", "weak")]
    mark = "ok " if col[0] > col[1] > col[2] else "?? "
    print(f"  {mark}{s}: {' > '.join(f'{v:.3f}' for v in col)}")
