"""A handful of labels goes a long way.

Same toy corpus as text_symbol_discovery.py, but now 10% of the documents
keep their class labels.  The labeled stream adds a classification loss on
the symbol head, trained alongside the unsupervised objective.  Accuracy on
the full corpus typically lands at or near 1.0, compared to the roughly
0.8-0.9 matched accuracy of the fully unsupervised run.  About a minute.
"""

import numpy as np

from svebm import (LangevinConfig, Model, ModelConfig, TrainConfig,
                   TrainState, fit)
from svebm import metrics
from svebm.datasets import (DocumentData, default_grammar,
                            stratified_label_subset, toy_text_corpus)

SEED = 0

corpus = toy_text_corpus(default_grammar(), 5000, seed=SEED)
data = DocumentData(corpus.documents, corpus.labels)

# Keep 10% of the labels, balanced across the four classes.
idx = stratified_label_subset(data.labels, 0.10, seed=SEED)
labeled = data.subset(idx)
print(f"{labeled.n} of {data.n} documents keep their labels "
      f"({np.bincount(labeled.labels)} per class)")

config = ModelConfig(modality="document", latent_dim=8, n_categories=4,
                     vocab_size=len(corpus.vocab), enc_hidden=(64,),
                     dec_hidden=(64,), prior_hidden=(256,))
train = TrainConfig(iterations=3000, lr_prior=5e-4, lr_gen=2e-3,
                    lr_cls=1e-3, batch_unlabeled=64, batch_labeled=16,
                    n_chains=1000, lam=50.0, seed=SEED,
                    langevin=LangevinConfig(step_size=0.16, n_steps=20),
                    log_every=0)

rng = np.random.default_rng(SEED)
state = TrainState(Model(config, rng), train, rng)
print(f"training for {train.iterations} iterations with a labeled stream ...")
state = fit(state, data, labeled=labeled)

pred, dist = metrics.classify(state.model, data.batch(np.arange(data.n)))
acc = metrics.accuracy(data.labels, pred)
print(f"classification accuracy on all {data.n} documents: {acc:.3f}")

# The symbol head is a real classifier now; show a few confident examples.
conf = dist[np.arange(data.n), pred]
top = np.argsort(-conf)[:5]
for i in top:
    words = corpus.vocab.decode(corpus.sequences[i].ids)
    print(f"  p(y={pred[i]}) = {conf[i]:.3f}  true = {data.labels[i]}  "
          f"text: {' '.join(words[:6])} ...")
