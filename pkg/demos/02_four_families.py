"""The four families of multi-label quantifiers on correlated labels.

Three classes carry their own feature signal; three more are unions of
pairs of them and have no signal of their own. Only methods that look at
several classes at once can work those out.
"""

import numpy as np

from mlquant.metrics import ae_multilabel
from mlquant.protocol import MLAPPParams, bin_shifts, default_grid, mlapp_generate
from mlquant.quantify_ml import build_quantifier, normalize_spec
from mlquant.synth import synth_generate

ds = synth_generate(6, 6000, 20, correlation={"rho": 0.3,
                                              "unions": {"3": [0, 1], "4": [1, 2], "5": [0, 2]}},
                    separation=[3, 3, 3, 0, 0, 0], seed=1)
train, test = ds.subset(np.arange(3000)), ds.subset(np.arange(3000, 6000))
print("training prevalence:", np.round(train.prevalence(), 3))

samples = mlapp_generate(test, MLAPPParams(100, 2, default_grid(0.1), seed=1),
                         reference_prevalence=train.prevalence())
bins, _ = bin_shifts(samples)
bins = np.array(bins)
print(f"{len(samples)} test samples:",
      ", ".join(f"{b} {np.sum(bins == b)}" for b in ("low", "mid", "high")))

print(f"\n{'method':28s} {'low':>7} {'mid':>7} {'high':>7}")
for spec in ({"family": "bc_ba"}, {"family": "mlc_ba"},
             {"family": "bc_mla", "rq_mlapp": {"m": 3}},
             {"family": "bc_mla", "aggregator": "lpq"},
             {"family": "mlc_mla", "rq_mlapp": {"m": 3}}):
    q = build_quantifier(dict(spec, seed=1)).fit(train)
    S = q.predict_scores(test.features)
    err = np.array([ae_multilabel(s.true_prevalence, q.aggregate(S[s.indices]))
                    for s in samples])
    name = normalize_spec(spec)["name"]
    print(f"{name:28s} " + " ".join(f"{err[bins == b].mean():7.4f}"
                                     for b in ("low", "mid", "high")))
