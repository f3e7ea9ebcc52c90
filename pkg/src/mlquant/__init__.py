"""Multi-label quantification: estimating per-class prevalence in unlabelled samples.

Modules
-------
dataset        multi-label data container, svmlight IO, stratified splits
classify       logistic regression, binary relevance, stacking, chains
quantify_base  CC, PCC, ACC, PACC and SLD over a single-label codeframe
quantify_ml    the four multi-label families, RQ and LPQ aggregators
protocol       ML-APP sample generation and shift bins
metrics        AE and RAE
modelsel       quantification-oriented grid search
synth          correlated synthetic data
harness        experiment runner; ``cli`` exposes it on the command line
"""

__version__ = "0.1.0"
