"""Typed relation extraction between natural-language requirements.

The package is organized around a small number of layers:

* :mod:`reqrel.model` — corpus data model, relation taxonomy, dataset
  loaders, candidate-pair enumeration and cross-validation splits.
* :mod:`reqrel.nlp` — tokenization, CoNLL-U ingestion, n-grams, noun
  chunks, gazetteer NER and rule-based cross-document coreference.
* :mod:`reqrel.vectors` — TF-IDF, embedding tables, similarity measures
  and truncated-SVD latent semantic analysis.
* :mod:`reqrel.retrieval` — retrieval-based extractors (cross-reference,
  pattern rules, vector relatedness, syntactic/semantic graphs with
  spreading activation, ontology matching).
* :mod:`reqrel.learning` — pair featurization, classic classifiers,
  ensemble voting, weak supervision, active learning and k-means
  clustering with relation suggestion.
* :mod:`reqrel.metrics` — confusion matrices, precision/recall/F1,
  average precision, Cohen's kappa, timing and cross-validation.
* :mod:`reqrel.service` / :mod:`reqrel.cli` — HTTP service and CLI.
"""

__version__ = "0.1.0"
