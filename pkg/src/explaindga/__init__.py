"""Contextless, explainable multiclass classification of DGA domain names."""

from .domains import ParsedDomain, SuffixDatabase, parse, sanitize, validate
from .features import CATALOG, CATALOG_IDS, Extractor, FeatureSetSelection, NAMED_SELECTIONS, extract
from .forest import ForestModel, HyperParams, class_weights, explain_prediction, train

__version__ = "0.1.0"
