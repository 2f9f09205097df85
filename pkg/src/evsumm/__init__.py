"""Summaries for methods of event-driven programs.

Code/comment preprocessing, an attention sequence-to-sequence summarizer
written directly in numpy, PageRank context selection over dynamic call
graphs, and BLEU4/METEOR/perplexity evaluation.
"""
from ._accel import USE_NUMBA

__version__ = "0.1.0"
__all__ = ["USE_NUMBA", "__version__"]
