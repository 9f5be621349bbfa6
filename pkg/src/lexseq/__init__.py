"""lexseq: lexicon-enhanced transformer sequence labeling.

A small numpy autodiff engine, a character transformer encoder, a lexicon
adapter that fuses matched dictionary words into chosen layers, a CRF head
and span-level metrics, plus the training, decoding and ablation drivers.

Example:
    >>> from lexseq import RunConfig, make_synthetic_corpus, train
    >>>
    >>> data = make_synthetic_corpus(seed=0)
    >>> config = RunConfig(epochs=2, output_dir="runs/demo")
    >>> result = train(config, data.corpus, data.word_vectors, data.trie)
    >>> result.model.predict(...)  # doctest: +SKIP
"""

__version__ = "0.1.1"

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Featurizer, load_conll, load_embeddings, load_lexicon
from .lebert import LebertModel
from .lexicon import assign_to_chars, build_trie, match_words
from .metrics import error_reduction, extract_spans, span_f1_type_acc
from .synthetic import make_synthetic_corpus
from .tracking import init_run, tracked
from .trainer import ablate_layers, check_gradients, decode, evaluate, train
from .types import LebertConfig, RunConfig

__all__ = [
    "LebertConfig",
    "RunConfig",
    "LebertModel",
    "Featurizer",
    "build_trie",
    "match_words",
    "assign_to_chars",
    "extract_spans",
    "span_f1_type_acc",
    "error_reduction",
    "load_conll",
    "load_embeddings",
    "load_lexicon",
    "make_synthetic_corpus",
    "save_checkpoint",
    "load_checkpoint",
    "train",
    "evaluate",
    "decode",
    "ablate_layers",
    "check_gradients",
    "init_run",
    "tracked",
    "__version__",
]
