"""Versioned checkpoints: named parameter arrays plus the serialized configuration.

A checkpoint is a numpy ``.npz`` container holding ``param/<name>`` arrays,
the model configuration as JSON, and the character, label and lexicon
vocabularies needed to featurize new input. Nothing is pickled.
"""

import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .data import Featurizer
from .errors import CheckpointError
from .lebert import LebertModel
from .lexicon import build_trie
from .types import LebertConfig, ParamGroup
from .utils import ensure_dir
from .vocab import UNK_TOKEN, Vocabulary

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAM_PREFIX = "param/"


def _strings(values: list[str]) -> np.ndarray:
    return np.array(values, dtype=str)


def save_checkpoint(path: str | Path, model: LebertModel, featurizer: Featurizer) -> Path:
    """Write ``model`` and the vocabularies of ``featurizer`` to ``path``.

    Returns:
        The path written.
    """
    path = Path(path)
    ensure_dir(str(path.parent))
    arrays: dict[str, np.ndarray] = {
        f"{PARAM_PREFIX}{name}": param.data for name, param in model.named_params().items()
    }
    arrays["meta/format_version"] = np.array(FORMAT_VERSION)
    arrays["meta/config"] = np.array(model.config.model_dump_json())
    arrays["meta/seed"] = np.array(model.seed)
    arrays["meta/chars"] = _strings(featurizer.chars.tokens)
    arrays["meta/labels"] = _strings(featurizer.labels.tokens)
    arrays["meta/words"] = _strings(featurizer.trie.surfaces)

    partial = path.with_name(path.name + ".partial")
    with open(partial, "wb") as f:
        np.savez(f, **arrays)
    os.replace(partial, path)
    logger.debug(f"saved checkpoint with {len(model.named_params())} tensors to {path}")
    return path


def load_checkpoint(path: str | Path) -> tuple[LebertModel, Featurizer]:
    """Rebuild the model and featurizer stored at ``path``.

    Raises:
        CheckpointError: If the file is missing, unreadable, of another
            format version, or inconsistent with its configuration.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    version = int(arrays.get("meta/format_version", np.array(-1)))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        config = LebertConfig.model_validate(json.loads(str(arrays["meta/config"][()])))
        seed = int(arrays["meta/seed"])
        chars = [str(c) for c in arrays["meta/chars"]]
        labels = [str(label) for label in arrays["meta/labels"]]
        words = [str(w) for w in arrays["meta/words"]]
    except (KeyError, ValueError, ValidationError) as e:
        raise CheckpointError(f"{path}: bad metadata: {e}") from e

    state = {
        key[len(PARAM_PREFIX) :]: value for key, value in arrays.items() if key.startswith(PARAM_PREFIX)
    }
    table = state.get("words.table")
    if table is None or table.shape[0] != len(words) + 1:
        raise CheckpointError(f"{path}: word table does not match the stored lexicon")
    model = LebertModel(config, len(chars), labels, table[:-1], seed=seed)
    model.load_state(state)
    featurizer = Featurizer(
        Vocabulary(chars, unknown=UNK_TOKEN),
        Vocabulary(labels),
        build_trie(words, min_length=config.min_match_len),
        config.max_words_per_char,
        config.min_match_len,
    )
    logger.info(f"loaded checkpoint {path} ({len(state)} tensors, {len(labels)} labels)")
    return model, featurizer


def param_digest(model: LebertModel, group: ParamGroup) -> str:
    """SHA-256 over the names and values of one parameter group."""
    digest = hashlib.sha256()
    for name, param in sorted(model.named_params().items()):
        if param.group == group:
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(param.data).tobytes())
    return digest.hexdigest()
