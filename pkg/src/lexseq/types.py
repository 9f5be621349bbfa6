"""Type definitions for lexseq."""

from enum import Enum
from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator


class LogLevel(str, Enum):
    """Log levels."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class ParamGroup(str, Enum):
    """Learning-rate group of a parameter."""

    BERT = "bert"
    ADAPTER = "adapter"


class Split(str, Enum):
    """Corpus split."""

    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class OverflowPolicy(str, Enum):
    """What to do with sentences longer than ``max_len``."""

    REJECT = "reject"
    TRUNCATE = "truncate"
    SPLIT = "split"


class LabelScheme(str, Enum):
    """Span encoding of the label inventory; training rejects labels outside it."""

    BIOES = "BIOES"


def parse_layer_set(value: Any) -> list[int]:
    """Parse an adapter placement into a sorted list of layer indices.

    Accepts lists, sets, tuples, comma-separated strings and the empty forms
    ``""``, ``"none"``, ``"{}"``, ``"[]"``, ``{}`` and ``None``.

    Args:
        value: Raw placement value.

    Returns:
        Sorted, de-duplicated layer indices.
    """
    if value is None:
        return []
    if isinstance(value, dict):
        # YAML reads {1, 3} as a mapping with null values
        if any(v is not None for v in value.values()):
            raise ValueError(f"invalid layer set: {value!r}")
        return sorted({int(k) for k in value})
    if isinstance(value, int) and not isinstance(value, bool):
        return [value]
    if isinstance(value, str):
        text = value.strip().strip("{}[]()").strip()
        if text.lower() in ("", "none", "-"):
            return []
        return sorted({int(part) for part in text.split(",") if part.strip()})
    return sorted({int(item) for item in value})


class LebertConfig(BaseModel):
    """Model shape, adapter placement and freezing axes."""

    num_layers: int = Field(default=2, ge=1)
    hidden_size: int = Field(default=32, ge=1)
    word_dim: int = Field(default=16, ge=1)
    num_heads: int = Field(default=4, ge=1)
    ffn_size: int | None = Field(default=None, ge=1)
    max_len: int = Field(default=64, ge=1)
    num_segments: int = Field(default=2, ge=1)
    max_words_per_char: int = Field(default=5, ge=1)
    min_match_len: int = Field(default=2, ge=1)
    adapter_layers: list[int] = Field(default_factory=lambda: [1])
    freeze_bert: bool = False
    train_word_emb: bool = True
    lr_bert: float = Field(default=1e-5, gt=0)
    lr_adapter: float = Field(default=1e-4, gt=0)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    adapter_dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    layer_norm_eps: float = Field(default=1e-12, gt=0)
    initializer_range: float = Field(default=0.02, gt=0)
    label_scheme: LabelScheme = LabelScheme.BIOES
    add_special_tokens: bool = False
    constrain_transitions: bool = False

    @field_validator("adapter_layers", mode="before")
    @classmethod
    def _parse_adapter_layers(cls, value: Any) -> list[int]:
        return parse_layer_set(value)

    @model_validator(mode="after")
    def _check_shape(self) -> "LebertConfig":
        if self.hidden_size % self.num_heads != 0:
            raise ValueError(
                f"hidden_size ({self.hidden_size}) must be divisible by num_heads ({self.num_heads})"
            )
        bad = [k for k in self.adapter_layers if k < 0 or k > self.num_layers]
        if bad:
            raise ValueError(
                f"adapter_layers {bad} outside [0, {self.num_layers}] for {self.num_layers} layers"
            )
        if self.add_special_tokens and self.max_len < 3:
            raise ValueError(f"max_len {self.max_len} leaves no room for characters besides [CLS]/[SEP]")
        return self

    @property
    def ffn_dim(self) -> int:
        """Feed-forward width, defaulting to four times the hidden size."""
        return self.ffn_size or 4 * self.hidden_size

    @property
    def max_chars(self) -> int:
        """Longest sentence in characters; ``[CLS]``/``[SEP]`` take two of the ``max_len`` positions."""
        return self.max_len - 2 if self.add_special_tokens else self.max_len


class RunConfig(BaseModel):
    """Complete training / evaluation run configuration."""

    model: LebertConfig = Field(default_factory=LebertConfig)
    seed: int = Field(default=42, ge=0)
    epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=4, ge=1)
    eval_every: int | None = Field(default=None, ge=1)
    max_steps: int | None = Field(default=None, ge=1)
    output_dir: str = "runs"
    dev_fraction: float | None = Field(default=None, gt=0.0, lt=1.0)
    overflow: OverflowPolicy = OverflowPolicy.REJECT
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0)
    max_grad_norm: float | None = Field(default=None, gt=0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    log_dir: str = "logs"
    log_level: LogLevel = LogLevel.INFO
    log_format: str = "json"

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_log_level(cls, value: Any) -> Any:
        return value.upper() if isinstance(value, str) else value
