"""Transition-based nested named entity recognition with a slot-memory
action generator and multi-corpus loss masking."""

from .actions import (
    Action,
    ActionSequence,
    ActionVocabulary,
    CodecError,
    DecodeDiagnostics,
    Mention,
    ScoredMention,
    Sentence,
    decode_actions,
    decode_probabilities,
    decode_probabilities_scored,
    encode_mentions,
)
from .config import (
    ConfigError,
    DatasetConfig,
    EncoderConfig,
    ExperimentConfig,
    GeneratorConfig,
    SruConfig,
    TrainConfig,
    load_config,
)
from .corpus import (
    AnnotatedSentence,
    CorpusError,
    DatasetSpec,
    corpus_stats,
    read_bio_corpus,
    read_nested_corpus,
    synthetic_split,
)
from .encoding import (
    EncodedSentence,
    EncoderAdapter,
    PretrainedTransformerEncoder,
    SentenceTooLongError,
    ToyHashEncoder,
    build_encoder,
    encode_sentence,
    toy_encoder,
)
from .evaluation import EvalReport, evaluate_corpus, evaluate_disjoint, evaluate_merged
from .generator import ActionGenerator, GenerationResult, gated_action_mixture, word_cursor
from .labels import LabelRegistry, RegistryError
from .model import SruNerModel, load_checkpoint, merge_scored_predictions, save_checkpoint
from .sru import SlotRecurrentUnit, relative_position_rows, sru_output, sru_update
from .training import (
    GoldActionMatrix,
    InverseSizeSampler,
    NonFiniteLossError,
    TrainResult,
    augment_gold,
    build_gold_matrix,
    dataset_sampler,
    sample_loss,
    train,
)

__version__ = "0.1.0"
