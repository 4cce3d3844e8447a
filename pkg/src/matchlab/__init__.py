"""matchlab: a desk-scale laboratory for bag-of-words text matching with
base-model-anchored regularization."""

from .corpus import (
    UNK_ID,
    UNK_TOKEN,
    Corpus,
    CorpusError,
    Pair,
    Sentence,
    SplitSpec,
    Tokens,
    Vocab,
    build_vocab,
    interpolate_ood,
    item_frequency_quantiles,
    load_corpus,
    most_frequent_categories,
    split_by_category,
    synth_generate,
    synth_pretrain,
    tokenize,
    write_corpus,
)
from .encoder import (
    NORM_EPS,
    DegenerateNormError,
    EmbeddingModel,
    EncodeError,
    EncodeResult,
    VocabMismatchError,
    encode,
    encode_backward,
    encode_dropout_backward,
    encode_with_dropout,
    init_model,
    relevance,
)
from .evaluation import (
    NO_TRUTH_BIN,
    EvalError,
    EvalReport,
    RankingResult,
    auc_partial,
    evaluate,
    precision_at_k,
    quantile_gain_report,
    rank_items,
    sweep_interpolation,
    write_quantile_csv,
    write_report_csv,
    write_report_json,
    write_sweep_csv,
)
from .interventions import (
    AMPLIFICATION_FLOOR,
    ImportanceReport,
    InterventionError,
    importance_report,
    importance_scores,
    mask_fraction,
    mask_single,
    write_importance_summary,
    write_importance_tsv,
)
from .objectives import (
    REGULARIZER_KINDS,
    AugmentedPair,
    Batch,
    ContrastiveExample,
    LossValue,
    RegularizerConfig,
    ScoredExample,
    build_itvaug,
    contrastive_loss,
    intervention_seed,
    itvreg_penalty,
    maskreg_penalty,
    mse_loss,
    outreg_penalty,
    simcse_penalty,
    total_loss,
)
from .trainer import (
    CHECKPOINT_MAGIC,
    LOSS_KINDS,
    NEGATIVE_STRATEGIES,
    CheckpointError,
    MiningExample,
    TrainConfig,
    TrainError,
    TrainRun,
    load_checkpoint,
    mine_negatives,
    save_checkpoint,
    train,
    write_loss_trace,
)

__version__ = "0.1.0"
