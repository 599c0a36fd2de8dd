"""Python access to the sign language translation baseline.

Everything lives in the compiled extension ``slt._core``; this package only
re-exports it.
"""

from slt._core import (
    ArgumentError,
    CheckpointRequiredError,
    ConfigError,
    CorpusError,
    CorruptionError,
    DimensionError,
    InfeasibleError,
    IoError,
    ParseError,
    RankError,
    SltError,
    UndefinedError,
    UnsupportedVersionError,
    VocabularyError,
    bleu,
    corpus_wer,
    ctc_beam_decode,
    ctc_brute_force,
    ctc_gradient,
    ctc_greedy_decode,
    ctc_loss,
    evaluate,
    generate_corpus,
    grammar,
    invert_grammar,
    read_features,
    rouge_l,
    run_cli,
    wer,
    write_features,
)

__all__ = [name for name in dir() if not name.startswith("_")]
