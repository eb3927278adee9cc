from pairtopk.corpus.annotations import (
    AnnotatedToken,
    attach_annotations,
    load_annotations,
    read_annotations,
    write_annotations,
)
from pairtopk.corpus.documents import (
    LABEL_SETS,
    SPLITS,
    Annotation,
    Document,
    PairDataset,
    PairExample,
    Token,
    load_pair_dataset,
    parse_morph,
    write_pair_dataset,
)
from pairtopk.corpus.stats import distance_statistics, pair_distance, write_stats_csv
from pairtopk.corpus.synthetic import (
    SyntheticCorpus,
    SyntheticSpec,
    generate_synthetic_corpus,
    read_gold,
    signal_oracle,
    write_gold,
)
from pairtopk.corpus.tokenize import (
    MARKERS,
    AlignmentMask,
    Vocabulary,
    chunk_word,
    split_subwords,
    tokenize_and_align,
)
from pairtopk.corpus.window import (
    DEFAULT_WINDOW,
    Instance,
    build_context_window,
    make_instances,
    make_vocabulary,
    merge_subwindows,
    window_indices,
)
