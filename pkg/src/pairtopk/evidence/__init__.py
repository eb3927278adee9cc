from pairtopk.evidence.analysis import (
    FEATURE_KINDS,
    FeatureDistribution,
    feature_distribution,
    jaccard,
    join_annotations,
    role_separation,
    signal_recovery,
    stability_report,
    write_distribution_csv,
    write_stability_csv,
)
from pairtopk.evidence.records import (
    SPECIAL,
    Entry,
    EvidenceRecord,
    dump_evidence,
    load_evidence,
    records_from_traces,
)
