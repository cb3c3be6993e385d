"""Clinical note generation from doctor-patient dialogues.

In-context-learning pipeline (similarity-based example selection, token-
budgeted prompt assembly, pluggable completion backends) plus the evaluation
stack: section parsing and tagging, ROUGE and aggregate scoring, header
repair, and a blinded three-way human preference study.
"""

from .corpus import (
    Category,
    ClinicalNote,
    Corpus,
    Example,
    NoteSection,
    SectionTaxonomy,
    Split,
    load_corpus,
    parse_note,
    serialize_note,
    tag_category,
)
from .embedding import EmbedderConfig, EmbeddingVector, cosine, embed
from .evaluation import (
    MetricReport,
    RougeScore,
    aggregate_score,
    evaluate_run,
    header_accuracy,
    rouge_l,
    rouge_n,
)
from .generation import BackendDescriptor, GeneratedNote, PipelineConfig, complete, run_batch
from .humaneval import (
    AnnotationRecord,
    PreferenceTally,
    Study,
    create_study,
    unblind_and_tally,
    win_rate,
)
from .postprocess import (
    HeaderRepair,
    TaskATarget,
    encode_taska_target,
    parse_taska_output,
    predict_header_baseline,
    repair_headers,
)
from .prompting import (
    GenerationConfig,
    Prompt,
    PromptTemplate,
    TokenBudget,
    assemble_prompt,
    count_tokens,
)
from .selection import ICLExample, SelectionConfig, rank_candidates, select_examples

__version__ = "0.1.0"
