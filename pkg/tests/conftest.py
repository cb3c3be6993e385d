from __future__ import annotations

import pytest

from notegen.corpus import Corpus, Example, SectionTaxonomy, Split
from notegen.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def taxonomy() -> SectionTaxonomy:
    return SectionTaxonomy.default()


@pytest.fixture(scope="session")
def synthetic_corpus(taxonomy) -> Corpus:
    return make_synthetic_corpus(n_train=67, n_validation=20, seed=7, taxonomy=taxonomy)


def make_example(
    example_id: str,
    split: str = "train",
    source: str = "clinic-a",
    dialogue: str = "[doctor] hello\n[patient] hi",
    note: str = "CHIEF COMPLAINT\nCough.",
) -> Example:
    return Example(
        id=example_id,
        split=Split(split),
        dataset_source=source,
        dialogue=dialogue,
        note_raw=note,
    )


@pytest.fixture
def tiny_corpus(taxonomy) -> Corpus:
    examples = [
        make_example("T1", dialogue="[doctor] how is the cough today?\n[patient] still bad"),
        make_example("T2", source="clinic-b",
                     dialogue="[doctor] any chest pain?\n[patient] yes when breathing"),
        make_example("T3", dialogue="[doctor] headache again?\n[patient] every morning"),
        make_example("V1", split="validation",
                     dialogue="[doctor] how is the cough?\n[patient] a bit better"),
    ]
    return Corpus(examples=examples, taxonomy=taxonomy)
