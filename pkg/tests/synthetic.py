"""Synthetic number-matching corpus used by the acceptance tests.

Each record's headline states a number; the label is congruent exactly
when that number appears verbatim in the body.  By default incongruent
bodies draw a different number from the same small pool, so class
membership cannot be read off the body number alone - the model has to
compare headline and body.  With ``disjoint_distractors`` the wrong
number comes from a separate range instead, which makes the task
learnable by tiny models in a few epochs.
"""

import numpy as np

from poshan.text import DatasetRecord, RawRecord, RuleTagger, featurize

SUBJECTS = ["city", "club", "mayor", "firm", "team", "board"]
VERBS = ["adds", "cuts", "wins", "sells", "loses", "buys"]
NOUNS = ["jobs", "games", "seats", "homes", "deals", "votes"]
FILLERS = [
    "Officials spoke briefly today.",
    "Critics were not impressed.",
    "Fans cheered for hours.",
    "Reports came in late.",
]
NUMBER_POOL = (1, 2, 3, 4, 5, 6)
DISTRACTOR_OFFSET = 10

_TAGGER = RuleTagger()


def make_matching_task(n: int, seed: int, prefix: str = "s",
                       disjoint_distractors: bool = False) -> list[DatasetRecord]:
    """n featurized records, half congruent on average, deterministic."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        num = int(rng.choice(NUMBER_POOL))
        subj = SUBJECTS[rng.integers(len(SUBJECTS))]
        verb = VERBS[rng.integers(len(VERBS))]
        noun = NOUNS[rng.integers(len(NOUNS))]
        congruent = bool(rng.integers(2))
        if congruent:
            body_num = num
        elif disjoint_distractors:
            body_num = num + DISTRACTOR_OFFSET
        else:
            others = [v for v in NUMBER_POOL if v != num]
            body_num = int(rng.choice(others))
        filler = FILLERS[rng.integers(len(FILLERS))]
        raw = RawRecord(
            id=f"{prefix}{i}",
            headline=f"{subj} {verb} {num} {noun}",
            body=f"The {subj} {verb} {body_num} {noun}. {filler}",
            label="congruent" if congruent else "incongruent",
        )
        records.append(featurize(raw, _TAGGER))
    return records
