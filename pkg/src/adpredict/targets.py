"""Six-category behavior labels derived from two-wave survey answers.

Each (January, March) answer pair maps to exactly two of the categories
0-5: one of the four base patterns plus one of the two union categories.

    category 0: yes in January, no in March
    category 1: no in both waves
    category 2: no in January, yes in March
    category 3: yes in both waves
    category 4: yes in March (union of 2 and 3)
    category 5: no in March (union of 0 and 1)

Every category is treated as an independent binary one-vs-rest prediction
target, which is the only scheme consistent with the overlapping unions.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .data_model import SurveyResponse


class Behavior(Enum):
    ACTUAL_PURCHASE = "actual_purchase"
    PURCHASE_INTENTION = "purchase_intention"


CATEGORIES = (0, 1, 2, 3, 4, 5)


def categorize(jan: bool, mar: bool) -> frozenset[int]:
    """Category pair for one answer pattern."""
    if jan and not mar:
        base = 0
    elif not jan and not mar:
        base = 1
    elif not jan and mar:
        base = 2
    else:
        base = 3
    union = 4 if mar else 5
    return frozenset((base, union))


def wave_answers(response: SurveyResponse, behavior: Behavior) -> tuple[bool, bool]:
    if behavior is Behavior.ACTUAL_PURCHASE:
        return response.ap_jan, response.ap_mar
    return response.pi_jan, response.pi_mar


def label_vector(responses: list[SurveyResponse], behavior: Behavior,
                 category: int) -> np.ndarray:
    """Binary labels, one per response in input order."""
    if not responses:
        raise ValueError("responses must be nonempty")
    if category not in CATEGORIES:
        raise ValueError(f"category must be in 0..5, got {category}")
    labels = np.zeros(len(responses), dtype=np.int64)
    for i, r in enumerate(responses):
        if category in categorize(*wave_answers(r, behavior)):
            labels[i] = 1
    return labels


def category_distribution(responses: list[SurveyResponse],
                          behavior: Behavior) -> dict[int, float]:
    """Fraction of responses whose category pair contains each category.

    The base categories 0-3 sum to 1; category 4 equals 2 + 3 and
    category 5 equals 0 + 1, so 4 + 5 also sum to 1.
    """
    if not responses:
        raise ValueError("responses must be nonempty")
    counts = {c: 0 for c in CATEGORIES}
    for r in responses:
        for c in categorize(*wave_answers(r, behavior)):
            counts[c] += 1
    n = len(responses)
    return {c: counts[c] / n for c in CATEGORIES}
