"""Feature-matrix assembly for every input configuration and model base.

Matrices are dense float64 with one row per (user, product) pair implied by
the model base: product-based models take one row per user for a fixed
product, user-based models one row per advert-matched product for a fixed
user. Rows are sorted by (user_id, product_id).

Exposure blocks are raw accumulated seconds, either 7 weekday sums or 14
weekday-by-slot cells. Demographics are one-hot encoded in fixed listing
order (5 + 2 + 3 + 2 + 13 = 25 dims). When enabled for an actual-purchase
target, one extra binary feature carries the January purchase-intention
answer; it is never available when purchase intention itself is the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .data_model import (AGE_BRACKETS, INCOME_BRACKETS, MARITAL_STATUSES,
                         PARENTAL_STATUSES, SEXES, Catalog, DemographicProfile)
from .exposure import ExposureMatrix, TimeSlot
from .targets import Behavior

WEEKDAY_NAMES = ("monday", "tuesday", "wednesday", "thursday", "friday",
                 "saturday", "sunday")

PI_FEATURE_NAME = "purchase_intention_jan"


class InputKind(Enum):
    VIEW_WEEKDAY_SLOT = "view_weekday_slot"
    VIEW_WEEKDAY = "view_weekday"
    DEMOGRAPHICS = "demographics"
    VIEW_WEEKDAY_SLOT_DEMO = "view_weekday_slot_demo"
    VIEW_WEEKDAY_DEMO = "view_weekday_demo"

    @property
    def has_viewing(self) -> bool:
        return self is not InputKind.DEMOGRAPHICS

    @property
    def has_demographics(self) -> bool:
        return self in (InputKind.DEMOGRAPHICS, InputKind.VIEW_WEEKDAY_SLOT_DEMO,
                        InputKind.VIEW_WEEKDAY_DEMO)

    @property
    def uses_slots(self) -> bool:
        return self in (InputKind.VIEW_WEEKDAY_SLOT, InputKind.VIEW_WEEKDAY_SLOT_DEMO)


# Column order of the reported average tables.
INPUT_KIND_ORDER = (
    InputKind.VIEW_WEEKDAY_SLOT,
    InputKind.VIEW_WEEKDAY,
    InputKind.DEMOGRAPHICS,
    InputKind.VIEW_WEEKDAY_SLOT_DEMO,
    InputKind.VIEW_WEEKDAY_DEMO,
)


class FeatureError(ValueError):
    """Invalid feature-matrix request."""


@dataclass(frozen=True)
class InputConfig:
    kind: InputKind
    include_pi_feature: bool = False

    def __post_init__(self):
        if self.include_pi_feature and not self.kind.has_demographics:
            raise FeatureError(
                "the purchase-intention feature requires a demographics block"
            )

    @property
    def name(self) -> str:
        return self.kind.value + ("+pi" if self.include_pi_feature else "")


class BaseKind(Enum):
    PRODUCT_BASED = "product"
    USER_BASED = "user"


@dataclass(frozen=True)
class ModelBase:
    kind: BaseKind
    base_id: str


@dataclass
class FeatureMatrix:
    values: np.ndarray
    row_keys: list[tuple[str, str]]
    feature_names: list[str]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


def _demographic_feature_names() -> list[str]:
    names = [f"age_{i}" for i in range(len(AGE_BRACKETS))]
    names += [f"sex_{i}" for i in range(len(SEXES))]
    names += [f"marital_{i}" for i in range(len(MARITAL_STATUSES))]
    names += [f"parental_{i}" for i in range(len(PARENTAL_STATUSES))]
    names += [f"income_{i}" for i in range(len(INCOME_BRACKETS))]
    return names


DEMOGRAPHIC_FEATURE_NAMES = _demographic_feature_names()
DEMOGRAPHIC_DIMS = len(DEMOGRAPHIC_FEATURE_NAMES)


def encode_demographics(profile: DemographicProfile) -> np.ndarray:
    """One-hot vector of 5+2+3+2+13 = 25 dims, groups in listing order."""
    vec = np.zeros(DEMOGRAPHIC_DIMS, dtype=np.float64)
    offset = 0
    for value, allowed in (
        (profile.age_bracket, AGE_BRACKETS),
        (profile.sex, SEXES),
        (profile.marital_status, MARITAL_STATUSES),
        (profile.parental_status, PARENTAL_STATUSES),
        (profile.income_bracket, INCOME_BRACKETS),
    ):
        vec[offset + allowed.index(value)] = 1.0
        offset += len(allowed)
    return vec


def exposure_feature_names(uses_slots: bool) -> list[str]:
    if uses_slots:
        names = []
        for day in WEEKDAY_NAMES:
            names.append(f"{day}_primetime")
            names.append(f"{day}_non_primetime")
        return names
    return list(WEEKDAY_NAMES)


def _exposure_row(matrix: ExposureMatrix, user_id: str, product_id: str,
                  uses_slots: bool) -> np.ndarray:
    if uses_slots:
        row = np.zeros(14, dtype=np.float64)
        for w in range(7):
            row[2 * w] = matrix.get(user_id, product_id, w, TimeSlot.PRIMETIME)
            row[2 * w + 1] = matrix.get(user_id, product_id, w, TimeSlot.NON_PRIMETIME)
    else:
        row = np.zeros(7, dtype=np.float64)
        for w in range(7):
            row[w] = matrix.weekday_total(user_id, product_id, w)
    return row


def build_matrix(catalog: Catalog, exposure: ExposureMatrix, base: ModelBase,
                 config: InputConfig, target_behavior: Behavior,
                 standardize: bool = False) -> FeatureMatrix:
    """Assemble the feature matrix for one base, configuration and target.

    ``standardize`` z-scores each column (constant columns stay zero); it
    defaults off so exposure features remain raw seconds.
    """
    if config.include_pi_feature and target_behavior is Behavior.PURCHASE_INTENTION:
        raise FeatureError(
            "purchase-intention feature requested while predicting purchase intention"
        )

    if base.kind is BaseKind.PRODUCT_BASED:
        if base.base_id not in catalog.advert_matched_products:
            raise FeatureError(f"unknown or unmatched product base {base.base_id!r}")
        row_keys = [(u, base.base_id) for u in catalog.user_ids]
    else:
        if base.base_id not in set(catalog.user_ids):
            raise FeatureError(f"unknown user base {base.base_id!r}")
        row_keys = [(base.base_id, p) for p in catalog.advert_matched_products]
    row_keys.sort()

    names: list[str] = []
    if config.kind.has_viewing:
        names += exposure_feature_names(config.kind.uses_slots)
    if config.kind.has_demographics:
        names += DEMOGRAPHIC_FEATURE_NAMES
    if config.include_pi_feature:
        names.append(PI_FEATURE_NAME)

    profiles = {u.user_id: u for u in catalog.users}
    demo_cache: dict[str, np.ndarray] = {}
    responses = catalog.response_map() if config.include_pi_feature else {}

    values = np.zeros((len(row_keys), len(names)), dtype=np.float64)
    for i, (user_id, product_id) in enumerate(row_keys):
        blocks = []
        if config.kind.has_viewing:
            blocks.append(_exposure_row(exposure, user_id, product_id,
                                        config.kind.uses_slots))
        if config.kind.has_demographics:
            if user_id not in demo_cache:
                demo_cache[user_id] = encode_demographics(profiles[user_id])
            blocks.append(demo_cache[user_id])
        if config.include_pi_feature:
            pi_jan = responses[(user_id, product_id)].pi_jan
            blocks.append(np.array([1.0 if pi_jan else 0.0]))
        values[i] = np.concatenate(blocks)

    if standardize:
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        nonconstant = std > 0
        values = values - mean
        values[:, nonconstant] /= std[nonconstant]

    return FeatureMatrix(values=values, row_keys=row_keys, feature_names=names)


def write_matrix(fm: FeatureMatrix, path: str | Path) -> None:
    """Dump a feature matrix as a tab-separated audit table."""
    path = Path(path)
    lines = ["\t".join(["user_id", "product_id"] + fm.feature_names)]
    for (user_id, product_id), row in zip(fm.row_keys, fm.values):
        cells = [user_id, product_id] + [repr(v) for v in row.tolist()]
        lines.append("\t".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
