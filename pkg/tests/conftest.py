import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from adpredict.data_model import (AGE_BRACKETS, INCOME_BRACKETS,  # noqa: E402
                                  MARITAL_STATUSES, PARENTAL_STATUSES, SEXES,
                                  AdBroadcast, Catalog, DemographicProfile,
                                  SurveyResponse, ViewingRecord)


def random_catalog(rng: np.random.Generator, n_users=4, n_products=3,
                   n_broadcast_products=2, n_viewing=10, n_broadcasts=6) -> Catalog:
    """Small random catalog that satisfies every invariant by construction."""
    n_broadcast_products = min(n_broadcast_products, n_products)
    users = []
    for i in range(n_users):
        users.append(DemographicProfile(
            user_id=f"u{i:03d}",
            age_bracket=AGE_BRACKETS[rng.integers(len(AGE_BRACKETS))],
            sex=SEXES[rng.integers(len(SEXES))],
            marital_status=MARITAL_STATUSES[rng.integers(len(MARITAL_STATUSES))],
            parental_status=PARENTAL_STATUSES[rng.integers(len(PARENTAL_STATUSES))],
            income_bracket=INCOME_BRACKETS[rng.integers(len(INCOME_BRACKETS))],
        ))
    products = [f"p{i:02d}" for i in range(n_products)]

    responses = [
        SurveyResponse(u.user_id, p, *(bool(rng.integers(2)) for _ in range(4)))
        for u in users for p in products
    ]

    base = datetime(2017, 1, 20)
    viewing = []
    for i in range(n_viewing):
        user = users[int(rng.integers(n_users))]
        # Per-user non-overlap: each record gets its own day.
        start = base + timedelta(days=i, minutes=int(rng.integers(0, 1200)))
        viewing.append(ViewingRecord(
            user_id=user.user_id, start=start,
            duration_s=int(rng.integers(0, 7200)),
            channel=f"ch{rng.integers(3)}"))

    broadcasts = []
    for i in range(n_broadcasts):
        start = base + timedelta(days=int(rng.integers(0, max(1, n_viewing))),
                                 minutes=int(rng.integers(0, 1430)))
        broadcasts.append(AdBroadcast(
            product_id=products[int(rng.integers(n_broadcast_products))],
            start=start, duration_s=int(rng.integers(15, 90)),
            channel=f"ch{rng.integers(3)}"))

    return Catalog.build(users, products, responses, viewing, broadcasts)


@pytest.fixture
def tiny_catalog() -> Catalog:
    """Two users, two products, one broadcast; exposure is easy to hand-check."""
    users = [
        DemographicProfile("u001", AGE_BRACKETS[0], SEXES[0], MARITAL_STATUSES[0],
                           PARENTAL_STATUSES[0], INCOME_BRACKETS[0]),
        DemographicProfile("u002", AGE_BRACKETS[2], SEXES[1], MARITAL_STATUSES[1],
                           PARENTAL_STATUSES[1], INCOME_BRACKETS[5]),
    ]
    products = ["p01", "p02"]
    responses = [
        SurveyResponse("u001", "p01", True, False, True, False),
        SurveyResponse("u001", "p02", False, False, False, True),
        SurveyResponse("u002", "p01", False, True, True, True),
        SurveyResponse("u002", "p02", True, True, False, False),
    ]
    viewing = [
        ViewingRecord("u001", datetime(2017, 1, 23, 20, 0), 3600, "ch1"),
        ViewingRecord("u002", datetime(2017, 1, 23, 18, 50), 1200, "ch1"),
    ]
    broadcasts = [
        AdBroadcast("p01", datetime(2017, 1, 23, 20, 30), 15, "ch1"),
    ]
    return Catalog.build(users, products, responses, viewing, broadcasts)
