import numpy as np
import pytest

from adpredict.data_model import (AGE_BRACKETS, INCOME_BRACKETS, MARITAL_STATUSES,
                                  PARENTAL_STATUSES, SEXES, DemographicProfile)
from adpredict.exposure import ExposureMatrix, compute_exposure
from adpredict.features import (BaseKind, FeatureError, InputConfig, InputKind,
                                ModelBase, build_matrix, encode_demographics,
                                write_matrix, DEMOGRAPHIC_DIMS)
from adpredict.targets import Behavior
from conftest import random_catalog


def _profile(age=0, sex=0, marital=0, parental=0, income=0, user="u1"):
    return DemographicProfile(user, AGE_BRACKETS[age], SEXES[sex],
                              MARITAL_STATUSES[marital], PARENTAL_STATUSES[parental],
                              INCOME_BRACKETS[income])


def test_one_hot_first_answers():
    vec = encode_demographics(_profile())
    assert vec.shape == (25,)
    assert set(np.flatnonzero(vec)) == {0, 5, 7, 10, 12}
    assert vec.sum() == 5.0


def test_one_hot_differs_only_in_sex_block():
    a = encode_demographics(_profile(sex=0))
    b = encode_demographics(_profile(sex=1))
    diff = np.flatnonzero(a != b)
    assert set(diff) == {5, 6}  # the 2-dim sex block


def test_one_hot_group_sums_over_population():
    rng = np.random.default_rng(17)
    total = np.zeros(DEMOGRAPHIC_DIMS)
    for i in range(100):
        total += encode_demographics(_profile(
            age=int(rng.integers(5)), sex=int(rng.integers(2)),
            marital=int(rng.integers(3)), parental=int(rng.integers(2)),
            income=int(rng.integers(13)), user=f"u{i}"))
    bounds = [0, 5, 7, 10, 12, 25]
    for lo, hi in zip(bounds, bounds[1:]):
        assert total[lo:hi].sum() == 100.0


def test_pi_feature_requires_demographics():
    with pytest.raises(FeatureError):
        InputConfig(InputKind.VIEW_WEEKDAY, include_pi_feature=True)


def test_dims_per_configuration(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    base = ModelBase(BaseKind.PRODUCT_BASED, "p01")
    expected = {
        InputKind.VIEW_WEEKDAY: 7,
        InputKind.VIEW_WEEKDAY_SLOT: 14,
        InputKind.DEMOGRAPHICS: 25,
        InputKind.VIEW_WEEKDAY_DEMO: 32,
        InputKind.VIEW_WEEKDAY_SLOT_DEMO: 39,
    }
    for kind, dims in expected.items():
        fm = build_matrix(tiny_catalog, exposure, base, InputConfig(kind),
                          Behavior.ACTUAL_PURCHASE)
        assert fm.dims == dims
        assert fm.rows == 2
        assert len(fm.feature_names) == dims
    with_pi = build_matrix(tiny_catalog, exposure, base,
                           InputConfig(InputKind.VIEW_WEEKDAY_SLOT_DEMO,
                                       include_pi_feature=True),
                           Behavior.ACTUAL_PURCHASE)
    assert with_pi.dims == 40
    assert with_pi.feature_names[-1] == "purchase_intention_jan"


def test_pi_feature_blocked_for_pi_target(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    with pytest.raises(FeatureError, match="predicting purchase intention"):
        build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                     InputConfig(InputKind.DEMOGRAPHICS, include_pi_feature=True),
                     Behavior.PURCHASE_INTENTION)


def test_pi_feature_value_is_january_wave(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                      InputConfig(InputKind.DEMOGRAPHICS, include_pi_feature=True),
                      Behavior.ACTUAL_PURCHASE)
    # pi_jan for (u001, p01) is True, for (u002, p01) is False.
    assert fm.row_keys == [("u001", "p01"), ("u002", "p01")]
    assert fm.values[0, -1] == 1.0
    assert fm.values[1, -1] == 0.0


def test_unknown_base_rejected(tiny_catalog):
    exposure = ExposureMatrix()
    with pytest.raises(FeatureError, match="unmatched product"):
        build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p02"),
                     InputConfig(InputKind.VIEW_WEEKDAY), Behavior.ACTUAL_PURCHASE)
    with pytest.raises(FeatureError, match="unknown user"):
        build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.USER_BASED, "u999"),
                     InputConfig(InputKind.VIEW_WEEKDAY), Behavior.ACTUAL_PURCHASE)


def test_product_base_exposure_rows(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                      InputConfig(InputKind.VIEW_WEEKDAY_SLOT),
                      Behavior.ACTUAL_PURCHASE)
    # Monday primetime column is index 0; u001 saw the full 15 s advert.
    assert fm.values[0, 0] == 15.0
    assert fm.values[1].sum() == 0.0


def test_user_base_demographics_rows_identical(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.USER_BASED, "u001"),
                      InputConfig(InputKind.DEMOGRAPHICS), Behavior.ACTUAL_PURCHASE)
    # One row per advert-matched product, all carrying the same user vector.
    assert fm.rows == 1  # only p01 is advert-matched in the tiny catalog
    fm_rows = fm.values
    assert np.array_equal(fm_rows[0], encode_demographics(tiny_catalog.users[0]))


def test_user_base_demographics_degenerate_constant_rows():
    # With several advert-matched products every row repeats the same
    # 25-dim vector: the documented zero-information degeneracy.
    rng = np.random.default_rng(41)
    catalog = random_catalog(rng, n_users=3, n_products=4,
                             n_broadcast_products=4, n_broadcasts=12)
    assert len(catalog.advert_matched_products) >= 2
    exposure = compute_exposure(list(catalog.viewing), list(catalog.broadcasts))
    user = catalog.user_ids[0]
    fm = build_matrix(catalog, exposure, ModelBase(BaseKind.USER_BASED, user),
                      InputConfig(InputKind.DEMOGRAPHICS), Behavior.ACTUAL_PURCHASE)
    assert fm.rows == len(catalog.advert_matched_products)
    assert np.all(fm.values == fm.values[0])


def test_weekday_matrix_is_slot_marginalization():
    rng = np.random.default_rng(23)
    for trial in range(10):
        catalog = random_catalog(rng, n_users=5, n_products=3, n_viewing=14,
                                 n_broadcasts=10)
        if not catalog.advert_matched_products:
            continue
        exposure = compute_exposure(list(catalog.viewing), list(catalog.broadcasts))
        base = ModelBase(BaseKind.PRODUCT_BASED, catalog.advert_matched_products[0])
        slot_fm = build_matrix(catalog, exposure, base,
                               InputConfig(InputKind.VIEW_WEEKDAY_SLOT),
                               Behavior.ACTUAL_PURCHASE)
        week_fm = build_matrix(catalog, exposure, base,
                               InputConfig(InputKind.VIEW_WEEKDAY),
                               Behavior.ACTUAL_PURCHASE)
        collapsed = slot_fm.values.reshape(slot_fm.rows, 7, 2).sum(axis=2)
        assert np.array_equal(collapsed, week_fm.values)


def test_rows_sorted_by_user_product(tiny_catalog):
    exposure = ExposureMatrix()
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                      InputConfig(InputKind.DEMOGRAPHICS), Behavior.ACTUAL_PURCHASE)
    assert fm.row_keys == sorted(fm.row_keys)


def test_standardize_flag(tiny_catalog):
    exposure = compute_exposure(list(tiny_catalog.viewing),
                                list(tiny_catalog.broadcasts))
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                      InputConfig(InputKind.VIEW_WEEKDAY_SLOT),
                      Behavior.ACTUAL_PURCHASE, standardize=True)
    nonconstant = fm.values.std(axis=0) > 0
    assert np.allclose(fm.values.mean(axis=0), 0.0)
    assert np.allclose(fm.values.std(axis=0)[nonconstant], 1.0)


def test_matrix_dump_header(tiny_catalog, tmp_path):
    exposure = ExposureMatrix()
    fm = build_matrix(tiny_catalog, exposure, ModelBase(BaseKind.PRODUCT_BASED, "p01"),
                      InputConfig(InputKind.VIEW_WEEKDAY), Behavior.ACTUAL_PURCHASE)
    path = tmp_path / "matrix.tsv"
    write_matrix(fm, path)
    header = path.read_text().splitlines()[0].split("\t")
    assert header[:2] == ["user_id", "product_id"]
    assert header[2:] == fm.feature_names
