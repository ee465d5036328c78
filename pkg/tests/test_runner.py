import numpy as np
import pytest

from adpredict.features import InputKind
from adpredict.runner import (MatrixConfig, RESULTS_FILE, RunnerError, SPECS_FILE,
                              StoreError, enumerate_experiments, load_score_records,
                              matrix_counts, remaining_specs, run_matrix, spec_seed)
from adpredict.learners import LearnerParams
from adpredict.synthgen import GenConfig, generate_panel
from adpredict.targets import Behavior


@pytest.fixture(scope="module")
def small_catalog():
    return generate_panel(GenConfig(n_users=12, n_products=3, n_advert_matched=2,
                                    seed=5, broadcasts_per_day=3))


SMALL_MATRIX = MatrixConfig(
    models=("logreg",),
    configs=(InputKind.VIEW_WEEKDAY, InputKind.DEMOGRAPHICS),
    categories=(1, 4),
    k=3,
)


def brute_force_enumeration_count(n_bases, matrix) -> int:
    count = 0
    for _ in range(n_bases):
        for _model in matrix.models:
            for behavior in matrix.behaviors:
                for _category in matrix.categories:
                    for kind in matrix.configs:
                        states = 1
                        if (matrix.pi_feature_states == "both"
                                and kind.has_demographics
                                and behavior is Behavior.ACTUAL_PURCHASE):
                            states = 2
                        count += states
    return count


def test_expanded_counts_reproduce_reference_totals():
    counts = matrix_counts(MatrixConfig(accounting="expanded"),
                           n_product_bases=36, n_user_bases=3000)
    assert counts["expanded_inputs"] == 30360
    assert counts["expanded_per_model"] == 364320
    assert counts["expanded_total"] == 1092960


def test_canonical_count_formula_two_by_two():
    # 2 users + 2 advert-matched products, every selection: per base and
    # model the actual-purchase target admits 8 configurations (5 plus 3
    # intent-feature variants) and purchase intention admits 5, for
    # (8 + 5) * 6 = 78 combinations; 4 bases x 78 x 3 models = 936.
    matrix = MatrixConfig()
    counts = matrix_counts(matrix, n_product_bases=2, n_user_bases=2)
    assert counts["canonical_specs"] == 936
    assert counts["canonical_specs"] == brute_force_enumeration_count(4, matrix)


def test_enumeration_is_deterministic_and_duplicate_free(small_catalog):
    specs_a = enumerate_experiments(small_catalog, SMALL_MATRIX)
    specs_b = enumerate_experiments(small_catalog, SMALL_MATRIX)
    assert specs_a == specs_b
    ids = [s.spec_id for s in specs_a]
    assert len(set(ids)) == len(ids)
    counts = matrix_counts(SMALL_MATRIX, n_product_bases=2, n_user_bases=12)
    assert len(specs_a) == counts["canonical_specs"]


def test_enumeration_matches_catalog_bases(small_catalog):
    specs = enumerate_experiments(small_catalog, SMALL_MATRIX)
    product_ids = {s.base.base_id for s in specs if s.base.kind.value == "product"}
    assert product_ids == set(small_catalog.advert_matched_products)


def test_pi_states_respect_constraints(small_catalog):
    matrix = MatrixConfig(models=("logreg",),
                          configs=(InputKind.DEMOGRAPHICS, InputKind.VIEW_WEEKDAY))
    specs = enumerate_experiments(small_catalog, matrix)
    for spec in specs:
        if spec.config.include_pi_feature:
            assert spec.behavior is Behavior.ACTUAL_PURCHASE
            assert spec.config.kind.has_demographics


def test_spec_seed_is_stable():
    assert spec_seed(1, "a|b") == spec_seed(1, "a|b")
    assert spec_seed(1, "a|b") != spec_seed(2, "a|b")
    assert spec_seed(1, "a|b") != spec_seed(1, "a|c")


def test_unknown_selection_rejected(small_catalog):
    with pytest.raises(RunnerError):
        enumerate_experiments(small_catalog,
                              MatrixConfig(products=("p999",)))


def test_matrix_config_round_trips_via_dict():
    matrix = MatrixConfig(models=("svm",), categories=(0, 4),
                          users=("u0001",), accounting="expanded",
                          learner_params=LearnerParams(svm_max_epochs=10))
    clone = MatrixConfig.from_dict(matrix.to_dict())
    assert clone == matrix


def test_run_store_bytes_independent_of_workers(small_catalog, tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    run_matrix(small_catalog, SMALL_MATRIX, a_dir, global_seed=9, workers=1)
    run_matrix(small_catalog, SMALL_MATRIX, b_dir, global_seed=9, workers=2)
    assert (a_dir / RESULTS_FILE).read_bytes() == (b_dir / RESULTS_FILE).read_bytes()
    assert (a_dir / SPECS_FILE).read_bytes() == (b_dir / SPECS_FILE).read_bytes()


def test_rerun_identical_and_seed_sensitive(small_catalog, tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    c_dir = tmp_path / "c"
    run_matrix(small_catalog, SMALL_MATRIX, a_dir, global_seed=9)
    run_matrix(small_catalog, SMALL_MATRIX, b_dir, global_seed=9)
    run_matrix(small_catalog, SMALL_MATRIX, c_dir, global_seed=10)
    assert (a_dir / RESULTS_FILE).read_bytes() == (b_dir / RESULTS_FILE).read_bytes()
    assert (a_dir / RESULTS_FILE).read_bytes() != (c_dir / RESULTS_FILE).read_bytes()


def test_store_row_count_equals_spec_count(small_catalog, tmp_path):
    manifest = run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=1)
    records, failures = load_score_records(tmp_path / "s")
    assert manifest["spec_count"] == len(records) + len(failures)
    assert manifest["executed"] == manifest["spec_count"]
    assert sum(manifest["counts_by_model"].values()) == manifest["spec_count"]
    assert sum(manifest["counts_by_base_kind"].values()) == manifest["spec_count"]
    assert manifest["counts_by_base_kind"]["product"] > 0
    assert manifest["counts_by_base_kind"]["user"] > 0


def test_resume_on_complete_store_is_empty(small_catalog, tmp_path):
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=1)
    assert remaining_specs(small_catalog, tmp_path / "s") == []


def test_limit_then_resume_matches_uninterrupted(small_catalog, tmp_path):
    full_dir = tmp_path / "full"
    part_dir = tmp_path / "part"
    run_matrix(small_catalog, SMALL_MATRIX, full_dir, global_seed=4)
    run_matrix(small_catalog, SMALL_MATRIX, part_dir, global_seed=4, limit=7)
    remaining = remaining_specs(small_catalog, part_dir)
    total = len(enumerate_experiments(small_catalog, SMALL_MATRIX))
    assert len(remaining) == total - 7
    run_matrix(small_catalog, SMALL_MATRIX, part_dir, global_seed=4, resume=True)
    assert ((full_dir / RESULTS_FILE).read_bytes()
            == (part_dir / RESULTS_FILE).read_bytes())


def test_resume_rejects_changed_catalog(small_catalog, tmp_path):
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=4, limit=3)
    other = generate_panel(GenConfig(n_users=12, n_products=3, n_advert_matched=2,
                                     seed=6, broadcasts_per_day=3))
    with pytest.raises(StoreError, match="fingerprint"):
        run_matrix(other, SMALL_MATRIX, tmp_path / "s", global_seed=4, resume=True)
    with pytest.raises(StoreError, match="fingerprint"):
        remaining_specs(other, tmp_path / "s")


def test_resume_rejects_changed_seed(small_catalog, tmp_path):
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=4, limit=3)
    with pytest.raises(StoreError, match="seed"):
        run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=5,
                   resume=True)


def test_fresh_run_refuses_existing_store(small_catalog, tmp_path):
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=4, limit=1)
    with pytest.raises(StoreError, match="resume"):
        run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=4)


def test_failures_recorded_not_fatal(tmp_path):
    # One advert-matched product gives user-based rows = 1 < k: every
    # user-based spec fails while product-based specs succeed.
    catalog = generate_panel(GenConfig(n_users=10, n_products=2,
                                       n_advert_matched=1, seed=2,
                                       broadcasts_per_day=3))
    matrix = MatrixConfig(models=("logreg",), configs=(InputKind.VIEW_WEEKDAY,),
                          categories=(1,), k=3)
    manifest = run_matrix(catalog, matrix, tmp_path / "s", global_seed=0)
    records, failures = load_score_records(tmp_path / "s")
    assert failures and records
    assert manifest["spec_count"] == len(records) + len(failures)
    assert all("rows" in f["error"] or "k=" in f["error"] for f in failures)


def test_load_round_trips_fold_details(small_catalog, tmp_path):
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=1)
    records, _ = load_score_records(tmp_path / "s")
    record = records[0]
    assert len(record.cv.folds) == SMALL_MATRIX.k
    total_rows = record.cv.folds[0].confusion.total
    assert total_rows > 0
    assert record.cv.mean_f1 == pytest.approx(
        sum(f.f1 for f in record.cv.folds) / SMALL_MATRIX.k)


def test_progress_callback_counts(small_catalog, tmp_path):
    seen = []
    run_matrix(small_catalog, SMALL_MATRIX, tmp_path / "s", global_seed=1,
               progress=lambda done, total, spec_id, status: seen.append(done))
    assert seen == list(range(1, len(seen) + 1))
