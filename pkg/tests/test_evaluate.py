import json

import numpy as np
import pytest

from somvet.evaluate import (
    PvSelection,
    RocCurve,
    classify_stamp,
    classify_stamps,
    confusion_rates,
    figure_of_merit,
    mdr_at_fpr,
    order_cells_by_percentile,
    ratio_map,
    roc_switch_off,
    roc_to_csv,
    train_reference_scorer,
)
from somvet.model import assign_cell, assign_cells
from somvet.stamps import as_pixel_array

from test_model import identity_model


@pytest.fixture(scope="module")
def labeled_sets(corpus_mixed):
    pix = as_pixel_array(corpus_mixed)
    real = np.array([s.label == "real" for s in corpus_mixed])
    return pix[real], pix[~real]


# --- selections ---------------------------------------------------------------

def test_selection_bounds_checked():
    with pytest.raises(ValueError, match="outside"):
        PvSelection(3, frozenset({(3, 0)}))


def test_selection_json_round_trip():
    sel = PvSelection(4, frozenset({(0, 1), (3, 3), (2, 0)}))
    back = PvSelection.from_json(json.loads(sel.canonical_bytes()))
    assert back == sel
    assert back.etag() == sel.etag()


def test_selection_toggle_involution():
    sel = PvSelection(4, frozenset({(1, 1)}))
    assert sel.toggled(2, 2).toggled(2, 2) == sel
    assert sel.toggled(1, 1).selected == frozenset()


# --- classification and rates ---------------------------------------------------

def test_all_cells_selected_everything_real(small_model, labeled_sets):
    real, bogus = labeled_sets
    sel = PvSelection.all_cells(small_model.m)
    assert classify_stamps(small_model, sel, real).all()
    assert classify_stamps(small_model, sel, bogus).all()
    mdr, fpr = confusion_rates(small_model, sel, real, bogus)
    assert (mdr, fpr) == (0.0, 1.0)


def test_no_cells_selected_everything_bogus(small_model, labeled_sets):
    real, bogus = labeled_sets
    sel = PvSelection.none(small_model.m)
    mdr, fpr = confusion_rates(small_model, sel, real, bogus)
    assert (mdr, fpr) == (1.0, 0.0)


def test_single_stamp_with_its_bmu_selected(small_model, corpus_mixed):
    stamp = corpus_mixed[0]
    cell = assign_cell(small_model, stamp.pixels)
    sel = PvSelection(small_model.m, frozenset({cell}))
    assert classify_stamp(small_model, sel, stamp) == "real"


def test_confusion_rates_match_per_stamp_recount(small_model, labeled_sets):
    real, bogus = labeled_sets
    rng = np.random.default_rng(5)
    m = small_model.m
    cells = frozenset(
        (int(i), int(j)) for i, j in rng.integers(0, m, size=(10, 2))
    )
    sel = PvSelection(m, cells)
    mdr, fpr = confusion_rates(small_model, sel, real, bogus)

    def recount(pixels):
        hits = 0
        for k in range(pixels.shape[0]):
            if assign_cell(small_model, pixels[k]) in sel.selected:
                hits += 1
        return hits

    assert mdr == pytest.approx(1.0 - recount(real) / real.shape[0])
    assert fpr == pytest.approx(recount(bogus) / bogus.shape[0])


def test_confusion_rates_reject_empty_sets(small_model, labeled_sets):
    real, _ = labeled_sets
    sel = PvSelection.all_cells(small_model.m)
    with pytest.raises(ValueError, match="non-empty"):
        confusion_rates(small_model, sel, real, np.empty((0, 32, 32)))


# --- reference scorer -----------------------------------------------------------

def test_scorer_separable_corpus_accuracy(corpus_easy):
    # identity-latent model: the corpus is linearly separable by construction
    scorer = train_reference_scorer(identity_model(m=2), corpus_easy, seed=1)
    assert scorer.holdout_accuracy >= 0.95
    scores = scorer.scores(as_pixel_array(corpus_easy))
    assert scores.min() >= 0.0 and scores.max() <= 1.0


def test_scorer_shuffled_labels_near_chance(corpus_easy):
    rng = np.random.default_rng(0)
    fake = np.where(rng.integers(0, 2, len(corpus_easy)) == 1, "real", "bogus")
    scorer = train_reference_scorer(identity_model(m=2), corpus_easy, labels=fake, seed=1)
    assert abs(scorer.holdout_accuracy - 0.5) <= 0.05


def test_scorer_deterministic(small_model, corpus_easy):
    a = train_reference_scorer(small_model, corpus_easy, seed=3)
    b = train_reference_scorer(small_model, corpus_easy, seed=3)
    pix = as_pixel_array(corpus_easy[:50])
    assert np.array_equal(a.scores(pix), b.scores(pix))


def test_scorer_rejects_single_class(small_model, corpus_easy):
    real_only = [s for s in corpus_easy if s.label == "real"]
    with pytest.raises(ValueError, match="both"):
        train_reference_scorer(small_model, real_only, seed=0)


# --- cell ordering ---------------------------------------------------------------

class StubScorer:
    def __init__(self, table):
        self.table = table  # stamp checksum -> score

    def scores(self, stamps):
        return np.array([self.table[float(s.sum())] for s in np.asarray(stamps)])


def test_ordering_by_median_two_occupied_cells():
    model = identity_model(m=2, seed=4)
    # craft four stamps assigned to two distinct cells
    a = model.som.weights[0, 1].reshape(32, 32)
    b = model.som.weights[1, 0].reshape(32, 32)
    stamps = np.stack([a, a, b, b])
    cells = assign_cells(model, stamps)
    assert set(cells) == {1, 2}
    scores = {float(a.sum()): 0.15, float(b.sum()): 0.85}
    # members of cell A score {0.15, 0.15}; cell B {0.85, 0.85}
    order = order_cells_by_percentile(model, StubScorer(scores), stamps, 50)
    occupied = [c for c in order if c in {(0, 1), (1, 0)}]
    assert occupied == [(0, 1), (1, 0)]
    # empty cells come first
    assert order[0] not in {(0, 1), (1, 0)} and order[1] not in {(0, 1), (1, 0)}


def test_ordering_ties_break_row_major(small_model, corpus_mixed):
    pix = as_pixel_array(corpus_mixed[:100])

    class Flat:
        def scores(self, stamps):
            return np.full(np.asarray(stamps).shape[0], 0.5)

    order = order_cells_by_percentile(small_model, Flat(), pix, 50)
    counts = np.bincount(assign_cells(small_model, pix), minlength=small_model.m**2)
    empty = [divmod(i, small_model.m) for i in range(small_model.m**2) if counts[i] == 0]
    occupied = [divmod(i, small_model.m) for i in range(small_model.m**2) if counts[i] > 0]
    assert order == empty + occupied  # both groups in row-major order


def test_ordering_agrees_with_independent_percentiles(small_model, corpus_mixed, labeled_sets):
    real, bogus = labeled_sets
    scorer = train_reference_scorer(small_model, corpus_mixed, seed=2)
    pix = as_pixel_array(corpus_mixed)
    for q in (99.0, 50.0):
        order = order_cells_by_percentile(small_model, scorer, pix, q)
        cells = assign_cells(small_model, pix)
        scores = scorer.scores(pix)
        keys = {}
        for flat in range(small_model.m**2):
            member = scores[cells == flat]
            keys[flat] = (0, 0.0) if member.size == 0 else (1, float(np.percentile(member, q)))
        want = sorted(range(small_model.m**2), key=lambda f: (keys[f], f))
        assert [i * small_model.m + j for i, j in order] == want


def test_ordering_validates_inputs(small_model, corpus_mixed):
    scorer = train_reference_scorer(small_model, corpus_mixed, seed=2)
    with pytest.raises(ValueError, match="\\[0, 100\\]"):
        order_cells_by_percentile(small_model, scorer, as_pixel_array(corpus_mixed[:5]), 120)
    with pytest.raises(ValueError, match="non-empty"):
        order_cells_by_percentile(small_model, scorer, np.empty((0, 32, 32)), 50)


# --- switch-off ROC ---------------------------------------------------------------

def row_major_ordering(m):
    return [divmod(i, m) for i in range(m * m)]


def test_roc_endpoints_and_count(small_model, labeled_sets):
    real, bogus = labeled_sets
    roc = roc_switch_off(small_model, row_major_ordering(small_model.m), real, bogus)
    M = small_model.m ** 2
    assert len(roc.points) == M + 1
    assert roc.points[0][:2] == (1.0, 0.0)
    assert roc.points[-1][:2] == (0.0, 1.0)
    assert roc.points[0][2] == M and roc.points[-1][2] == 0


def test_roc_monotone(small_model, labeled_sets):
    real, bogus = labeled_sets
    rng = np.random.default_rng(9)
    order = row_major_ordering(small_model.m)
    rng.shuffle(order)
    roc = roc_switch_off(small_model, order, real, bogus)
    fprs, mdrs = roc.fprs(), roc.mdrs()
    assert np.all(np.diff(fprs) <= 0)
    assert np.all(np.diff(mdrs) >= 0)


def test_roc_requires_full_ordering(small_model, labeled_sets):
    real, bogus = labeled_sets
    with pytest.raises(ValueError, match="every map cell"):
        roc_switch_off(small_model, row_major_ordering(small_model.m)[:-1], real, bogus)


def test_roc_csv_shape(small_model, labeled_sets):
    real, bogus = labeled_sets
    roc = roc_switch_off(small_model, row_major_ordering(small_model.m), real, bogus)
    lines = roc_to_csv(roc).strip().split("\n")
    assert lines[0] == "n_off,fpr,mdr"
    assert len(lines) == small_model.m ** 2 + 2
    assert lines[1].startswith("0,1.000000,0.000000")


# --- figure of merit ---------------------------------------------------------------

def test_fom_exact_point():
    roc = RocCurve(((1.0, 0.0, 2), (0.01, 0.08, 1), (0.0, 1.0, 0)))
    assert figure_of_merit(roc) == 0.08


def test_fom_step_convention_takes_largest_fpr_below_cut():
    roc = RocCurve(((1.0, 0.0, 3), (0.02, 0.05, 2), (0.005, 0.09, 1), (0.0, 1.0, 0)))
    assert figure_of_merit(roc) == 0.09


def test_fom_degenerate_two_point_curve():
    roc = RocCurve(((1.0, 0.0, 1), (0.0, 1.0, 0)))
    assert figure_of_merit(roc) == 1.0


def test_mdr_at_fpr_tie_takes_lowest_mdr():
    roc = RocCurve(((1.0, 0.0, 3), (0.03, 0.10, 2), (0.03, 0.20, 1), (0.0, 1.0, 0)))
    assert mdr_at_fpr(roc, 0.05) == 0.10


# --- ratio map ----------------------------------------------------------------------

def test_ratio_identical_sets_gives_ones(small_model, labeled_sets):
    real, _ = labeled_sets
    rm = ratio_map(small_model, real, real)
    occupied = rm.real_counts > 0
    assert np.allclose(rm.values[occupied], 1.0)
    assert np.isnan(rm.values[~occupied]).all()


def test_ratio_real_only_cell_marked(small_model, labeled_sets):
    real, bogus = labeled_sets
    rm = ratio_map(small_model, real, bogus)
    if rm.real_only.any():
        assert np.isnan(rm.values[rm.real_only]).all()
    grid = rm.to_json_grid()
    for i in range(small_model.m):
        for j in range(small_model.m):
            if rm.bogus_counts[i, j] == 0:
                assert grid[i][j] is None
            else:
                assert grid[i][j] == pytest.approx(rm.values[i, j])


def test_ratio_probability_closure(small_model, labeled_sets):
    real, bogus = labeled_sets
    rm = ratio_map(small_model, real, bogus)
    assert abs(rm.real_counts.sum() / real.shape[0] - 1.0) < 1e-9
    assert abs(rm.bogus_counts.sum() / bogus.shape[0] - 1.0) < 1e-9


def test_ratio_oracle_selection_has_higher_mean(small_model, corpus_mixed, labeled_sets):
    real, bogus = labeled_sets
    rm = ratio_map(small_model, real, bogus)
    finite = ~np.isnan(rm.values)
    majority_real = rm.real_counts * bogus.shape[0] > rm.bogus_counts * real.shape[0]
    inside = rm.values[finite & majority_real]
    outside = rm.values[finite & ~majority_real]
    if inside.size and outside.size:
        assert inside.mean() > outside.mean()
