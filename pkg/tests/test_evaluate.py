import csv

import pytest

from driftloc.augment import AugmentConfig
from driftloc.data import ReferencePoint, split_by_ci
from driftloc.encoder import EncoderConfig
from driftloc.evaluate import (EvalReport, evaluate_baseline_over_time,
                               evaluate_over_time, fpr_sweep,
                               localization_error, write_report_csv,
                               write_sweep_csv)
from driftloc.localizer import Prediction, TrainConfig, train
from driftloc.simulate import SimConfig, generate


def pred_at(x, y):
    return Prediction(x=x, y=y, rp_id=0, neighbor_rps=((0, 0.0),))


def test_error_zero_at_truth():
    assert localization_error(pred_at(2.0, 3.0), ReferencePoint(0, 2.0, 3.0)) == 0.0


def test_error_three_four_five():
    assert localization_error(pred_at(3.0, 4.0), ReferencePoint(0, 0.0, 0.0)) == 5.0


def test_mean_of_errors_is_arithmetic():
    errors = [localization_error(pred_at(3.0, 0.0), ReferencePoint(0, 0.0, 0.0)),
              localization_error(pred_at(0.0, 0.0), ReferencePoint(0, 0.0, 0.0))]
    assert sum(errors) / 2 == 1.5


def small_cfg():
    return TrainConfig(
        encoder=EncoderConfig(conv1_filters=8, conv2_filters=12, fc_units=24,
                              embed_dim=3, dropout_rate=0.1),
        augment=AugmentConfig(p_upper=0.5, noise_sigma=0.1),
        epochs=4, batch_size=16,
    )


@pytest.fixture(scope="module")
def scenario():
    cfg = SimConfig(width=12.0, height=0.5, rp_spacing=3.0, n_aps=12,
                    n_cis=3, fpr=4, seed=33)
    ds, _ = generate(cfg)
    return ds


@pytest.fixture(scope="module")
def trained(scenario):
    tr, te = split_by_ci(scenario, 0, 4, seed=2)
    model, index = train(tr, small_cfg(), seed=9)
    return tr, te, model, index


def test_memorization_gives_zero_error(trained):
    tr, _, model, index = trained
    rep = evaluate_over_time(model, index, tr, k=1)
    assert rep.per_ci_mean_error[0] == 0.0


def test_report_shape_and_weighted_overall(trained):
    _, te, model, index = trained
    rep = evaluate_over_time(model, index, te, k=3)
    assert set(rep.cis()) == set(te.cis())
    assert sum(rep.n_queries_per_ci.values()) == len(te)
    weighted = sum(rep.per_ci_mean_error[c] * rep.n_queries_per_ci[c]
                   for c in rep.cis()) / len(te)
    assert abs(weighted - rep.overall_mean_error) <= 1e-9


def test_side_by_side_same_queries(trained):
    tr, te, model, index = trained
    a = evaluate_over_time(model, index, te, k=3)
    b = evaluate_baseline_over_time(tr, te, k=3)
    assert a.n_queries_per_ci == b.n_queries_per_ci
    assert a.method_label != b.method_label


def test_report_csv_schema(tmp_path, trained):
    tr, te, model, index = trained
    a = evaluate_over_time(model, index, te, k=3)
    b = evaluate_baseline_over_time(tr, te, k=3)
    path = tmp_path / "report.csv"
    write_report_csv([a, b], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["ci", "method", "n", "mean_error_m"]
    methods = {r[1] for r in rows[1:]}
    assert methods == {"embedding-knn", "raw-knn"}
    assert len(rows) == 1 + 2 * len(a.cis())


def test_fpr_sweep_table_shape(scenario, tmp_path):
    result = fpr_sweep(scenario, fprs=[1, 2], cfg=small_cfg(), repeats=2,
                       seed=4, train_ci=0, k=1)
    assert result.fprs == (1, 2)
    assert result.repeats == 2
    assert set(result.overall) == {1, 2}
    for fpr in (1, 2):
        for ci in result.cis:
            assert (fpr, ci) in result.mean_error
    path = tmp_path / "sweep.csv"
    write_sweep_csv(result, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["fpr", "ci", "mean_error_m"]
    overall_rows = [r for r in rows[1:] if r[1] == "overall"]
    assert len(overall_rows) == 2


def test_fpr_sweep_rejects_unavailable_fpr(scenario):
    with pytest.raises(ValueError, match="exceeds"):
        fpr_sweep(scenario, fprs=[99], cfg=small_cfg(), repeats=1, seed=0)


def test_fpr_sweep_deterministic(scenario):
    r1 = fpr_sweep(scenario, fprs=[1], cfg=small_cfg(), repeats=1, seed=8, k=1)
    r2 = fpr_sweep(scenario, fprs=[1], cfg=small_cfg(), repeats=1, seed=8, k=1)
    assert r1.overall == r2.overall
    assert r1.mean_error == r2.mean_error


def test_eval_report_window_mean():
    rep = EvalReport(per_ci_mean_error={1: 2.0, 2: 4.0},
                     overall_mean_error=3.0,
                     n_queries_per_ci={1: 10, 2: 30},
                     method_label="x")
    assert rep.window_mean([1, 2]) == pytest.approx((2.0 * 10 + 4.0 * 30) / 40)
    with pytest.raises(ValueError):
        rep.window_mean([7])
