import numpy as np
import pytest

from evopath.config import SyntheticSpec
from evopath.data import (
    ArrayDataset,
    DatasetManifest,
    Row,
    gen_synthetic,
    group_labels,
    kfold_split,
    load_manifest,
    losocv_split,
    save_manifest,
    utterance_aggregate,
)


def make_manifest(num_subjects=4, utts_per_subject=6, segments_per_utt=3):
    rows = []
    labels = ["anger", "joy", "sadness"]
    i = 0
    for s in range(num_subjects):
        for u in range(utts_per_subject):
            for _ in range(segments_per_utt):
                rows.append(
                    Row(f"f{i}.feat", labels[(s + u) % 3], f"subj{s}", f"utt{u}")
                )
                i += 1
    return DatasetManifest(name="toy", class_list=labels, rows=rows)


def test_manifest_round_trip(tmp_path):
    m = make_manifest()
    p = tmp_path / "m.csv"
    save_manifest(p, m)
    loaded = load_manifest(p, name="toy")
    assert loaded.class_list == m.class_list
    assert loaded.rows == m.rows


def test_manifest_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("path,label,speaker,utt\na,b,c,d\n")
    with pytest.raises(ValueError, match="header"):
        load_manifest(p)


def test_kfold_partitions_utterances():
    m = make_manifest(num_subjects=4, utts_per_subject=6)  # 24 utterances
    plan = kfold_split(m, k=5, seed=0)
    assert len(plan.folds) == 5
    keys = m.group_keys()
    all_test = np.concatenate([test for _, test in plan.folds])
    assert sorted(all_test.tolist()) == list(range(len(keys)))
    sizes = []
    for train, test in plan.folds:
        train_groups = {keys[i] for i in train}
        test_groups = {keys[i] for i in test}
        assert not train_groups & test_groups  # utterances never straddle
        sizes.append(len(test_groups))
    assert max(sizes) - min(sizes) <= 1


def test_kfold_deterministic_and_errors():
    m = make_manifest()
    p1 = kfold_split(m, 5, seed=3)
    p2 = kfold_split(m, 5, seed=3)
    for (a, b), (c, d) in zip(p1.folds, p2.folds):
        assert np.array_equal(a, c) and np.array_equal(b, d)
    with pytest.raises(ValueError, match="utterances"):
        kfold_split(make_manifest(num_subjects=1, utts_per_subject=3), k=5, seed=0)


def test_losocv_one_fold_per_subject():
    m = make_manifest(num_subjects=10)
    plan = losocv_split(m)
    assert len(plan.folds) == 10
    for train, test in plan.folds:
        train_subj = {m.rows[i].subject for i in train}
        test_subj = {m.rows[i].subject for i in test}
        assert len(test_subj) == 1
        assert not train_subj & test_subj
    all_test = np.concatenate([t for _, t in plan.folds])
    assert sorted(all_test.tolist()) == list(range(len(m.rows)))


def test_losocv_single_subject_error():
    m = make_manifest(num_subjects=1)
    with pytest.raises(ValueError, match="subjects"):
        losocv_split(m)


def test_gen_synthetic_deterministic():
    spec = SyntheticSpec(num_classes=3, dim=32, samples_per_class=10, subjects=3)
    a_src, a_dst = gen_synthetic(spec, seed=5)
    b_src, b_dst = gen_synthetic(spec, seed=5)
    assert a_src.x.tobytes() == b_src.x.tobytes()
    assert a_dst.x.tobytes() == b_dst.x.tobytes()
    assert np.array_equal(a_src.y, b_src.y)


def test_gen_synthetic_relatedness_extremes():
    spec = SyntheticSpec(num_classes=3, dim=32, samples_per_class=2, subjects=2, relatedness=1.0)
    src, dst = gen_synthetic(spec, seed=0)
    assert np.allclose(src.prototypes, dst.prototypes, atol=1e-12)

    spec0 = SyntheticSpec(num_classes=3, dim=32, samples_per_class=2, subjects=2, relatedness=0.0)
    for seed in range(20):
        s, d = gen_synthetic(spec0, seed=seed)
        inner = np.abs(np.sum(s.prototypes * d.prototypes, axis=1))
        assert np.all(inner < 1e-10)  # fresh directions are orthogonalized


def test_gen_synthetic_relatedness_is_inner_product():
    spec = SyntheticSpec(num_classes=4, dim=64, samples_per_class=2, subjects=2, relatedness=0.9)
    src, dst = gen_synthetic(spec, seed=1)
    inner = np.sum(src.prototypes * dst.prototypes, axis=1)
    assert np.allclose(inner, 0.9, atol=1e-10)


def test_gen_synthetic_noiseless_nearest_prototype_is_perfect():
    spec = SyntheticSpec(num_classes=4, dim=32, samples_per_class=8, subjects=2, noise=0.0)
    src, _ = gen_synthetic(spec, seed=2)
    scores = src.x @ src.prototypes.T
    assert np.array_equal(scores.argmax(axis=1), src.y)


def test_gen_synthetic_subject_structure():
    spec = SyntheticSpec(num_classes=2, dim=16, samples_per_class=9, subjects=3)
    src, _ = gen_synthetic(spec, seed=3)
    assert set(src.subjects) == {"s0", "s1", "s2"}
    assert len(set(src.utterances)) == len(src)  # one segment per utterance


def test_gen_synthetic_invalid_spec():
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=0)
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=10, dim=8)


def test_utterance_aggregate_mean_and_argmax():
    keys = np.array(["u1", "u2", "u2"], dtype=object)
    post = np.array([[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]])
    uniq, means, preds = utterance_aggregate(keys, post)
    assert uniq.tolist() == ["u1", "u2"]
    assert np.allclose(means[1], [0.4, 0.6])
    assert preds.tolist() == [0, 1]


def test_utterance_aggregate_tie_prefers_lowest_class():
    keys = np.array(["u"], dtype=object)
    _, _, preds = utterance_aggregate(keys, np.array([[0.5, 0.5]]))
    assert preds.tolist() == [0]


def test_utterance_aggregate_posteriors_sum_to_one():
    rng = np.random.default_rng(0)
    post = rng.dirichlet(np.ones(4), size=30)
    keys = np.array([f"u{i % 7}" for i in range(30)], dtype=object)
    _, means, _ = utterance_aggregate(keys, post)
    assert np.allclose(means.sum(axis=1), 1.0, atol=1e-9)


def test_utterance_aggregate_empty_errors():
    with pytest.raises(ValueError, match="empty group"):
        utterance_aggregate(np.array([], dtype=object), np.zeros((0, 2)))


def test_group_labels_aligns_with_aggregate_order():
    keys = np.array(["b", "a", "b", "a"], dtype=object)
    y = np.array([1, 0, 1, 0])
    uniq, _, _ = utterance_aggregate(keys, np.tile([0.5, 0.5], (4, 1)))
    labels = group_labels(keys, y)
    assert uniq.tolist() == ["a", "b"]
    assert labels.tolist() == [0, 1]


def test_array_dataset_take_and_group_ids():
    spec = SyntheticSpec(num_classes=2, dim=16, samples_per_class=4, subjects=2)
    src, _ = gen_synthetic(spec, seed=0)
    sub = src.take([0, 1, 2])
    assert len(sub) == 3
    assert sub.group_ids()[0] == f"{sub.subjects[0]}|{sub.utterances[0]}"
    plan = losocv_split(src)
    assert len(plan.folds) == 2
