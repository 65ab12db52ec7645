import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenewise.errors import DomainError, InvalidDistribution, UnknownTag
from scenewise.evaluation import (
    TagEmbeddingSpace,
    load_tag_embeddings,
    merge_equivalents,
    merged_distribution,
    micro_f1,
    pair_permutations,
    similarity_f1,
    similarity_report,
    tag_perplexity,
)


def space_of(tags, vectors, attribute="genre"):
    return TagEmbeddingSpace(attribute=attribute, tags=tuple(tags),
                             vectors=np.asarray(vectors, dtype=float))


def random_space(seed, n_tags=5, dim=6, attribute="genre"):
    rng = np.random.default_rng(seed)
    tags = tuple(f"tag{i}" for i in range(n_tags))
    return space_of(tags, rng.normal(size=(n_tags, dim)), attribute)


# ---------------------------------------------------------------------------
# micro F1


def test_micro_f1_perfect():
    gold = {"a": {"x"}, "b": {"y"}}
    assert micro_f1(gold, gold) == 1.0


def test_micro_f1_all_negative_predictions():
    gold = {"a": {"x"}, "b": set()}
    pred = {"a": set(), "b": set()}
    assert micro_f1(pred, gold) == 0.0


def test_micro_f1_hand_count():
    gold = {"s1": {"a"}, "s2": {"b"}}
    pred = {"s1": {"a"}, "s2": {"a"}}
    # TP=1, FP=1, FN=1 -> P = R = 1/2 -> F1 = 0.5
    assert micro_f1(pred, gold) == 0.5


def test_micro_f1_symmetric_under_tag_permutation():
    gold = {"s1": {"a", "b"}, "s2": {"c"}}
    pred = {"s1": {"a"}, "s2": {"b", "c"}}
    rename = {"a": "z", "b": "y", "c": "x"}
    gold2 = {k: {rename[t] for t in v} for k, v in gold.items()}
    pred2 = {k: {rename[t] for t in v} for k, v in pred.items()}
    assert micro_f1(pred, gold) == micro_f1(pred2, gold2)


# ---------------------------------------------------------------------------
# percentiles


def test_percentile_identical_tag_is_100():
    s = random_space(0)
    assert s.percentile("tag0", "tag0") == 100.0


def test_percentile_distinct_pairs_below_100():
    s = random_space(1)
    for a, b in s.pairs():
        assert s.percentile(a, b) < 100.0


def test_percentile_most_dissimilar_pair_lowest():
    s = random_space(2)
    pairs = s.pairs()
    percentiles = {p: s.percentile(*p) for p in pairs}
    sims = {p: s.similarity(*p) for p in pairs}
    worst = min(pairs, key=lambda p: sims[p])
    assert percentiles[worst] == min(percentiles.values())
    assert percentiles[worst] == 0.0


def test_percentile_four_tag_hand_computed():
    # unit vectors at known angles make cosines explicit
    vectors = [[1, 0], [1, 0], [0, 1], [-1, 0]]
    s = space_of(["a", "b", "c", "d"], vectors)
    # pair sims: ab=1, ac=0, ad=-1, bc=0, bd=-1, cd=0  -> sorted [-1,-1,0,0,0,1]
    assert s.percentile("a", "b") == pytest.approx(100 * 5 / 6)
    assert s.percentile("a", "c") == pytest.approx(100 * 2 / 6)
    assert s.percentile("a", "d") == 0.0


def test_percentile_unknown_tag():
    s = random_space(3)
    with pytest.raises(UnknownTag):
        s.percentile("tag0", "nope")


# ---------------------------------------------------------------------------
# similarity F1


def random_fixture(seed, n_scripts=8, n_tags=5):
    rng = np.random.default_rng(seed)
    space = random_space(seed + 1000, n_tags=n_tags)
    gold, pred = {}, {}
    for i in range(n_scripts):
        key = f"s{i}"
        gold[key] = {t for t in space.tags if rng.random() < 0.4}
        pred[key] = {t for t in space.tags if rng.random() < 0.4}
    return pred, gold, space


@pytest.mark.parametrize("seed", range(25))
def test_similarity_f1_cutoff_100_equals_micro(seed):
    pred, gold, space = random_fixture(seed)
    assert similarity_f1(pred, gold, space, 100.0) == micro_f1(pred, gold)


@pytest.mark.parametrize("seed", range(25))
def test_similarity_f1_monotone_in_cutoff(seed):
    pred, gold, space = random_fixture(seed)
    values = [similarity_f1(pred, gold, space, c)
              for c in (100, 95, 90, 85, 80, 75, 70)]
    for lo, hi in zip(values, values[1:]):
        assert hi >= lo


def test_similarity_f1_cutoff_zero_matches_everything_possible():
    pred, gold, space = random_fixture(99)
    pred = {k: v or {"tag0"} for k, v in pred.items()}
    gold = {k: v or {"tag1"} for k, v in gold.items()}
    f1 = similarity_f1(pred, gold, space, 0.0)
    # every prediction matches up to gold availability
    tp = sum(min(len(pred[k]), len(gold[k])) for k in gold)
    p_total = sum(len(v) for v in pred.values())
    g_total = sum(len(v) for v in gold.values())
    assert f1 == pytest.approx(2 * tp / (p_total + g_total))


def test_similarity_f1_crime_heist_style_pair():
    # "crime" and "heist" nearly parallel, "romance" far away
    vectors = [[1.0, 0.0], [0.96, 0.28], [-1.0, 0.2], [0.1, -1.0]]
    space = space_of(["crime", "heist", "pastoral", "romance"], vectors)
    pred = {"s": {"crime"}}
    gold = {"s": {"heist"}}
    pct = space.percentile("crime", "heist")
    assert similarity_f1(pred, gold, space, pct) == 1.0  # TP at its percentile
    assert similarity_f1(pred, gold, space, 100.0) == 0.0  # FP above it


def test_similarity_f1_one_to_one_consumption():
    # two predictions near one gold tag: only one can claim it
    vectors = [[1.0, 0.0], [0.99, 0.14], [0.98, 0.2]]
    space = space_of(["g", "p1", "p2"], vectors)
    pred = {"s": {"p1", "p2"}}
    gold = {"s": {"g"}}
    f1 = similarity_f1(pred, gold, space, 0.0)
    # TP=1, FP=1, FN=0
    assert f1 == pytest.approx(2 / 3)


# ---------------------------------------------------------------------------
# merging


def test_merge_all_singletons_above_all_percentiles():
    s = random_space(5)
    classes = merge_equivalents(s, 100.0)
    assert len(classes) == len(s.tags)


def test_merge_cutoff_zero_single_class():
    s = random_space(6)
    classes = merge_equivalents(s, 0.0)
    assert len(classes) == 1
    assert set(classes[0]) == set(s.tags)


def test_merge_transitive_chain():
    # a~b and b~c highly similar; a~c less so, still one class via transitivity
    vectors = [[1.0, 0.0], [0.95, 0.31], [0.81, 0.59], [-1.0, 0.0], [0.0, -1.0]]
    s = space_of(["a", "b", "c", "x", "y"], vectors)
    pct_ab = s.percentile("a", "b")
    pct_bc = s.percentile("b", "c")
    pct_ac = s.percentile("a", "c")
    cutoff = min(pct_ab, pct_bc)
    assert pct_ac < cutoff
    classes = merge_equivalents(s, cutoff)
    assert ("a", "b", "c") in classes


def test_merge_class_count_nonincreasing():
    s = random_space(7)
    counts = [len(merge_equivalents(s, c)) for c in (100, 80, 60, 40, 20, 0)]
    for hi, lo in zip(counts, counts[1:]):
        assert lo <= hi


# ---------------------------------------------------------------------------
# perplexity and permutations


def test_perplexity_uniform_eight():
    assert tag_perplexity([1 / 8] * 8) == pytest.approx(8.0, abs=1e-12)


def test_perplexity_point_mass():
    assert tag_perplexity([1.0, 0.0, 0.0]) == 1.0


def test_perplexity_half_quarter_quarter():
    assert tag_perplexity([0.5, 0.25, 0.25]) == pytest.approx(2 ** 1.5)


def test_perplexity_invalid():
    with pytest.raises(InvalidDistribution):
        tag_perplexity([0.5, 0.4])
    with pytest.raises(InvalidDistribution):
        tag_perplexity([1.5, -0.5])


def test_pair_permutations_values():
    assert pair_permutations(2) == 2
    assert pair_permutations(5) == 20
    for n in range(2, 101):
        p = pair_permutations(n)
        assert n * n - n - p == 0
        assert p == math.factorial(n) // math.factorial(n - 2)


def test_pair_permutations_domain():
    with pytest.raises(DomainError):
        pair_permutations(1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_merging_never_increases_perplexity(seed, n_tags):
    rng = np.random.default_rng(seed)
    space = random_space(seed, n_tags=n_tags)
    counts = {t: int(rng.integers(1, 50)) for t in space.tags}
    base = tag_perplexity(merged_distribution(counts, merge_equivalents(space, 100)))
    for cutoff in (90, 70, 50, 20, 0):
        merged = tag_perplexity(
            merged_distribution(counts, merge_equivalents(space, cutoff)))
        assert merged <= base + 1e-9
        base = merged


# ---------------------------------------------------------------------------
# file I/O and report


def test_load_tag_embeddings_round_trip(tmp_path):
    path = tmp_path / "tags.tsv"
    path.write_text("genre\tcrime\t1.0 0.0\ngenre\theist\t0.9 0.1\n"
                    "mood\tdark\t0.0 1.0\n")
    spaces = load_tag_embeddings(path)
    assert set(spaces) == {"genre", "mood"}
    assert spaces["genre"].tags == ("crime", "heist")
    assert spaces["genre"].similarity("crime", "crime") == pytest.approx(1.0)


def test_similarity_report_shape():
    pred, gold, space = random_fixture(3)
    counts = {t: 5 for t in space.tags}
    report = similarity_report(pred, gold, space, [100, 90, 70], counts)
    assert report["attribute"] == "genre"
    assert set(report["cutoffs"]) == {"100", "90", "70"}
    base = report["cutoffs"]["100"]
    assert base["perplexity_reduction"] == 0.0
    assert base["cardinality_reduction"] == 0.0
    assert report["cutoffs"]["70"]["perplexity_reduction"] >= 0.0
