import math

import numpy as np
import pytest

from scenewise import autodiff as ad
from scenewise import classifier as clf
from scenewise.classifier import (
    LoglinesModel,
    Sample,
    ScriptTagModel,
    TagTaxonomy,
    TrainConfig,
    average_precision,
    make_samples,
    predict_tags,
    reweighted_loss,
    train,
)
from scenewise.corpus import CorpusItem
from scenewise.encoders import EncoderKind, EncoderSpec, HierarchicalModel, Variant
from scenewise.errors import DataEmpty, NoPositives
from scenewise.parser import Scene, Screenplay, Statement, StatementKind

from conftest import make_vectors


def rng(seed=0):
    return np.random.default_rng(seed)


def test_loss_single_positive_at_zero_logit():
    z = ad.parameter(np.array([0.0]))
    loss = reweighted_loss(np.array([1.0]), z, np.array([1.0]))
    assert abs(loss.item() - math.log(2)) < 1e-12


def test_loss_single_negative_at_zero_logit():
    z = ad.parameter(np.array([0.0]))
    loss = reweighted_loss(np.array([0.0]), z, np.array([1.0]))
    assert abs(loss.item() - math.log(2)) < 1e-12


def test_loss_gradient_matches_finite_differences():
    r = rng(1)
    y = (r.random((3, 4)) < 0.4).astype(float)
    lam = r.uniform(0.2, 2.0, 4)
    z = ad.parameter(r.normal(size=(3, 4)))
    err = ad.gradcheck(lambda: reweighted_loss(y, z, lam), [z])
    assert err < 1e-6


def test_loss_reduces_to_bce_when_lambda_one():
    r = rng(2)
    for _ in range(20):
        y = (r.random((2, 5)) < 0.5).astype(float)
        zd = r.normal(size=(2, 5)) * 3
        z = ad.constant(zd)
        loss = reweighted_loss(y, z, np.ones(5)).item()
        s = 1.0 / (1.0 + np.exp(-zd))
        bce = -np.mean(y * np.log(s) + (1 - y) * np.log(1 - s))
        assert abs(loss - bce) < 1e-12


def test_loss_lambda_scales_only_negative_part():
    r = rng(3)
    y = np.array([[1.0, 0.0, 1.0, 0.0]])
    zd = r.normal(size=(1, 4))
    lam = np.array([0.7, 0.7, 0.7, 0.7])

    def parts(lam_vec):
        z = ad.constant(zd)
        full = reweighted_loss(y, z, lam_vec).item()
        pos_only = reweighted_loss(y, ad.constant(zd), np.zeros(4)).item()
        return pos_only, full - pos_only

    pos1, neg1 = parts(lam)
    pos2, neg2 = parts(lam * 3)
    assert abs(pos1 - pos2) < 1e-12
    assert abs(neg2 - 3 * neg1) < 1e-10


def test_loss_nonnegative_stable_form():
    r = rng(4)
    for _ in range(10):
        y = (r.random(6) < 0.5).astype(float)
        z = ad.constant(r.normal(size=6) * 4)
        assert reweighted_loss(y, z, r.uniform(0.1, 3.0, 6)).item() >= 0.0


def test_printed_form_differs_and_is_signed():
    y = np.array([0.0])
    z = ad.constant(np.array([3.0]))
    stable = reweighted_loss(y, z, np.array([1.0]), form=clf.STABLE).item()
    printed = reweighted_loss(y, z, np.array([1.0]), form=clf.PRINTED).item()
    # printed variant rewards confident wrong negatives: (1 - log s(z)) > 1
    assert printed > 1.0
    assert stable != printed


def test_inactive_tags_excluded_from_loss():
    y = np.array([1.0, 1.0])
    z = ad.constant(np.array([0.0, 50.0]))
    active = np.array([True, False])
    loss = reweighted_loss(y, z, np.ones(2), active=active).item()
    assert abs(loss - math.log(2)) < 1e-12


def test_predict_tags_thresholding():
    assert predict_tags(np.array([2.0, -2.0])).tolist() == [1, 0]
    assert predict_tags(np.array([0.0, 0.0])).tolist() == [0, 0]


def test_predict_tags_length(tiny_vectors):
    taxonomy = _toy_taxonomy()
    model = _toy_model(tiny_vectors, len(taxonomy))
    z = model.logits(_toy_play())
    assert predict_tags(z).shape == (len(taxonomy),)


def test_average_precision_perfect_ranking():
    assert average_precision(np.array([0.9, 0.8, 0.2]), np.array([1, 1, 0])) == 1.0
    assert average_precision(np.array([1, 0, 1.0]), np.array([1, 0, 1])) == 1.0


def test_average_precision_hand_ranked():
    ap = average_precision(np.array([0.9, 0.8, 0.7]), np.array([1, 0, 1]))
    assert abs(ap - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12


def test_average_precision_no_positives():
    with pytest.raises(NoPositives):
        average_precision(np.array([0.5]), np.array([0]))


def _toy_taxonomy():
    items = [
        CorpusItem("a", None, {"genre": ("x",)}),
        CorpusItem("b", None, {"genre": ("y",)}),
        CorpusItem("c", None, {"genre": ("x", "y")}),
        CorpusItem("d", None, {"genre": ()}),
    ]
    return TagTaxonomy.from_items(items, "genre")


def test_taxonomy_ratios():
    tax = _toy_taxonomy()
    assert tax.tags == ("x", "y")
    assert np.allclose(tax.lam, [2 / 2, 2 / 2])
    assert tax.active.all()


def test_taxonomy_deactivates_all_positive_tag():
    items = [CorpusItem("a", None, {"genre": ("x",)}),
             CorpusItem("b", None, {"genre": ("x",)})]
    tax = TagTaxonomy.from_items(items, "genre")
    assert not tax.active[0]
    assert tax.active_tags() == ()


def _toy_play(seed=0):
    r = rng(seed)
    scenes = []
    for i in range(2):
        stmts = [Statement(StatementKind.ACTION, "alpha beta gamma"),
                 Statement(StatementKind.DIALOGUE, "delta sun", character="ANNA")]
        scenes.append(Scene(index=i + 1, heading="INT. X", statements=stmts))
    return Screenplay("toy", scenes)


def _toy_model(vectors, n_tags, seed=0, kind=EncoderKind.BOE):
    spec = EncoderSpec(kind, input_dim=4, hidden_per_direction=2, attention_dim=4)
    encoder = HierarchicalModel(spec=spec, variant=Variant.FULL, vectors=vectors,
                                characters=["ANNA"], char_dim=2, seed=seed)
    return ScriptTagModel(encoder, n_tags, seed=seed)


def _toy_samples(taxonomy):
    plays = {
        "a": ("alpha alpha beta", ("x",)),
        "b": ("delta sun moon", ("y",)),
        "c": ("alpha delta", ("x", "y")),
        "d": ("tide dust", ()),
    }
    samples = []
    for title, (text, tags) in sorted(plays.items()):
        stmts = [Statement(StatementKind.ACTION, text),
                 Statement(StatementKind.DIALOGUE, text, character="ANNA")]
        play = Screenplay(title, [Scene(index=1, heading="INT. X",
                                        statements=stmts)])
        samples.append(Sample(title, play, taxonomy.label_vector(tags)))
    return samples


def test_train_overfits_single_script(tiny_vectors):
    taxonomy = _toy_taxonomy()
    model = _toy_model(tiny_vectors, len(taxonomy))
    samples = _toy_samples(taxonomy)[:1]
    config = TrainConfig(lr=0.05, max_epochs=300, patience=300, seed=0)
    result = train(model, samples, samples, taxonomy, config)
    final_loss = result.rows[-1].train_loss
    assert final_loss < 1e-2, final_loss


def test_train_deterministic_loss_traces(tiny_vectors):
    taxonomy = _toy_taxonomy()

    def run():
        model = _toy_model(tiny_vectors, len(taxonomy), seed=5)
        samples = _toy_samples(taxonomy)
        result = train(model, samples[:3], samples[3:], taxonomy,
                       TrainConfig(max_epochs=4, seed=5))
        return [r.train_loss for r in result.rows]

    assert run() == run()


def test_frozen_model_stops_after_patience(tiny_vectors):
    taxonomy = _toy_taxonomy()
    model = _toy_model(tiny_vectors, len(taxonomy))
    samples = _toy_samples(taxonomy)
    config = TrainConfig(lr=0.0, max_epochs=20, patience=5, seed=0)
    result = train(model, samples[:3], samples[3:], taxonomy, config)
    assert result.rows[-1].epoch == 6
    assert result.best_epoch == 1


def test_best_checkpoint_never_below_best_logged(tiny_vectors):
    taxonomy = _toy_taxonomy()
    model = _toy_model(tiny_vectors, len(taxonomy))
    samples = _toy_samples(taxonomy)
    result = train(model, samples[:3], samples[3:], taxonomy,
                   TrainConfig(max_epochs=8, patience=8, seed=1))
    assert result.best_val_ap == max(r.val_ap for r in result.rows)


def test_train_empty_raises(tiny_vectors):
    taxonomy = _toy_taxonomy()
    model = _toy_model(tiny_vectors, len(taxonomy))
    with pytest.raises(DataEmpty):
        train(model, [], [], taxonomy, TrainConfig())


def test_loglines_model_dims_and_determinism(tiny_vectors):
    model = LoglinesModel(tiny_vectors, n_tags=3, hidden_per_direction=2, seed=2)
    assert model.output_dim == 4
    single = model.encode(["alpha"])
    assert single.data.shape == (4,)
    z1 = model.logits(["alpha", "beta"]).data
    model2 = LoglinesModel(tiny_vectors, n_tags=3, hidden_per_direction=2, seed=2)
    z2 = model2.logits(["alpha", "beta"]).data
    assert np.array_equal(z1, z2)


def test_loglines_paper_output_dim():
    r = rng(11)
    vectors = make_vectors({f"w{i}": r.normal(size=100) for i in range(3)})
    model = LoglinesModel(vectors, n_tags=2)
    assert model.output_dim == 100


def test_make_samples_skips_missing_loglines(tiny_vectors):
    taxonomy = _toy_taxonomy()
    items = [CorpusItem("a", _toy_play(), {"genre": ("x",)}, logline="alpha beta"),
             CorpusItem("b", _toy_play(), {"genre": ("y",)}, logline=None)]
    samples = make_samples(items, taxonomy, use_loglines=True)
    assert [s.key for s in samples] == ["a"]
