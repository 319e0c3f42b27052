import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from printmod.classifier import (
    DRUG_SMOKE,
    SEXUAL,
    TOP_LEVEL,
    WEAPONRY,
    CategoryTaxonomy,
    LabeledExample,
    ModelState,
    Prediction,
    attribute,
    default_taxonomy,
    grid_cell_box,
    load_model,
    localize,
    logistic_loss,
    logit,
    model_from_record,
    model_to_record,
    predict,
    save_model,
    sigmoid,
    train_seed,
    update,
)
from printmod.corpus import AssetKind, MediaAsset
from printmod.errors import (
    AssetTooSmall,
    EmptySeedSet,
    HashParamMismatch,
    MalformedField,
    NonpositiveWeight,
    UnknownCategory,
)
from printmod.features import FeatureVector, fuse, text_features

from conftest import make_asset, make_image


def make_model(weights=None, bias=0.0, category=SEXUAL):
    w = {cat: {} for cat in TOP_LEVEL}
    b = {cat: 0.0 for cat in TOP_LEVEL}
    w[category] = dict(weights or {})
    b[category] = bias
    return ModelState(weights=w, bias=b)


# -- taxonomy ----------------------------------------------------------------

def test_default_taxonomy_top_level():
    tax = default_taxonomy()
    assert tax.top_level() == ("sexual_suggestive", "weaponry", "drug_smoke")
    assert tax.valid_path(("sexual_suggestive", None))
    assert tax.valid_path(("sexual_suggestive", "explicit_nudity"))
    assert not tax.valid_path(("sexual_suggestive", "rifle"))
    assert not tax.valid_path(("violence", None))


def test_taxonomy_rejects_wrong_top_level():
    with pytest.raises(UnknownCategory):
        CategoryTaxonomy(children={"sexual_suggestive": ("a",), "weaponry": ("b",)})


def test_taxonomy_rejects_duplicate_children():
    with pytest.raises(MalformedField):
        CategoryTaxonomy(
            children={
                "sexual_suggestive": ("shared",),
                "weaponry": ("shared",),
                "drug_smoke": (),
            }
        )


# -- predict -----------------------------------------------------------------

def test_zero_model_predicts_half():
    fv = FeatureVector({"text:h1": 3.0, "img:hist:222": 1.0})
    pred = predict(ModelState.zero(), fv, thing_id="t1")
    assert set(pred.probabilities) == set(TOP_LEVEL)
    assert all(p == 0.5 for p in pred.probabilities.values())


def test_closed_form_probability():
    model = make_model({"text:a": 1.2, "text:b": -0.4}, bias=0.1)
    fv = FeatureVector({"text:a": 1.0, "text:b": 1.0})
    z = logit(model, SEXUAL, fv)
    assert z == pytest.approx(0.9, abs=1e-12)
    assert predict(model, fv).probabilities[SEXUAL] == pytest.approx(0.7109, abs=5e-5)


def test_weight_scaling_preserves_argmax():
    model = ModelState(
        weights={SEXUAL: {"text:a": 0.2}, WEAPONRY: {"text:a": 0.9}, DRUG_SMOKE: {"text:a": -0.3}},
        bias={SEXUAL: 0.1, WEAPONRY: 0.0, DRUG_SMOKE: 0.2},
    )
    scaled = ModelState(
        weights={c: {k: 7.0 * v for k, v in w.items()} for c, w in model.weights.items()},
        bias={c: 7.0 * b for c, b in model.bias.items()},
    )
    fv = FeatureVector({"text:a": 1.0})
    assert predict(model, fv).argmax_category() == predict(scaled, fv).argmax_category() == WEAPONRY


def test_hash_param_mismatch():
    fv = FeatureVector({"text:a": 1.0}, hash_bits=10)
    with pytest.raises(HashParamMismatch):
        predict(ModelState.zero(), fv)
    with pytest.raises(HashParamMismatch):
        update(ModelState.zero(), fv, SEXUAL, 1)


# -- attribution -------------------------------------------------------------

def test_attribution_example():
    model = make_model({"text:a": 1.2, "text:b": -0.4}, bias=0.1)
    fv = FeatureVector({"text:a": 1.0, "text:b": 1.0})
    contribs = attribute(model, fv, k=2)[SEXUAL]
    assert contribs == [("text:a", 1.2), ("text:b", -0.4)]
    assert sum(v for _, v in contribs) + 0.1 == pytest.approx(0.9, abs=1e-12)


def test_attribution_zero_model_empty():
    fv = FeatureVector({"text:a": 1.0})
    assert attribute(ModelState.zero(), fv, k=5) == {cat: [] for cat in TOP_LEVEL}


def test_attribution_k_exceeds_overlap():
    model = make_model({"text:a": 0.5, "text:b": 0.25}, bias=0.0)
    fv = FeatureVector({"text:a": 1.0, "text:b": 1.0, "text:c": 1.0})
    contribs = attribute(model, fv, k=50)[SEXUAL]
    assert len(contribs) == 2  # only features present in both model and fv


def test_attribution_sorted_by_magnitude():
    model = make_model({"text:a": 0.1, "text:b": -0.9, "text:c": 0.5})
    fv = FeatureVector({"text:a": 1.0, "text:b": 1.0, "text:c": 1.0})
    contribs = attribute(model, fv, k=3)[SEXUAL]
    assert [f for f, _ in contribs] == ["text:b", "text:c", "text:a"]


@settings(max_examples=50, deadline=None)
@given(
    st.dictionaries(
        st.sampled_from([f"text:f{i}" for i in range(8)]),
        st.floats(min_value=-5, max_value=5, allow_nan=False),
        max_size=8,
    ),
    st.dictionaries(
        st.sampled_from([f"text:f{i}" for i in range(8)]),
        st.floats(min_value=-5, max_value=5, allow_nan=False),
        min_size=1,
        max_size=8,
    ),
)
def test_attribution_completeness_property(weights, entries):
    model = make_model(weights, bias=0.25)
    fv = FeatureVector(dict(entries))
    contribs = attribute(model, fv, k=10_000)[SEXUAL]
    total = math.fsum(v for _, v in contribs) + 0.25
    assert abs(total - logit(model, SEXUAL, fv)) <= 1e-9


# -- update ------------------------------------------------------------------

def test_update_closed_form():
    fv = FeatureVector({"text:f": 1.0})
    stepped = update(ModelState.zero(), fv, SEXUAL, label=1, sample_weight=1.0)
    assert stepped.weights[SEXUAL]["text:f"] == pytest.approx(0.05, abs=1e-15)
    assert stepped.bias[SEXUAL] == pytest.approx(0.05, abs=1e-15)
    assert predict(stepped, fv).probabilities[SEXUAL] == pytest.approx(0.5250, abs=5e-5)
    # Other categories untouched.
    assert stepped.weights[WEAPONRY] == {}
    assert stepped.bias[DRUG_SMOKE] == 0.0


def test_update_does_not_mutate_input():
    model = ModelState.zero()
    update(model, FeatureVector({"text:f": 1.0}), SEXUAL, 1)
    assert model.weights[SEXUAL] == {}
    assert model.version == 1


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=-3, max_value=3, allow_nan=False),
    st.floats(min_value=-3, max_value=3, allow_nan=False),
    st.floats(min_value=0.1, max_value=3, allow_nan=False),
    st.floats(min_value=1 / 3, max_value=5 / 3),
)
def test_positive_update_never_decreases_p(w0, b0, x, sample_weight):
    model = make_model({"text:f": w0}, bias=b0)
    fv = FeatureVector({"text:f": x})
    before = predict(model, fv).probabilities[SEXUAL]
    after = predict(update(model, fv, SEXUAL, 1, sample_weight), fv).probabilities[SEXUAL]
    assert after >= before


def test_update_linear_in_sample_weight():
    model = make_model({"text:f": 0.3, "text:g": -0.2}, bias=0.1)
    fv = FeatureVector({"text:f": 2.0, "text:g": 1.0})
    one = update(model, fv, SEXUAL, 1, sample_weight=1.0)
    three = update(model, fv, SEXUAL, 1, sample_weight=3.0)
    for key in ("text:f", "text:g"):
        delta1 = one.weights[SEXUAL][key] - model.weights[SEXUAL][key]
        delta3 = three.weights[SEXUAL][key] - model.weights[SEXUAL][key]
        assert delta3 == pytest.approx(3 * delta1, rel=1e-12)
    assert three.bias[SEXUAL] - 0.1 == pytest.approx(3 * (one.bias[SEXUAL] - 0.1), rel=1e-12)


def test_update_validation():
    fv = FeatureVector({"text:f": 1.0})
    with pytest.raises(NonpositiveWeight):
        update(ModelState.zero(), fv, SEXUAL, 1, sample_weight=0.0)
    with pytest.raises(NonpositiveWeight):
        update(ModelState.zero(), fv, SEXUAL, 1, sample_weight=-2.0)
    with pytest.raises(UnknownCategory):
        update(ModelState.zero(), fv, "violence", 1)
    with pytest.raises(MalformedField):
        update(ModelState.zero(), fv, SEXUAL, label=2)


def test_version_monotonicity():
    model = ModelState.zero()
    fv = FeatureVector({"text:f": 1.0})
    versions = [model.version]
    for label in (1, 0, 1, 1):
        model = update(model, fv, SEXUAL, label)
        versions.append(model.version)
    assert versions == sorted(set(versions))
    assert model.update_count == 4


# -- gradient oracle ---------------------------------------------------------

def _loss_with_weight(weights, bias, fv, label, key, value):
    tweaked = dict(weights)
    tweaked[key] = value
    return logistic_loss(make_model(tweaked, bias=bias), SEXUAL, fv, label)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    keys = [f"text:f{i}" for i in range(6)]
    h = 1e-6
    for _ in range(25):
        weights = {k: float(rng.normal()) for k in rng.choice(keys, size=4, replace=False)}
        bias = float(rng.normal())
        fv = FeatureVector({k: float(rng.normal()) for k in rng.choice(keys, size=3, replace=False)})
        label = int(rng.integers(0, 2))
        model = make_model(weights, bias=bias)
        p = sigmoid(logit(model, SEXUAL, fv))
        for key, x in fv.entries.items():
            analytic = (p - label) * x
            up = _loss_with_weight(weights, bias, fv, label, key, weights.get(key, 0.0) + h)
            down = _loss_with_weight(weights, bias, fv, label, key, weights.get(key, 0.0) - h)
            numeric = (up - down) / (2 * h)
            assert abs(analytic - numeric) <= 1e-6 * max(1.0, abs(numeric))
        up = logistic_loss(make_model(weights, bias=bias + h), SEXUAL, fv, label)
        down = logistic_loss(make_model(weights, bias=bias - h), SEXUAL, fv, label)
        assert abs((p - label) - (up - down) / (2 * h)) <= 1e-6


# -- training ----------------------------------------------------------------

def _separable_examples(n=40):
    examples = []
    for i in range(n):
        pos = text_features(f"marker xxx_marker item {i}", f"desc {i % 7}", [])
        neg = text_features(f"plain item {i}", f"desc {i % 7}", [])
        examples.append(LabeledExample(fv=fuse(pos), labels={SEXUAL: 1}, thing_id=f"p{i}"))
        examples.append(LabeledExample(fv=fuse(neg), labels={SEXUAL: 0}, thing_id=f"n{i}"))
    return examples


def test_separable_corpus_trains_accurately():
    examples = _separable_examples()
    model = train_seed(examples, epochs=5, rng_seed=3)
    correct = sum(
        (predict(model, ex.fv).probabilities[SEXUAL] >= 0.5) == bool(ex.labels.get(SEXUAL))
        for ex in examples
    )
    assert correct / len(examples) >= 0.99


def test_zero_epochs_gives_zero_model():
    model = train_seed(_separable_examples(4), epochs=0)
    assert all(model.weights[cat] == {} for cat in TOP_LEVEL)
    fv = FeatureVector({"text:q": 1.0})
    assert all(p == 0.5 for p in predict(model, fv).probabilities.values())


def test_training_deterministic_per_seed():
    examples = _separable_examples(10)
    a = train_seed(examples, epochs=3, rng_seed=42)
    b = train_seed(examples, epochs=3, rng_seed=42)
    c = train_seed(examples, epochs=3, rng_seed=43)
    assert a.weights == b.weights and a.bias == b.bias
    assert a.weights != c.weights


def test_empty_seed_set():
    with pytest.raises(EmptySeedSet):
        train_seed([], epochs=1)


# -- serialization -----------------------------------------------------------

def test_save_load_bit_identical(tmp_path):
    model = train_seed(_separable_examples(10), epochs=2, rng_seed=5)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.version == model.version
    assert loaded.eta == model.eta
    assert loaded.hash_bits == model.hash_bits
    for cat in TOP_LEVEL:
        assert loaded.bias[cat] == model.bias[cat]
        assert loaded.weights[cat] == model.weights[cat]
        for key, value in model.weights[cat].items():
            # Bit-identical, not merely close.
            assert math.copysign(1.0, loaded.weights[cat][key]) == math.copysign(1.0, value)
            assert loaded.weights[cat][key].hex() == value.hex()


def test_record_round_trip_preserves_counters():
    model = update(ModelState.zero(), FeatureVector({"text:f": 1.0}), WEAPONRY, 1)
    clone = model_from_record(model_to_record(model))
    assert clone.version == model.version
    assert clone.update_count == model.update_count
    assert clone.weights[WEAPONRY] == model.weights[WEAPONRY]


# -- localization ------------------------------------------------------------

def test_localize_uniform_image_uniform_grid():
    asset = make_asset("a1", "t1", color=(150, 160, 200), size=48)
    grid = localize(ModelState.zero(), asset)
    assert grid.shape == (3, 3)
    assert np.all(grid == grid[0, 0])


def test_localize_planted_signature_top_left():
    pixels = make_image((150, 160, 200), size=48)
    pixels[0:16, 0:16] = (220, 40, 150)  # quantizes to histogram bin 302
    asset = MediaAsset(id="a1", thing_id="t1", kind=AssetKind.RENDERED_PREVIEW, pixels=pixels)
    model = make_model({"img:hist:302": 8.0}, category=WEAPONRY)
    grid = localize(model, asset)
    assert np.unravel_index(np.argmax(grid), grid.shape) == (0, 0)
    assert grid[0, 0] > grid[2, 2]


def test_localize_category_filter_and_errors():
    asset = make_asset("a1", "t1")
    with pytest.raises(UnknownCategory):
        localize(ModelState.zero(), asset, category="violence")
    tiny = MediaAsset(
        id="a2", thing_id="t1", kind=AssetKind.RENDERED_PREVIEW, pixels=make_image(size=2)
    )
    with pytest.raises(AssetTooSmall):
        localize(ModelState.zero(), tiny)


def test_grid_cell_boxes_tile_image():
    width, height = 50, 47  # not divisible by 3 on purpose
    seen = np.zeros((height, width), dtype=int)
    for row in range(3):
        for col in range(3):
            x, y, w, h = grid_cell_box(width, height, row, col)
            assert w > 0 and h > 0
            seen[y : y + h, x : x + w] += 1
    assert np.all(seen == 1)


# -- prediction object -------------------------------------------------------

def test_prediction_validates_probabilities():
    with pytest.raises(MalformedField):
        Prediction(thing_id="t", probabilities={SEXUAL: 1.5}, model_version=1)


def test_prediction_argmax_tie_alphabetical():
    pred = Prediction(
        thing_id="t",
        probabilities={SEXUAL: 0.5, WEAPONRY: 0.5, DRUG_SMOKE: 0.25},
        model_version=1,
    )
    assert pred.argmax_category() == "sexual_suggestive"
    assert pred.max_probability() == 0.5


def test_prediction_record_round_trip():
    pred = Prediction(
        thing_id="t",
        probabilities={SEXUAL: 0.75, WEAPONRY: 0.25, DRUG_SMOKE: 0.5},
        model_version=3,
        attributions={SEXUAL: (("text:a", 1.2),)},
        regions={"a1": ((0.5, 0.5, 0.5),) * 3},
    )
    clone = Prediction.from_record(pred.to_record())
    assert clone == pred
