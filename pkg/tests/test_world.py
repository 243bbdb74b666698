import math

import numpy as np
import pytest

from halc.distributions import argmax_token
from halc.errors import InvalidInputError, InvalidParameterError
from halc.geometry import Fov, ImageSpec, fov_distance
from halc.world import (
    DEMO_DETECTOR_ETA,
    CorpusSpec,
    Scene,
    SceneObject,
    StableHigh,
    generate_corpus,
    load_corpus,
    noisy_match_score,
    oracle_match_score,
    profile_value,
    save_corpus,
    scene_from_json,
    scene_to_json,
    tag_token,
    toy_detector,
    toy_model_logits,
)


def trap_slot_prefix(scene):
    return list(scene.reference_caption[: scene.trap.position])


def test_peaking_profile_at_its_center(demo):
    clock = demo.find_object("clock")
    value = profile_value(clock.profile, clock.profile.v_star, demo.image)
    assert value == clock.profile.base + clock.profile.amp


def test_context_shift_log_area_ratio(demo):
    surf = demo.find_object("surfboard")
    full = demo.image.full_fov()
    half_area = Fov(1000.0, 500.0, 500.0, 750.0)
    diff = profile_value(surf.profile, full, demo.image) - profile_value(
        surf.profile, half_area, demo.image
    )
    assert diff == pytest.approx(surf.profile.slope * math.log(2.0))


def test_model_logits_bitwise_deterministic(demo):
    fov = Fov(200.0, 150.0, 420.0, 380.0)
    prefix = ["a", "man", "holds", "a"]
    a = toy_model_logits(demo, fov, prefix)
    b = toy_model_logits(demo, fov, prefix)
    np.testing.assert_array_equal(a, b)


def test_model_rejects_unknown_prefix_token(demo):
    with pytest.raises(InvalidInputError):
        toy_model_logits(demo, demo.image.full_fov(), ["not-a-token"])


def test_peaking_value_decreases_with_distance(demo):
    clock = demo.find_object("clock")
    v_star = clock.profile.v_star
    rng = np.random.default_rng(0)
    for _ in range(50):
        near = Fov(
            v_star.width + rng.uniform(0, 30),
            v_star.height + rng.uniform(0, 30),
            v_star.center_x + rng.uniform(0, 20),
            v_star.center_y + rng.uniform(0, 20),
        )
        far = Fov(
            near.width + rng.uniform(10, 200),
            near.height + rng.uniform(10, 200),
            near.center_x + rng.uniform(10, 100),
            near.center_y + rng.uniform(10, 100),
        )
        assert fov_distance(near, v_star) < fov_distance(far, v_star)
        assert profile_value(clock.profile, near, demo.image) > profile_value(
            clock.profile, far, demo.image
        )


def test_detector_exact_region_without_perturbation(demo):
    clock = demo.find_object("clock")
    box = toy_detector("clock", demo, eta=(0.0, 0.0, 0.0, 0.0))
    assert box == clock.region


def test_detector_absent_token(demo):
    assert toy_detector("w00", demo) is None


def test_detector_hallucinated_token_snaps_to_anchor(demo):
    clock = demo.find_object("clock")
    eta = (30.0, 30.0, 20.0, -15.0)
    box = toy_detector("surfboard", demo, eta=eta)
    assert box.width == pytest.approx(clock.region.width + eta[0])
    assert box.center_x == pytest.approx(clock.region.center_x + eta[2])


def test_detector_confidence_threshold(demo):
    # Hallucinated tokens are only located when the threshold is low enough.
    assert toy_detector("surfboard", demo, confidence_threshold=0.3) is not None
    assert toy_detector("surfboard", demo, confidence_threshold=0.6) is None
    assert toy_detector("clock", demo, confidence_threshold=0.6) is not None
    assert toy_detector("clock", demo, confidence_threshold=0.95) is None


def test_detector_jitter_only_without_explicit_offset(demo):
    exact = toy_detector("clock", demo)
    assert exact == demo.find_object("clock").region
    jittered = toy_detector("clock", demo, eta=None, rng=np.random.default_rng(3))
    assert jittered != exact
    repeat = toy_detector("clock", demo, eta=None, rng=np.random.default_rng(3))
    assert jittered == repeat


def test_hash_noise_frozen_values():
    # Corpus stability depends on this hash never changing.
    from halc.world import hash_noise

    assert hash_noise(7, 150, 150, 660, 285) == pytest.approx(
        hash_noise(7, 150, 150, 660, 285)
    )
    assert hash_noise(1, 2, 3) != hash_noise(2, 2, 3)
    assert hash_noise(1, 2, 3) != hash_noise(1, 3, 2)
    values = [hash_noise(s, 10, 20, 30, 40) for s in range(200)]
    assert all(-1.0 <= v <= 1.0 for v in values)
    assert abs(sum(values) / len(values)) < 0.2


def test_tag_token_category_mapping(demo):
    lex = demo.lexicon
    assert tag_token(lex, "surfboard") == "existence"
    assert tag_token(lex, "on") == "relationship"
    assert tag_token(lex, "holds") == "attribute"
    assert tag_token(lex, "the") == "none"
    assert tag_token(lex, "unknown-word") == "none"


def test_oracle_match_score_extremes(demo):
    assert oracle_match_score(["a", "man", "holds", "beach"], demo) == 1.0
    assert oracle_match_score(["surfboard", "book"], demo) == 0.0
    assert oracle_match_score(["a", "the", "on"], demo) == 0.5


def test_noisy_match_score_contract(demo):
    seq = ["a", "man", "holds", "a", "clock"]
    exact = noisy_match_score(oracle_match_score, 0.0, 3)
    assert exact(seq, demo) == oracle_match_score(seq, demo)
    noisy = noisy_match_score(oracle_match_score, 0.3, 3)
    assert noisy(seq, demo) == noisy(seq, demo)
    rng = np.random.default_rng(0)
    for _ in range(50):
        toks = [demo.vocabulary[i] for i in rng.integers(0, len(demo.vocabulary), 5)]
        assert 0.0 <= noisy(toks, demo) <= 1.0


# ---------------------------------------------------------------------------
# Demo fixture phenomena
# ---------------------------------------------------------------------------


def test_demo_greedy_argmax_at_detector_box_hallucinates(demo):
    # Direct decoding from the grounding box alone does not correct the trap.
    prefix = trap_slot_prefix(demo)
    v_d = toy_detector("surfboard", demo, eta=DEMO_DETECTOR_ETA)
    tok = demo.vocabulary[argmax_token(toy_model_logits(demo, v_d, prefix))]
    full_tok = demo.vocabulary[argmax_token(toy_model_logits(demo, demo.image.full_fov(), prefix))]
    assert full_tok == "surfboard"
    assert tok == "surfboard"


def test_demo_argmax_at_v_star_yields_victim(demo):
    prefix = trap_slot_prefix(demo)
    v_star = demo.find_object("clock").profile.v_star
    tok = demo.vocabulary[argmax_token(toy_model_logits(demo, v_star, prefix))]
    assert tok == "clock"


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


def test_corpus_deterministic_across_runs():
    spec = CorpusSpec(scene_count=100, trap_fraction=0.5)
    a = generate_corpus(5, 100, spec)
    b = generate_corpus(5, 100, spec)
    assert len(a) == 100
    assert [scene_to_json(s) for s in a] == [scene_to_json(s) for s in b]


def test_trap_fraction_one_means_trap_everywhere():
    spec = CorpusSpec(scene_count=10, trap_fraction=1.0, clauses=3, trap_clauses=(1, 2))
    scenes = generate_corpus(3, 10, spec)
    for scene in scenes:
        assert scene.trap is not None
        assert not scene.find_object(scene.trap.trap).is_ground_truth
        assert scene.find_object(scene.trap.victim).is_ground_truth


def test_trap_free_corpus_has_no_hallucination_source(small_clean_corpus):
    from halc.decoding import DecodeConfig, decode_greedy
    from halc.metrics import CaptionRecord, chair

    captions = [
        CaptionRecord.from_tokens(
            s.scene_id, decode_greedy(None, s, DecodeConfig(seed=1)).tokens, s.lexicon
        )
        for s in small_clean_corpus
    ]
    report = chair(captions, {s.scene_id: s for s in small_clean_corpus})
    assert report.chair_i == 0.0
    assert report.chair_s == 0.0


def test_corpus_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        CorpusSpec(scene_count=0)
    with pytest.raises(InvalidParameterError):
        CorpusSpec(trap_fraction=1.5)
    with pytest.raises(InvalidParameterError):
        CorpusSpec(clauses=10, noun_pool=12)


def test_hallucinated_object_requires_anchor():
    with pytest.raises(InvalidParameterError):
        SceneObject(
            "ghost", Fov(10, 10, 5, 5), StableHigh(1.0), is_ground_truth=False
        )


def test_reference_caption_must_use_ground_truth(demo):
    with pytest.raises(InvalidParameterError):
        Scene(
            image=ImageSpec(100, 100),
            objects=(
                SceneObject("cat", Fov(10, 10, 50, 50), StableHigh(5.0)),
                SceneObject(
                    "dog", Fov(10, 10, 50, 50), StableHigh(5.0),
                    is_ground_truth=False, anchor="cat",
                ),
            ),
            verbs=("sees",),
            fillers=("w0",),
            skeleton=(),
            cooccurrence={},
            reference_caption=("dog",),
        )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_scene_json_field_name_contract(demo):
    # Field names are part of the corpus file contract.
    doc = scene_to_json(demo)
    assert {"image", "vocabulary", "objects", "cooccurrence", "reference"} <= set(doc)
    assert set(doc["image"]) == {"w", "h"}
    obj = doc["objects"][0]
    assert {"name", "region", "profile", "ground_truth", "anchor"} <= set(obj)
    assert set(obj["region"]) == {"w", "h", "cx", "cy"}
    assert "kind" in obj["profile"]
    hallucinated = next(o for o in doc["objects"] if not o["ground_truth"])
    assert hallucinated["anchor"]


def test_oracle_score_range_on_random_sequences(demo):
    rng = np.random.default_rng(12)
    for _ in range(200):
        toks = [demo.vocabulary[i] for i in rng.integers(0, len(demo.vocabulary), 8)]
        assert 0.0 <= oracle_match_score(toks, demo) <= 1.0


def test_scene_json_round_trip(demo):
    doc = scene_to_json(demo)
    rebuilt = scene_from_json(doc)
    assert scene_to_json(rebuilt) == doc
    fov = Fov(220.0, 180.0, 600.0, 310.0)
    prefix = trap_slot_prefix(demo)
    np.testing.assert_array_equal(
        toy_model_logits(demo, fov, prefix), toy_model_logits(rebuilt, fov, prefix)
    )


def test_corpus_file_round_trip(tmp_path, small_trap_corpus):
    path = tmp_path / "corpus.json"
    save_corpus(small_trap_corpus, path)
    loaded = load_corpus(path)
    assert [scene_to_json(s) for s in loaded] == [
        scene_to_json(s) for s in small_trap_corpus
    ]
