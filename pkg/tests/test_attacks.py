import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igaff.attacks import (
    MODE_TARGETED_INTENT,
    MODE_TARGETED_LITERAL,
    MODE_UNTARGETED,
    AttackConfig,
    Population,
    aga_attack,
    aga_crossover,
    aga_mutate,
    aga_select,
    ata_attack,
    attack_score,
    replay_aga,
    replay_ata,
)
from igaff.imagecore import Batch, apply_affine, sample_affine
from igaff.models import BrightnessOracle, ConstantOracle, cross_entropy, predict_labels
from igaff.rng import RngStream


def make_batch(b=4, shape=(3, 16, 16), lo=0.2, hi=0.8, seed=5):
    return Batch(np.random.default_rng(seed).uniform(lo, hi, (b, *shape)).astype(np.float32))


def oracle_and_labels(batch, n_cls=10):
    model = BrightnessOracle(n_cls, batch.image_shape)
    return model, predict_labels(model, batch)


# ---------------------------------------------------------------------------
# attack score


def test_attack_score_closed_forms():
    assert attack_score(0.0, MODE_UNTARGETED) == 0.5
    assert attack_score(math.log(3), MODE_UNTARGETED) == pytest.approx(0.75, abs=1e-12)
    assert attack_score(0.0, MODE_TARGETED_LITERAL) == 0.5
    assert attack_score(math.log(3), MODE_TARGETED_LITERAL) == pytest.approx(0.75, abs=1e-12)
    assert attack_score(0.0, MODE_TARGETED_INTENT) == 0.5
    assert attack_score(math.log(3), MODE_TARGETED_INTENT) == pytest.approx(0.25, abs=1e-12)


def test_attack_score_rejects_bad_inputs():
    with pytest.raises(ValueError):
        attack_score(math.inf)
    with pytest.raises(ValueError):
        attack_score(math.nan)
    with pytest.raises(ValueError):
        attack_score(1.0, "bogus")


def test_attack_score_extreme_losses_stay_in_unit_interval():
    assert 0.0 < attack_score(1e-12) < 1.0
    assert attack_score(5000.0) <= 1.0
    assert attack_score(5000.0, MODE_TARGETED_INTENT) >= 0.0


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 60), b=st.floats(0, 60))
def test_attack_score_monotone_and_intent_reverses(a, b):
    lo, hi = sorted((a, b))
    assert attack_score(lo) <= attack_score(hi)
    assert attack_score(lo, MODE_TARGETED_INTENT) >= attack_score(hi, MODE_TARGETED_INTENT)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(algorithm="nope")
    with pytest.raises(ValueError):
        AttackConfig(iterations=0)
    with pytest.raises(ValueError):
        AttackConfig(p_mutation=1.2)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        AttackConfig(targeted_mode="x")


# ---------------------------------------------------------------------------
# iterative attack (ATA)


def test_ata_constant_oracle_keeps_original():
    batch = make_batch()
    model = ConstantOracle(4, batch.image_shape)
    cfg = AttackConfig(algorithm="ata", iterations=7, seed=3)
    outcome = ata_attack(batch, [0, 1, 2, 3], model, cfg)
    assert np.array_equal(outcome.batch.data, batch.data)
    assert outcome.provenance["winning_iteration"] is None


def test_ata_never_scores_below_original():
    batch = make_batch(b=3)
    model, labels = oracle_and_labels(batch)
    for seed in range(50):
        cfg = AttackConfig(algorithm="ata", iterations=4, seed=seed)
        outcome = ata_attack(batch, labels, model, cfg)
        assert outcome.final_score >= outcome.records[0].score


def test_ata_matches_brute_force_replay_oracle():
    # Straight-line oracle: enumerate the seeded parameter draws, warp with
    # the public per-image op, score, and keep the strict maximum.
    batch = make_batch(b=4)
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="ata", iterations=7, seed=42)

    rng = RngStream(42)
    best = batch.data
    best_score = attack_score(cross_entropy(model.predict(batch), labels), MODE_UNTARGETED)
    for _ in range(7):
        warped = []
        for j in range(batch.size):
            params = sample_affine(rng)
            warped.append(apply_affine(batch.image(j), params).data)
        candidate = Batch(np.stack(warped))
        score = attack_score(cross_entropy(model.predict(candidate), labels), MODE_UNTARGETED)
        if score > best_score:
            best_score = score
            best = candidate.data

    outcome = ata_attack(batch, labels, model, cfg)
    assert np.array_equal(outcome.batch.data, best)
    assert outcome.final_score == best_score


def test_ata_determinism_and_lanes():
    batch = make_batch(b=8, shape=(3, 32, 32))
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="ata", iterations=5, seed=11)
    a = ata_attack(batch, labels, model, cfg)
    b = ata_attack(batch, labels, model, cfg)
    c = ata_attack(batch, labels, model, cfg, lanes=4)
    assert np.array_equal(a.batch.data, b.batch.data)
    assert np.array_equal(a.batch.data, c.batch.data)


def test_ata_provenance_replay_bit_exact():
    batch = make_batch(b=4)
    model, labels = oracle_and_labels(batch)
    outcome = ata_attack(batch, labels, model, AttackConfig(algorithm="ata", iterations=6, seed=9))
    assert np.array_equal(replay_ata(batch, outcome.provenance).data, outcome.batch.data)


def test_ata_replay_of_kept_original_is_original():
    batch = make_batch()
    model = ConstantOracle(4, batch.image_shape)
    outcome = ata_attack(batch, [0, 1, 2, 3], model, AttackConfig(algorithm="ata", seed=0))
    assert np.array_equal(replay_ata(batch, outcome.provenance).data, batch.data)


def test_ata_records_baseline_then_iterations():
    batch = make_batch(b=2)
    model, labels = oracle_and_labels(batch)
    outcome = ata_attack(batch, labels, model, AttackConfig(algorithm="ata", iterations=3, seed=1))
    assert [rec.iteration for rec in outcome.records] == [-1, 0, 1, 2]
    best = outcome.records[0].score
    for rec in outcome.records:
        best = max(best, rec.score)
        assert rec.best_score == best


def test_ata_rejects_wrong_algorithm():
    batch = make_batch(b=2)
    model, labels = oracle_and_labels(batch)
    with pytest.raises(ValueError):
        ata_attack(batch, labels, model, AttackConfig(algorithm="aga"))


# ---------------------------------------------------------------------------
# genetic operators


def test_mutate_gate_closed_is_identity():
    pop = Population.from_batch(make_batch(b=2), 3)
    cfg = AttackConfig(p_mutation=0.0)
    out = aga_mutate(pop, cfg, RngStream(4))
    assert np.array_equal(out.candidates, pop.candidates)


def test_mutate_always_fires_with_zero_noise_is_pure_warp():
    batch = make_batch(b=2, shape=(1, 8, 8))
    pop = Population.from_batch(batch, 2)
    cfg = AttackConfig(p_mutation=1.0, epsilon=0.0)
    rng = RngStream(21)
    out = aga_mutate(pop, cfg, rng, generation=0)

    # replay oracle: redraw the same gate/params sequence and warp per image
    replay = RngStream(21)
    expected = []
    for j in range(2):
        gate = replay.uniform(0.0, 1.0)
        assert gate < 1.0
        params = sample_affine(replay)
        expected.append(
            np.stack([apply_affine(batch.image(i), params).data for i in range(batch.size)])
        )
    assert np.array_equal(out.candidates, np.stack(expected))
    assert not np.array_equal(out.candidates[0], pop.candidates[0])


def test_mutate_seeded_replay_with_noise():
    batch = make_batch(b=3, shape=(2, 6, 6))
    pop = Population.from_batch(batch, 3)
    cfg = AttackConfig(p_mutation=1.0, epsilon=0.2)
    rng = RngStream(31)
    out = aga_mutate(pop, cfg, rng, generation=2)

    replay = RngStream(31)
    expected = pop.candidates.copy()
    for j in range(3):
        replay.uniform(0.0, 1.0)
        params = sample_affine(replay)
        warped = np.stack([apply_affine(batch.image(i), params).data for i in range(batch.size)])
        delta = RngStream(31).derive("aga-noise", 2, j).uniform_array(0.0, 0.2, warped.shape)
        expected[j] = np.clip(warped.astype(np.float64) + delta, 0.0, 1.0).astype(np.float32)
    assert np.array_equal(out.candidates, expected)


def test_crossover_gate_closed_is_identity():
    pop = Population.from_batch(make_batch(b=2), 3)
    out = aga_crossover(pop, AttackConfig(p_crossover=0.0), RngStream(5))
    assert np.array_equal(out.candidates, pop.candidates)


def test_crossover_hand_case_two_by_two():
    # H = 2 makes the cut domain {1}, so with the gate open the exchange is
    # exactly: first rows swapped, second rows kept.
    a = np.array([[[[0.1, 0.2], [0.3, 0.4]]]], dtype=np.float32)
    b = np.array([[[[0.5, 0.6], [0.7, 0.8]]]], dtype=np.float32)
    pop = Population(np.stack([a, b]))
    out = aga_crossover(pop, AttackConfig(p_crossover=1.0), RngStream(0))
    assert np.array_equal(out.candidates[0, 0, 0], np.array([[0.5, 0.6], [0.3, 0.4]], dtype=np.float32))
    assert np.array_equal(out.candidates[1, 0, 0], np.array([[0.1, 0.2], [0.7, 0.8]], dtype=np.float32))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), n_p=st.integers(2, 5))
def test_crossover_double_application_is_involution(seed, n_p):
    batch = Batch(np.random.default_rng(seed).uniform(0, 1, (2, 1, 6, 4)).astype(np.float32))
    pop = Population.from_batch(batch, n_p)
    # make candidates distinct so the swap is observable
    work = pop.candidates.copy()
    for j in range(n_p):
        work[j] = np.roll(work[j], j, axis=2)
    pop = Population(work)
    cfg = AttackConfig(p_crossover=1.0)
    once = aga_crossover(pop, cfg, RngStream(seed))
    twice = aga_crossover(once, cfg, RngStream(seed))
    assert np.array_equal(twice.candidates, pop.candidates)


def test_crossover_rejects_single_row_images():
    pop = Population.from_batch(Batch(np.zeros((1, 1, 1, 4), dtype=np.float32)), 2)
    with pytest.raises(ValueError):
        aga_crossover(pop, AttackConfig(p_crossover=1.0), RngStream(0))


def test_crossover_odd_population_leaves_last_untouched():
    batch = make_batch(b=1, shape=(1, 4, 4))
    work = Population.from_batch(batch, 3).candidates.copy()
    for j in range(3):
        work[j] = np.roll(work[j], j, axis=3)
    pop = Population(work)
    out = aga_crossover(pop, AttackConfig(p_crossover=1.0), RngStream(1))
    assert np.array_equal(out.candidates[2], pop.candidates[2])


def test_select_argmax_and_tie_rule():
    batch = make_batch(b=2, shape=(1, 4, 4))
    model, labels = oracle_and_labels(batch, n_cls=4)
    pop = Population.from_batch(batch, 3)
    k, best = aga_select(pop, labels, model, MODE_UNTARGETED)
    assert k == 0  # identical candidates tie; lowest index wins
    assert np.array_equal(best.data, batch.data)


def test_select_scores_match_closed_form():
    batch = make_batch(b=2, shape=(1, 4, 4))
    model = ConstantOracle(4, (1, 4, 4), logits=[2.0, 0.0, 0.0, 0.0])
    pop = Population.from_batch(batch, 3)
    labels = [0, 0]
    k, _ = aga_select(pop, labels, model, MODE_UNTARGETED)
    loss = cross_entropy(model.predict(batch), labels)
    expected = 1.0 / (1.0 + math.exp(-loss))
    assert attack_score(loss, MODE_UNTARGETED) == pytest.approx(expected, abs=1e-9)
    assert k == 0


# ---------------------------------------------------------------------------
# genetic attack (AGA)


def test_aga_no_operators_is_identity():
    batch = make_batch()
    model, labels = oracle_and_labels(batch)
    for n_i in (1, 4):
        cfg = AttackConfig(algorithm="aga", iterations=n_i, p_mutation=0.0, p_crossover=0.0, seed=6)
        outcome = aga_attack(batch, labels, model, cfg)
        assert np.array_equal(outcome.batch.data, batch.data)


def test_aga_determinism_and_lanes():
    batch = make_batch(b=8, shape=(3, 32, 32))
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="aga", iterations=4, seed=13)
    a = aga_attack(batch, labels, model, cfg)
    b = aga_attack(batch, labels, model, cfg)
    c = aga_attack(batch, labels, model, cfg, lanes=4)
    assert np.array_equal(a.batch.data, b.batch.data)
    assert np.array_equal(a.batch.data, c.batch.data)


def test_aga_matches_straight_line_reimplementation():
    # Independent line-by-line rebuild of the generation loop using only the
    # public image ops, driven by the documented rng event schedule.
    batch = make_batch(b=4)
    model, labels = oracle_and_labels(batch)
    n_p, n_i, seed = 3, 3, 7
    cfg = AttackConfig(algorithm="aga", iterations=n_i, population=n_p, seed=seed)

    root = RngStream(seed)
    current = batch.data
    h = batch.image_shape[1]
    for t in range(n_i):
        candidates = [current.copy() for _ in range(n_p)]
        for j in range(n_p):
            if root.uniform(0.0, 1.0) < cfg.p_mutation:
                params = sample_affine(root)
                cand = Batch(candidates[j])
                warped = np.stack(
                    [apply_affine(cand.image(i), params).data for i in range(cand.size)]
                )
                delta = root.derive("aga-noise", t, j).uniform_array(0.0, cfg.epsilon, warped.shape)
                candidates[j] = np.clip(warped.astype(np.float64) + delta, 0.0, 1.0).astype(np.float32)
        for j in range(0, n_p - 1, 2):
            if root.uniform(0.0, 1.0) < cfg.p_crossover:
                r = root.integer(1, h)
                top = candidates[j][:, :, :r, :].copy()
                candidates[j][:, :, :r, :] = candidates[j + 1][:, :, :r, :]
                candidates[j + 1][:, :, :r, :] = top
        scores = [
            attack_score(cross_entropy(model.predict(Batch(c)), labels), MODE_UNTARGETED)
            for c in candidates
        ]
        current = candidates[int(np.argmax(scores))]

    outcome = aga_attack(batch, labels, model, cfg)
    assert np.array_equal(outcome.batch.data, current)


def test_aga_compounds_pure_warps():
    # p_m = 1, p_c = 0, eps = 0: outcome equals sequentially applying the
    # recorded per-generation params to the original batch.
    batch = make_batch(b=2, shape=(1, 8, 8))
    model, labels = oracle_and_labels(batch, n_cls=4)
    cfg = AttackConfig(algorithm="aga", iterations=3, population=2, p_mutation=1.0, p_crossover=0.0, epsilon=0.0, seed=17)
    outcome = aga_attack(batch, labels, model, cfg)

    current = batch
    for gen in outcome.provenance["generations"]:
        chosen = [m for m in gen["mutations"] if m["candidate"] == gen["selected"]]
        assert len(chosen) == 1
        from igaff.imagecore import AffineParams, apply_affine_batch

        current = apply_affine_batch(current, AffineParams.from_list(chosen[0]["params"]))
    assert np.array_equal(outcome.batch.data, current.data)


def test_aga_tracks_but_does_not_return_global_best():
    batch = make_batch(b=3)
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="aga", iterations=4, seed=23, track_global_best=True)
    outcome = aga_attack(batch, labels, model, cfg)
    assert "global_best" in outcome.provenance
    best = max(r.score for r in outcome.records)
    assert outcome.provenance["global_best"]["score"] == pytest.approx(best)
    # the returned batch is always the LAST generation's winner
    assert outcome.records[-1].score == outcome.final_score


def test_aga_provenance_replay_bit_exact():
    batch = make_batch(b=3)
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="aga", iterations=5, p_mutation=0.8, p_crossover=0.8, seed=29)
    outcome = aga_attack(batch, labels, model, cfg)
    assert np.array_equal(replay_aga(batch, outcome.provenance).data, outcome.batch.data)


def test_aga_provenance_replay_survives_json(tmp_path):
    import json

    batch = make_batch(b=2)
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="aga", iterations=3, p_mutation=1.0, seed=37)
    outcome = aga_attack(batch, labels, model, cfg)
    path = tmp_path / "prov.json"
    path.write_text(json.dumps(outcome.provenance))
    loaded = json.loads(path.read_text())
    assert np.array_equal(replay_aga(batch, loaded).data, outcome.batch.data)


def test_aga_respects_derived_rng_streams():
    batch = make_batch(b=2)
    model, labels = oracle_and_labels(batch)
    cfg = AttackConfig(algorithm="aga", iterations=3, seed=0)
    rng = RngStream(99).derive("batch", 2)
    a = aga_attack(batch, labels, model, cfg, rng=rng)
    b = aga_attack(batch, labels, model, cfg, rng=RngStream(99).derive("batch", 2))
    assert np.array_equal(a.batch.data, b.batch.data)
    assert np.array_equal(replay_aga(batch, a.provenance).data, a.batch.data)


def test_targeted_modes_disagree_on_direction():
    batch = make_batch(b=6, shape=(3, 12, 12), lo=0.3, hi=0.5, seed=8)
    model = BrightnessOracle(10, batch.image_shape)
    target = 9  # brightest bin: brightening noise lowers the target loss
    base = dict(algorithm="aga", iterations=6, p_mutation=1.0, epsilon=0.3, target=target, seed=101)
    intent = aga_attack(batch, None, model, AttackConfig(targeted_mode="paper-intent", **base))
    literal = aga_attack(batch, None, model, AttackConfig(targeted_mode="literal", **base))
    labels = np.full(batch.size, target)
    intent_loss = cross_entropy(model.predict(intent.batch), labels)
    literal_loss = cross_entropy(model.predict(literal.batch), labels)
    # paper-intent drives the target loss down; the literal sign drives it up
    assert intent_loss <= literal_loss


def test_aga_argmax_equals_argmin_target_ce_in_intent_mode():
    batch = make_batch(b=3)
    model = BrightnessOracle(10, batch.image_shape)
    pop = aga_mutate(
        Population.from_batch(batch, 3),
        AttackConfig(p_mutation=1.0, epsilon=0.2),
        RngStream(55),
    )
    target_labels = np.full(batch.size, 4)
    losses = [
        cross_entropy(model.predict(Batch(pop.candidates[j].copy())), target_labels)
        for j in range(pop.size)
    ]
    k, _ = aga_select(pop, target_labels, model, MODE_TARGETED_INTENT)
    assert k == int(np.argmin(losses))
