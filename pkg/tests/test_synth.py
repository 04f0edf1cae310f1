import numpy as np
import pytest

from skiprec.ingest import H, L, N, Interaction, classify, parse_interactions, IdMaps, load_features
from skiprec.synth import SynthConfig, generate, playing_times, tier_histogram

SMALL = dict(n_users=40, n_videos=30, interactions_per_user=10, d=6, seed=3)


def _classes(affinity, duration, config, seed=0, threshold=5.0):
    played = playing_times(affinity, duration, config, np.random.default_rng(seed))
    return [classify(Interaction("u", "v", p, d), threshold) for p, d in zip(played, duration)]


@pytest.mark.parametrize("affinity, expected", [(0.95, H), (0.5, L), (0.1, N)])
def test_tier_construction(affinity, expected):
    config = SynthConfig(tau_high=0.7, tau_low=0.3)
    dur = np.full(200, 30.0)
    played = playing_times(np.full(200, affinity), dur, config, np.random.default_rng(0))
    if expected is H:
        assert np.all(played == 30.0)
    elif expected is L:
        assert np.all((played > 5.0) & (played < 30.0))
    else:
        assert np.all((played >= 0.0) & (played <= 5.0))
    assert set(_classes(np.full(200, affinity), dur, config)) == {expected}


def test_uniform_affinities_give_tier_measure():
    # with affinity ~ U(0, 1) the class shares equal the tier widths: 0.3, 0.4, 0.3
    config = SynthConfig(tau_high=0.7, tau_low=0.3)
    rng = np.random.default_rng(11)
    n = 100_000
    aff = rng.uniform(0.0, 1.0, n)
    dur = rng.uniform(config.duration_min, config.duration_max, n)
    played = playing_times(aff, dur, config, rng)
    its = [Interaction("u", "v", p, d) for p, d in zip(played, dur)]
    hist = tier_histogram(its)
    shares = {c: hist[c] / n for c in "HLN"}
    expected = {"H": 1 - config.tau_high, "L": config.tau_high - config.tau_low, "N": config.tau_low}
    for c in "HLN":
        assert abs(shares[c] - expected[c]) < 0.01


def test_threshold_zero_has_no_negatives():
    config = SynthConfig(**SMALL)
    its = parse_interactions(generate(config).interactions_csv)
    assert tier_histogram(its, threshold=0.0)["N"] == 0


def test_all_high_affinity_all_positive():
    config = SynthConfig(tau_high=0.7, tau_low=0.3)
    aff = np.linspace(0.7, 0.999, 500)
    dur = np.random.default_rng(2).uniform(10, 60, 500)
    assert set(_classes(aff, dur, config)) == {H}


def test_playing_time_bounds():
    config = SynthConfig(**SMALL)
    ds = generate(config)
    its = parse_interactions(ds.interactions_csv)
    maps = IdMaps.from_interactions(its)
    u = np.array([int(it.user_id[1:]) for it in its])
    v = np.array([int(it.video_id[1:]) for it in its])
    aff = ds.truth.affinity(u, v)
    for it, a in zip(its, aff):
        assert it.playing_time <= it.duration
        assert config.duration_min <= it.duration <= config.duration_max
        if a >= config.tau_high:
            assert it.playing_time == it.duration
    assert len(its) == config.n_users * config.interactions_per_user
    assert len(maps.users) == config.n_users


def test_labels_follow_affinity_tiers():
    config = SynthConfig(**SMALL)
    ds = generate(config)
    for it in parse_interactions(ds.interactions_csv):
        a = ds.truth.affinity([int(it.user_id[1:])], [int(it.video_id[1:])])[0]
        tier = H if a >= config.tau_high else (L if a >= config.tau_low else N)
        assert classify(it) is tier


def test_affinity_is_sigmoid_of_dot_product():
    ds = generate(SynthConfig(**SMALL))
    t = ds.truth
    u, v = np.array([0, 5, 7]), np.array([1, 2, 29])
    ref = [1 / (1 + np.exp(-float(t.user_factors[a] @ t.video_factors[b]))) for a, b in zip(u, v)]
    assert np.allclose(t.affinity(u, v), ref, rtol=0, atol=1e-15)
    assert np.all((t.affinity(u, v) > 0) & (t.affinity(u, v) < 1))


def test_regeneration_is_byte_identical():
    a, b = generate(SynthConfig(**SMALL)), generate(SynthConfig(**SMALL))
    assert a.interactions_csv == b.interactions_csv
    assert a.features_csv == b.features_csv
    c = generate(SynthConfig(**{**SMALL, "seed": 4}))
    assert c.interactions_csv != a.interactions_csv


def test_features_parse_back_exactly():
    ds = generate(SynthConfig(**SMALL))
    its = parse_interactions(ds.interactions_csv)
    maps = IdMaps.from_interactions(its)
    table = load_features(ds.features_csv, maps, ds.config.d)
    for vid, i in maps.videos.items():
        assert np.array_equal(table[i], ds.features[int(vid[1:])])


def test_features_carry_factor_signal():
    ds = generate(SynthConfig(n_users=10, n_videos=400, d=32, seed=1))
    # a least-squares map from factors should explain most feature variance
    coef, *_ = np.linalg.lstsq(ds.truth.video_factors, ds.features, rcond=None)
    resid = ds.features - ds.truth.video_factors @ coef
    assert resid.var() < 0.5 * ds.features.var()


def test_exposure_bias_shifts_toward_liked_videos():
    base = SynthConfig(**{**SMALL, "n_users": 200, "n_videos": 200})
    biased = SynthConfig(**{**SMALL, "n_users": 200, "n_videos": 200, "exposure_bias": 1.0})

    def mean_affinity(cfg):
        ds = generate(cfg)
        its = parse_interactions(ds.interactions_csv)
        u = [int(it.user_id[1:]) for it in its]
        v = [int(it.video_id[1:]) for it in its]
        return ds.truth.affinity(u, v).mean()

    assert mean_affinity(biased) > mean_affinity(base) + 0.05


@pytest.mark.parametrize("kwargs", [
    dict(tau_high=0.3, tau_low=0.7),
    dict(tau_high=0.5, tau_low=0.5),
    dict(tau_high=1.0, tau_low=0.3),
    dict(tau_low=0.0),
    dict(duration_min=4.0),
    dict(duration_min=5.0),
    dict(duration_max=61.0),
    dict(duration_min=40.0, duration_max=30.0),
    dict(skip_window=0.0),
    dict(skip_window=6.0),
    dict(interactions_per_user=31, n_videos=30),
    dict(popularity_std=-1.0),
])
def test_invalid_configs_raise(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)
