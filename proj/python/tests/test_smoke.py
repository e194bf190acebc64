import math

import pytest

import sepoa

SMALL = """
skill_dim = 4
pretrain_steps = 1000
online_steps = 2000
feedback_frequency = 500
metrics_every = 500
queries_per_session = 4
total_feedback = 10
reward_epochs = 3
warmup = 200
particles = 256
estimator_steps = 20
task_samples = 10
seed = 3
"""


def test_probit_variance():
    assert abs(sepoa.probit_variance(1.0, 1.0) - 0.0549) <= 0.0005
    assert sepoa.probit_variance(2.0, 0.0) == 0.0


def test_mc_matches_closed_form():
    mc = sepoa.mc_disagreement(1.0, 1.0, trials=50000)
    assert abs(mc - sepoa.probit_variance(1.0, 1.0)) <= 0.02


def test_bt_probability():
    assert sepoa.bt_probability(0.0, 1.0) == pytest.approx(1.0 / (1.0 + math.exp(-1.0)))


def test_config_round_trip():
    text = sepoa.default_config()
    assert sepoa.parse_config(text) == text
    with pytest.raises(sepoa.ConfigError):
        sepoa.parse_config("colour = blue\n")


def test_run_is_reproducible():
    a = sepoa.run(SMALL)
    b = sepoa.run(SMALL)
    assert a["rows"] == b["rows"]
    assert len(a["rows"]) == 4
    assert a["rows"][-1]["feedback_used"] <= 10


def test_matchrate_above_threshold():
    res = sepoa.matchrate(samples=500)
    top = res["rows"][-1]
    assert top["bucket_lo"] >= res["threshold"]
    assert top["match_rate"] == 1.0
