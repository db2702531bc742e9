import itertools

import pytest

from twopass import tuning
from twopass.vector_exp import DEFAULT_PARAMS, SEARCH_SPACE, TuningParams


@pytest.fixture
def cache(tmp_path, monkeypatch):
    path = tmp_path / "t.txt"
    monkeypatch.setenv(tuning.ENV_VAR, str(path))
    return path


def test_env_override(cache):
    assert tuning.cache_path() == cache


def test_parse_and_format_roundtrip():
    entries = {("softmax_two_pass", "box-a"): TuningParams(8, 2), ("exp_batch", "box-b"): TuningParams(1, 1)}
    text = tuning.format_entries(entries)
    assert "softmax_two_pass@box-a = 8 2" in text
    assert tuning.parse(text) == entries


def test_parse_comments_and_errors():
    assert tuning.parse("# hi\n\n  k@m = 4 2  # trailing\n") == {("k", "m"): TuningParams(4, 2)}
    with pytest.raises(ValueError, match="line 2"):
        tuning.parse("k@m = 4 2\nnonsense\n")
    with pytest.raises(ValueError):
        tuning.parse("k@m = 3 2\n")  # 3 is outside the search space


def test_lookup_falls_back(cache):
    assert tuning.lookup("softmax_reload") == DEFAULT_PARAMS
    cache.write_text("garbage\n")
    assert tuning.lookup("softmax_reload") == DEFAULT_PARAMS


def test_store_then_lookup(cache):
    tuning.store({"softmax_reload": TuningParams(16, 4)}, machine="m1")
    tuning.store({"softmax_two_pass": TuningParams(2, 2)}, machine="m1")
    assert tuning.lookup("softmax_reload", "m1") == TuningParams(16, 4)
    assert tuning.lookup("softmax_two_pass", "m1") == TuningParams(2, 2)
    assert tuning.lookup("softmax_two_pass", "other") == DEFAULT_PARAMS
    assert tuning.resolve("softmax_reload", TuningParams(1, 1)) == TuningParams(1, 1)
    assert not list(cache.parent.glob(".tuning-*"))


def test_store_for_this_machine_is_used(cache):
    tuning.store({"softmax_recompute": TuningParams(32, 8)})
    assert tuning.resolve("softmax_recompute", None) == TuningParams(32, 8)


def test_machine_id_is_slug():
    mid = tuning.machine_id()
    assert mid and all(c.isalnum() or c == "-" for c in mid)


def test_autotune_picks_fastest():
    fast = TuningParams(8, 2)
    ticks = itertools.count()
    current = {}

    def run(p):
        current["p"] = p

    def clock():
        # each candidate costs 10 ticks per call, the favourite 1
        return next(ticks) * (1 if current.get("p") == fast else 10)

    winner, table = tuning.autotune(run, SEARCH_SPACE, repetitions=2, clock=clock)
    assert winner == fast
    assert [p for p, _ in table] == list(SEARCH_SPACE)
