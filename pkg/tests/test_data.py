import numpy as np
import pytest
from scipy import stats

import lexisafe as lx
from lexisafe.data import (
    BehaviorPolicySpec,
    generate_dataset,
    load_dataset,
    safe_episode_fraction,
    sample_minibatch,
    save_dataset,
)
from lexisafe.errors import (
    BadMagicError,
    ChecksumMismatchError,
    ConfigError,
    HeaderMismatchError,
    TruncatedDataError,
    VersionMismatchError,
)
from lexisafe.rng import stream


def test_pure_safe_behavior_has_zero_cost(chain_env):
    ds = generate_dataset(chain_env, BehaviorPolicySpec(1.0, 0.0), 50, seed=1)
    assert np.all(ds.costs == 0.0)
    assert safe_episode_fraction(ds) == 1.0


def test_mixture_zero_cost_fraction_in_band(chain_env):
    # behavior mixes 50/50; exploration leaks a little cost into safe
    # episodes, so the binomial band around 0.5 is widened to [0.4, 0.6]
    ds = generate_dataset(chain_env, BehaviorPolicySpec(0.5, 0.1), 1000, seed=2)
    frac = safe_episode_fraction(ds)
    assert 0.4 <= frac <= 0.6


def test_generation_bit_deterministic(chain_env):
    a = generate_dataset(chain_env, BehaviorPolicySpec(), 100, seed=3)
    b = generate_dataset(chain_env, BehaviorPolicySpec(), 100, seed=3)
    for col in ("obs", "action", "reward", "costs", "next_obs", "done", "episode_id"):
        assert np.array_equal(getattr(a, col), getattr(b, col))


def test_episode_ids_contiguous_nondecreasing(chain_dataset):
    ep = chain_dataset.episode_id
    assert np.all(np.diff(ep) >= 0)
    assert set(np.unique(ep)) == set(range(int(ep.max()) + 1))


def test_positive_cost_present_in_mixed_data(chain_env):
    ds = generate_dataset(chain_env, BehaviorPolicySpec(0.5, 0.1), 50, seed=4)
    assert np.any(ds.costs > 0.0)


def test_full_exploration_covers_state_actions(chain_env):
    # epsilon 1 makes the behavior uniform; every non-terminal pair shows up
    ds = generate_dataset(chain_env, BehaviorPolicySpec(0.5, 1.0), 500, seed=5)
    states = ds.obs.argmax(axis=1)
    seen = set(zip(states.tolist(), ds.action.tolist()))
    for s in range(chain_env.n_states):
        if s in chain_env.terminal_states:
            continue
        for a in range(chain_env.n_actions):
            assert (s, a) in seen


def test_save_load_round_trip_bitwise(tmp_path, chain_dataset):
    path = tmp_path / "chain.lxsd"
    save_dataset(chain_dataset, path)
    loaded = load_dataset(path)
    for col in ("obs", "action", "reward", "costs", "next_obs", "done", "episode_id"):
        assert np.array_equal(getattr(chain_dataset, col), getattr(loaded, col)), col
    assert loaded.env_name == chain_dataset.env_name
    assert loaded.behavior_mix == chain_dataset.behavior_mix


def test_save_twice_identical_bytes(tmp_path, chain_dataset):
    p1, p2 = tmp_path / "a.lxsd", tmp_path / "b.lxsd"
    save_dataset(chain_dataset, p1)
    save_dataset(chain_dataset, p2)
    assert p1.read_bytes() == p2.read_bytes()


def _write_corrupt(tmp_path, ds, mutate):
    path = tmp_path / "corrupt.lxsd"
    save_dataset(ds, path)
    raw = bytearray(path.read_bytes())
    mutate(raw)
    path.write_bytes(bytes(raw))
    return path


def test_corrupt_magic(tmp_path, chain_dataset):
    def mutate(raw):
        raw[0] = ord("X")

    with pytest.raises(BadMagicError):
        load_dataset(_write_corrupt(tmp_path, chain_dataset, mutate))


def test_version_mismatch(tmp_path, chain_dataset):
    def mutate(raw):
        raw[4] = 9

    with pytest.raises(VersionMismatchError):
        load_dataset(_write_corrupt(tmp_path, chain_dataset, mutate))


def test_truncated_columns(tmp_path, chain_dataset):
    path = tmp_path / "trunc.lxsd"
    save_dataset(chain_dataset, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-200])
    with pytest.raises(TruncatedDataError):
        load_dataset(path)


def test_header_row_count_disagreement(tmp_path, chain_dataset):
    # header promises one extra transition that is not on disk
    import json
    import struct

    path = tmp_path / "short.lxsd"
    save_dataset(chain_dataset, path)
    raw = path.read_bytes()
    header_len = struct.unpack_from("<I", raw, 8)[0]
    header = json.loads(raw[12 : 12 + header_len])
    header["n_transitions"] += 1
    new_head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = raw[:8] + struct.pack("<I", len(new_head)) + new_head + raw[12 + header_len :]
    path.write_bytes(body)
    with pytest.raises(TruncatedDataError):
        load_dataset(path)


def test_extra_bytes_rejected(tmp_path, chain_dataset):
    def mutate(raw):
        raw.extend(b"\x00" * 16)

    with pytest.raises(HeaderMismatchError):
        load_dataset(_write_corrupt(tmp_path, chain_dataset, mutate))


def test_checksum_flip_detected(tmp_path, chain_dataset):
    import struct

    def mutate(raw):
        header_len = struct.unpack_from("<I", raw, 8)[0]
        raw[12 + header_len + 100] ^= 0xFF  # inside the first column

    with pytest.raises(ChecksumMismatchError):
        load_dataset(_write_corrupt(tmp_path, chain_dataset, mutate))


def test_sample_minibatch_single_row(chain_env):
    ds = generate_dataset(chain_env, BehaviorPolicySpec(1.0, 0.0), 1, seed=0).truncated(1)
    for _ in range(5):
        assert sample_minibatch(ds, 1, stream(0, "mb")).tolist() == [0]


def test_sample_minibatch_uniformity(chain_dataset):
    # chi-square on 1e6 draws over the first 100 rows
    ds = chain_dataset.truncated(100)
    rng = stream(6, "uniform")
    draws = [sample_minibatch(ds, 100, rng) for _ in range(10_000)]
    counts = np.bincount(np.concatenate(draws), minlength=100)
    assert stats.chisquare(counts).pvalue > 0.001


def test_sample_minibatch_deterministic(chain_dataset):
    a = sample_minibatch(chain_dataset, 64, stream(4, "mb"))
    b = sample_minibatch(chain_dataset, 64, stream(4, "mb"))
    assert np.array_equal(a, b)


def test_sample_minibatch_range_check(chain_dataset):
    with pytest.raises(ConfigError):
        sample_minibatch(chain_dataset, chain_dataset.n_transitions + 1, stream(0, "mb"))
    with pytest.raises(ConfigError):
        sample_minibatch(chain_dataset, 0, stream(0, "mb"))


def test_behavior_spec_validation():
    with pytest.raises(ConfigError):
        BehaviorPolicySpec(safe_fraction=1.5)
    with pytest.raises(ConfigError):
        BehaviorPolicySpec(epsilon_explore=-0.1)
