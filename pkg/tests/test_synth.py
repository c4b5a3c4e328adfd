"""Generators against closed forms, noise calibration, burst semantics,
the dataset file format, and the exact-model error oracle."""

import numpy as np
import pytest

from lstmkf.errors import DatasetFormatError
from lstmkf.synth import (
    BurstSpec,
    TrajectoryDataset,
    TrajectorySequence,
    apply_bursts,
    gen_linear_cv,
    gen_oscillator,
    load_dataset,
    oracle_error,
    save_dataset,
)


def test_noiseless_measurements_equal_truth():
    ds = gen_linear_cv(2, 50, 3, q=0.1, r=0.0, seed=1)
    for s in ds.sequences:
        np.testing.assert_array_equal(s.measurements, s.truth)


def test_kickless_trajectory_is_exactly_linear():
    # q = 0 leaves the velocity constant, so pose_t = pose_0 + t*dt*v_0.
    dt = 0.5
    ds = gen_linear_cv(3, 40, 2, q=0.0, r=0.0, dt=dt, seed=4)
    for s in ds.sequences:
        pose0 = s.truth[0]
        v0 = (s.truth[1] - s.truth[0]) / dt
        t = np.arange(40)[:, None]
        np.testing.assert_allclose(s.truth, pose0 + t * dt * v0, atol=1e-12)


def test_measurement_noise_calibration():
    # Pooled over sequences: >= 1e4 samples, sample variance within 5%.
    r = 0.36
    ds = gen_linear_cv(2, 500, 12, q=0.01, r=r, seed=8)
    noise = np.concatenate([s.measurements - s.truth for s in ds.sequences]).ravel()
    assert noise.size >= 10_000
    assert abs(noise.var() - r) / r < 0.05
    assert abs(noise.mean()) < 3.0 * np.sqrt(r / noise.size)


def test_process_noise_calibration():
    # Velocity increments are the kicks: variance q within 5%.
    q = 0.04
    ds = gen_linear_cv(1, 1000, 11, q=q, r=0.0, dt=1.0, seed=9)
    kicks = []
    for s in ds.sequences:
        vel = np.diff(s.truth[:, 0])
        kicks.append(np.diff(vel))
    kicks = np.concatenate(kicks)
    assert kicks.size >= 10_000
    assert abs(kicks.var() - q) / q < 0.05


def test_generation_is_deterministic_and_seed_sensitive():
    a = gen_linear_cv(2, 30, 2, q=0.01, r=0.2, seed=5)
    b = gen_linear_cv(2, 30, 2, q=0.01, r=0.2, seed=5)
    for sa, sb in zip(a.sequences, b.sequences):
        np.testing.assert_array_equal(sa.truth, sb.truth)
        np.testing.assert_array_equal(sa.measurements, sb.measurements)
    c = gen_linear_cv(2, 30, 2, q=0.01, r=0.2, seed=6)
    assert np.abs(a.sequences[0].truth - c.sequences[0].truth).max() > 1e-3


def test_index_offset_gives_disjoint_streams():
    head = gen_linear_cv(1, 20, 2, q=0.01, r=0.1, seed=3, index_offset=0)
    tail = gen_linear_cv(1, 20, 2, q=0.01, r=0.1, seed=3, index_offset=2)
    blocks = head.sequences + tail.sequences
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            assert np.abs(blocks[i].truth - blocks[j].truth).max() > 1e-6
    # offset k reproduces sequence k of a larger batch
    four = gen_linear_cv(1, 20, 4, q=0.01, r=0.1, seed=3)
    np.testing.assert_array_equal(four.sequences[2].truth, tail.sequences[0].truth)


def test_oscillator_closed_form_and_period():
    amplitude, frequency, dt = 2.0, 0.05, 1.0
    ds = gen_oscillator(2, 60, 3, amplitude, frequency, r=0.0, dt=dt, seed=12)
    period = round(1.0 / (frequency * dt))
    for s in ds.sequences:
        assert np.abs(s.truth).max() <= amplitude + 1e-12
        np.testing.assert_allclose(s.truth[period:], s.truth[:-period], atol=1e-9)
        # phases differ per axis almost surely
        assert np.abs(s.truth[:, 0] - s.truth[:, 1]).max() > 1e-3


def test_generator_argument_validation():
    with pytest.raises(ValueError):
        gen_linear_cv(0, 10, 1, q=0.1, r=0.1)
    with pytest.raises(ValueError):
        gen_linear_cv(1, 0, 1, q=0.1, r=0.1)
    with pytest.raises(ValueError):
        gen_linear_cv(1, 10, 0, q=0.1, r=0.1)
    with pytest.raises(ValueError):
        gen_linear_cv(1, 10, 1, q=-0.1, r=0.1)
    with pytest.raises(ValueError):
        gen_linear_cv(1, 10, 1, q=0.1, r=0.1, dt=0.0)
    with pytest.raises(ValueError):
        gen_oscillator(1, 10, 1, amplitude=-1.0, frequency=0.1, r=0.1)


def test_dataset_properties():
    ds = gen_oscillator(3, 25, 4, 1.0, 0.1, r=0.01, seed=2)
    assert ds.n_sequences == 4
    assert ds.length == 25
    assert ds.dim == 3
    pairs = ds.train_pairs()
    assert len(pairs) == 4
    np.testing.assert_array_equal(pairs[0][0], ds.sequences[0].truth)
    np.testing.assert_array_equal(pairs[0][1], ds.sequences[0].measurements)


# ----------------------------------------------------------------------
# bursts
# ----------------------------------------------------------------------


def test_burst_changes_only_masked_steps():
    ds = gen_oscillator(2, 30, 2, 1.0, 0.05, r=0.25, seed=20)
    spec = BurstSpec([(3, 5), (11, 11)], scale=10.0)
    burst = apply_bursts(ds, spec, seed=99)
    mask = np.zeros(30, dtype=bool)
    mask[2:5] = True
    mask[10] = True
    for src, dst in zip(ds.sequences, burst.sequences):
        np.testing.assert_array_equal(dst.truth, src.truth)
        np.testing.assert_array_equal(dst.measurements[~mask], src.measurements[~mask])
        assert np.abs(dst.measurements[mask] - src.measurements[mask]).min() > 0.0
    assert burst.metadata["bursts"] == {
        "intervals": [[3, 5], [11, 11]],
        "scale": 10.0,
        "seed": 99,
    }
    assert ds.metadata["bursts"] is None  # source untouched


def test_burst_noise_scale_calibration():
    r, scale = 0.25, 10.0
    ds = gen_oscillator(1, 400, 30, 1.0, 0.02, r=r, seed=21)
    spec = BurstSpec([(101, 200)], scale=scale)
    burst = apply_bursts(ds, spec, seed=50)
    mask = spec.mask(400)
    inside = np.concatenate(
        [(s.measurements - s.truth)[mask] for s in burst.sequences]
    ).ravel()
    outside = np.concatenate(
        [(s.measurements - s.truth)[~mask] for s in burst.sequences]
    ).ravel()
    assert abs(inside.var() / (scale**2 * r) - 1.0) < 0.1
    assert abs(outside.var() / r - 1.0) < 0.1


def test_burst_scale_one_is_statistically_unchanged():
    r = 0.5
    ds = gen_oscillator(1, 300, 30, 1.0, 0.02, r=r, seed=22)
    burst = apply_bursts(ds, BurstSpec([(51, 250)], scale=1.0), seed=7)
    mask = BurstSpec([(51, 250)], scale=1.0).mask(300)
    inside = np.concatenate([(s.measurements - s.truth)[mask] for s in burst.sequences])
    assert abs(inside.var() / r - 1.0) < 0.1


def test_burst_is_deterministic():
    ds = gen_oscillator(1, 50, 2, 1.0, 0.05, r=0.25, seed=23)
    spec = BurstSpec([(10, 20)], scale=5.0)
    a = apply_bursts(ds, spec, seed=4)
    b = apply_bursts(ds, spec, seed=4)
    for sa, sb in zip(a.sequences, b.sequences):
        np.testing.assert_array_equal(sa.measurements, sb.measurements)


def test_burst_spec_validation():
    with pytest.raises(ValueError):
        BurstSpec([(5, 3)], scale=1.0)
    with pytest.raises(ValueError):
        BurstSpec([(0, 3)], scale=1.0)
    with pytest.raises(ValueError):
        BurstSpec([(1, 5), (4, 8)], scale=1.0)
    with pytest.raises(ValueError):
        BurstSpec([(1, 5)], scale=-2.0)
    spec = BurstSpec([(1, 5)], scale=1.0)
    with pytest.raises(ValueError):
        spec.validate_for(4)
    ds = gen_oscillator(1, 4, 1, 1.0, 0.05, r=0.25, seed=1)
    with pytest.raises(ValueError):
        apply_bursts(ds, spec, seed=0)


def test_burst_intervals_sort_and_merge_order():
    spec = BurstSpec([(11, 11), (3, 5)], scale=2.0)
    assert spec.intervals == [(3, 5), (11, 11)]
    mask = spec.mask(12)
    assert mask.sum() == 4


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------


def test_save_load_round_trip_is_bit_identical(tmp_path):
    ds = gen_linear_cv(2, 40, 3, q=0.02, r=0.3, dt=0.5, seed=30, index_offset=5)
    path = tmp_path / "data.ds"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.metadata == ds.metadata
    for src, dst in zip(ds.sequences, loaded.sequences):
        np.testing.assert_array_equal(src.truth, dst.truth)
        np.testing.assert_array_equal(src.measurements, dst.measurements)


def test_save_load_round_trip_with_bursts(tmp_path):
    ds = apply_bursts(
        gen_oscillator(1, 30, 2, 1.0, 0.05, r=0.25, seed=31),
        BurstSpec([(5, 10)], scale=8.0),
        seed=77,
    )
    path = tmp_path / "data.ds"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.metadata["bursts"] == {"intervals": [[5, 10]], "scale": 8.0, "seed": 77}
    np.testing.assert_array_equal(loaded.sequences[1].measurements, ds.sequences[1].measurements)


def _valid_lines(tmp_path):
    ds = gen_linear_cv(1, 3, 2, q=0.01, r=0.1, seed=40)
    path = tmp_path / "ok.ds"
    save_dataset(ds, path)
    return path.read_text().splitlines()


def _expect_error(tmp_path, lines, line_no, fragment):
    path = tmp_path / "bad.ds"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.line == line_no, str(info.value)
    assert fragment in str(info.value)


def test_load_reports_bad_header(tmp_path):
    lines = _valid_lines(tmp_path)
    _expect_error(tmp_path, ["not json"] + lines[1:], 1, "bad metadata header")
    _expect_error(tmp_path, ['{"format":"other"}'] + lines[1:], 1, "unknown format")
    broken = lines[0].replace('"version":1', '"version":2')
    _expect_error(tmp_path, [broken] + lines[1:], 1, "unsupported version")


def test_load_reports_structure_errors_with_line_numbers(tmp_path):
    lines = _valid_lines(tmp_path)
    # layout: 1 header, seq 0 at lines 2-6 (marker, columns, 3 rows), seq 1 at 7-11
    _expect_error(tmp_path, lines[:1] + ["# wrong"] + lines[2:], 2, "expected '# sequence 0'")
    _expect_error(tmp_path, lines[:2] + ["t,bad"] + lines[3:], 3, "column header")
    _expect_error(tmp_path, lines[:-1], 11, "truncated")
    row = lines[3].split(",")
    row[0] = "7"
    _expect_error(tmp_path, lines[:3] + [",".join(row)] + lines[4:], 4, "expected step 1")
    row = lines[4].split(",")
    row[1] = "oops"
    _expect_error(tmp_path, lines[:4] + [",".join(row)] + lines[5:], 5, "bad numeric value")
    _expect_error(tmp_path, lines[:3] + ["1,2.0"] + lines[4:], 4, "columns")
    _expect_error(tmp_path, lines + ["stray"], 12, "trailing")


def test_load_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.ds"
    path.write_text("")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.line == 1


def test_format_is_17_significant_digits(tmp_path):
    value = 0.1 + 0.2  # 0.30000000000000004
    ds = TrajectoryDataset(
        [TrajectorySequence(np.array([[value]]), np.array([[value]]))],
        {"n_seq": 1, "T": 1, "d": 1},
    )
    path = tmp_path / "p.ds"
    save_dataset(ds, path)
    assert "0.30000000000000004" in path.read_text()
    loaded = load_dataset(path)
    assert loaded.sequences[0].truth[0, 0] == value


# ----------------------------------------------------------------------
# oracle
# ----------------------------------------------------------------------


def test_oracle_error_is_zero_without_measurement_noise():
    ds = gen_linear_cv(2, 60, 2, q=0.05, r=0.0, seed=50)
    assert oracle_error(ds) < 1e-8


@pytest.mark.parametrize("seed", range(100))
def test_oracle_never_beats_raw_measurements_backwards(seed):
    # The exact-model filter must not lose to the raw measurements.
    ds = gen_linear_cv(1, 120, 1, q=0.02, r=0.4, seed=1000 + seed)
    raw = np.mean(
        [
            np.linalg.norm(s.measurements - s.truth, axis=1).mean()
            for s in ds.sequences
        ]
    )
    assert oracle_error(ds) <= raw


def test_oracle_rejects_other_generators():
    ds = gen_oscillator(1, 20, 1, 1.0, 0.05, r=0.25, seed=51)
    with pytest.raises(ValueError):
        oracle_error(ds)
