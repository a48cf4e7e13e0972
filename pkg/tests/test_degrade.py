import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from drikit.analysis import psnr
from drikit.degrade import (
    ANGLES, RAIN_DISTANCES, SNOW_CELLS, DegradationSpec, PairedDataset, apply_haze, apply_noise, apply_rain,
    apply_snow, build_paired_dataset, dataset_digest, depth_map, derangement, gen_clean, levels,
    load_dataset, make_adversarial, motion_kernel, read_manifest, redraw, save_dataset, screen, snow_layer,
)
from drikit.errors import InvalidArgumentError
from drikit.rng import substream


def flat(value, size=32, channels=3):
    return np.full((channels, size, size), value, dtype=np.float32)


SCHARR_X = np.array([[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]]) / 32.0


def streak_orientation(diff):
    """Orientation (degrees, counter-clockwise from +x, rows pointing down) along which
    the image varies least: the minor eigenvector of the Scharr structure tensor."""
    img = diff.astype(np.float64)
    gx = ndimage.correlate(img, SCHARR_X, mode="wrap")
    gy = -ndimage.correlate(img, SCHARR_X.T, mode="wrap")   # flip so +y points up
    jxx, jyy, jxy = np.sum(gx * gx), np.sum(gy * gy), np.sum(gx * gy)
    # major axis of the gradient distribution; streaks run perpendicular to it
    major = 0.5 * math.degrees(math.atan2(2 * jxy, jxx - jyy))
    return (major + 90.0) % 180.0


def angle_gap(a, b):
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


class TestClean:
    def test_deterministic(self):
        assert np.array_equal(gen_clean(3, 16, 5), gen_clean(3, 16, 5))

    def test_range(self):
        x = gen_clean(20, 24, 1)
        assert x.min() >= 0.0 and x.max() <= 1.0 and x.dtype == np.float32

    def test_mean_in_band(self):
        means = gen_clean(100, 16, 2).mean(axis=(1, 2, 3))
        assert 0.2 <= means.min() and means.max() <= 0.8

    def test_min_size(self):
        with pytest.raises(InvalidArgumentError):
            gen_clean(1, 15, 0)


class TestNoise:
    def test_sigma_zero_identity(self):
        c = gen_clean(1, 16, 0)[0]
        assert np.array_equal(apply_noise(c, 0, 1).degraded, c)

    def test_noise_std(self):
        c = flat(0.5, 64)
        n = apply_noise(c, 15, 3).degraded.astype(np.float64) - 0.5
        assert abs(n.std() / (15 / 255) - 1) < 0.05

    def test_mid_gray_psnr(self):
        c = flat(0.5, 64)
        assert psnr(apply_noise(c, 15, 4).degraded, c) == pytest.approx(20 * math.log10(255 / 15), abs=0.5)

    def test_negative_sigma(self):
        with pytest.raises(InvalidArgumentError):
            apply_noise(flat(0.5), -1, 0)


class TestHaze:
    def test_beta_zero_identity(self):
        c = gen_clean(1, 16, 0)[0]
        assert np.array_equal(apply_haze(c, 0.0, 0.8, "radial").degraded, c)

    def test_infinite_depth_is_airlight(self):
        out = apply_haze(gen_clean(1, 16, 0)[0], 1.0, 0.7, "constant", d0=1e6).degraded
        assert np.allclose(out, 0.7, atol=1e-7)

    def test_closed_form(self):
        out = apply_haze(flat(0.2), 1.0, 0.8, "constant", d0=1.0).degraded
        assert out[0, 0, 0] == pytest.approx(0.2 * math.exp(-1) + 0.8 * (1 - math.exp(-1)), abs=1e-6)
        assert out[0, 0, 0] == pytest.approx(0.5793, abs=1e-4)

    def test_bad_depth_mode(self):
        with pytest.raises(InvalidArgumentError):
            apply_haze(flat(0.2), 1.0, 0.8, "spherical")

    def test_depth_modes(self):
        r = depth_map((9, 9), "radial")
        assert r[4, 4] == pytest.approx(0.2) and r[0, 0] == pytest.approx(1.2)
        lin = depth_map((5, 3), "linear")
        assert lin[0, 0] == pytest.approx(1.2) and lin[-1, 2] == pytest.approx(0.2)

    @pytest.mark.parametrize("airlight", [0.0, 1.1])
    def test_airlight_range(self, airlight):
        with pytest.raises(InvalidArgumentError):
            DegradationSpec("haze", airlight=airlight)


class TestRain:
    def test_zero_strength_identity(self):
        c = gen_clean(1, 32, 0)[0]
        assert np.array_equal(apply_rain(c, 45, 20, 1, strength=0.0).degraded, c)

    def test_never_darkens(self):
        c = gen_clean(2, 32, 3)
        for i, img in enumerate(c):
            assert np.all(apply_rain(img, 60, 30, i).degraded >= img)

    @pytest.mark.parametrize("angle", ANGLES)
    @pytest.mark.parametrize("distance", [20, 35, 50])
    def test_streak_orientation(self, angle, distance):
        c = flat(0.3, 128, 1)
        diff = apply_rain(c, angle, distance, seed=angle * 100 + distance).degraded[0] - c[0]
        assert angle_gap(streak_orientation(diff), angle) <= 10.0

    def test_kernel_orientation_oracle(self):
        # the oracle itself: a single motion-blur kernel is a line at the configured angle
        for angle in ANGLES:
            k = np.fft.fftshift(motion_kernel((64, 64), angle, 30))
            assert angle_gap(streak_orientation(k), angle) <= 2.0

    @pytest.mark.parametrize("bad", [(30, 20), (45, 22), (45, 55)])
    def test_grid_validation(self, bad):
        with pytest.raises(InvalidArgumentError):
            apply_rain(flat(0.3), *bad, seed=0)


class TestSnow:
    def test_zero_strength_identity(self):
        c = gen_clean(1, 32, 0)[0]
        assert np.array_equal(apply_snow(c, 5, 45, 1, strength=0.0).degraded, c)

    def test_never_darkens(self):
        c = gen_clean(1, 32, 2)[0]
        assert np.all(apply_snow(c, 3, 120, 4).degraded >= c)

    def test_never_darkens_saturated(self):
        c = flat(1.0)
        assert np.array_equal(apply_snow(c, 3, 120, 4).degraded, c)

    def test_flip_symmetry_by_recomputation(self):
        _, st_ = snow_layer((32, 32), 5, 75, seed=9, stages=True)
        half = st_["levels"]
        assert np.array_equal(st_["mirrored"], screen(half, half[:, ::-1]))
        # screen is symmetric in its arguments, so the mirrored layer is its own flip
        np.testing.assert_allclose(st_["mirrored"], st_["mirrored"][:, ::-1], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("cell", [2, 10])
    def test_cell_range(self, cell):
        with pytest.raises(InvalidArgumentError):
            apply_snow(flat(0.3), cell, 45, 0)


class TestLayerHelpers:
    @settings(max_examples=50, deadline=None)
    @given(a=st.floats(0, 1), b=st.floats(0, 1))
    def test_screen_brightens_and_bounded(self, a, b):
        s = screen(a, b)
        assert max(a, b) - 1e-12 <= s <= 1.0 + 1e-12

    def test_levels_endpoints(self):
        layer = np.linspace(0, 1, 101)
        out = levels(layer)
        assert out[:56].max() == 0.0 and out[95:].min() == 1.0

    def test_levels_flat_layer(self):
        assert not levels(np.full((4, 4), 0.3)).any()

    @pytest.mark.parametrize("angle", ANGLES)
    def test_motion_kernel_normalized(self, angle):
        assert motion_kernel((16, 16), angle, 20).sum() == pytest.approx(1.0)


class TestAdversarial:
    def test_derangement_contract(self):
        pool = gen_clean(8, 16, 0)
        pairs, src = make_adversarial(pool, 3)
        assert np.all(src != np.arange(8))
        for j, p in enumerate(pairs):
            assert np.array_equal(p.clean, pool[j])

    def test_deterministic(self):
        pool = gen_clean(6, 16, 0)
        assert np.array_equal(make_adversarial(pool, 5)[1], make_adversarial(pool, 5)[1])

    def test_pool_of_one(self):
        with pytest.raises(InvalidArgumentError):
            make_adversarial(gen_clean(1, 16, 0), 0)

    def test_targets_are_far(self):
        pool = gen_clean(20, 16, 1)
        pairs, _ = make_adversarial(pool, 2)
        wrong = np.mean([np.mean((p.degraded - p.clean) ** 2) for p in pairs])
        own = np.mean([np.mean((apply_noise(c, 15, i).degraded - c) ** 2) for i, c in enumerate(pool)])
        assert wrong > 5 * own

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(2, 40), seed=st.integers(0, 2**31))
    def test_derangement_property(self, n, seed):
        perm = derangement(n, substream(seed, "t"))
        assert sorted(perm) == list(range(n)) and np.all(perm != np.arange(n))


COUNTS = {"train": 6, "val": 2, "test": 2}


@pytest.fixture(scope="module")
def small_ds():
    return build_paired_dataset(["noise", "haze", "rain", "snow", "adversarial"], COUNTS, 16, 7)


class TestDataset:
    def test_shared_content(self, small_ds):
        assert len(small_ds.clean) == 10
        for kind in small_ds.kinds:
            assert small_ds.degraded[kind].shape == small_ds.clean.shape

    def test_pairs_share_clean_bitwise(self, small_ds):
        a = small_ds.pairs("noise", "train")[1]
        b = small_ds.pairs("haze", "train")[1]
        assert a.tobytes() == b.tobytes()

    def test_splits_disjoint(self, small_ds):
        ids = [set(small_ds.ids(s)) for s in ("train", "val", "test")]
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
        assert small_ds.counts() == COUNTS

    def test_ranges(self, small_ds):
        for arr in small_ds.degraded.values():
            assert arr.min() >= 0 and arr.max() <= 1

    def test_specs_on_grid(self, small_ds):
        for sp in small_ds.specs["rain"]:
            assert sp.angle in ANGLES and sp.distance in RAIN_DISTANCES
        for sp in small_ds.specs["snow"]:
            assert sp.cell_size in SNOW_CELLS
        for sp in small_ds.specs["haze"]:
            assert 0.6 <= sp.beta <= 1.8 and sp.depth_mode == "radial"

    def test_adversarial_within_split(self, small_ds):
        for split, src in small_ds.derangements.items():
            assert len(src) == COUNTS[split] and np.all(src != np.arange(len(src)))

    def test_regenerate_bitwise(self, small_ds):
        again = build_paired_dataset(["noise", "haze", "rain", "snow", "adversarial"], COUNTS, 16, 7)
        assert again.clean.tobytes() == small_ds.clean.tobytes()
        for k in small_ds.kinds:
            assert again.degraded[k].tobytes() == small_ds.degraded[k].tobytes()

    def test_duplicate_kind(self):
        with pytest.raises(InvalidArgumentError):
            build_paired_dataset(["noise", "noise"], COUNTS, 16, 0)

    def test_redraw_independent(self, small_ds):
        d1, c1 = small_ds.pairs("noise", "train")
        d2, c2 = redraw(small_ds, "noise", "train", "x")
        assert np.array_equal(c1, c2) and not np.array_equal(d1, d2)

    def test_disk_round_trip(self, small_ds, tmp_path):
        save_dataset(small_ds, tmp_path / "a", echo=["hello = 1"])
        back = load_dataset(tmp_path / "a")
        assert isinstance(back, PairedDataset)
        assert back.clean.tobytes() == small_ds.clean.tobytes()
        for k in small_ds.kinds:
            assert back.degraded[k].tobytes() == small_ds.degraded[k].tobytes()
            assert back.specs[k] == small_ds.specs[k]
        assert read_manifest(tmp_path / "a")["seed"] == "7"

    def test_save_is_deterministic(self, small_ds, tmp_path):
        save_dataset(small_ds, tmp_path / "a")
        save_dataset(build_paired_dataset(list(small_ds.kinds), COUNTS, 16, 7), tmp_path / "b")
        assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")

    def test_spec_describe_parse(self, small_ds):
        for k in small_ds.kinds:
            for sp in small_ds.specs[k]:
                assert DegradationSpec.parse(k, sp.describe()) == sp
