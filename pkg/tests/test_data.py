import numpy as np
import pytest

from fabricnet import (
    ClassLabel,
    ConfigError,
    DataError,
    Manifest,
    ManifestRow,
    SynthParams,
    Tensor,
    augment,
    load_image,
    split,
    synth_fabric,
    write_image,
)
from fabricnet.data import Dataset, load_dataset, model_input, synth_fabric_image


def make_manifest(n, labels=None):
    rows = []
    for i in range(n):
        label = ClassLabel(labels[i] if labels else i % 3)
        rows.append(ManifestRow(path=f"img_{i:04d}.png", label=label))
    return Manifest(rows=rows)


class TestClassLabel:
    def test_paper_encoding(self):
        assert int(ClassLabel.DEFECT_FREE) == 0
        assert int(ClassLabel.COLOR_SPOT) == 1
        assert int(ClassLabel.MISPRINT) == 2

    def test_out_of_range(self):
        with pytest.raises(DataError):
            ClassLabel.from_int(3)


class TestManifest:
    def test_csv_round_trip(self):
        m = make_manifest(5)
        m.rows[0].split = "train"
        m.markers.append("augment factor=5 seed=1")
        again = Manifest.from_csv(m.to_csv())
        assert again.rows == m.rows
        assert again.markers == m.markers
        assert again.to_csv() == m.to_csv()

    def test_duplicate_paths_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            Manifest(rows=[ManifestRow("a.png", ClassLabel(0)),
                           ManifestRow("a.png", ClassLabel(1))])

    def test_bad_header(self):
        with pytest.raises(DataError, match="header"):
            Manifest.from_csv("file,cls\nx.png,0\n")


class TestSplit:
    def test_paper_sizes_380(self):
        m = make_manifest(380)  # round-robin: 127/127/126 per class
        train, val, test = split(m, (0.4, 0.3, 0.3), seed=3)
        assert (len(train), len(val), len(test)) == (152, 114, 114)

    def test_degenerate_ratio_rejected(self):
        m = make_manifest(10)
        with pytest.raises((ConfigError, DataError)):
            split(m, (1.0, 0.0, 0.0), seed=1)

    def test_ratio_sum_checked(self):
        with pytest.raises(ConfigError, match="sum"):
            split(make_manifest(10), (0.5, 0.3, 0.3), seed=1)

    def test_same_seed_identical(self):
        m = make_manifest(50)
        a = split(m, seed=7)
        b = split(m, seed=7)
        for pa, pb in zip(a, b):
            assert [r.path for r in pa.rows] == [r.path for r in pb.rows]

    def test_empty_manifest(self):
        with pytest.raises(DataError):
            split(Manifest(rows=[]), seed=0)

    def test_partitions_disjoint_and_exhaustive(self):
        rng = np.random.default_rng(123)
        for _ in range(40):
            n = int(rng.integers(6, 400))
            labels = rng.integers(0, 3, n).tolist()
            m = make_manifest(n, labels)
            train, val, test = split(m, seed=int(rng.integers(0, 10_000)))
            paths = [r.path for part in (train, val, test) for r in part.rows]
            assert len(paths) == n
            assert set(paths) == {r.path for r in m.rows}

    def test_stratification_within_one_sample(self):
        rng = np.random.default_rng(321)
        for _ in range(10):
            n = int(rng.integers(30, 300))
            labels = rng.integers(0, 3, n).tolist()
            m = make_manifest(n, labels)
            train, val, test = split(m, seed=int(rng.integers(0, 10_000)))
            for part, ratio in ((train, 0.4), (val, 0.3), (test, 0.3)):
                for cls in (0, 1, 2):
                    n_cls = sum(1 for l in labels if l == cls)
                    got = sum(1 for r in part.rows if int(r.label) == cls)
                    # per-class rounding keeps each class within one sample
                    # of its proportional share (plus the train remainder)
                    assert abs(got - n_cls * ratio) <= 1.0 + 1e-9

    def test_split_tags_set(self):
        train, val, test = split(make_manifest(30), seed=1)
        assert all(r.split == "train" for r in train.rows)
        assert all(r.split == "val" for r in val.rows)
        assert all(r.split == "test" for r in test.rows)


def tiny_samples(n, size=32, seed0=50):
    sp = SynthParams(size=size, tile=8)
    return [synth_fabric(ClassLabel(i % 3), sp, seed0 + i) for i in range(n)]


class TestAugment:
    def test_paper_counts_152_to_760(self):
        samples = tiny_samples(152)
        grown = augment(samples, 5, seed=9)
        assert len(grown) == 760

    def test_factor_one_is_identity(self):
        samples = tiny_samples(4)
        grown = augment(samples, 1, seed=9)
        assert grown == samples

    def test_labels_preserved_and_values_in_range(self):
        samples = tiny_samples(6)
        grown = augment(samples, 5, seed=11)
        by_source = {s.source_id: s for s in samples}
        for g in grown:
            src = g.source_id.split("#")[0]
            assert g.label == by_source[src].label
            assert g.image.array.min() >= 0.0 and g.image.array.max() <= 1.0
            assert g.image.shape == by_source[src].image.shape

    def test_augmented_provenance(self):
        grown = augment(tiny_samples(3), 3, seed=2)
        assert [g.provenance for g in grown] == ["synthetic", "augmented", "augmented"] * 3

    def test_order_independent_per_sample(self):
        samples = tiny_samples(4)
        a = augment(samples, 3, seed=5)
        b = augment(list(reversed(samples)), 3, seed=5)
        by_id_a = {s.source_id: s.image.array for s in a}
        by_id_b = {s.source_id: s.image.array for s in b}
        assert by_id_a.keys() == by_id_b.keys()
        for key in by_id_a:
            np.testing.assert_array_equal(by_id_a[key], by_id_b[key])

    def test_bad_factor(self):
        with pytest.raises(ConfigError):
            augment(tiny_samples(1), 0, seed=1)


class TestSynthFabric:
    def test_bit_reproducible(self):
        sp = SynthParams()
        a = synth_fabric(ClassLabel.COLOR_SPOT, sp, 77)
        b = synth_fabric(ClassLabel.COLOR_SPOT, sp, 77)
        assert a.image.array.tobytes() == b.image.array.tobytes()

    def test_autocorrelation_peaks_at_tile_period(self):
        sp = SynthParams(size=64, tile=8)
        img, _ = synth_fabric_image(ClassLabel.DEFECT_FREE, sp, 13)
        for c in range(3):
            chan = img[c] - img[c].mean()
            corr = [float((chan * np.roll(chan, lag, axis=1)).mean()) for lag in range(1, 9)]
            assert int(np.argmax(corr)) == 7  # lag 8 == the tile period

    def test_spot_differs_only_inside_disc_masks(self):
        sp = SynthParams()
        base, _ = synth_fabric_image(ClassLabel.DEFECT_FREE, sp, 21)
        spotted, meta = synth_fabric_image(ClassLabel.COLOR_SPOT, sp, 21)
        mask = meta["spot_mask"]
        assert mask.any()
        np.testing.assert_array_equal(base[:, ~mask], spotted[:, ~mask])
        assert np.abs(base[:, mask] - spotted[:, mask]).max() > 0.05

    def test_misprint_is_translated_channel(self):
        sp = SynthParams()
        base, _ = synth_fabric_image(ClassLabel.DEFECT_FREE, sp, 34)
        shifted, meta = synth_fabric_image(ClassLabel.MISPRINT, sp, 34)
        ch = meta["channel"]
        dy, dx = meta["offset"]
        assert 2 <= max(abs(dy), abs(dx)) <= 6
        np.testing.assert_array_equal(shifted[ch], np.roll(base[ch], (dy, dx), axis=(0, 1)))
        others = [c for c in range(3) if c != ch]
        np.testing.assert_array_equal(shifted[others], base[others])

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            SynthParams(size=16)
        with pytest.raises(ConfigError):
            SynthParams(tile=2)


class TestImageIO:
    def test_black_png(self, tmp_path):
        path = tmp_path / "black.png"
        write_image(Tensor.zeros((3, 8, 8)), path)
        assert np.all(load_image(path).array == 0.0)

    def test_round_trip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(55)
        t = Tensor(rng.uniform(0, 1, (3, 16, 16)))
        path = tmp_path / "x.png"
        write_image(t, path)
        back = load_image(path)
        assert np.abs(back.array - t.array).max() <= 1.0 / 510.0 + 1e-12

    def test_checkerboard_fixture(self, tmp_path):
        board = np.indices((4, 4)).sum(axis=0) % 2
        t = Tensor(np.repeat(board[None, :, :], 3, axis=0).astype(float))
        path = tmp_path / "board.png"
        write_image(t, path)
        np.testing.assert_array_equal(load_image(path).array, t.array)

    def test_non_rgb_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "gray.png"
        Image.new("L", (4, 4)).save(path)
        with pytest.raises(DataError, match="RGB"):
            load_image(path)

    def test_decode_failure(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not a png")
        with pytest.raises(DataError):
            load_image(path)


class TestDataset:
    def test_from_samples_centers_pixels(self):
        samples = tiny_samples(3)
        ds = Dataset.from_samples(samples)
        np.testing.assert_allclose(
            ds.images.array[0], samples[0].image.array - 0.5, atol=0
        )
        assert model_input(samples[0].image).array.min() >= -0.5

    def test_shape_consistency_enforced(self):
        a = tiny_samples(1, size=32)[0]
        b = tiny_samples(1, size=64)[0]
        with pytest.raises(DataError, match="shape"):
            Dataset.from_samples([a, b])

    def test_load_dataset_split_filter(self, tmp_path):
        samples = tiny_samples(6)
        rows = []
        for i, s in enumerate(samples):
            name = f"s{i}.png"
            write_image(s.image, tmp_path / name)
            rows.append(ManifestRow(path=name, label=s.label, provenance="synthetic",
                                    split="train" if i < 4 else "val"))
        manifest = Manifest(rows=rows)
        ds = load_dataset(manifest, tmp_path, "train")
        assert len(ds) == 4
        with pytest.raises(DataError):
            load_dataset(manifest, tmp_path, "test")
