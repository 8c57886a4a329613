import numpy as np
import pytest

from clothgrasp.descriptors import (
    DESCRIPTOR_LENGTH,
    Classification,
    DegenerateRegionError,
    GarmentLabel,
    KnnEntry,
    KnnModel,
    ModelFormatError,
    VFHDescriptor,
    chi_square_distance,
    compute_vfh,
    descriptor_distance,
    knn_classify,
    load_model,
    save_model,
    train_model,
)
from clothgrasp.geometry import NormalMap, PointCloud, DepthImage


def random_region(rng, n=200):
    pts = rng.uniform(-0.05, 0.05, size=(n, 3))
    pts[:, 2] += 1.0 + 0.02 * np.sin(40 * pts[:, 0])
    normals = rng.normal(size=(n, 3))
    normals[:, 2] = -np.abs(normals[:, 2]) - 1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cloud = PointCloud(points=pts, valid=np.ones(n, dtype=bool))
    nmap = NormalMap(normals=normals, validity=np.ones(n, dtype=bool))
    return cloud, nmap


def random_descriptor(rng):
    bins = rng.random(DESCRIPTOR_LENGTH)
    for lo, hi in VFHDescriptor.block_slices():
        bins[lo:hi] /= bins[lo:hi].sum()
    return VFHDescriptor(bins)


def single_param_descriptor(t):
    """Descriptor whose first block is [1-t, t, 0, ...]; other blocks fixed."""
    bins = np.zeros(DESCRIPTOR_LENGTH)
    bins[0] = 1.0 - t
    bins[1] = t
    for lo, _ in VFHDescriptor.block_slices()[1:]:
        bins[lo] = 1.0
    return VFHDescriptor(bins)


class TestComputeVfh:
    def test_length_and_block_sums(self):
        cloud, nmap = random_region(np.random.default_rng(1))
        d = compute_vfh(cloud, nmap)
        assert d.bins.shape == (308,)
        for lo, hi in VFHDescriptor.block_slices():
            s = d.bins[lo:hi].sum()
            assert s == 0.0 or abs(s - 1.0) <= 1e-9

    def test_determinism(self):
        cloud, nmap = random_region(np.random.default_rng(2))
        d1 = compute_vfh(cloud, nmap)
        d2 = compute_vfh(cloud, nmap)
        assert descriptor_distance(d1, d2) == 0.0

    def test_point_order_invariance(self):
        rng = np.random.default_rng(3)
        cloud, nmap = random_region(rng)
        d1 = compute_vfh(cloud, nmap)
        perm = rng.permutation(len(cloud))
        cloud2 = PointCloud(points=cloud.points[perm], valid=cloud.valid[perm])
        nmap2 = NormalMap(normals=nmap.normals[perm], validity=nmap.validity[perm])
        d2 = compute_vfh(cloud2, nmap2)
        assert np.abs(d1.bins - d2.bins).max() <= 1e-12

    def test_planar_patch_viewpoint_concentration(self):
        xs, ys = np.meshgrid(np.linspace(-0.1, 0.1, 15), np.linspace(-0.1, 0.1, 15))
        pts = np.stack([xs.ravel(), ys.ravel(), np.ones(225)], axis=1)
        cloud = PointCloud(points=pts, valid=np.ones(225, dtype=bool))
        normals = np.tile([0.0, 0.0, -1.0], (225, 1))
        nmap = NormalMap(normals=normals, validity=np.ones(225, dtype=bool))
        d = compute_vfh(cloud, nmap, viewpoint=np.zeros(3))
        view = d.bins[4 * 45:]
        occupied = np.nonzero(view > 0)[0]
        assert len(occupied) >= 1
        assert occupied.max() - occupied.min() <= 2  # contiguous run of <= 3 bins
        assert view.sum() == pytest.approx(1.0)

    def test_scale_invariance_about_centroid(self):
        rng = np.random.default_rng(5)
        cloud, nmap = random_region(rng)
        d1 = compute_vfh(cloud, nmap)
        centroid = cloud.points.mean(axis=0)
        scaled = PointCloud(points=centroid + 2.5 * (cloud.points - centroid),
                            valid=cloud.valid)
        d2 = compute_vfh(scaled, nmap)
        # all four shape blocks are scale-free (angles + max-normalized distances)
        np.testing.assert_allclose(d1.bins[:180], d2.bins[:180], atol=1e-9)

    def test_degenerate_region(self):
        cloud = PointCloud(points=np.array([[0.0, 0.0, 1.0]]),
                           valid=np.ones(1, dtype=bool))
        nmap = NormalMap(normals=np.array([[0.0, 0.0, -1.0]]),
                         validity=np.ones(1, dtype=bool))
        with pytest.raises(DegenerateRegionError):
            compute_vfh(cloud, nmap)


def oracle_classify(model, d, k, metric="chi2"):
    """Independent linear-scan + sort implementation of the decision rule."""
    from clothgrasp.descriptors import _METRICS
    dist_fn = _METRICS[metric]
    scored = [(dist_fn(d.bins, e.descriptor.bins), i, e.label)
              for i, e in enumerate(model.entries)]
    scored.sort(key=lambda t: (t[0], t[1]))
    top = scored[:min(k, len(scored))]
    votes, summed = {}, {}
    for dist, _, lab in top:
        votes[lab] = votes.get(lab, 0) + 1
        summed[lab] = summed.get(lab, 0.0) + dist
    most = max(votes.values())
    tied = sorted([lab for lab in votes if votes[lab] == most],
                  key=lambda lab: (summed[lab], lab.value))
    return tied[0]


class TestKnnClassify:
    def test_single_label_model(self):
        rng = np.random.default_rng(7)
        entries = [KnnEntry(random_descriptor(rng), GarmentLabel.WAIST_PANT)
                   for _ in range(12)]
        model = KnnModel(entries=entries)
        out = knn_classify(model, random_descriptor(rng), k=10)
        assert out.label == GarmentLabel.WAIST_PANT
        assert out.votes == {GarmentLabel.WAIST_PANT: 10}

    def test_exact_match_k1(self):
        rng = np.random.default_rng(9)
        entries = [KnnEntry(random_descriptor(rng), GarmentLabel.NECK_SHIRT),
                   KnnEntry(random_descriptor(rng), GarmentLabel.WAIST_PANT)]
        model = KnnModel(entries=entries)
        out = knn_classify(model, entries[1].descriptor, k=1)
        assert out.label == GarmentLabel.WAIST_PANT
        assert out.summed_distance[GarmentLabel.WAIST_PANT] == 0.0

    def test_vote_tie_broken_by_summed_distance(self):
        # k=4 with votes {NS: 2, W: 2}; NS neighbors closer in total
        query = single_param_descriptor(0.0)
        entries = [
            KnnEntry(single_param_descriptor(0.20), GarmentLabel.NECK_SHIRT),
            KnnEntry(single_param_descriptor(0.22), GarmentLabel.NECK_SHIRT),
            KnnEntry(single_param_descriptor(0.30), GarmentLabel.WAIST_PANT),
            KnnEntry(single_param_descriptor(0.31), GarmentLabel.WAIST_PANT),
            KnnEntry(single_param_descriptor(0.9), GarmentLabel.NECK_TSHIRT),
        ]
        model = KnnModel(entries=entries)
        out = knn_classify(model, query, k=4)
        assert out.votes == {GarmentLabel.NECK_SHIRT: 2, GarmentLabel.WAIST_PANT: 2}
        assert out.summed_distance[GarmentLabel.NECK_SHIRT] < \
            out.summed_distance[GarmentLabel.WAIST_PANT]
        assert out.label == GarmentLabel.NECK_SHIRT
        assert oracle_classify(model, query, 4) == GarmentLabel.NECK_SHIRT

    def test_matches_oracle_on_random_models(self):
        rng = np.random.default_rng(11)
        labels = list(GarmentLabel)[:3]
        for trial in range(100):
            n = int(rng.integers(3, 25))
            entries = [KnnEntry(random_descriptor(rng), labels[rng.integers(3)])
                       for _ in range(n)]
            model = KnnModel(entries=entries)
            query = random_descriptor(rng)
            for k in (1, 10):
                got = knn_classify(model, query, k=k)
                assert got.label == oracle_classify(model, query, k)
                assert sum(got.votes.values()) == min(k, n)

    def test_constructed_tie_property(self):
        # random two-label models engineered to tie on votes
        rng = np.random.default_rng(13)
        for _ in range(25):
            t_ns = rng.uniform(0.05, 0.45, size=2)
            t_w = rng.uniform(0.05, 0.45, size=2)
            entries = [KnnEntry(single_param_descriptor(t), GarmentLabel.NECK_SHIRT)
                       for t in t_ns]
            entries += [KnnEntry(single_param_descriptor(t), GarmentLabel.WAIST_PANT)
                        for t in t_w]
            model = KnnModel(entries=entries)
            out = knn_classify(model, single_param_descriptor(0.0), k=4)
            tied = [lab for lab, v in out.votes.items() if v == 2]
            assert out.label == min(tied, key=lambda lab: (out.summed_distance[lab],
                                                           lab.value))

    def test_empty_model(self):
        with pytest.raises(ValueError):
            knn_classify(KnnModel(entries=[]), single_param_descriptor(0.1))


def wavy_image(seed, size=48):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size].astype(float)
    z = 1.2 - 0.01 * np.sin(2 * np.pi * x / 11.0 + rng.uniform(0, 6)) \
        - 0.008 * np.sin(2 * np.pi * y / 8.0 + rng.uniform(0, 6))
    return DepthImage.from_array(z)


class TestTrainModel:
    SQUARE = [(8, 8), (40, 8), (40, 40), (8, 40)]

    def test_three_valid_samples(self):
        samples = [(wavy_image(s), self.SQUARE, GarmentLabel.WAIST_PANT)
                   for s in (1, 2, 3)]
        # 48x48 test images have ~30 mm pixel pitch; widen the normal radius
        model = train_model(samples, normal_radius=0.08)
        assert len(model) == 3
        assert model.metadata["skipped"] == 0

    def test_sentinel_polygon_skipped(self):
        data = np.full((48, 48), 1.0)
        data[5:20, 5:20] = 0.0
        dead = DepthImage.from_array(data)
        samples = [(wavy_image(4), self.SQUARE, GarmentLabel.NECK_SHIRT),
                   (dead, [(6, 6), (18, 6), (18, 18), (6, 18)],
                    GarmentLabel.NECK_SHIRT)]
        model = train_model(samples, normal_radius=0.08)
        assert len(model) == 1
        assert model.metadata["skipped"] == 1

    def test_no_usable_samples(self):
        data = np.full((30, 30), 1.0)
        data[:] = 0.0
        data[0, 0] = 1.0
        img = DepthImage.from_array(data)
        with pytest.raises(ValueError):
            train_model([(img, [(5, 5), (20, 5), (20, 20), (5, 20)],
                          GarmentLabel.WAIST_PANT)])


class TestModelFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        entries = [KnnEntry(random_descriptor(rng),
                            list(GarmentLabel)[int(rng.integers(3))])
                   for _ in range(5)]
        model = KnnModel(entries=entries)
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert len(loaded) == 5
        for a, b in zip(model.entries, loaded.entries):
            assert a.label == b.label
            np.testing.assert_array_equal(a.descriptor.bins, b.descriptor.bins)

    def test_save_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(19)
        model = KnnModel(entries=[KnnEntry(random_descriptor(rng),
                                           GarmentLabel.NECK_TSHIRT)])
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_bin_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("vfh-knn v1 1\nWaistPant 0.5 0.5\n")
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("vfh-knn v2 0\n")
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_rejects_unknown_label(self, tmp_path):
        path = tmp_path / "bad.txt"
        bins = " ".join(["0.0"] * DESCRIPTOR_LENGTH)
        path.write_text(f"vfh-knn v1 1\nSock {bins}\n")
        with pytest.raises(ModelFormatError) as exc:
            load_model(path)
        assert exc.value.line == 2


class TestChiSquare:
    def test_zero_for_identical(self):
        a = np.array([0.5, 0.5, 0.0])
        assert chi_square_distance(a, a) == 0.0

    def test_known_value(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        assert chi_square_distance(a, b) == pytest.approx(2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(23)
        a, b = rng.random(308), rng.random(308)
        assert chi_square_distance(a, b) == pytest.approx(chi_square_distance(b, a))
