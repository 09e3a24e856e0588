import numpy as np
import pytest

from iottrust.dataset import (
    FEATURE_NAMES,
    SURVEY_COLUMNS,
    Dataset,
    EncodingConfig,
    SocialContext,
    SurveyResponse,
    consolidate_answers,
    encode_features,
    filter_by_duration,
    interpolate,
    map_rating_to_level,
    parse_survey_csv,
    split,
    split_indices,
    write_survey_csv,
)
from iottrust.device import DeviceDescriptor, DeviceProperty, ReputationTables, device_reputation_weighted
from iottrust.errors import AugmentationError, DataError, EncodingError, SchemaError, TrustDomainError
from iottrust.model import TrustLevel
from iottrust.owner import Locality, OwnerConfig, SocialProfile, common_friends_factor_localized, face_to_face
from iottrust.service import ClaimVector, ReliabilityLedger, consumption_step, service_reliability

TABLES = ReputationTables([
    ("manufacturer", "acme", 0.9, 300),
    ("model", "a1", 0.6, 50),
    ("operating_system", "droid", 0.5, 900),
    ("carrier", "telco", 0.7, 20),
])


def response(**kw):
    base = dict(survey_id="s1", worker_id="w1", social_relation="family", owner_reputation=0.8,
                device_brand="acme", device_model="a1", device_os="droid", concurrent_consumers=3,
                carrier_reputation="telco", rating=7, duration_s=120.0)
    base.update(kw)
    return SurveyResponse(**base)


def write_csv(path, rows):
    lines = [",".join(SURVEY_COLUMNS)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


class TestParse:
    def test_three_rows(self, tmp_path):
        rows = [response(survey_id=f"s{i}").as_row() for i in range(3)]
        write_csv(tmp_path / "s.csv", rows)
        got, rejects = parse_survey_csv(tmp_path / "s.csv")
        assert len(got) == 3 and rejects == []
        assert got[0] == response(survey_id="s0")

    def test_bad_rating_rejected_with_line(self, tmp_path):
        rows = [response().as_row(), response(rating=5).as_row()]
        rows[1][SURVEY_COLUMNS.index("rating")] = 11
        write_csv(tmp_path / "s.csv", rows)
        got, rejects = parse_survey_csv(tmp_path / "s.csv")
        assert len(got) == 1
        assert rejects[0].line == 3 and "rating" in rejects[0].reason

    def test_header_only(self, tmp_path):
        write_csv(tmp_path / "s.csv", [])
        assert parse_survey_csv(tmp_path / "s.csv") == ([], [])

    def test_missing_columns(self, tmp_path):
        (tmp_path / "s.csv").write_text("survey_id,rating\n1,5\n")
        with pytest.raises(SchemaError):
            parse_survey_csv(tmp_path / "s.csv")

    def test_roundtrip(self, tmp_path):
        rs = [response(survey_id=f"s{i}", rating=i + 1) for i in range(5)]
        write_survey_csv(rs, tmp_path / "s.csv")
        assert parse_survey_csv(tmp_path / "s.csv")[0] == rs


class TestDurationFilter:
    @pytest.mark.parametrize("d,kept", [(45, False), (59.9, False), (60, True), (120, True),
                                        (300, True), (301, False)])
    def test_bounds(self, d, kept):
        k, r = filter_by_duration([response(duration_s=d)])
        assert (len(k) == 1) == kept and len(k) + len(r) == 1

    def test_partition(self):
        rs = [response(survey_id=str(i), duration_s=d) for i, d in enumerate([10, 60, 200, 400])]
        k, r = filter_by_duration(rs)
        assert sorted(k + r, key=lambda x: x.survey_id) == rs


def group(sid, ratings):
    return [response(survey_id=sid, worker_id=f"w{i}", rating=r) for i, r in enumerate(ratings)]


class TestConsolidate:
    def test_accepts_agreeing(self):
        g = group("a", [5, 6, 5, 5, 4, 6, 5, 5, 6, 5])
        accepted, flagged = consolidate_answers(g, seed=0)
        assert flagged == [] and accepted[0] in g

    def test_flags_outlier(self):
        accepted, flagged = consolidate_answers(group("a", [5] * 9 + [10]), seed=0)
        assert accepted == [] and flagged == ["a"]

    def test_identical(self):
        accepted, _ = consolidate_answers(group("a", [7] * 10))
        assert len(accepted) == 1

    def test_boundary_deviation_two_accepted(self):
        # mean 5, max deviation exactly 2
        accepted, flagged = consolidate_answers(group("a", [3, 7, 5, 5, 5, 5, 5, 5, 5, 5]))
        assert len(accepted) == 1 and not flagged

    def test_seeded_pick(self):
        g = group("a", [5, 6, 5, 5, 4, 6, 5, 5, 6, 5]) + group("b", [2] * 10)
        assert consolidate_answers(g, seed=3) == consolidate_answers(g, seed=3)

    def test_group_size(self):
        with pytest.raises(DataError, match="b"):
            consolidate_answers(group("a", [5] * 10) + group("b", [5] * 9))


class TestLevels:
    @pytest.mark.parametrize("rating,level", [(1, 0), (2, 0), (3, 1), (4, 1), (5, 2), (6, 2),
                                              (7, 3), (8, 3), (9, 4), (10, 4)])
    def test_bins(self, rating, level):
        assert map_rating_to_level(rating) == level

    def test_names(self):
        assert map_rating_to_level(1) is TrustLevel.NotTrusted
        assert map_rating_to_level(10) is TrustLevel.HighlyTrusted
        assert map_rating_to_level(5) is TrustLevel.Neutral

    @pytest.mark.parametrize("rating", [0, 11, 2.5])
    def test_domain(self, rating):
        with pytest.raises(TrustDomainError):
            map_rating_to_level(rating)


class TestEncode:
    def test_unobserved_service_default(self):
        s = encode_features(response(), TABLES)
        assert s.features[FEATURE_NAMES.index("service.reliability")] == 0.5

    def test_family_relation(self):
        s = encode_features(response(social_relation="family"), TABLES)
        assert s.features[0] == 1.0
        assert encode_features(response(social_relation="none"), TABLES).features[0] == 0.0

    def test_unknown_value_names_attribute(self):
        with pytest.raises(EncodingError, match="model"):
            encode_features(response(device_model="zzz"), TABLES)
        with pytest.raises(EncodingError, match="social_relation"):
            encode_features(response(social_relation="nemesis"), TABLES)

    def test_composition(self):
        """A full row equals the hand-composed perspective formulas."""
        locs = {"p": Locality(1.0, 1.0), "c": Locality(0.5, 1.0), "f": Locality(0.5, 0.5)}
        p = SocialProfile("p", {"c": 2, "f": 3}, locs["p"])
        c = SocialProfile("c", {"p": 2, "f": 1}, locs["c"])
        claims = ClaimVector.of(cores=4, ram_gb=4)
        ledger = consumption_step(ReliabilityLedger("s"), "b", claims, [2.0, 4.0], 60.0, 0.5)
        r = response(social_relation="friend", concurrent_consumers=4)
        s = encode_features(r, TABLES, EncodingConfig(max_concurrent_consumers=8),
                            SocialContext(p, c, locs), ledger)

        device = DeviceDescriptor("d", (DeviceProperty("manufacturer", 0.9, 300),
                                        DeviceProperty("model", 0.6, 50),
                                        DeviceProperty("operating_system", 0.5, 900)))
        expected = [
            2 / 3 * face_to_face(locs["p"], locs["c"]),
            common_friends_factor_localized(p, c, OwnerConfig(3, 0.5, 0.5), locs),
            0.8,
            device_reputation_weighted(device),
            0.7,
            service_reliability(ledger),
            0.5,
        ]
        np.testing.assert_allclose(s.features, expected, rtol=0, atol=1e-15)
        assert s.level is TrustLevel.Trusted
        assert np.all((0 <= s.features) & (s.features <= 1))

    def test_consumers_capped(self):
        s = encode_features(response(concurrent_consumers=50), TABLES)
        assert s.features[-1] == 1.0


def toy_dataset(n_per_level=20, seed=0):
    rng = np.random.default_rng(seed)
    ratings = np.repeat(np.arange(1, 11), n_per_level // 2)
    X = rng.random((len(ratings), 3))
    return Dataset(X, ratings, ["owner.a", "device.b", "service.c"])


class TestInterpolate:
    def test_tenfold(self):
        ds = toy_dataset()
        big = interpolate(ds, 10, seed=1)
        assert len(big) == 10 * len(ds)
        assert np.sum(big.provenance == "interpolated") == 9 * len(ds)
        assert np.array_equal(big.X[: len(ds)], ds.X)

    def test_factor_one(self):
        ds = toy_dataset()
        assert interpolate(ds, 1) is ds

    def test_same_level_and_between_parents(self):
        ds = toy_dataset()
        big = interpolate(ds, 5, seed=2)
        synth = big.subset(np.flatnonzero(big.provenance == "interpolated"))
        for lvl in range(5):
            rows = ds.X[ds.levels == lvl]
            s = synth.X[synth.levels == lvl]
            assert len(s) > 0
            assert np.all(s >= rows.min(axis=0) - 1e-12) and np.all(s <= rows.max(axis=0) + 1e-12)

    def test_midpoint(self):
        ds = Dataset([[0.2, 0.0], [0.4, 1.0]], [5, 6], ["owner.a", "owner.b"])
        big = interpolate(ds, 400, seed=0)
        synth = big.X[2:]
        # synthetic samples lie on the segment between the two parents
        np.testing.assert_allclose(synth[:, 0], 0.2 + 0.2 * synth[:, 1], atol=1e-12)
        assert set(big.ratings[2:]) <= {5, 6}

    def test_single_sample_level(self):
        ds = Dataset([[0.1], [0.2], [0.3]], [1, 2, 10], ["owner.a"])
        with pytest.raises(AugmentationError, match="HighlyTrusted"):
            interpolate(ds, 2)

    def test_deterministic(self):
        ds = toy_dataset()
        a, b = interpolate(ds, 3, seed=9), interpolate(ds, 3, seed=9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.ratings, b.ratings)


class TestSplit:
    def test_seventy_thirty_sizes(self):
        ds = toy_dataset(1000)
        tr, te = split(ds, 0.7, seed=0)
        assert (len(tr), len(te)) == (3500, 1500)

    def test_disjoint_and_complete(self):
        levels = np.random.default_rng(0).integers(0, 5, 997)
        a, b = split_indices(levels, 0.7, seed=4)
        assert set(a).isdisjoint(b) and len(a) + len(b) == 997
        assert sorted(np.concatenate([a, b])) == list(range(997))
        assert len(a) == round(0.7 * 997)
        for lvl in range(5):
            n = np.sum(levels == lvl)
            assert abs(np.sum(levels[a] == lvl) - 0.7 * n) < 1

    def test_deterministic(self):
        levels = np.random.default_rng(0).integers(0, 5, 300)
        assert all(np.array_equal(u, v) for u, v in zip(split_indices(levels, 0.7, 1),
                                                         split_indices(levels, 0.7, 1)))

    def test_domain(self):
        with pytest.raises(TrustDomainError):
            split(toy_dataset(), 1.0)
        with pytest.raises(TrustDomainError):
            split_indices([], 0.5)


class TestDatasetIO:
    def test_csv_roundtrip(self, tmp_path):
        ds = interpolate(toy_dataset(), 2)
        ds.to_csv(tmp_path / "d.csv")
        back = Dataset.from_csv(tmp_path / "d.csv")
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.ratings, ds.ratings)
        assert list(back.provenance) == list(ds.provenance)
        assert back.feature_names == ds.feature_names
        assert (tmp_path / "d.csv").read_text().splitlines()[0].startswith("owner.a,device.b")

    def test_perspective_columns(self):
        ds = Dataset(np.zeros((2, 7)), [1, 2])
        assert ds.perspectives == ["owner", "device", "service"]
        assert ds.columns("device") == [3, 4]
        assert ds.select(ds.columns("service")).feature_names == list(FEATURE_NAMES[5:])

    def test_empty_subset_keeps_columns(self):
        ds = toy_dataset()
        empty = ds.subset([])
        assert len(empty) == 0 and empty.X.shape == (0, 3)
