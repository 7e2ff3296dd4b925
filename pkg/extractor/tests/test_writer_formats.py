"""Byte-level checks of the writers against hand-parsed layouts."""

import struct

import numpy as np
import pytest

from vprextract import FormatError, write_features, write_globals


def unit_rows(rng, n, dim):
    m = rng.normal(size=(n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestFeatureWriter:
    def test_header_and_records_parse_by_hand(self, tmp_path):
        rng = np.random.default_rng(0)
        positions = np.array([[1.5, 2.25], [30.0, 40.5]])
        scores = np.array([0.5, 1.25])
        descriptors = unit_rows(rng, 2, 5)
        path = tmp_path / "img.vprf"
        write_features(path, width=64, height=48, positions=positions,
                       scores=scores, descriptors=descriptors)

        raw = path.read_bytes()
        magic, version, dim, width, height, count = struct.unpack_from(
            "<4sHHIII", raw)
        assert (magic, version, dim) == (b"VPRF", 1, 5)
        assert (width, height, count) == (64, 48, 2)
        floats = np.frombuffer(raw, dtype="<f4", offset=20).reshape(2, 8)
        np.testing.assert_array_equal(floats[:, 0:2],
                                      positions.astype(np.float32))
        np.testing.assert_array_equal(floats[:, 2], scores.astype(np.float32))
        np.testing.assert_array_equal(floats[:, 3:],
                                      descriptors.astype(np.float32))

    def test_empty_set_is_header_only(self, tmp_path):
        path = tmp_path / "empty.vprf"
        write_features(path, width=336, height=336,
                       positions=np.zeros((0, 2)), scores=np.zeros(0),
                       descriptors=np.zeros((0, 128)), descriptor_dim=128)
        raw = path.read_bytes()
        assert len(raw) == 20
        assert struct.unpack_from("<4sHHIII", raw) == (b"VPRF", 1, 128, 336, 336, 0)

    def test_empty_set_requires_dim(self, tmp_path):
        with pytest.raises(FormatError, match="descriptor_dim"):
            write_features(tmp_path / "x.vprf", width=8, height=8,
                           positions=np.zeros((0, 2)), scores=np.zeros(0),
                           descriptors=np.zeros((0, 0)))

    @pytest.mark.parametrize("x,y", [(-0.5, 1.0), (64.0, 1.0), (1.0, 48.0),
                                     (np.nan, 1.0)])
    def test_position_outside_image_rejected(self, tmp_path, x, y):
        rng = np.random.default_rng(1)
        with pytest.raises(FormatError):
            write_features(tmp_path / "x.vprf", width=64, height=48,
                           positions=[[x, y]], scores=[1.0],
                           descriptors=unit_rows(rng, 1, 4))

    def test_negative_score_rejected(self, tmp_path):
        rng = np.random.default_rng(2)
        with pytest.raises(FormatError, match="score"):
            write_features(tmp_path / "x.vprf", width=8, height=8,
                           positions=[[1.0, 1.0]], scores=[-0.1],
                           descriptors=unit_rows(rng, 1, 4))

    def test_descriptor_norm_drift_rejected(self, tmp_path):
        vec = np.full(4, 0.5 * (1.0 + 5e-4))  # norm 1 + 5e-4 > tolerance
        with pytest.raises(FormatError, match="unit"):
            write_features(tmp_path / "x.vprf", width=8, height=8,
                           positions=[[1.0, 1.0]], scores=[1.0],
                           descriptors=vec[None, :])

    def test_count_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(3)
        with pytest.raises(FormatError, match="count"):
            write_features(tmp_path / "x.vprf", width=8, height=8,
                           positions=[[1.0, 1.0]], scores=[1.0, 2.0],
                           descriptors=unit_rows(rng, 2, 4))

    def test_f64_unit_vectors_stay_unit_after_f32_cast(self, tmp_path):
        rng = np.random.default_rng(4)
        descriptors = unit_rows(rng, 200, 128)
        path = tmp_path / "cast.vprf"
        write_features(path, width=336, height=336,
                       positions=rng.uniform(0, 336, (200, 2)),
                       scores=rng.uniform(0, 1, 200), descriptors=descriptors)
        stored = np.frombuffer(path.read_bytes(), dtype="<f4",
                               offset=20).reshape(200, 131)[:, 3:]
        norms = np.linalg.norm(stored.astype(np.float64), axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-4


class TestGlobalWriter:
    def test_layout_parses_by_hand_with_utf8_id(self, tmp_path):
        rng = np.random.default_rng(5)
        vecs = unit_rows(rng, 2, 3)
        path = tmp_path / "seq.vprg"
        write_globals(path, [("plätze", vecs[0]), ("b", vecs[1])])

        raw = path.read_bytes()
        magic, version, dim, count = struct.unpack_from("<4sHII", raw)
        assert (magic, version, dim, count) == (b"VPRG", 1, 3, 2)
        pos = 14
        ids, out = [], []
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            ids.append(raw[pos:pos + id_len].decode("utf-8"))
            pos += id_len
            out.append(np.frombuffer(raw, dtype="<f4", count=dim, offset=pos))
            pos += dim * 4
        assert pos == len(raw)
        assert ids == ["plätze", "b"]
        np.testing.assert_array_equal(np.stack(out), vecs.astype(np.float32))

    def test_empty_sequence_is_valid(self, tmp_path):
        path = tmp_path / "none.vprg"
        write_globals(path, [])
        assert struct.unpack_from("<4sHII", path.read_bytes()) == (b"VPRG", 1, 0, 0)

    def test_duplicate_and_empty_ids_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        vecs = unit_rows(rng, 2, 3)
        with pytest.raises(FormatError, match="duplicate"):
            write_globals(tmp_path / "d.vprg",
                          [("a", vecs[0]), ("a", vecs[1])])
        with pytest.raises(FormatError, match="empty"):
            write_globals(tmp_path / "e.vprg", [("", vecs[0])])

    def test_dim_mismatch_and_drift_rejected(self, tmp_path):
        rng = np.random.default_rng(7)
        with pytest.raises(FormatError, match="dim"):
            write_globals(tmp_path / "m.vprg",
                          [("a", unit_rows(rng, 1, 3)[0]),
                           ("b", unit_rows(rng, 1, 4)[0])])
        with pytest.raises(FormatError, match="unit"):
            write_globals(tmp_path / "n.vprg", [("a", np.full(4, 0.6))])
