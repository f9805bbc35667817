import numpy as np
import pytest

from railcount import io
from railcount.geometry import CameraIntrinsics, HeadBox
from railcount.io import MotEntry, ParseError


class TestMotFormat:
    def test_spec_line_parses_to_center_form(self, tmp_path):
        path = tmp_path / "det.txt"
        path.write_text("1,3,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n")
        frames = io.read_mot(path)
        entry = frames[1][0]
        assert entry.track_id == 3
        assert entry.box.x == pytest.approx(110.0)
        assert entry.box.y == pytest.approx(65.0)
        assert entry.box.a == pytest.approx(20.0 / 30.0)
        assert entry.box.h == pytest.approx(30.0)
        assert entry.conf == pytest.approx(0.95)

    def test_round_trip_is_lossless_for_canonical_files(self, tmp_path):
        canonical = (
            "1,3,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n"
            "1,4,740.25,120.50,24.00,32.00,0.80,-1,-1,-1\n"
            "2,3,101.00,51.00,20.00,30.00,1.00,-1,-1,-1\n"
        )
        path = tmp_path / "a.txt"
        path.write_text(canonical)
        out = tmp_path / "b.txt"
        io.write_mot(out, io.read_mot(path))
        assert out.read_text() == canonical

    def test_non_positive_dimension_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1,3,100,50,0,30,0.9,-1,-1,-1\n")
        with pytest.raises(ParseError, match="non-positive box dimension"):
            io.read_mot(path)

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(
            "1,3,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n"
            "2,x,1,2,3,4,5\n"
        )
        with pytest.raises(ParseError) as err:
            io.read_mot(path)
        assert err.value.line_no == 2

    def test_frames_sorted_on_read(self, tmp_path):
        path = tmp_path / "shuffled.txt"
        path.write_text(
            "3,1,100.00,50.00,20.00,30.00,1.00,-1,-1,-1\n"
            "1,1,100.00,50.00,20.00,30.00,1.00,-1,-1,-1\n"
        )
        assert list(io.read_mot(path)) == [1, 3]

    def test_zero_based_frame_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0,1,100,50,20,30,1.0\n")
        with pytest.raises(ParseError, match="1-based"):
            io.read_mot(path)

    def test_fuzz_mutations_never_crash(self, tmp_path, rng):
        base = "1,3,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n" * 3
        alphabet = list("0123456789,.-x\n ")
        for trial in range(200):
            chars = list(base)
            for _ in range(int(rng.integers(1, 6))):
                pos = int(rng.integers(0, len(chars)))
                chars[pos] = alphabet[int(rng.integers(0, len(alphabet)))]
            path = tmp_path / f"fuzz_{trial}.txt"
            path.write_text("".join(chars))
            try:
                io.read_mot(path)
            except ParseError:
                pass


class TestEmbeddings:
    def test_round_trip(self, tmp_path, rng):
        vectors = rng.normal(size=(4, 128))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        data = {1: vectors[:3], 2: vectors[3:]}
        path = tmp_path / "emb.txt"
        io.write_embeddings(path, data)
        back = io.read_embeddings(path)
        assert set(back) == {1, 2}
        assert np.allclose(back[1], data[1], atol=1e-8)
        assert np.allclose(back[2], data[2], atol=1e-8)

    def test_unit_vector_reparse_close(self, tmp_path):
        e1 = np.zeros(128)
        e1[0] = 1.0
        path = tmp_path / "emb.txt"
        io.write_embeddings(path, {1: e1[None, :]})
        back = io.read_embeddings(path)[1][0]
        assert np.allclose(back, e1, atol=1e-9)

    def test_norm_violation_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        values = ",".join(["0.5"] * 3)  # norm sqrt(0.75), clearly not unit
        path.write_text(f"1,0,{values}\n")
        with pytest.raises(ParseError, match="norm"):
            io.read_embeddings(path)

    def test_alignment_mismatch_rejected(self, tmp_path, rng):
        det_path = tmp_path / "det.txt"
        det_path.write_text(
            "1,-1,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n"
            "1,-1,300.00,50.00,20.00,30.00,0.95,-1,-1,-1\n"
            "1,-1,500.00,50.00,20.00,30.00,0.95,-1,-1,-1\n"
        )
        vectors = rng.normal(size=(2, 16))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        emb_path = tmp_path / "emb.txt"
        io.write_embeddings(emb_path, {1: vectors})
        dets = io.read_mot(det_path)
        embs = io.read_embeddings(emb_path)
        with pytest.raises(ValueError, match="embeddings"):
            io.pair_detections_with_embeddings(dets, embs)

    def test_pairing_without_embeddings_runs_motion_only(self, tmp_path):
        det_path = tmp_path / "det.txt"
        det_path.write_text("1,-1,100.00,50.00,20.00,30.00,0.95,-1,-1,-1\n")
        paired = io.pair_detections_with_embeddings(io.read_mot(det_path), None)
        assert paired[1][0].embedding is None

    def test_non_contiguous_indices_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        vec = ",".join(["1.0"] + ["0.0"] * 15)
        path.write_text(f"1,0,{vec}\n1,2,{vec}\n")
        with pytest.raises(ParseError, match="indices"):
            io.read_embeddings(path)


class TestCalibration:
    def test_round_trip(self, tmp_path, cam):
        path = tmp_path / "cam.txt"
        io.write_calibration(path, cam)
        assert io.read_calibration(path) == cam

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cam.txt"
        path.write_text("fx=1000\nfy=1000\ncx=960\ncy=540\n"
                        "image_width=1920\nimage_height=1080\nskew=0\n")
        with pytest.raises(ParseError, match="unknown"):
            io.read_calibration(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "cam.txt"
        path.write_text("fx=1000\nfy=1000\n")
        with pytest.raises(ParseError, match="missing"):
            io.read_calibration(path)


class TestKeyValue:
    def test_comments_and_blanks_allowed(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\n\nalpha=1\nbeta = two \n")
        assert io.read_kv(path) == {"alpha": "1", "beta": "two"}

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("a=1\na=2\n")
        with pytest.raises(ParseError, match="duplicate"):
            io.read_kv(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("nonsense\n")
        with pytest.raises(ParseError):
            io.read_kv(path)

    def test_counts_round_trip(self, tmp_path):
        path = tmp_path / "counts.txt"
        io.write_counts(path, 3, 0, 3, true_count=4)
        assert io.read_counts(path) == {
            "left_count": 3, "right_count": 0, "final_count": 3, "true_count": 4,
        }


def test_manifest_round_trip(tmp_path):
    manifest = {"subcommand": "track", "seed": 3, "config": {"model": "phys3d"}}
    path = tmp_path / "manifest.json"
    io.write_manifest(path, manifest)
    assert io.read_manifest(path) == manifest
