import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decade.errors import DegenerateBoxError, ParseError
from decade.kitti import (
    DetectionRecord,
    LabelRecord,
    derive_distance,
    extract_crop,
    format_label_line,
    group_by_image,
    load_detections,
    parse_label_line,
    preprocess,
    read_label_file,
    read_split,
    write_detections,
)

CAR_LINE = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"
DONTCARE_LINE = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10"


def record(distance, name="Car"):
    return LabelRecord(name, 0.0, 0, 0.0, (0, 0, 10, 10), (1, 1, 1), (0, 0, distance), 0.0, distance)


class TestParseLabel:
    def test_car_line(self):
        r = parse_label_line(CAR_LINE)
        assert r.class_name == "Car"
        assert r.alpha == -1.58
        assert r.location == (-0.65, 1.71, 46.70)
        assert r.box == (587.01, 173.33, 614.12, 200.12)
        assert r.dims3d == (1.65, 1.67, 3.64)
        assert r.rotation_y == -1.59
        assert r.distance == 46.70

    def test_dontcare_line(self):
        r = parse_label_line(DONTCARE_LINE)
        assert r.is_dontcare
        assert preprocess([r]) == []

    def test_wrong_arity(self):
        with pytest.raises(ParseError, match="line 7"):
            parse_label_line(" ".join(CAR_LINE.split()[:14]), lineno=7)

    def test_bad_number(self):
        with pytest.raises(ParseError):
            parse_label_line(CAR_LINE.replace("46.70", "4x.70"))

    def test_unknown_class(self):
        with pytest.raises(ParseError, match="unknown class"):
            parse_label_line(CAR_LINE.replace("Car", "Bus"))

    def test_euclidean_mode(self):
        r = parse_label_line(CAR_LINE, distance_mode="euclidean")
        assert r.distance == pytest.approx(math.sqrt(0.65**2 + 1.71**2 + 46.70**2))

    def test_round_trip_all_fields(self):
        assert format_label_line(parse_label_line(CAR_LINE)) == CAR_LINE
        assert format_label_line(parse_label_line(DONTCARE_LINE)).split() == [
            "DontCare", "-1.00", "-1", "-10.00", "503.89", "169.71", "590.61", "190.13",
            "-1.00", "-1.00", "-1.00", "-1000.00", "-1000.00", "-1000.00", "-10.00",
        ]

    @given(
        st.sampled_from(["Car", "Pedestrian", "Tram", "Misc"]),
        st.lists(st.floats(-100, 100).map(lambda v: round(v, 2)), min_size=13, max_size=13),
    )
    def test_round_trip_property(self, name, vals):
        left, top = vals[3], vals[4]
        box = (left, top, left + abs(vals[5]) + 1, top + abs(vals[6]) + 1)
        line = " ".join(
            [name, f"{abs(vals[0]) % 1:.2f}", "1", f"{vals[1]:.2f}"]
            + [f"{v:.2f}" for v in box]
            + [f"{v:.2f}" for v in vals[7:13] + [vals[2]]]
        )
        again = parse_label_line(format_label_line(parse_label_line(line)))
        assert again == parse_label_line(line)

    def test_read_file_reports_line_number(self, tmp_path):
        p = tmp_path / "000001.txt"
        p.write_text(CAR_LINE + "\n" + "Car 1 2\n")
        with pytest.raises(ParseError, match="000001.txt:line 2"):
            read_label_file(p)


class TestDistance:
    def test_modes(self):
        assert derive_distance((0, 0, 10), "z_axis") == 10
        assert derive_distance((3, 4, 0), "euclidean") == 5
        assert derive_distance((0, 0, -2), "z_axis") == -2


class TestPreprocess:
    def test_negative_removed(self):
        assert preprocess([record(-1.0)]) == []

    def test_clipped(self):
        (r,) = preprocess([record(180.0)])
        assert r.distance == 150.0

    def test_empty(self):
        assert preprocess([]) == []

    def test_order_and_misc_kept(self):
        recs = [record(5.0), record(-3.0), record(20.0, "Misc"), record(200.0, "Pedestrian")]
        out = preprocess(recs)
        assert [r.distance for r in out] == [5.0, 20.0, 150.0]
        assert [r.class_name for r in out] == ["Car", "Misc", "Pedestrian"]

    @given(st.lists(st.floats(-50, 400), max_size=20))
    def test_idempotent_and_bounded(self, dists):
        recs = [record(d) for d in dists]
        once = preprocess(recs)
        assert preprocess(once) == once
        assert all(0 <= r.distance <= 150 for r in once)


class TestDetections:
    def write(self, tmp_path, body):
        p = tmp_path / "dets.csv"
        p.write_text("image_id,class,confidence,left,top,right,bottom\n" + body)
        return p

    def test_row(self, tmp_path):
        (d,) = load_detections(self.write(tmp_path, "000123,Car,0.91,100.0,120.5,180.0,200.0\n"))
        assert d == DetectionRecord("000123", "Car", 0.91, (100.0, 120.5, 180.0, 200.0))

    def test_confidence_range(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            load_detections(self.write(tmp_path, "000123,Car,1.5,100.0,120.5,180.0,200.0\n"))

    def test_header_only(self, tmp_path):
        assert load_detections(self.write(tmp_path, "")) == []

    def test_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,class\n")
        with pytest.raises(ParseError):
            load_detections(p)

    def test_grouping_preserves_file_order(self, tmp_path):
        body = (
            "b,Car,0.5,0,0,1,1\n"
            "a,Car,0.6,0,0,1,1\n"
            "b,Van,0.7,0,0,2,2\n"
        )
        dets = load_detections(self.write(tmp_path, body))
        assert [(d.image_id, d.class_name) for d in dets] == [("b", "Car"), ("b", "Van"), ("a", "Car")]
        assert list(group_by_image(dets)) == ["b", "a"]

    def test_write_round_trip(self, tmp_path):
        dets = [DetectionRecord("000001", "Cyclist", 0.123456789, (1.5, 2.25, 30.125, 40.0))]
        p = tmp_path / "out.csv"
        write_detections(p, dets)
        assert load_detections(p) == dets


def test_read_split(tmp_path):
    p = tmp_path / "split.txt"
    p.write_text("000001\n\n000002\n")
    assert read_split(p) == ["000001", "000002"]


class TestCrop:
    def test_constant_image(self):
        img = np.full((3, 50, 80), 0.3, dtype=np.float32)
        crop = extract_crop(img, (10.3, 5.0, 70.9, 33.3))
        assert crop.shape == (3, 32, 32)
        np.testing.assert_allclose(crop, 0.3, atol=1e-6)

    def test_full_box_same_size_is_identity(self):
        img = np.random.default_rng(0).random((3, 32, 32)).astype(np.float32)
        crop = extract_crop(img, (0, 0, 32, 32))
        np.testing.assert_allclose(crop, img, atol=1e-6)
        for r, c in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
            assert crop[:, r, c] == pytest.approx(img[:, r, c], abs=1e-6)

    def test_full_box_downscale_half_pixel(self):
        # align-corners off: each output pixel of an exact 2x downscale averages a 2x2 block
        img = np.random.default_rng(1).random((3, 64, 64)).astype(np.float32)
        crop = extract_crop(img, (0, 0, 64, 64))
        blocks = img.reshape(3, 32, 2, 32, 2).mean(axis=(2, 4))
        np.testing.assert_allclose(crop, blocks, atol=1e-6)

    def test_half_outside_equals_clamped(self):
        img = np.random.default_rng(2).random((3, 40, 60)).astype(np.float32)
        np.testing.assert_array_equal(extract_crop(img, (-20, 10, 20, 50)), extract_crop(img, (0, 10, 20, 40)))

    def test_degenerate_after_clamp(self):
        img = np.zeros((3, 10, 10), dtype=np.float32)
        with pytest.raises(DegenerateBoxError):
            extract_crop(img, (20, 0, 30, 5))

    @given(
        st.floats(-50, 100), st.floats(-50, 60), st.floats(0.5, 200), st.floats(0.5, 120),
    )
    def test_shape_always_32(self, left, top, w, h):
        img = np.random.default_rng(3).random((3, 60, 90)).astype(np.float32)
        box = (left, top, left + w, top + h)
        try:
            crop = extract_crop(img, box)
        except DegenerateBoxError:
            return
        assert crop.shape == (3, 32, 32)
        assert crop.min() >= 0 and crop.max() <= 1


def test_image_file_round_trip(tmp_path):
    from decade.kitti import load_image, save_image

    img = np.random.default_rng(0).integers(0, 256, (3, 7, 9)).astype(np.float32) / 255.0
    save_image(tmp_path / "x.png", img)
    back = load_image(tmp_path / "x.png")
    assert back.shape == (3, 7, 9)
    np.testing.assert_allclose(back, img, atol=1e-7)
