import io
import os

import numpy as np
import pytest
from PIL import Image

from gnncca_extractor.backbones import BackboneError, HistBackbone, make_backbone
from gnncca_extractor.extract import ExtractJob, JobError, extract_descriptors
from gnncca_extractor.formats import FormatError, load_store, save_store


def paint(path, color, size=(320, 240), stripe=None):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    img = Image.new("RGB", size, color)
    if stripe:
        for x in range(0, size[0], 16):
            for y in range(size[1] // 2):
                img.putpixel((x, y), stripe)
    img.save(path)


def write_detections(path, rows):
    lines = ["frame,camera,det_id,x,y,w,h,identity"]
    lines += [",".join(str(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@pytest.fixture()
def scene(tmp_path):
    images = tmp_path / "images"
    paint(images / "cam0" / "000000.png", (200, 30, 30), stripe=(250, 250, 250))
    paint(images / "cam1" / "000000.png", (30, 30, 200))
    paint(images / "cam0" / "000001.png", (30, 200, 30))
    det_csv = tmp_path / "detections.csv"
    write_detections(
        det_csv,
        [
            (0, 0, 0, 10.0, 20.0, 40.0, 80.0, 1),
            (0, 0, 1, 10.0, 20.0, 40.0, 80.0, 1),  # identical crop
            (0, 1, 2, 100.0, 50.0, 30.0, 60.0, 2),
            (1, 0, 0, 5.0, 5.0, 40.0, 80.0, -1),
        ],
    )
    return images, det_csv


class TestExtract:
    def test_rows_match_detections_and_header_dim(self, scene, tmp_path):
        images, det_csv = scene
        out = tmp_path / "descriptors.bin"
        job = ExtractJob(str(images), str(det_csv), str(out), descriptor_dim=64)
        count = extract_descriptors(job)
        assert count == 4
        with open(out, "rb") as fh:
            header = fh.readline().decode("ascii").split()
        assert header == ["GNNCCA-DESC", "1", "4", "64"]
        rows = load_store(out)
        assert rows.shape == (4, 64)

    def test_identical_crops_identical_rows(self, scene, tmp_path):
        images, det_csv = scene
        out = tmp_path / "descriptors.bin"
        extract_descriptors(
            ExtractJob(str(images), str(det_csv), str(out), descriptor_dim=32)
        )
        rows = load_store(out)
        assert np.array_equal(rows[0], rows[1])
        assert not np.array_equal(rows[0], rows[2])

    def test_deterministic_across_runs(self, scene, tmp_path):
        images, det_csv = scene
        digests = []
        for name in ("a.bin", "b.bin"):
            out = tmp_path / name
            extract_descriptors(
                ExtractJob(str(images), str(det_csv), str(out), descriptor_dim=32)
            )
            digests.append(out.read_bytes())
        assert digests[0] == digests[1]

    def test_out_of_bounds_box_clamped_with_warning(self, scene, tmp_path):
        images, det_csv = scene
        write_detections(det_csv, [(0, 0, 0, -10.0, -10.0, 50.0, 50.0, -1)])
        stream = io.StringIO()
        out = tmp_path / "d.bin"
        job = ExtractJob(
            str(images), str(det_csv), str(out), descriptor_dim=16,
            warn_stream=stream,
        )
        assert extract_descriptors(job) == 1
        assert "clamped" in stream.getvalue()

    def test_unreadable_image_names_row(self, scene, tmp_path):
        images, det_csv = scene
        write_detections(det_csv, [(7, 0, 0, 1.0, 1.0, 5.0, 5.0, -1)])
        job = ExtractJob(str(images), str(det_csv), str(tmp_path / "d.bin"))
        with pytest.raises(JobError, match="row 0"):
            extract_descriptors(job)

    def test_unknown_backbone(self, scene, tmp_path):
        images, det_csv = scene
        job = ExtractJob(
            str(images), str(det_csv), str(tmp_path / "d.bin"), backbone="vgg"
        )
        with pytest.raises(JobError, match="unknown backbone"):
            extract_descriptors(job)

    def test_bad_detections_rejected(self, scene, tmp_path):
        images, det_csv = scene
        write_detections(det_csv, [(0, 0, 0, 1.0, 1.0, -5.0, 5.0, -1)])
        job = ExtractJob(str(images), str(det_csv), str(tmp_path / "d.bin"))
        with pytest.raises(JobError, match="positive"):
            extract_descriptors(job)


class TestFormatCompliance:
    def test_store_bytes_match_primary_writer(self, scene, tmp_path):
        gio = pytest.importorskip("gnncca.io")
        from gnncca.featurize import DescriptorStore

        images, det_csv = scene
        out = tmp_path / "descriptors.bin"
        extract_descriptors(
            ExtractJob(str(images), str(det_csv), str(out), descriptor_dim=16)
        )
        rows = load_store(out)
        reference = tmp_path / "reference.bin"
        gio.save_store(reference, DescriptorStore(rows.astype(np.float64)))
        assert reference.read_bytes() == out.read_bytes()

    def test_primary_cli_consumes_the_store(self, scene, tmp_path):
        cli = pytest.importorskip("gnncca.cli")
        images, det_csv = scene
        data = tmp_path / "dataset"
        os.makedirs(data)
        extract_descriptors(
            ExtractJob(
                str(images), str(det_csv), str(data / "descriptors.bin"),
                descriptor_dim=32,
            )
        )
        with open(det_csv) as src, open(data / "detections.csv", "w") as dst:
            dst.write(src.read())
        code = cli.run_cli(
            [
                "baseline", "--data", str(data), "--method", "top1",
                "--out", str(tmp_path / "clusters.csv"),
            ]
        )
        assert code == 0
        assert (tmp_path / "clusters.csv").exists()

    def test_truncated_store_detected(self, tmp_path):
        path = tmp_path / "d.bin"
        save_store(path, np.zeros((2, 4), dtype=np.float32))
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(FormatError):
            load_store(path)


class TestBackbones:
    def test_hist_separates_colors(self):
        backbone = HistBackbone(dim=32)
        red = np.zeros((128, 64, 3))
        red[:, :, 0] = 0.8
        blue = np.zeros((128, 64, 3))
        blue[:, :, 2] = 0.8
        rows = backbone.embed([red, blue, red])
        assert np.array_equal(rows[0], rows[2])
        assert np.linalg.norm(rows[0] - rows[1]) > 0.1

    def test_resnet50_deterministic_if_torch_available(self):
        torch = pytest.importorskip("torch")
        del torch
        a = make_backbone("resnet50", 16)
        b = make_backbone("resnet50", 16)
        crop = np.random.default_rng(0).uniform(size=(128, 64, 3))
        ra = a.embed([crop, crop])
        rb = b.embed([crop])
        assert np.array_equal(ra[0], ra[1])
        # conv kernels round differently per batch size; instances agree
        # to float32-level precision
        assert np.allclose(ra[0], rb[0], atol=1e-5)

    def test_cli_round_trip(self, tmp_path):
        from gnncca_extractor.cli import run_cli

        images = tmp_path / "img"
        paint(images / "cam0" / "000000.png", (10, 200, 10))
        paint(images / "cam1" / "000000.png", (10, 10, 200))
        det_csv = tmp_path / "d.csv"
        write_detections(
            det_csv,
            [(0, 0, 0, 2.0, 2.0, 30.0, 60.0, -1), (0, 1, 1, 2.0, 2.0, 30.0, 60.0, -1)],
        )
        out = tmp_path / "store.bin"
        code = run_cli(
            [
                "--images", str(images),
                "--detections", str(det_csv),
                "--out", str(out),
                "--dim", "24",
            ]
        )
        assert code == 0
        assert load_store(out).shape == (2, 24)

    def test_cli_error_codes(self, tmp_path):
        from gnncca_extractor.cli import run_cli

        code = run_cli(
            [
                "--images", str(tmp_path),
                "--detections", str(tmp_path / "missing.csv"),
                "--out", str(tmp_path / "s.bin"),
            ]
        )
        assert code == 2
