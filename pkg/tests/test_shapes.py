import filecmp
import json
import math

import numpy as np
import pytest
from PIL import Image

from pairgan.io import read_labels
from pairgan.shapes import (
    MARGIN,
    SCENARIO_NAMES,
    BackgroundSpec,
    PlacementError,
    Scenario,
    ShapeSpec,
    all_scenarios,
    generate_dataset,
    generate_sample,
    rasterize_shape,
    synth_background,
)


def count_inside(predicate, H, W):
    """Independent point-in-shape count over pixel centers."""
    return sum(predicate(i + 0.5, j + 0.5) for i in range(H) for j in range(W))


def test_square_population_exact():
    mask = rasterize_shape(ShapeSpec("square", (32, 32), 10, (1, 0, 0)), 64, 64)
    assert mask.sum() == 400


def test_circle_population_near_disk_area():
    mask = rasterize_shape(ShapeSpec("circle", (32, 32), 16, (1, 0, 0)), 64, 64)
    oracle = count_inside(lambda r, c: (r - 32) ** 2 + (c - 32) ** 2 <= 256, 64, 64)
    assert mask.sum() == oracle
    assert abs(mask.sum() - math.pi * 256) / (math.pi * 256) < 0.03


def test_triangle_population_half_of_box():
    spec = ShapeSpec("triangle", (40.37, 37.81), 17.23, (0, 1, 0))
    mask = rasterize_shape(spec, 80, 80)
    r0, c0, r1, c1 = spec.bbox()

    def in_triangle(r, c):
        # barycentric sign test against the three vertices
        a, b, d = (r0, (c0 + c1) / 2), (r1, c0), (r1, c1)

        def cross(p, q, x):
            return (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0])

        s1, s2, s3 = cross(a, b, (r, c)), cross(b, d, (r, c)), cross(d, a, (r, c))
        return (s1 >= 0 and s2 >= 0 and s3 >= 0) or (s1 <= 0 and s2 <= 0 and s3 <= 0)

    assert abs(int(mask.sum()) - count_inside(in_triangle, 80, 80)) <= 2
    box = count_inside(lambda r, c: r0 <= r <= r1 and c0 <= c <= c1, 80, 80)
    assert abs(mask.sum() / box - 0.5) < 0.05


def test_shape_outside_canvas_rejected():
    with pytest.raises(PlacementError):
        rasterize_shape(ShapeSpec("circle", (5, 30), 10, (0, 0, 0)), 64, 64)


def test_background_determinism_and_range():
    for kind in ("uniform-noise", "smooth-noise"):
        a = synth_background(BackgroundSpec(kind), 64, 64, 3)
        b = synth_background(BackgroundSpec(kind), 64, 64, 3)
        assert np.array_equal(a, b)
        assert a.min() >= 0 and a.max() <= 1


def test_uniform_noise_mean():
    bg = synth_background(BackgroundSpec("uniform-noise"), 64, 64, 11)
    assert 0.45 <= bg.mean() <= 0.55


def test_image_file_background(tmp_path):
    small = tmp_path / "small.png"
    Image.fromarray(np.zeros((20, 20, 3), np.uint8)).save(small)
    with pytest.raises(ValueError, match="resize"):
        synth_background(BackgroundSpec("image-file", str(small)), 32, 32, 0)
    with pytest.raises(FileNotFoundError):
        synth_background(BackgroundSpec("image-file", str(tmp_path / "nope.png")), 32, 32, 0)
    big = tmp_path / "big.png"
    Image.fromarray(np.full((40, 50, 3), 255, np.uint8)).save(big)
    bg = synth_background(BackgroundSpec("image-file", str(big)), 32, 32, 0)
    assert bg.shape == (32, 32, 3) and np.all(bg == 1.0)


@pytest.mark.parametrize("kind", ["circle", "square", "triangle"])
def test_sample_construction(kind):
    bg_spec = BackgroundSpec("smooth-noise")
    image, labels, spec = generate_sample(kind, bg_spec, 64, 64, seed=5)
    mask = rasterize_shape(spec, 64, 64)
    assert np.array_equal(labels, mask)
    bg = synth_background(bg_spec, 64, 64, np.random.SeedSequence(5).spawn(2)[0])
    outside = mask == 0
    assert np.array_equal(image[outside], bg[outside])
    assert np.allclose(image[mask == 1], spec.fill_color)
    # foreground never touches the border band
    assert labels[:MARGIN].sum() == 0 and labels[-MARGIN:].sum() == 0
    assert labels[:, :MARGIN].sum() == 0 and labels[:, -MARGIN:].sum() == 0


def test_sample_default_size():
    image, labels, _ = generate_sample("circle", BackgroundSpec())
    assert image.shape == (128, 128, 3) and labels.shape == (128, 128)


def test_sizes_respect_range():
    for seed in range(30):
        _, _, spec = generate_sample("square", BackgroundSpec("uniform-noise"), 64, 64, seed)
        assert 0.15 * 64 <= spec.size <= 0.3 * 64


def test_six_scenarios():
    pairs = {(s.source, s.target) for s in all_scenarios()}
    assert len(pairs) == 6
    assert all(a != b for a, b in pairs)
    assert set(SCENARIO_NAMES) == {
        "circle2square", "circle2triangle", "square2circle",
        "square2triangle", "triangle2circle", "triangle2square",
    }
    with pytest.raises(ValueError, match="circle2square"):
        Scenario.parse("circle2circle")


def test_dataset_layout_and_determinism(tmp_path):
    meta_a = generate_dataset("circle2triangle", 12, 32, seed=4, out_dir=tmp_path / "a")
    generate_dataset("circle2triangle", 12, 32, seed=4, out_dir=tmp_path / "b")
    meta = json.loads(meta_a.read_text())
    assert meta["num_classes"] == 2 and meta["H"] == 32 and meta["W"] == 32
    assert meta["counts"]["trainA"] == 12 and meta["counts"]["trainB"] == 12
    for split in ("trainA", "trainB", "testA", "testB"):
        n = meta["counts"][split]
        assert len(list((tmp_path / "a" / split / "images").glob("*.png"))) == n
        assert len(list((tmp_path / "a" / split / "labels").glob("*.png"))) == n
        assert len(meta["samples"][split]) == n
    assert {r["shape"]["kind"] for r in meta["samples"]["trainA"]} == {"circle"}
    assert {r["shape"]["kind"] for r in meta["samples"]["trainB"]} == {"triangle"}
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for split in ("trainA", "testB"):
        sub = filecmp.dircmp(tmp_path / "a" / split / "images", tmp_path / "b" / split / "images")
        assert not sub.diff_files
        (_, mismatch, errors) = filecmp.cmpfiles(
            tmp_path / "a" / split / "labels", tmp_path / "b" / split / "labels",
            [f"{i:06d}.png" for i in range(meta["counts"][split])], shallow=False,
        )
        assert not mismatch and not errors


def test_dataset_labels_match_rasterized(tmp_path):
    meta = json.loads(generate_dataset("square2circle", 6, 32, seed=1, out_dir=tmp_path).read_text())
    for rec in meta["samples"]["trainB"]:
        s = rec["shape"]
        spec = ShapeSpec(s["kind"], tuple(s["center"]), s["size"], tuple(s["fill_color"]))
        labels = read_labels(tmp_path / "trainB" / "labels" / rec["file"])
        assert np.array_equal(labels, rasterize_shape(spec, 32, 32))


def test_dataset_count_500(tmp_path):
    generate_dataset("circle2triangle", 500, 16, seed=0, out_dir=tmp_path, test_count=0)
    assert len(list((tmp_path / "trainA" / "images").glob("*.png"))) == 500
    assert len(list((tmp_path / "trainB" / "labels").glob("*.png"))) == 500
    assert (tmp_path / "meta.json").is_file()


def test_invalid_scenario(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset("circle2hexagon", 2, 16, out_dir=tmp_path)
