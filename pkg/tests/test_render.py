import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from melgenre.audio_io import EmptyInputError
from melgenre.dsp import Spectrogram
from melgenre.render import (
    VIRIDIS_ANCHORS, RasterImage, colormap_viridis, ppm_bytes, read_ppm, render_spectrogram,
    write_ppm,
)


def db_spec(values):
    return Spectrogram(np.asarray(values, dtype=float), "decibel", "mel", 22050, 2048, 512)


def test_colormap_endpoints():
    assert colormap_viridis(0.0) == tuple(int(v) for v in VIRIDIS_ANCHORS[0])
    assert colormap_viridis(1.0) == tuple(int(v) for v in VIRIDIS_ANCHORS[-1])


def test_colormap_midpoint_between_first_anchors():
    mid = (VIRIDIS_ANCHORS[0] + VIRIDIS_ANCHORS[1]) / 2
    got = colormap_viridis(0.5 / (len(VIRIDIS_ANCHORS) - 1))
    assert got == tuple(int(np.floor(v + 0.5)) for v in mid)


def test_colormap_clamps():
    assert colormap_viridis(-3.0) == colormap_viridis(0.0)
    assert colormap_viridis(7.0) == colormap_viridis(1.0)


def test_constant_matrix_is_uniform_midpoint():
    img = render_spectrogram(db_spec(np.full((4, 6), -12.5)))
    assert np.all(img.pixels == np.array(colormap_viridis(0.5), dtype=np.uint8))


def test_two_cell_endpoints():
    img = render_spectrogram(db_spec([[-80.0], [0.0]]), flip_vertical=False)
    assert tuple(img.pixels[0, 0]) == colormap_viridis(0.0)
    assert tuple(img.pixels[1, 0]) == colormap_viridis(1.0)
    flipped = render_spectrogram(db_spec([[-80.0], [0.0]]))
    assert tuple(flipped.pixels[0, 0]) == colormap_viridis(1.0)


def test_dimensions():
    img = render_spectrogram(db_spec(np.random.default_rng(0).normal(size=(3, 3))))
    assert (img.width, img.height) == (3, 3)
    img = render_spectrogram(db_spec(np.zeros((5, 2))))
    assert (img.width, img.height) == (2, 5)
    assert img.pixels.size == 2 * 5 * 3


def test_empty_spectrogram():
    with pytest.raises(EmptyInputError):
        render_spectrogram(db_spec(np.zeros((0, 3))))


def test_white_pixel_byte_layout():
    img = RasterImage(1, 1, np.full((1, 1, 3), 255, np.uint8))
    data = ppm_bytes(img)
    assert data == b"P6\n1 1\n255\n" + b"\xff\xff\xff"
    assert len(data) == 11 + 3


def test_empty_image_rejected():
    with pytest.raises(ValueError):
        ppm_bytes(RasterImage(0, 0, np.zeros((0, 0, 3), np.uint8)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
def test_ppm_round_trip(tmp_path_factory, px):
    path = tmp_path_factory.mktemp("ppm") / "x.ppm"
    img = RasterImage(px.shape[1], px.shape[0], px)
    write_ppm(img, path)
    back = read_ppm(path)
    assert (back.width, back.height) == (img.width, img.height)
    np.testing.assert_array_equal(back.pixels, px)


def test_render_deterministic():
    values = np.random.default_rng(5).normal(size=(16, 9))
    assert ppm_bytes(render_spectrogram(db_spec(values))) == \
        ppm_bytes(render_spectrogram(db_spec(values.copy())))


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.integers(-80, 0)),
       st.integers(-1000, 1000))
def test_shift_invariance(values, c):
    # integer values keep the min-max arithmetic exact
    a = render_spectrogram(db_spec(values))
    b = render_spectrogram(db_spec(values + c))
    np.testing.assert_array_equal(a.pixels, b.pixels)
