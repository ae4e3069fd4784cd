import numpy as np
import pytest

from asymvid.frames_io import read_pgm, read_sequence, to_uint8, write_pgm, write_sequence


def test_round_trip_is_exact_on_the_8bit_grid(tmp_path):
    img = (np.random.default_rng(0).integers(0, 256, (5, 7)) / 255.0).astype(np.float32)[..., None]
    back = read_pgm(write_pgm(tmp_path / "a.pgm", img))
    assert back.shape == (5, 7, 1) and back.dtype == np.float32
    assert np.array_equal(back, img)


def test_quantization_rounds_half_up_and_clips():
    q = to_uint8(np.array([[0.5 / 255, 1.49 / 255, -0.2, 1.3]]))
    assert q.tolist() == [[1, 1, 0, 255]]


def test_header_with_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert read_pgm(p)[..., 0].tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("blob", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00"])
def test_bad_files(tmp_path, blob):
    p = tmp_path / "b.pgm"
    p.write_bytes(blob)
    with pytest.raises(ValueError):
        read_pgm(p)


def test_sequence_naming_and_order(tmp_path):
    frames = np.stack([np.full((2, 2, 1), k / 255.0, np.float32) for k in range(12)])
    paths = write_sequence(tmp_path, frames[3:], start=3)
    assert paths[0].name == "frame_003.pgm" and paths[-1].name == "frame_011.pgm"
    assert np.array_equal(read_sequence(tmp_path), frames[3:])
    with pytest.raises(FileNotFoundError):
        read_sequence(tmp_path / "empty")
