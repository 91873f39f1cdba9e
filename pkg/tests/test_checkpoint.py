import numpy as np
import pytest

from xinggan.checkpoint import MAGIC, CheckpointError, from_bytes, read_checkpoint, to_bytes, write_checkpoint
from xinggan.nets import Generator, build_discriminators


def _tensors(rng):
    return {
        "a.weight": rng.normal(size=(3, 2, 3, 3)).astype(np.float32),
        "a.alpha": np.asarray(0.25, dtype=np.float32),
        "b": rng.normal(size=(5,)).astype(np.float32),
    }


def test_round_trip(tmp_path, rng):
    t = _tensors(rng)
    path = tmp_path / "x.xgck"
    write_checkpoint(path, "variant=FULL\n", t)
    cfg, back = read_checkpoint(path)
    assert cfg == "variant=FULL\n"
    assert list(back) == list(t)
    for k in t:
        assert back[k].shape == t[k].shape
        assert back[k].tobytes() == t[k].tobytes()
    assert to_bytes(cfg, back) == path.read_bytes()


def test_layout(rng):
    buf = to_bytes("k=v", {"w": np.array([[1.0, 2.0]], np.float32)})
    assert buf[:4] == MAGIC
    assert int.from_bytes(buf[4:8], "little") == 1
    assert int.from_bytes(buf[8:12], "little") == 3
    assert buf[12:15] == b"k=v"
    assert int.from_bytes(buf[15:19], "little") == 1
    # name_len, name, rank, dims, data
    assert int.from_bytes(buf[19:23], "little") == 1 and buf[23:24] == b"w"
    assert int.from_bytes(buf[24:28], "little") == 2
    assert np.frombuffer(buf[36:], "<f4").tolist() == [1.0, 2.0]


def test_bad_magic(rng):
    buf = bytearray(to_bytes("", _tensors(rng)))
    buf[:4] = b"NOPE"
    with pytest.raises(CheckpointError, match="offset 0.*XGCK"):
        from_bytes(bytes(buf))


def test_bad_version(rng):
    buf = bytearray(to_bytes("", _tensors(rng)))
    buf[4] = 7
    with pytest.raises(CheckpointError, match="version 7 at offset 4"):
        from_bytes(bytes(buf))


def test_truncation_reports_offset(rng):
    buf = to_bytes("cfg", _tensors(rng))
    for cut in (2, 10, 30, len(buf) - 1):
        with pytest.raises(CheckpointError, match="offset"):
            from_bytes(buf[:cut])
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(buf + b"\0")


def _encoder(cin, c):
    return cin * (c // 2) * 9 + c // 2 + c + (c // 2) * c * 9 + c + 2 * c


def _decoder(cin, c, out, k):
    return (cin * (c // 2) * 16 + c // 2 + c + (c // 2) * (c // 4) * 16 + c // 4 + c // 2
            + (c // 4) * out * k * k + out)


def _generator_count(T, N, c):
    sa = 3 * c * c + 1
    as_ = 3 * c * c + 1 + 2 * c * c * 9 + c
    return (_encoder(3, c) + _encoder(36, c) + T * (sa + as_)
            + 2 * _decoder(c, c, 3 * N, 3) + _decoder(2 * c, c, 2 * N + 1, 1))


def _disc_count(cond, b):
    ch = [cond + 3, b, 2 * b, 4 * b, 8 * b]
    return sum(9 * ch[i] * ch[i + 1] + ch[i + 1] for i in range(4)) + 9 * 8 * b + 1


def test_desk_parameter_count_closed_form(tmp_path):
    g = Generator(3, 4, 64)
    d_i, d_p = build_discriminators(64)
    tensors = {f"G.{k}": v for k, v in g.state_dict().items()}
    tensors.update({f"D_I.{k}": v for k, v in d_i.state_dict().items()})
    tensors.update({f"D_P.{k}": v for k, v in d_p.state_dict().items()})
    path = tmp_path / "desk.xgck"
    write_checkpoint(path, "", tensors)
    _, back = read_checkpoint(path)
    count = lambda prefix: sum(v.size for k, v in back.items() if k.startswith(prefix))
    assert count("G.") == _generator_count(3, 4, 64) == 503_495
    assert count("D_I.") == _disc_count(3, 64) == 1_557_313
    assert count("D_P.") == _disc_count(18, 64) == 1_565_953
