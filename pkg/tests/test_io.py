import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from arraynormal.bayes import GibbsConfig, PriorSpec, run_gibbs
from arraynormal.io import (DataError, TensorFile, config_hash, load_chain, read_npz,
                            read_tensor, save_chain, write_npz, write_tensor)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.lists(st.integers(1, 3), min_size=1, max_size=3).map(tuple),
              elements=st.floats(allow_nan=True, allow_infinity=False, width=64)),
       st.sampled_from(["text", "f64le"]))
def test_write_read_write_is_byte_identical(tmp_path_factory, values, encoding):
    d = tmp_path_factory.mktemp("tf")
    tf = TensorFile(values)
    write_tensor(d / "a.tensor", tf, encoding)
    back = read_tensor(d / "a.tensor")
    np.testing.assert_array_equal(back.mask, np.isnan(values))
    np.testing.assert_array_equal(back.values[~back.mask], values[~np.isnan(values)])
    write_tensor(d / "b.tensor", back, encoding)
    assert (d / "a.tensor").read_bytes() == (d / "b.tensor").read_bytes()


def test_header_and_labels(tmp_path):
    Y = np.arange(6.0).reshape(2, 3)
    mask = np.zeros_like(Y, dtype=bool)
    mask[1, 2] = True
    tf = TensorFile(Y, mask, ["row", "col"], {"col": ["a", "b", "c"]})
    write_tensor(tmp_path / "x.tensor", tf)
    text = (tmp_path / "x.tensor").read_text()
    assert "dims: 2 3\nmodes: row col\nlabels.col: a b c\nmissing: 1\n" in text
    lines = text.split("---\n")[1].splitlines()
    assert lines[:2] == ["0.0", "3.0"] and lines[-1] == "NA"
    back = read_tensor(tmp_path / "x.tensor")
    assert back.modes == ["row", "col"] and back.labels == {"col": ["a", "b", "c"]}
    assert back.level_labels(0) == ["row_1", "row_2"]


@pytest.mark.parametrize("body, msg", [
    ("#TENSORFILE 1\ndims: 2\nmissing: 0\n---\n1.0\n", "payload"),
    ("#TENSORFILE 1\ndims: 2\nmissing: 0\n---\n1.0\nNA\n", "declares"),
    ("#TENSORFILE 1\ndims: 2\nmissing: 0\n---\n1.0\nabc\n", "abc"),
    ("dims: 2\n---\n1\n2\n", "not a tensor file"),
    ("#TENSORFILE 1\ndims: 2\nencoding: zip\n---\n", "encoding"),
    ("#TENSORFILE 1\ndims: 2 x\n---\n", "header"),
])
def test_malformed(tmp_path, body, msg):
    p = tmp_path / "bad.tensor"
    p.write_text(body)
    with pytest.raises(DataError, match=msg):
        read_tensor(p)


def test_mode_name_validation():
    with pytest.raises(DataError):
        TensorFile(np.zeros((2, 2)), None, ["a"])
    with pytest.raises(DataError):
        TensorFile(np.zeros((2, 2)), None, ["a", "a"])
    with pytest.raises(DataError):
        TensorFile(np.zeros((2, 2)), None, ["a", "b"], {"a": ["x"]})


def test_npz_deterministic(tmp_path):
    arrays_ = {"b": np.arange(3.0), "a": np.eye(2)}
    write_npz(tmp_path / "1.npz", arrays_, {"seed": 1})
    write_npz(tmp_path / "2.npz", dict(reversed(arrays_.items())), {"seed": 1})
    assert (tmp_path / "1.npz").read_bytes() == (tmp_path / "2.npz").read_bytes()
    back, meta = read_npz(tmp_path / "1.npz")
    np.testing.assert_array_equal(back["a"], np.eye(2))
    assert meta == {"seed": 1}
    # numpy can read it too
    assert set(np.load(tmp_path / "1.npz").files) >= {"a", "b"}


def test_chain_roundtrip(tmp_path):
    Y = np.random.default_rng(0).standard_normal((3, 2, 5))
    ch = run_gibbs(Y, PriorSpec.default(Y.shape, identity_modes=[1]),
                   GibbsConfig(n_iters=20, burn_in=5, thin=3, seed=0))
    save_chain(tmp_path / "chain.npz", ch, {"modes": ["a", "b", "c"]})
    back = load_chain(tmp_path)
    np.testing.assert_array_equal(back.Sigma[0], ch.Sigma[0])
    assert set(back.Sigma) == {0}
    assert back.identity_flags == ch.identity_flags and back.dims == ch.dims
    assert back.meta["modes"] == ["a", "b", "c"]
    with pytest.raises(DataError):
        load_chain(tmp_path / "missing.npz")


def test_config_hash_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
