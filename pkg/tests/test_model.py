import hashlib
import struct

import numpy as np
import pytest

from tapgrbm.errors import InputError, ModelCorruptError, ModelFileError, ModelVersionError
from tapgrbm.model import (
    DbmModel,
    GrbmModel,
    init_model,
    load_model,
    model_equal,
    save_model,
    visible_params_from_data,
)
from tapgrbm.units import Family, UnitParams


def test_init_weight_statistics_and_seeding():
    m = init_model((200, 50), sigma=1e-3, seed=7)
    assert m.W.shape == (200, 50)
    assert abs(m.W.std() - 1e-3) < 5e-5
    assert abs(m.W.mean()) < 3e-5
    assert np.array_equal(m.W, init_model((200, 50), sigma=1e-3, seed=7).W)
    assert not np.array_equal(m.W, init_model((200, 50), sigma=1e-3, seed=8).W)


def test_binary_visible_fields_are_clamped_logits():
    X = np.array([[1, 0, 1], [1, 0, 0], [1, 0, 1], [1, 0, 0]], dtype=float)
    m = init_model((3, 2), data_sample=X)
    clamp = np.log(1e-3 / (1 - 1e-3))
    np.testing.assert_allclose(m.vis_params.U, [-clamp, clamp, 0.0], atol=1e-12)
    assert np.all(m.hid_params.U == 0)


def test_truncated_visible_priors_are_moment_matched():
    rng = np.random.default_rng(0)
    X = rng.uniform(0.2, 0.6, size=(400, 2))
    p = visible_params_from_data("tgauss", X)
    np.testing.assert_allclose(p.U / p.V, X.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(1 / p.V, X.var(axis=0), rtol=1e-12)
    X[:100] = 0.0
    q = visible_params_from_data("tgb", X)
    np.testing.assert_allclose(q.rho, 0.75)


def test_hidden_defaults_per_family():
    for fam in ("binary", "tgauss", "tgb"):
        m = init_model((3, 4), "binary", fam)
        assert m.hid_params.family is Family(fam)
        assert np.all(m.hid_params.U == 0)
        if fam == "tgb":
            assert np.all(m.hid_params.rho == 0.5)


@pytest.mark.parametrize(
    "sizes, sigma, data",
    [((3, 0), 1e-3, None), ((3, 2), 0.0, None), ((3, 2), 1e-3, np.zeros((0, 3))), ((3, 2), 1e-3, np.zeros((2, 4)))],
)
def test_init_rejects_bad_arguments(sizes, sigma, data):
    with pytest.raises(InputError):
        init_model(sizes, sigma=sigma, data_sample=data)


def test_model_rejects_mismatched_weights():
    with pytest.raises(InputError):
        GrbmModel(np.zeros((3, 3)), UnitParams.binary(np.zeros(3)), UnitParams.binary(np.zeros(2)))
    with pytest.raises(InputError):
        GrbmModel(np.full((3, 2), np.nan), UnitParams.binary(np.zeros(3)), UnitParams.binary(np.zeros(2)))


def _models():
    rng = np.random.default_rng(3)
    yield init_model((5, 3), seed=1)
    yield GrbmModel(
        rng.normal(size=(4, 2)),
        UnitParams.tgb(rng.uniform(0.1, 0.9, 4), rng.normal(size=4), rng.uniform(0, 2, 4), -1.0, 2.0),
        UnitParams.trunc_gauss(rng.normal(size=2), rng.uniform(0, 1, 2)),
        {"epoch": 4, "note": "x"},
    )
    yield DbmModel(
        [UnitParams.binary(rng.normal(size=3)), UnitParams.binary(np.zeros(2)), UnitParams.binary(np.ones(2))],
        [rng.normal(size=(3, 2)), rng.normal(size=(2, 2))],
    )


@pytest.mark.parametrize("model", list(_models()))
def test_save_load_round_trip_is_bitwise(tmp_path, model):
    path = tmp_path / "m.tapm"
    save_model(model, path)
    back = load_model(path)
    assert type(back) is type(model)
    assert model_equal(model, back)
    assert back.metadata == model.metadata
    save_model(back, tmp_path / "again.tapm")
    assert path.read_bytes() == (tmp_path / "again.tapm").read_bytes()


def _saved(tmp_path):
    path = tmp_path / "m.tapm"
    save_model(init_model((4, 3), seed=2), path)
    return path


def test_truncated_file_is_reported_as_corrupt(tmp_path):
    path = _saved(tmp_path)
    raw = path.read_bytes()
    for cut in (len(raw) - 1, len(raw) // 2, 20):
        path.write_bytes(raw[:cut])
        with pytest.raises(ModelCorruptError):
            load_model(path)


def test_flipped_bit_fails_checksum(tmp_path):
    path = _saved(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[-40] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(ModelCorruptError, match="checksum"):
        load_model(path)


def test_version_bump_is_rejected_before_checksum(tmp_path):
    path = _saved(tmp_path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<H", raw, 4, 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(ModelVersionError):
        load_model(path)


def test_bad_magic_and_missing_file(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(ModelFileError):
        load_model(path)
    with pytest.raises(OSError):
        load_model(tmp_path / "absent.tapm")


def test_resealed_ragged_payload_is_corrupt(tmp_path):
    # valid checksum over a payload that is not a whole number of floats
    path = _saved(tmp_path)
    body = path.read_bytes()[:-32] + b"\x00\x01\x02"
    path.write_bytes(body + hashlib.sha256(body).digest())
    with pytest.raises(ModelCorruptError):
        load_model(path)


def test_block_weights_and_views():
    m = list(_models())[2]
    J = m.block_weights()
    assert np.array_equal(J, J.T)
    assert np.array_equal(J[:3, 3:5], m.weights[0])
    assert np.array_equal(J[3:5, 5:], m.weights[1])
    assert np.all(J[:3, 5:] == 0)
    rbm = init_model((3, 2))
    assert model_equal(rbm.as_dbm().as_grbm(), rbm)
    with pytest.raises(InputError):
        m.as_grbm()
