import csv
import json
import struct

import numpy as np
import pytest

from pvt.backbone import init_weights
from pvt.checkpoint import (
    MAGIC,
    VERSION,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from pvt.cli import main
from pvt.config import preset
from pvt.cost import count_flops, count_params, estimate_activation_memory
from pvt.data import center_row_detector, make_toy_dataset
from pvt.errors import (
    BadMagicError,
    CheckpointError,
    ManifestError,
    NumericalError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from pvt.heads import init_seg_head
from pvt.optim import AdamW
from pvt.tensor import Tensor, backward, named_tensors
from pvt.train import train_toy


def _split(blob: bytes):
    _, version, hlen = struct.unpack_from("<4sIQ", blob)
    header = json.loads(blob[16 : 16 + hlen])
    return header, blob[16 + hlen :]


def _join(header: dict, payload: bytes, version: int = VERSION) -> bytes:
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack("<4sIQ", MAGIC, version, len(h)) + h + payload


# -- checkpoint ----------------------------------------------------------------


def test_save_load_save_byte_identical(tmp_path, micro_config):
    weights = init_weights(micro_config, 3)
    a, b = tmp_path / "a.pvtc", tmp_path / "b.pvtc"
    save_checkpoint(weights, micro_config, a)
    w2, c2 = load_checkpoint(a)
    assert c2 == micro_config
    save_checkpoint(w2, c2, b)
    assert a.read_bytes() == b.read_bytes()


def test_round_trip_bitwise_float64(micro_config, rng):
    weights = init_weights(micro_config, 0, np.float64)
    for _, t in named_tensors(weights):
        t.data = rng.normal(size=t.shape) * 10.0 ** rng.integers(-30, 30, size=t.shape)
    ckpt = decode_checkpoint(encode_checkpoint(weights, micro_config))
    for (n1, t1), (n2, t2) in zip(named_tensors(weights), named_tensors(ckpt.weights)):
        assert n1 == n2 and t1.dtype == t2.dtype and t1.data.tobytes() == t2.data.tobytes()


def test_round_trip_with_head(tmp_path, micro_config):
    weights = init_weights(micro_config, 0)
    head = init_seg_head(micro_config, 4, 6, seed=9)
    save_checkpoint(weights, micro_config, tmp_path / "h.pvtc", head)
    ckpt = read_checkpoint(tmp_path / "h.pvtc")
    assert ckpt.head.width == 6 and ckpt.head.num_classes == 4
    for (_, a), (_, b) in zip(named_tensors(head), named_tensors(ckpt.head)):
        assert a.data.tobytes() == b.data.tobytes()


def test_header_layout(micro_config):
    blob = encode_checkpoint(init_weights(micro_config, 0), micro_config)
    assert blob[:4] == b"PVTC"
    assert struct.unpack_from("<I", blob, 4)[0] == 1
    header, payload = _split(blob)
    assert header["payload_bytes"] == len(payload)
    assert all(e["name"].startswith("backbone.") for e in header["tensors"])


def test_truncation_detected(micro_config):
    blob = encode_checkpoint(init_weights(micro_config, 0), micro_config)
    hlen = struct.unpack_from("<Q", blob, 8)[0]
    for cut in (8, 16 + hlen // 2, len(blob) - 1):
        with pytest.raises(TruncatedCheckpointError):
            decode_checkpoint(blob[:cut])


def test_bad_magic(micro_config):
    blob = encode_checkpoint(init_weights(micro_config, 0), micro_config)
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"")


def test_version_mismatch(micro_config):
    header, payload = _split(encode_checkpoint(init_weights(micro_config, 0), micro_config))
    with pytest.raises(VersionMismatchError):
        decode_checkpoint(_join(header, payload, version=VERSION + 1))


def test_overlapping_manifest(micro_config):
    header, payload = _split(encode_checkpoint(init_weights(micro_config, 0), micro_config))
    header["tensors"][1]["offset"] = header["tensors"][0]["offset"]
    with pytest.raises(ManifestError, match="overlap"):
        decode_checkpoint(_join(header, payload))


def test_out_of_bounds_manifest(micro_config):
    header, payload = _split(encode_checkpoint(init_weights(micro_config, 0), micro_config))
    header["tensors"][-1]["offset"] = len(payload)
    with pytest.raises(ManifestError, match="outside"):
        decode_checkpoint(_join(header, payload))


def test_tensor_set_must_match_config(micro_config):
    header, payload = _split(encode_checkpoint(init_weights(micro_config, 0), micro_config))
    header["config"]["num_classes"] = 5
    with pytest.raises(ManifestError):
        decode_checkpoint(_join(header, payload))
    header, payload = _split(encode_checkpoint(init_weights(micro_config, 0), micro_config))
    header["tensors"][0]["name"] = "backbone.bogus"
    with pytest.raises(ManifestError):
        decode_checkpoint(_join(header, payload))


def test_error_codes_distinct():
    codes = {cls.code for cls in (BadMagicError, VersionMismatchError, TruncatedCheckpointError, ManifestError)}
    assert len(codes) == 4
    assert all(issubclass(cls, CheckpointError) for cls in (BadMagicError, ManifestError))


# -- data -------------------------------------------------------------------------


def test_dataset_deterministic_and_balanced():
    a, b = make_toy_dataset(5, 40), make_toy_dataset(5, 40)
    assert a.images.tobytes() == b.images.tobytes() and np.array_equal(a.labels, b.labels)
    assert a.labels.sum() == 20
    assert a.images.shape == (40, 32, 32, 3)
    assert not np.array_equal(make_toy_dataset(6, 40).images, a.images)


def test_dataset_seg_masks():
    ds = make_toy_dataset(0, 16, "seg")
    assert ds.masks.shape == (16, 8, 8) and ds.targets is ds.masks
    assert set(np.unique(ds.masks)) <= {0, 1}
    assert all(m.any() for m in ds.masks)
    # stripe masks are whole rows
    for m, label in zip(ds.masks, ds.labels):
        if label == 0:
            assert all(row.all() or not row.any() for row in m)


def test_dataset_is_easy_for_a_hand_detector():
    ds = make_toy_dataset(0, 64)
    assert np.mean(center_row_detector(ds.images) == ds.labels) > 0.9


def test_dataset_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_toy_dataset(0, 1)
    with pytest.raises(ValueError):
        make_toy_dataset(0, 8, "det")


# -- optimizer and training ----------------------------------------------------------


def test_adamw_first_step():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    backward((p * Tensor([3.0, 0.5])).sum())
    opt.step()
    # bias-corrected first step moves by lr * sign(grad); decay shrinks by lr * wd * p
    np.testing.assert_allclose(p.data, [1.0 * (1 - 0.05) - 0.1, -2.0 * (1 - 0.05) - 0.1], atol=1e-7)


def test_zero_learning_rate_keeps_loss_constant():
    ds = make_toy_dataset(0, 8)
    result = train_toy(preset("pvt-micro"), ds, steps=4, lr=0.0, weight_decay=0.0)
    losses = [e.loss for e in result.log]
    assert max(losses) - min(losses) == 0


def test_training_deterministic():
    ds = make_toy_dataset(1, 8)
    a = train_toy(preset("pvt-micro"), ds, steps=5, seed=3)
    b = train_toy(preset("pvt-micro"), ds, steps=5, seed=3)
    assert [e.loss for e in a.log] == [e.loss for e in b.log]


def test_minibatch_path_runs():
    ds = make_toy_dataset(0, 12)
    result = train_toy(preset("pvt-micro"), ds, steps=3, batch_size=4)
    assert len(result.log) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_numerical_error():
    ds = make_toy_dataset(0, 8)
    with pytest.raises(NumericalError):
        train_toy(preset("pvt-micro"), ds, steps=30, lr=1e30, weight_decay=0.0)


def test_toy_classification_learns():
    result = train_toy(preset("pvt-micro"), make_toy_dataset(0, 64), steps=300, lr=1e-3, seed=0)
    assert result.final_accuracy >= 0.9
    smooth = result.smoothed_losses()
    assert smooth[-1] < smooth[0]


# -- CLI ------------------------------------------------------------------------


def test_cli_describe(capsys):
    assert main(["describe", "--variant", "pvt-tiny"]) == 0
    out = capsys.readouterr().out
    assert "pvt-tiny" in out and "512" in out


def test_cli_cost_summary(capsys):
    assert main(["cost", "--variant", "pvt-tiny"]) == 0
    out = capsys.readouterr().out
    assert "13.23M" in out and "gflops 1.99" in out


def test_cli_csv_matches_library(tmp_path):
    path = tmp_path / "curve.csv"
    assert main(["cost", "--curve", "224,448", "--csv", str(path)]) == 0
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    by_key = {(r["variant"], int(r["height"])): r for r in rows}
    row = by_key[("pvt-small", 448)]
    cfg = preset("pvt-small")
    assert int(row["params"]) == count_params(cfg).params
    assert float(row["gflops"]) == count_flops(cfg, 448, 448).gflops
    assert int(row["act_bytes"]) == estimate_activation_memory(cfg, 448, 448).activation_bytes
    assert ("vit-small/32", 224) in by_key


def test_cli_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    assert "classification" in capsys.readouterr().out


def test_cli_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    assert main(["cost", "--height", "abc"]) == 1


def test_cli_validation_errors(capsys):
    assert main(["cost", "--variant", "pvt-tiny", "--height", "100"]) == 2
    assert main(["describe", "--variant", "no-such-model"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_missing_checkpoint(tmp_path, capsys):
    assert main(["features", "--checkpoint", str(tmp_path / "missing.pvtc")]) == 4
    bad = tmp_path / "bad.pvtc"
    bad.write_bytes(b"nope")
    assert main(["features", "--checkpoint", str(bad)]) == 4


def test_cli_features_json(tmp_path):
    out = tmp_path / "f.json"
    assert main(["features", "--height", "64", "--width", "32", "--classify", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert [lvl["stride"] for lvl in report["levels"]] == [4, 8, 16, 32]
    assert report["levels"][0]["shape"] == [16, 8, 8]
    assert len(report["logits"]) == 1000


def test_cli_train_then_features(tmp_path, capsys):
    ckpt = tmp_path / "toy.pvtc"
    assert main(["train-toy", "--steps", "3", "--samples", "8", "--checkpoint", str(ckpt)]) == 0
    assert "final:" in capsys.readouterr().out
    assert main(["features", "--checkpoint", str(ckpt), "--classify"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["logits"]) == 2
