"""The thirteen acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (also repeated in the terminal summary)
before asserting, so a failing criterion still reports its measured values.
"""

import time

import numpy as np
import pytest

from pvt import tensor as T
from pvt.attention import AttentionConfig, init_attention, mha_forward, sra_forward
from pvt.backbone import backbone_forward, classify_forward, init_weights, interpolate_pos_embed
from pvt.checkpoint import decode_checkpoint, encode_checkpoint
from pvt.cli import micro_gradcheck_reports
from pvt.config import preset, vit_small
from pvt.cost import (
    MATMUL_COMPONENTS,
    attention_core_macs,
    count_flops,
    count_params,
    estimate_activation_memory,
    flops_curve,
    widen_config,
)
from pvt.data import make_toy_dataset
from pvt.gradcheck import grad_check
from pvt.tensor import Tensor, backward, count_macs, named_tensors, no_grad
from pvt.train import train_toy

FOUR = ("pvt-tiny", "pvt-small", "pvt-medium", "pvt-large")


def test_01_parameter_reconciliation(acceptance_line):
    targets = dict(zip(FOUR, (13.2e6, 24.5e6, 44.2e6, 61.4e6)))
    got = {n: count_params(preset(n, num_classes=1000), reference_size=224).params for n in FOUR}
    rel = {n: got[n] / targets[n] - 1 for n in FOUR}
    ok = all(abs(r) <= 0.02 for r in rel.values())
    detail = ", ".join(f"{n} {got[n] / 1e6:.3f}M ({rel[n]:+.2%})" for n in FOUR)
    assert acceptance_line(1, "parameter counts within 2%", ok, detail)


def test_02_flops_reconciliation(acceptance_line):
    targets = dict(zip(FOUR, (1.9, 3.8, 6.7, 9.8)))
    got = {n: count_flops(preset(n), 224, 224).gflops for n in FOUR}
    rel = {n: got[n] / targets[n] - 1 for n in FOUR}
    ok = all(abs(r) <= 0.10 for r in rel.values())
    detail = ", ".join(f"{n} {got[n]:.3f} ({rel[n]:+.1%})" for n in FOUR)
    assert acceptance_line(2, "GFLOPs at 224 within 10%", ok, detail)


def test_03_widening(acceptance_line):
    params = count_params(widen_config(preset("pvt-small"), 1.4)).params
    rel = params / 46.8e6 - 1
    ok = abs(rel) <= 0.03
    assert acceptance_line(3, "widened PVT-Small within 3% of 46.8M", ok, f"{params / 1e6:.3f}M ({rel:+.2%})")


def test_04_reduction_law_and_instrumented_count(acceptance_line, rng):
    n, c = 56 * 56, 64
    law = all(attention_core_macs(n, c, r) * r * r == attention_core_macs(n, c, 1) for r in (1, 2, 4, 8))

    config = preset("pvt-micro", num_classes=3)
    weights = init_weights(config, 0, np.float64)
    with count_macs() as counter, no_grad():
        classify_forward(Tensor(rng.normal(size=(32, 32, 3))), config, weights)
    analytic = count_flops(config, 32, 32)
    per_label = analytic.component_totals()
    labels_match = all(counter.by_label.get(k, 0) == per_label.get(k, 0) for k in MATMUL_COMPONENTS)
    ok = law and labels_match and counter.macs == analytic.matmul_flops
    detail = f"R^2 law {law}; counted {counter.macs} vs analytic {analytic.matmul_flops} MACs"
    assert acceptance_line(4, "R^2 reduction law and instrumented MACs", ok, detail)


def test_05_flops_curve_ordering(acceptance_line):
    scales = [224, 448, 640, 896]
    configs = [vit_small(16), vit_small(32), preset("pvt-small")]
    rows = flops_curve(configs, scales)
    g = {(r.variant, r.height): r.gflops for r in rows}
    vit_order = all(g["vit-small/16", s] > g["vit-small/32", s] for s in scales)
    at_896 = g["vit-small/16", 896] > g["vit-small/32", 896] > g["pvt-small", 896]
    ok = vit_order and at_896
    detail = (
        f"at 896: ViT-S/16 {g['vit-small/16', 896]:.1f}, ViT-S/32 {g['vit-small/32', 896]:.1f}, "
        f"PVT-Small {g['pvt-small', 896]:.1f} GFLOPs; ViT/16 > ViT/32 at every scale: {vit_order}"
    )
    assert acceptance_line(5, "ViT-S/16 > ViT-S/32 > PVT-Small at 896", ok, detail)


def test_06_out_of_memory_plausibility(acceptance_line):
    from pvt.config import ViTConfig

    limit = 32e9
    vit = estimate_activation_memory(vit_small(4), 800, 1216).activation_bytes
    multi = {
        h: estimate_activation_memory(ViTConfig(4, 768, 8, h, 3, name=f"vit-p4-h{h}"), 800, 1216).activation_bytes
        for h in (2, 4, 8)
    }
    pvt = estimate_activation_memory(preset("pvt-small"), 800, 1216).activation_bytes
    ok = vit > limit and all(v > limit for v in multi.values()) and pvt <= limit
    detail = (
        f"ViT-Small/4 {vit / 1e9:.1f} GB, heads 2/4/8 "
        + "/".join(f"{v / 1e9:.0f}" for v in multi.values())
        + f" GB, PVT-Small {pvt / 1e9:.2f} GB"
    )
    assert acceptance_line(6, "ViT/4 exceeds 32 GB, PVT-Small does not", ok, detail)


def _primitive_cases(rng):
    pos = lambda *s: Tensor(rng.uniform(0.5, 2.0, size=s))  # noqa: E731
    rnd = lambda *s: Tensor(rng.normal(size=s))  # noqa: E731
    targets = np.array([0, 2, 1])
    return {
        "add": (lambda a, b: a + b, [rnd(3, 4), rnd(4)]),
        "sub": (lambda a, b: a - b, [rnd(3, 4), rnd(3, 1)]),
        "mul": (lambda a, b: a * b, [rnd(3, 4), rnd(3, 4)]),
        "div": (lambda a, b: a / b, [rnd(3, 4), pos(3, 4)]),
        "power": (lambda a: T.power(a, 1.5), [pos(5)]),
        "exp": (T.exp, [rnd(5)]),
        "log": (T.log, [pos(5)]),
        "sqrt": (T.sqrt, [pos(5)]),
        "gelu": (T.gelu, [rnd(6)]),
        "sum": (lambda a: T.tsum(a, axis=1), [rnd(3, 4)]),
        "mean": (lambda a: T.mean(a, axis=0), [rnd(3, 4)]),
        "var": (lambda a: T.var(a, axis=-1), [rnd(3, 4)]),
        "reshape": (lambda a: a.reshape(4, 3), [rnd(3, 4)]),
        "transpose": (lambda a: T.transpose(a, (1, 0, 2)), [rnd(2, 3, 4)]),
        "concat": (lambda a, b: T.concat([a, b], axis=0), [rnd(2, 3), rnd(1, 3)]),
        "getitem": (lambda a: a[1:, ::2], [rnd(3, 4)]),
        "broadcast_to": (lambda a: T.broadcast_to(a, (3, 4)), [rnd(1, 4)]),
        "space_to_depth": (lambda a: T.space_to_depth(a, 2), [rnd(4, 4, 2)]),
        "matmul": (T.matmul, [rnd(2, 3, 4), rnd(4, 5)]),
        "linear": (T.linear, [rnd(3, 4), rnd(4, 2), rnd(2)]),
        "softmax": (T.softmax, [rnd(3, 5)]),
        "log_softmax": (T.log_softmax, [rnd(3, 5)]),
        "layer_norm": (T.layer_norm, [rnd(3, 6), rnd(6), rnd(6)]),
        "cross_entropy": (lambda a: T.cross_entropy(a, targets), [rnd(3, 4)]),
        "bilinear_resize": (lambda a: T.bilinear_resize_grid(a, 5, 3), [rnd(3, 2, 2)]),
    }


def test_07_gradient_correctness(acceptance_line):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    for name, (op, inputs) in _primitive_cases(rng).items():
        out_shape = op(*inputs).shape
        proj = Tensor(rng.normal(size=out_shape))
        rep = grad_check(lambda *xs, op=op, proj=proj: T.tsum(op(*xs) * proj), inputs, tolerance=1e-4)
        worst[f"primitive {name}"] = rep

    cfg = AttentionConfig(8, 2, 2)
    w = init_attention(cfg, rng, np.float64)
    for _, t in named_tensors(w):
        t.data = t.data + 0.3 * rng.normal(size=t.shape)
    x = Tensor(rng.normal(size=(16, 8)))
    proj = Tensor(rng.normal(size=(16, 8)))
    names, params = zip(*named_tensors(w))
    worst["sra layer"] = grad_check(
        lambda xx, *_: T.tsum(sra_forward(xx, (4, 4), cfg, w) * proj), [x, *params], tolerance=1e-4
    )
    reports = micro_gradcheck_reports(seed=0, tolerance=1e-4)
    worst["micro classification"] = reports["classification"]
    worst["micro + seg head"] = reports["segmentation"]
    elapsed = time.perf_counter() - start

    max_err = max(r.max_rel_error for r in worst.values())
    failing = [k for k, r in worst.items() if not r.passed]
    ok = not failing and max_err < 1e-4 and elapsed < 60
    detail = (
        f"{len(worst)} checks, max rel error {max_err:.2e}, "
        f"classification {worst['micro classification'].max_rel_error:.2e}, "
        f"segmentation {worst['micro + seg head'].max_rel_error:.2e}, {elapsed:.1f} s"
        + (f"; failing: {failing}" if failing else "")
    )
    assert acceptance_line(7, "gradient checks below 1e-4 in under 60 s", ok, detail)


def test_08_degeneracy_oracle(acceptance_line):
    equal = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cfg = AttentionConfig(8, 2, 1, force_reduce=True)
        w = init_attention(cfg, rng, np.float64)
        for _, t in named_tensors(w):
            t.data = t.data + 0.3 * rng.normal(size=t.shape)
        w.ws.data = np.eye(8)
        w.bs.data = np.zeros(8)
        x = Tensor(rng.normal(size=(rng.integers(1, 5) * 4, 8)))
        grid = (x.shape[0] // 4, 4)
        a = sra_forward(x, grid, cfg, w, bypass_norm=True).data
        b = mha_forward(x, cfg, w).data
        equal += a.tobytes() == b.tobytes()
    assert acceptance_line(8, "SRA(R=1, Ws=I, no norm) == MHA bitwise", equal == 20, f"{equal}/20 seeds identical")


def test_09_pyramid_contract(acceptance_line):
    sizes = [(32, 32), (64, 64), (224, 224), (224, 448)]
    checked, bad = 0, []
    for name in ("pvt-micro", "pvt-tiny", "pvt-small"):
        config = preset(name)
        weights = init_weights(config, 0)
        for h, w in sizes:
            if name == "pvt-small" and (h, w) != (224, 224):
                continue
            with no_grad():
                pyr = backbone_forward(Tensor(np.zeros((h, w, 3)), dtype=np.float32), config, weights)
            for f, s, c in zip(pyr, (4, 8, 16, 32), config.channels):
                if f.shape != (h // s, w // s, c):
                    bad.append((name, h, w, f.shape))
            if pyr.strides != (4, 8, 16, 32):
                bad.append((name, h, w, pyr.strides))
            checked += 1
    ok = not bad
    assert acceptance_line(9, "strides 4/8/16/32 with configured channels", ok, f"{checked} runs" + (f"; bad {bad}" if bad else ""))


def test_10_global_receptive_field(acceptance_line, rng):
    config = preset("pvt-micro")
    weights = init_weights(config, 0, np.float64)
    image = Tensor(rng.normal(size=(32, 32, 3)), requires_grad=True)
    f4 = backbone_forward(image, config, weights).f4
    backward(T.tsum(f4 * f4), inputs=[image])
    per_patch = np.abs(image.grad).reshape(8, 4, 8, 4, 3).sum(axis=(1, 3, 4))
    nonzero = int(np.count_nonzero(per_patch))
    ok = nonzero == 64
    assert acceptance_line(10, "every 4x4 patch reaches |F4|^2", ok, f"{nonzero}/64 patches, min |grad| {per_patch.min():.2e}")


def test_11_toy_learnability(acceptance_line):
    start = time.perf_counter()
    result = train_toy(preset("pvt-micro"), make_toy_dataset(0, 64), steps=300, lr=1e-3, seed=0)
    elapsed = time.perf_counter() - start
    ok = result.final_accuracy >= 0.9 and elapsed < 300
    detail = f"accuracy {result.final_accuracy:.3f}, loss {result.final_loss:.4f}, {elapsed:.1f} s"
    assert acceptance_line(11, "toy task >= 90% in 300 steps", ok, detail)


def test_12_position_embedding_interpolation(acceptance_line, rng):
    pe = Tensor(rng.normal(size=(1 + 49, 8)))
    identity = interpolate_pos_embed(pe, (7, 7), (7, 7), True).data.tobytes() == pe.data.tobytes()

    table = interpolate_pos_embed(Tensor([[0.0], [1.0], [2.0], [3.0]]), (2, 2), (4, 4)).data.reshape(4, 4)
    expected = np.array([
        [0, 1 / 3, 2 / 3, 1],
        [2 / 3, 1, 4 / 3, 5 / 3],
        [4 / 3, 5 / 3, 2, 7 / 3],
        [2, 7 / 3, 8 / 3, 3],
    ])
    table_err = float(np.abs(table - expected).max())

    resized = interpolate_pos_embed(pe, (7, 7), (10, 4), True).data
    cls_row = resized[0].tobytes() == pe.data[0].tobytes()
    ok = identity and table_err < 1e-12 and cls_row
    detail = f"identity {identity}, 2x2->4x4 max error {table_err:.1e}, class row untouched {cls_row}"
    assert acceptance_line(12, "bilinear position-embedding resize", ok, detail)


def test_13_checkpoint_fidelity(acceptance_line):
    config = preset("pvt-micro", num_classes=3)
    identical = 0
    for i in range(20):
        rng = np.random.default_rng(100 + i)
        dtype = np.float32 if i % 2 else np.float64
        weights = init_weights(config, int(rng.integers(1 << 30)), dtype)
        for _, t in named_tensors(weights):
            t.data = rng.normal(size=t.shape).astype(dtype)
        blob = encode_checkpoint(weights, config)
        loaded = decode_checkpoint(blob)
        same = all(
            a.dtype == b.dtype and a.data.tobytes() == b.data.tobytes()
            for (_, a), (_, b) in zip(named_tensors(weights), named_tensors(loaded.weights))
        )
        identical += same and encode_checkpoint(loaded.weights, loaded.config) == blob
    assert acceptance_line(13, "checkpoint round trip bitwise", identical == 20, f"{identical}/20 instances identical")
