"""Acceptance gate: one or more ``test_acNN_*`` tests per criterion.

The summary hook in conftest prints one PASS/FAIL line per criterion.
"""

import math
import shutil
import time
from importlib import resources

import numpy as np
import pytest

from vrae.analysis.entropy import (
    block_average, entropy_change, entropy_csv, entropy_profile, histogram_entropy, proxy_entropy_change,
)
from vrae.analysis.pareto import dominates, pareto_front, points_from_reports, reference_reports
from vrae.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from vrae.cli import main
from vrae.data import DegradationConfig, degrade, save_png, total_variation
from vrae.metrics import nmse, psnr, ssim
from vrae.model import VraeConfig, auxiliary_param_total, build_network, count_parameters
from vrae.nn import functional as F
from vrae.nn.layers import BatchNorm2d, Conv2d, ConvTranspose2d, ReLU, Sequential
from vrae.synthetic import plate_images
from vrae.train import ArraySource, TrainConfig, train

from checks import E2E_STEP, E2E_TOL, FD_STEP, FD_TOL, layer_gradcheck, reduced_vrae2_gradcheck
from oracles import (
    brute_force_front, central_diff, hand_binned_entropy, naive_nmse, naive_psnr, naive_ssim, rel_err,
)

WIDTHS = (64, 256, 512, 1024, 2048)


# -- AC1 -------------------------------------------------------------------------


def _layer_suite(rng):
    errs = {}
    conv = Conv2d("conv", F.ConvSpec(2, 3, (3, 3), (2, 2), 1, "reflect", has_bias=True), np.float64)
    conv.weight[...] = rng.standard_normal(conv.weight.shape)
    conv.bias[...] = rng.standard_normal(3)
    errs["conv"] = layer_gradcheck(conv, rng.standard_normal((1, 2, 5, 5)), rng)

    tconv = ConvTranspose2d("tconv", F.ConvSpec(3, 2, (4, 4), (2, 2), 1, has_bias=True), np.float64)
    tconv.weight[...] = rng.standard_normal(tconv.weight.shape)
    tconv.bias[...] = rng.standard_normal(2)
    errs["transposed"] = layer_gradcheck(tconv, rng.standard_normal((2, 3, 3, 3)), rng)

    bn = BatchNorm2d("bn", 3, np.float64)
    bn.gamma[...] = rng.standard_normal(3)
    bn.beta[...] = rng.standard_normal(3)
    errs["batchnorm"] = layer_gradcheck(bn, rng.standard_normal((2, 3, 4, 4)), rng)

    # a draw whose pre-activations stay clear of the ReLU kink
    r44 = np.random.default_rng(44)
    c2 = Conv2d("c2", F.ConvSpec(2, 4, (3, 3), padding=1), np.float64)
    c2.weight[...] = r44.standard_normal(c2.weight.shape)
    bn2 = BatchNorm2d("bn2", 4, np.float64)
    bn2.beta[...] = [0.2, -0.1, 0.3, 0.05]
    x = r44.standard_normal((2, 2, 4, 4))
    assert np.abs(Sequential([c2, bn2]).forward(x, True)[0]).min() > 0.04
    errs["conv-bn-relu"] = layer_gradcheck(Sequential([c2, bn2, ReLU()]), x, rng)

    pred, target = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))
    _, g = F.mse_loss(pred, target)
    errs["mse"] = {"input": rel_err(g, central_diff(lambda: F.mse_loss(pred, target)[0], pred, FD_STEP))}
    return errs


def test_ac01_gradient_suite(record_property):
    t0 = time.perf_counter()
    layer_errs = _layer_suite(np.random.default_rng(0))
    e2e, margin = reduced_vrae2_gradcheck()
    elapsed = time.perf_counter() - t0
    worst_layer = max(max(v.values()) for v in layer_errs.values())
    worst_e2e = max(e2e.values())
    record_property("note", f"worst layer rel err {worst_layer:.2e}; end-to-end {worst_e2e:.2e} over "
                            f"{len(e2e)} tensors (step {E2E_STEP:g}, ReLU margin {margin:.1e}); {elapsed:.1f} s")
    for kind, errs in layer_errs.items():
        assert max(errs.values()) <= FD_TOL, (kind, errs)
    assert margin > 10 * E2E_STEP
    assert worst_e2e <= E2E_TOL, max(e2e, key=e2e.get)
    assert elapsed < 120


# -- AC2 -------------------------------------------------------------------------


def test_ac02_shapes_all_depths_and_archs(record_property):
    t0 = time.perf_counter()
    x = np.random.default_rng(0).random((1, 3, 256, 256), dtype=np.float32)
    for depth in (2, 3, 4, 5):
        for arch in ("vrae", "ae"):
            cfg = VraeConfig(depth=depth, arch=arch)
            net = build_network(cfg)
            y, trace = net.forward(x, capture_trace=True)
            assert y.shape == (1, 3, 256, 256)
            assert len(trace.stage_outputs) == depth
            for i, out in enumerate(trace.stage_outputs, start=1):
                assert out.shape[1:] == cfg.stage_shape(i)
            assert len(trace.aux_outputs) == (depth - 1 if arch == "vrae" else 0)
            for a, s in zip(trace.aux_outputs, trace.stage_outputs):
                assert a.shape == s.shape
            assert len(trace.decoder_outputs) == depth
    elapsed = time.perf_counter() - t0
    record_property("note", f"8 configurations in {elapsed:.1f} s")
    assert elapsed < 60


# -- AC3 -------------------------------------------------------------------------


def test_ac03_parameter_overhead(record_property):
    assert auxiliary_param_total(WIDTHS, 2) == 3 * 3 * 3 * 64 + 2 * 64 == 1856
    assert auxiliary_param_total(WIDTHS, 5) == sum(29 * c for c in (64, 256, 512, 1024)) == 53824
    ratios = []
    for depth in (2, 3, 4, 5):
        v = count_parameters(build_network(VraeConfig(depth=depth)))
        a = count_parameters(build_network(VraeConfig(depth=depth, arch="ae")))
        hand = sum(27 * c + 2 * c for c in WIDTHS[:depth - 1])
        assert v.auxiliary == hand and v.total - a.total == hand
        ratio = v.total / a.total
        assert 1.0 < ratio <= 1.05
        ratios.append(f"k={depth}: {a.total}->{v.total} ({(ratio - 1) * 100:.3f}%)")
    record_property("note", "; ".join(ratios))


# -- AC4 -------------------------------------------------------------------------


def test_ac04_zero_injection(record_property):
    x = np.random.default_rng(1).random((1, 3, 256, 256), dtype=np.float32)
    worst = 0.0
    for depth in (2, 3, 4, 5):
        vrae = build_network(VraeConfig(depth=depth), seed=5)
        ae = build_network(VraeConfig(depth=depth, arch="ae"), seed=6)
        vp = vrae.parameters()
        for name, arr in ae.parameters().items():
            arr[...] = vp[name]
        for name, arr in vp.items():
            if name.startswith("aux.") and name.endswith((".weight", ".beta")):
                arr[...] = 0
        worst = max(worst, float(np.abs(vrae(x) - ae(x)).max()))
    record_property("note", f"max |VRAE - AE| = {worst:.2e}")
    assert worst <= 1e-6


# -- AC5 -------------------------------------------------------------------------


@pytest.mark.slow
def test_ac05_overfit_sanity(record_property):
    t0 = time.perf_counter()
    cfg = TrainConfig(model=VraeConfig.reduced(2, "vrae", size=64, scale=0.5), epochs=500, batch_size=8,
                      lr=1e-4, seed=0)
    result = train(cfg, ArraySource(plate_images(8, size=64, seed=0)), DegradationConfig(seed=0))
    elapsed = time.perf_counter() - t0
    losses = np.array(result.step_losses)
    windows = losses.reshape(10, 50).mean(axis=1)
    record_property("note", f"{len(losses)} steps, final MSE {losses[-1]:.5f}, 50-step means "
                            f"{windows[0]:.4f} -> {windows[-1]:.4f}; {elapsed:.0f} s")
    assert len(losses) == 500
    assert losses[-1] < 0.005
    assert np.all(np.diff(windows) <= 0)
    assert elapsed < 600


# -- AC6 -------------------------------------------------------------------------


def test_ac06_metric_oracles():
    z = np.zeros((1, 3, 16, 16))
    assert abs(psnr(z + 0.5, z)[0] - 6.0206) < 1e-4
    assert abs(psnr(z + 0.5, z)[0] - 10 * math.log10(4)) <= 1e-9
    x = np.random.default_rng(2).random((2, 3, 16, 16))
    assert np.all(np.abs(ssim(x, x) - 1) <= 1e-6)
    assert abs(ssim(z + 0.2, z + 0.6)[0] - 0.60010) <= 1e-5

    rng = np.random.default_rng(3)
    target = rng.random((50, 3, 32, 32))
    pred = np.clip(target + rng.normal(0, 0.15, target.shape), 0, 1)
    p, n, s = psnr(pred, target), nmse(pred, target), ssim(pred, target)
    for i in range(50):
        assert abs(p[i] - naive_psnr(pred[i], target[i])) <= 1e-9
        assert abs(n[i] - naive_nmse(pred[i], target[i])) <= 1e-12
        assert abs(s[i] - naive_ssim(pred[i], target[i])) <= 1e-6


# -- AC7 -------------------------------------------------------------------------


def test_ac07_degradation_suite():
    off = DegradationConfig(noise_mode="off")
    const = np.full((1, 3, 16, 16), 0.42, dtype=np.float32)
    np.testing.assert_array_equal(degrade(const, off), const)

    impulse = np.zeros((1, 3, 9, 9), dtype=np.float32)
    impulse[:, :, 4, 4] = 1
    expected = np.zeros_like(impulse)
    expected[:, :, 3:6, 3:6] = np.float32(1 / 9)
    np.testing.assert_array_equal(degrade(impulse, DegradationConfig(noise_mode="off", pool_iters=1)), expected)

    img = plate_images(1, 32, seed=4)
    cfg = DegradationConfig(seed=11)
    np.testing.assert_array_equal(degrade(img, cfg, key="a"), degrade(img, cfg, key="a"))
    assert not np.array_equal(degrade(img, cfg, key="a"), degrade(img, DegradationConfig(seed=12), key="a"))

    rng = np.random.default_rng(5)
    one = DegradationConfig(noise_mode="off", pool_iters=1)
    for _ in range(20):
        x = rng.random((1, 3, 32, 32)).astype(np.float32)
        tv = [total_variation(x)]
        for _ in range(10):
            x = degrade(x, one)
            tv.append(total_variation(x))
        assert all(b < a for a, b in zip(tv, tv[1:]))


# -- AC8 -------------------------------------------------------------------------


def test_ac08_entropy_suite():
    uniform = np.repeat(np.linspace(0, 1, 256, endpoint=False) + 1 / 512, 3)
    assert abs(histogram_entropy(uniform) - math.log(256)) <= 1e-9
    v = np.random.default_rng(6).standard_normal(4096)
    assert abs(histogram_entropy(v) - hand_binned_entropy(v)) <= 1e-12

    assert proxy_entropy_change(5, 5, 3, 3, 1.0) == 0
    assert abs(proxy_entropy_change(4, 4, 3, 3, math.e) - 4.0) <= 1e-12
    assert abs(proxy_entropy_change(6, 5, 3, 2, 0.5) + 11.0904) <= 1e-4

    h = list(np.random.default_rng(7).uniform(0, 5.5, 12))
    assert abs(sum(entropy_change(h)) - (h[-1] - h[0])) <= 1e-12

    flat = list(np.random.default_rng(8).standard_normal(10))
    groups = [flat[:1], flat[1:4], flat[4:]]
    got = block_average(groups).avg_delta_h
    assert got == pytest.approx([np.mean(g) for g in groups], abs=1e-12)


# -- AC9 -------------------------------------------------------------------------


def test_ac09_pareto_from_reference_table(record_property):
    reports = reference_reports()
    assert len(reports) == 10
    fronts = {}
    for quality in ("psnr", "ssim", "nmse"):
        points = points_from_reports(reports, quality)
        front = pareto_front(points)
        names = sorted(p.model for p in front)
        assert names == sorted(brute_force_front(points))
        assert not any(dominates(a, b) for a in front for b in front)
        assert all(any(dominates(f, p) for f in front) for p in points if p not in front)
        fronts[quality] = names
    assert fronts["psnr"] == ["AE2", "VRAE2", "VRAE3"]
    record_property("note", "; ".join(f"{q}: {', '.join(n)}" for q, n in fronts.items()))


# -- AC10 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("ac10")
    (root / "raw").mkdir()
    for i, img in enumerate(plate_images(10, size=36, seed=2)):
        save_png(img, root / "raw" / f"v{i}.png")
    assert main(["prepare", "--input", str(root / "raw"), "--out", str(root / "data"),
                 "--size", "32", "--augment-to", "9", "--threads", "1"]) == 0
    return root


def _run_pipeline(root, tag):
    data, out = root / "data", root / tag
    out.mkdir()
    flags = ["--depth", "2", "--size", "32", "--width-scale", "0.125", "--epochs", "2", "--batch", "4",
             "--seed", "4", "--threads", "1", "--data", str(data)]
    for arch in ("vrae", "ae"):
        assert main(["train", "--arch", arch, "--out", str(out / f"{arch}.ckpt"), *flags]) == 0
        assert main(["eval", "--ckpt", str(out / f"{arch}.ckpt"), "--data", str(data),
                     "--report", str(out / "metrics.csv"), "--append", "--no-timestamp"]) == 0
    assert main(["entropy", "--ckpt-a", str(out / "ae.ckpt"), "--ckpt-b", str(out / "vrae.ckpt"),
                 "--data", str(data), "--out", str(out / "entropy.csv"), "--svg", "--no-timestamp"]) == 0
    table = out / "reference_metrics.csv"
    with resources.as_file(resources.files("vrae.resources").joinpath("reference_metrics.csv")) as src:
        shutil.copy(src, table)
    assert main(["pareto", "--metrics", str(table), "--out", str(out / "pareto.csv"), "--svg",
                 "--no-timestamp"]) == 0
    return out


def test_ac10_determinism(cli_corpus, tmp_path):
    a, b = _run_pipeline(cli_corpus, "a"), _run_pipeline(cli_corpus, "b")
    for name in ("vrae.loss.csv", "ae.loss.csv", "metrics.csv", "entropy.csv", "entropy.svg",
                 "pareto.csv", "pareto.svg", "vrae.ckpt", "ae.ckpt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name

    ckpt = load_checkpoint(a / "vrae.ckpt")
    save_checkpoint(ckpt, tmp_path / "resaved.ckpt")
    assert (tmp_path / "resaved.ckpt").read_bytes() == (a / "vrae.ckpt").read_bytes()
    x = plate_images(2, 32, seed=9)
    np.testing.assert_array_equal(ckpt.to_network()(x), from_bytes(to_bytes(ckpt)).to_network()(x))


# -- AC11 ------------------------------------------------------------------------


@pytest.mark.slow
def test_ac11_entropy_comparison_report(record_property, tmp_path):
    images = plate_images(24, size=64, seed=3)
    probe = ArraySource(plate_images(8, size=64, seed=99))
    deg = DegradationConfig(seed=0)
    x = np.stack([degrade(probe.clean(i), deg, key=probe.key(i)) for i in range(len(probe))])
    profiles = []
    for arch in ("ae", "vrae"):
        cfg = TrainConfig(model=VraeConfig.reduced(3, arch, size=64, scale=0.25), epochs=6, batch_size=8,
                          lr=1e-3, seed=0)
        result = train(cfg, ArraySource(images), deg)
        profiles.append(entropy_profile(result.network, x))
    (tmp_path / "entropy.csv").write_text(entropy_csv(profiles))
    ae, vrae = profiles
    for prof in profiles:
        record_property("note", f"{prof.model}: " + ", ".join(f"{v:+.3f}" for v in prof.avg_delta_h))
    verdict = "holds" if vrae.avg_delta_h[0] > ae.avg_delta_h[0] else "does not hold"
    record_property("note", f"expected direction (VRAE keeps more first-block entropy) {verdict} on this run")
    assert all(len(p.avg_delta_h) == 3 and all(map(math.isfinite, p.avg_delta_h)) for p in profiles)
