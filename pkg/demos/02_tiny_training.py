"""
Training a small VRAE on CPU
============================

The full-width networks are too slow to train in numpy, so this uses a
width-reduced VRAE-2 on 64x64 synthetic plates.  Width scale 0.5 keeps the
structure (stem, one bottleneck stage, one auxiliary block, two transposed
convolutions) but divides every channel count by two.
"""

from pathlib import Path

from vrae.checkpoint import load_checkpoint
from vrae.data import DegradationConfig, save_png
from vrae.metrics import evaluate, psnr, restore
from vrae.model import VraeConfig, count_parameters
from vrae.synthetic import plate_images
from vrae.train import ArraySource, TrainConfig, loss_log_csv, make_batch, train

out = Path("demo_output/training")
out.mkdir(parents=True, exist_ok=True)

train_set = ArraySource(plate_images(16, size=64, seed=0))
val_set = ArraySource(plate_images(4, size=64, seed=1))
deg = DegradationConfig(seed=0)

model = VraeConfig.reduced(2, "vrae", size=64, scale=0.5)
cfg = TrainConfig(model=model, epochs=40, batch_size=8, lr=1e-3, seed=0, eval_every=5,
                  checkpoint_path=out / "vrae2.ckpt")
print(model.label, "stage widths", model.widths[:2])

result = train(cfg, train_set, deg, val_set=val_set)
print(f"params {count_parameters(result.network).total}")
(out / "loss.csv").write_text(loss_log_csv(result.epochs))
for e in result.epochs:
    if e.val_mse is not None:
        print(f"epoch {e.epoch:3d}  train {e.train_mse:.5f}  val {e.val_mse:.5f}")

## Held-out quality
# fps_iters=None skips the timing loop, so FPS is reported as NaN.
report = evaluate(result.network, val_set, deg, fps_iters=None)
print(f"val PSNR {report.psnr_db:.2f} dB  SSIM {report.ssim:.3f}  NMSE {report.nmse:.4f}")

## Reload the best checkpoint and restore one image
net = load_checkpoint(out / "vrae2.best.ckpt").to_network()
x, y = make_batch(val_set, [0], deg)
save_png(x, out / "input.png")
save_png(restore(net, x), out / "restored.png")
save_png(y, out / "target.png")
print(f"PSNR degraded {psnr(x, y)[0]:.2f} dB -> restored {psnr(restore(net, x), y)[0]:.2f} dB")
