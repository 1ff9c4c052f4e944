import os, sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import scene, metrics, training, config as config_mod
from satrf import field as field_mod

base = "/root/pkg/.tuning"
ds = scene.load_dataset(os.path.join(base, "ds"))
zmin = float(ds.meta["height_min"]); zmax = float(ds.meta["height_max"])
dims = ds.gt_dsm.shape[0]
gt = metrics.Dsm(grid=ds.gt_dsm, valid=np.ones((dims, dims), bool))
easy = ds.test_views[0]

def run_arm(label, lambda_depth, pretrain_fraction, seed, iters):
    t0 = time.monotonic()
    fc = field_mod.FieldConfig(trunk_layers=8, trunk_width=64,
                               pe_frequencies=10, skip_at=4, seed=seed)
    rf = field_mod.RadianceField(fc)
    tc = training.TrainConfig(iterations=iters, lambda_depth=lambda_depth,
                              pretrain_fraction=pretrain_fraction,
                              batch_rays=128, n_stratified=40, n_guided=40,
                              log_every=200, seed=seed)
    training.train(ds, rf, tc)
    dt = time.monotonic() - t0
    dsm = metrics.extract_dsm(rf, ds.transform, dims, zmin=zmin, zmax=zmax)
    err = metrics.mae(dsm, gt) if dsm.valid.any() else float("nan")
    img, _, _ = metrics.render_view(rf, easy.spec, ds.transform, mode="sur",
                                    zmin=zmin, zmax=zmax)
    p = metrics.psnr(np.clip(img, 0, 1), np.clip(easy.image, 0, 1))
    print(f"[arm {label} seed {seed}] {dt:.0f}s MAE {err:.4f} "
          f"({100*err/(zmax-zmin):.2f}% rng) easyPSNR {p:.2f}", flush=True)
    return err, p

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
for label, lam, pre in (("med", 10/3, 0.2), ("lam0", 0.0, 0.2), ("preno", 10/3, 0.0)):
    run_arm(label, lam, pre, 0, iters)
print("[arms done]", flush=True)
