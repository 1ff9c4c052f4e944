import sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import field as field_mod
from satrf import metrics, scene, training

ITERS = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
PE = int(sys.argv[2]) if len(sys.argv) > 2 else 6

ds = scene.gen_scene(seed=2, dims=64, n_views=3,
                     noise_sigma=0.01, downsample=2, corr_scale=30.0)
zmin, zmax = float(ds.meta["height_min"]), float(ds.meta["height_max"])
dims = ds.gt_dsm.shape[0]
gt = metrics.Dsm(grid=ds.gt_dsm, valid=np.ones((dims, dims), bool))


def run_arm(label, lam, pre, seed):
    t0 = time.monotonic()
    fc = field_mod.FieldConfig(trunk_layers=8, trunk_width=64,
                               pe_frequencies=PE, skip_at=4, seed=seed)
    rf = field_mod.RadianceField(fc)
    tc = training.TrainConfig(iterations=ITERS, lambda_depth=lam,
                              pretrain_fraction=pre, batch_rays=128,
                              n_stratified=40, n_guided=40,
                              log_every=ITERS, seed=seed,
                              lr=2e-3, grad_clip=10.0)
    training.train(ds, rf, tc)
    dsm = metrics.extract_dsm(rf, ds.transform, dims, zmin=zmin, zmax=zmax)
    mae = metrics.mae(dsm, gt)
    view = ds.test_views[0]
    img, _, _ = metrics.render_view(rf, view.spec, ds.transform,
                                    zmin=zmin, zmax=zmax)
    p = metrics.psnr(np.clip(img, 0, 1), np.clip(view.image, 0, 1))
    print(f"[{label} seed {seed}] {time.monotonic()-t0:.0f}s "
          f"MAE {mae:.4f} ({100*mae/(zmax-zmin):.2f}%) PSNR {p:.2f}",
          flush=True)
    return mae, p


maes = {"med": [], "lam0": []}
psnrs = {"med": [], "preno": []}
for seed in (0, 1, 2):
    m, p = run_arm("med", 10.0 / 3.0, 0.2, seed)
    maes["med"].append(m)
    psnrs["med"].append(p)
    m, p = run_arm("lam0", 0.0, 0.2, seed)
    maes["lam0"].append(m)
    m, p = run_arm("preno", 10.0 / 3.0, 0.0, seed)
    psnrs["preno"].append(p)

r = np.median(maes["lam0"]) / np.median(maes["med"])
print(f"[ratio] median lam0 {np.median(maes['lam0']):.4f} / med {np.median(maes['med']):.4f} = {r:.2f}")
print(f"[pretrain] med {np.median(psnrs['med']):.2f} vs preno {np.median(psnrs['preno']):.2f}")
