import os, sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import scene, metrics, field as field_mod
from satrf.cli import main

base = "/root/pkg/.tuning"
ds_dir = os.path.join(base, "ds")
out = os.path.join(base, "main")

t0 = time.monotonic()
if not os.path.exists(os.path.join(ds_dir, "meta.txt")):
    ds = scene.gen_scene(seed=2, dims=64, n_views=3)
    scene.save_dataset(ds, ds_dir)
print(f"[gen] {time.monotonic()-t0:.1f}s", flush=True)

t0 = time.monotonic()
rc = main(["train", "--dataset", ds_dir, "--out", out,
           "--iterations", "5000", "--batch-rays", "128",
           "--n-stratified", "40", "--n-guided", "40",
           "--log-every", "100", "--seed", "0"])
train_s = time.monotonic() - t0
print(f"[train] rc={rc} {train_s:.1f}s", flush=True)

rc = main(["eval", "--checkpoint", os.path.join(out, "checkpoint.rfld"),
           "--dataset", ds_dir, "--out", os.path.join(base, "main_eval")])
print(f"[eval] rc={rc}", flush=True)

ds = scene.load_dataset(ds_dir)
cfg, params = field_mod.load_field(os.path.join(out, "checkpoint.rfld"))
rf = field_mod.RadianceField(cfg, params)
zmin = float(ds.meta["height_min"]); zmax = float(ds.meta["height_max"])
dims = ds.gt_dsm.shape[0]
dsm = metrics.extract_dsm(rf, ds.transform, dims, zmin=zmin, zmax=zmax)
err = metrics.mae(dsm, metrics.Dsm(grid=ds.gt_dsm, valid=np.ones((dims, dims), bool)))
rng = zmax - zmin
print(f"[dsm] MAE {err:.4f} range {rng:.4f} -> {100*err/rng:.2f}% of range", flush=True)

# region-median materials at the extracted surface
xs = np.linspace(-1.0, 1.0, dims); ys = np.linspace(1.0, -1.0, dims)
gx, gy = np.meshgrid(xs, ys)
zs = np.where(dsm.valid, dsm.grid, ds.gt_dsm)
pts = ds.transform.to_norm(np.stack([gx, gy, zs], axis=-1).reshape(-1, 3))
ks, ths = [], []
for i in range(0, pts.shape[0], 512):
    s = rf.query_batch(pts[i:i+512]) if hasattr(rf, "query_batch") else None
    if s is None:
        break
if not hasattr(rf, "query_batch"):
    ks = np.empty(pts.shape[0]); ths = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        smp = rf.query(p)
        ks[i] = smp.params.k; ths[i] = smp.params.theta
ks = np.asarray(ks).reshape(dims, dims); ths = np.asarray(ths).reshape(dims, dims)
ids = scene.quadrant_materials(dims, scene.DEFAULT_REGIONS).lookup_ids(gx, gy)
for rid, rp in enumerate(scene.DEFAULT_REGIONS):
    m = ids == rid
    print(f"[mat] region {rid}: k med {np.median(ks[m]):+.3f} (gt {rp.k:+.2f})  "
          f"theta med {np.median(ths[m]):+.3f} (gt {rp.theta:+.2f})", flush=True)
print("[done]", flush=True)
