import sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import autodiff as ad
from satrf import field as field_mod
from satrf import metrics, render, scene, training

ITERS = int(sys.argv[1]) if len(sys.argv) > 1 else 1200
LR = float(sys.argv[2]) if len(sys.argv) > 2 else 5e-4
CLIP = float(sys.argv[3]) if len(sys.argv) > 3 else 0.0
PE = int(sys.argv[4]) if len(sys.argv) > 4 else 10

t0 = time.monotonic()
ds = scene.gen_scene(seed=2, dims=64, n_views=3,
                     noise_sigma=0.01, downsample=2, corr_scale=30.0)
for v in ds.views[:1]:
    c = v.prior_corr
    print(f"corr: min {c.min():.3f} med {np.median(c):.3f} max {c.max():.3f}")
fc = field_mod.FieldConfig(trunk_layers=8, trunk_width=64, pe_frequencies=PE,
                           skip_at=4, seed=0)
rf = field_mod.RadianceField(fc)
tc = training.TrainConfig(iterations=ITERS, batch_rays=128, n_stratified=40,
                          n_guided=40, log_every=max(ITERS // 6, 1), seed=0,
                          lr=LR, grad_clip=CLIP)
rows = training.train(ds, rf, tc)
for r in rows:
    print(f"  step {r.step} {r.phase} c {r.colour_loss:.5f} d {r.depth_loss:.5f} rsub {r.rsub_frac:.2f}")
print(f"[train] {time.monotonic()-t0:.0f}s")

zmin, zmax = float(ds.meta["height_min"]), float(ds.meta["height_max"])
dims = ds.gt_dsm.shape[0]
dsm = metrics.extract_dsm(rf, ds.transform, dims, zmin=zmin, zmax=zmax)
gt = metrics.Dsm(grid=ds.gt_dsm, valid=np.ones((dims, dims), bool))
mae = metrics.mae(dsm, gt)
rng_h = zmax - zmin
print(f"[dsm] MAE {mae:.4f} = {100*mae/rng_h:.2f}% of range {rng_h:.3f}")

view = ds.test_views[0]
img, _, _ = metrics.render_view(rf, view.spec, ds.transform, zmin=zmin, zmax=zmax)
print(f"[psnr easy] {metrics.psnr(np.clip(img,0,1), np.clip(view.image,0,1)):.2f}")

# surface-normal quality of the trained field
bank = training.build_ray_bank(ds)
rng = np.random.default_rng(0)
idx = rng.permutation(bank.origins.shape[0])[:512]
t, delta, _ = training.batched_samples(rng, bank.t_near[idx], bank.t_far[idx],
                                       bank.dbar[idx], bank.prior_ok[idx],
                                       3.0 * bank.noise_sigma, 40, 40)
o, d = bank.origins[idx], bank.dirs[idx]
pts = render.sample_points(o, d, t).reshape(-1, 3)
nrm, _ = field_mod.analytic_normals(rf.params, pts, fc)
normals = nrm.reshape(len(idx), -1, 3)
out = render.render_batch(rf.params, fc, o, d, t, delta, bank.sun,
                          mode="sur", normals=normals)
w = ad.value_of(out["weights"].w)
n_acc = (w[..., None] * normals).sum(axis=1)
norms = np.linalg.norm(n_acc, axis=-1)
good = norms > 1e-6
n_bar = n_acc[good] / norms[good][:, None]
tilt = np.degrees(np.arccos(np.clip(n_bar[:, 2], -1, 1)))
print(f"[tilt] med {np.median(tilt):.1f} p90 {np.percentile(tilt,90):.1f} deg")

# recovered material medians at the extracted surface
xs = np.linspace(-1.0, 1.0, dims)
ys = np.linspace(1.0, -1.0, dims)
gxx, gyy = np.meshgrid(xs, ys)
zs = np.where(dsm.valid, dsm.grid, ds.gt_dsm)
ptsq = ds.transform.to_norm(np.stack([gxx, gyy, zs], axis=-1).reshape(-1, 3))
heads = field_mod.forward(rf.params, ptsq, fc, heads=("k", "theta"))
k_map = ad.value_of(heads["k"]).reshape(dims, dims)
th_map = ad.value_of(heads["theta"]).reshape(dims, dims)
ids = scene.quadrant_materials(dims, scene.DEFAULT_REGIONS).lookup_ids(gxx, gyy)
for rid, rp in enumerate(scene.DEFAULT_REGIONS):
    sel = ids == rid
    print(f"[mat] region {rid}: k {np.median(k_map[sel]):+.3f} (gt {rp.k:+.2f})"
          f"  theta {np.median(th_map[sel]):+.3f} (gt {rp.theta:+.2f})")
print(f"[total] {time.monotonic()-t0:.0f}s")
