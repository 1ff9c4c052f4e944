import sys
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import autodiff as ad
from satrf import field as field_mod
from satrf import render, scene, training

ckpt = sys.argv[1]
dsdir = sys.argv[2] if len(sys.argv) > 2 else None

cfg, params = field_mod.load_field(ckpt)
rf = field_mod.RadianceField(cfg, params)
if dsdir:
    ds = scene.load_dataset(dsdir)
else:
    ds = scene.gen_scene(seed=2, dims=64, n_views=3,
                         noise_sigma=0.01, downsample=2, corr_scale=30.0)

bank = training.build_ray_bank(ds)
print(f"prior_ok fraction {bank.prior_ok.mean():.3f}  corr med {np.median(bank.corr):.3f}"
      f"  noise_sigma(norm) {bank.noise_sigma:.4f}")

# the prior's own accuracy: upsampled dbar vs ground-truth ray depth
tr = ds.transform
for i, v in enumerate(ds.views):
    if v.gt_depth is None:
        break
    full = scene.resize_bilinear(v.prior_dbar, *v.gt_depth.shape)
    err = np.abs(full - v.gt_depth)[v.gt_valid]
    print(f"view {i}: prior |err| mean {err.mean():.4f} scene units"
          f" ({100*err.mean()/(float(ds.meta['height_max'])-float(ds.meta['height_min'])):.2f}% of range)")

rng = np.random.default_rng(5)
idx = rng.permutation(bank.origins.shape[0])[:2048]
t, delta, _ = training.batched_samples(rng, bank.t_near[idx], bank.t_far[idx],
                                       bank.dbar[idx], bank.prior_ok[idx],
                                       3.0 * bank.noise_sigma, 40, 40)
out = render.render_batch(rf.params, cfg, bank.origins[idx], bank.dirs[idx],
                          t, delta, bank.sun, lambertian=True)
D = out["depth"]
spread = render.depth_std(out["weights"], t, D)
sp = 1.0 - bank.corr[idx]
resid = np.abs(D - bank.dbar[idx])
mask = training.rsub_mask(D, bank.dbar[idx], spread, sp)
mask &= ~out["empty"] & bank.prior_ok[idx]
print(f"|D-dbar| norm: med {np.median(resid):.4f} p90 {np.percentile(resid,90):.4f}")
print(f"spread  norm: med {np.median(spread):.4f} p90 {np.percentile(spread,90):.4f}")
print(f"sigma_prior:  med {np.median(sp):.4f}")
print(f"rsub active: {mask.mean():.3f}  (spread-cond {np.mean(spread>sp):.3f}, "
      f"resid-cond {np.mean(resid>sp):.3f})")
scale = 1.0 / float(np.asarray(tr.length_to_norm(1.0)))
print(f"|D-dbar| scene units: med {np.median(resid)*scale:.4f}")
