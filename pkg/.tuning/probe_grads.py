import sys
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import autodiff as ad
from satrf import field as field_mod
from satrf import render, scene, training

cfg, params = field_mod.load_field("/root/pkg/.tuning/main/checkpoint.rfld")
rf = field_mod.RadianceField(cfg, params)
ds = scene.load_dataset("/root/pkg/.tuning/ds")
bank = training.build_ray_bank(ds)
rng = np.random.default_rng(0)
idx = rng.permutation(bank.origins.shape[0])[:512]
t, delta, _ = training.batched_samples(rng, bank.t_near[idx], bank.t_far[idx],
                                       bank.dbar[idx], bank.prior_ok[idx],
                                       3.0 * bank.noise_sigma, 40, 40)
o, d = bank.origins[idx], bank.dirs[idx]
pts = render.sample_points(o, d, t).reshape(-1, 3)
nrm, n_bad = field_mod.analytic_normals(rf.params, pts, cfg)
normals = nrm.reshape(len(idx), -1, 3)
print(f"degenerate normals in batch: {n_bad}")

g = ad.Graph()
tensors = {k: g.tensor(v, param=True) for k, v in rf.params.items()}
out = render.render_batch(tensors, cfg, o, d, t, delta, bank.sun,
                          mode="sur", normals=normals)
lc = training.colour_loss(out["colour"], bank.target[idx], len(idx))
grads = ad.backward(lc)
print(f"colour_loss {float(ad.value_of(lc)):.6f}")
for name in ("rho0_b", "k_b", "theta_b", "rhoc_b", "rho0_w", "k_w",
             "theta_w", "rhoc_w", "sigma_b", "feat_w"):
    gv = grads[tensors[name].idx]
    print(f"  {name:9s} |g|max {np.abs(gv).max():.3e}  |g|mean {np.abs(gv).mean():.3e}")

# how much angular variation does the batch actually see?
import satrf.rpv as rpv
w = ad.value_of(out["weights"].w)
n_acc = (w[..., None] * normals).sum(axis=1)
norms = np.linalg.norm(n_acc, axis=-1)
good = norms > 1e-6
n_bar = n_acc[good] / norms[good][:, None]
ti, tr, phi, gph = rpv.capped_angles(n_bar, bank.sun[None, :], -d[good])
print(f"theta_ir deg: min {np.degrees(ti).min():.1f} med {np.degrees(np.median(ti)):.1f} max {np.degrees(ti).max():.1f}")
print(f"theta_r  deg: min {np.degrees(tr).min():.1f} med {np.degrees(np.median(tr)):.1f} max {np.degrees(tr).max():.1f}")
# slope of the recovered surface vs truth at these rays
print(f"tilt of n_bar from vertical: med {np.degrees(np.median(np.arccos(np.clip(n_bar[:,2],-1,1)))):.1f} deg")
