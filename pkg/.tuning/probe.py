import sys
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import autodiff as ad
from satrf import field as field_mod
from satrf import render, scene, training

ds = scene.gen_scene(seed=1, dims=16, n_views=2)
cfg = field_mod.FieldConfig(trunk_layers=2, trunk_width=16, pe_frequencies=4,
                            skip_at=1, seed=3)
rf = field_mod.RadianceField(cfg)
tc = training.TrainConfig(iterations=20, batch_rays=24, n_stratified=8,
                          n_guided=8, pretrain_fraction=0.5, log_every=20, seed=0)
training.train(ds, rf, tc)
bank = training.build_ray_bank(ds)
rng = training.split_seed(7, "gradcheck")
idx = rng.permutation(bank.origins.shape[0])[:10]
t, delta, _ = training.batched_samples(rng, bank.t_near[idx], bank.t_far[idx],
                                       bank.dbar[idx], bank.prior_ok[idx],
                                       0.02, 6, 6)
o, d = bank.origins[idx], bank.dirs[idx]
pts = render.sample_points(o, d, t).reshape(-1, 3)
nrm, _ = field_mod.analytic_normals(rf.params, pts, cfg)
normals = nrm.reshape(len(idx), -1, 3)

def run(params, want=False):
    g = ad.Graph()
    tensors = {k: g.tensor(v, param=True) for k, v in params.items()}
    out = render.render_batch(tensors, cfg, o, d, t, delta, bank.sun,
                              mode="sur", lambertian=False, normals=normals)
    lc = training.colour_loss(out["colour"], bank.target[idx], len(idx))
    loss = lc  # colour only: the big gradients live here
    if want:
        gr = ad.backward(loss)
        return float(ad.value_of(loss)), {k: gr[tensors[k].idx] for k in params}
    return float(ad.value_of(loss)), None

base = {k: v.copy() for k, v in rf.params.items()}
L0, grads = run(base, True)
print("loss", L0, "gmax", max(float(np.abs(v).max()) for v in grads.values()))
name, i = "trunk1_w", 189
flat = base[name].reshape(-1)
gref = grads[name].reshape(-1)[i]
print("ad grad", gref)
keep = flat[i]
for h in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9):
    flat[i] = keep + h; lp, _ = run(base)
    flat[i] = keep - h; lm, _ = run(base)
    flat[i] = keep
    print(f"h={h:.0e} secant {(lp-lm)/(2*h):+.6e}  one-sided+ {(lp-L0)/h:+.6e}  one-sided- {(L0-lm)/h:+.6e}")
