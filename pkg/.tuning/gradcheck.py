import sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from satrf import autodiff as ad
from satrf import field as field_mod
from satrf import render, scene, training

t_start = time.monotonic()
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
lam = 10.0 / 3.0

def run(params, mode, weight, want_grads):
    g = ad.Graph()
    tensors = {k: g.tensor(v, param=True) for k, v in params.items()}
    out = render.render_batch(tensors, cfg, o, d, t, delta, bank.sun,
                              mode=mode, lambertian=False, normals=normals)
    lc = training.colour_loss(out["colour"], bank.target[idx], len(idx))
    ld = training.depth_loss(out["depth"], bank.dbar[idx], weight, len(idx))
    loss = lc + lam * ld
    if want_grads:
        gr = ad.backward(loss)
        return float(ad.value_of(loss)), {k: gr[tensors[k].idx] for k in params}
    return float(ad.value_of(loss)), None

# frozen depth-supervision weights from the base parameters (the training
# gradient detaches them)
g0 = ad.Graph()
t0 = {k: g0.tensor(v, param=True) for k, v in rf.params.items()}
out0 = render.render_batch(t0, cfg, o, d, t, delta, bank.sun, mode="sur",
                           lambertian=False, normals=normals)
dv = ad.value_of(out0["depth"])
spread = render.depth_std(out0["weights"], t, dv)
sig_p = 1.0 - bank.corr[idx]
mask = training.rsub_mask(dv, bank.dbar[idx], spread, sig_p)
mask &= ~out0["empty"]
mask &= bank.prior_ok[idx]
weight = np.where(mask, bank.corr[idx], 0.0)
print("active depth rays:", int((weight > 0).sum()), "/", len(idx))
assert (weight > 0).sum() > 0

for mode in ("sur", "vol"):
    base = {k: v.copy() for k, v in rf.params.items()}
    _, grads = run(base, mode, weight, True)
    gmax = max(float(np.abs(v).max()) for v in grads.values())
    worst = 0.0
    worst_at = None
    n_entries = 0
    for name in sorted(base):
        flat = base[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            n_entries += 1
            h = 1e-6 * max(1.0, abs(flat[i]))
            keep = flat[i]
            flat[i] = keep + h
            lp, _ = run(base, mode, weight, False)
            flat[i] = keep - h
            lm, _ = run(base, mode, weight, False)
            flat[i] = keep
            fd = (lp - lm) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-3 * gmax + 1e-12)
            if err > worst:
                worst = err
                worst_at = (name, i, gflat[i], fd)
    print(f"[{mode}] entries {n_entries} gmax {gmax:.3e} worst rel {worst:.3e} at {worst_at}")
print(f"[time] {time.monotonic()-t_start:.1f}s")
