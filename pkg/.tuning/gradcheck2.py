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
real_normals = nrm.reshape(len(idx), -1, 3)
lam = 10.0 / 3.0

def make_loss(mode, normals, weight):
    def f(params, want_grads=False):
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
    return f

g0 = ad.Graph()
t0 = {k: g0.tensor(v, param=True) for k, v in rf.params.items()}
out0 = render.render_batch(t0, cfg, o, d, t, delta, bank.sun, mode="sur",
                           lambertian=False, normals=real_normals)
dv = ad.value_of(out0["depth"])
spread = render.depth_std(out0["weights"], t, dv)
mask = training.rsub_mask(dv, bank.dbar[idx], spread, 1.0 - bank.corr[idx])
mask &= ~out0["empty"] & bank.prior_ok[idx]
weight = np.where(mask, bank.corr[idx], 0.0)
assert (weight > 0).sum() > 0

HEAD_ONLY = ["feat_w", "feat_b", "rho0_w", "rho0_b", "k_w", "k_b",
             "theta_w", "theta_b", "rhoc_w", "rhoc_b"]

def check(label, f, names):
    base = {k: v.copy() for k, v in rf.params.items()}
    _, grads = f(base, True)
    gmax = max(float(np.abs(grads[n]).max()) for n in names)
    worst, worst_at, n_entries = 0.0, None, 0
    for name in names:
        flat = base[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            n_entries += 1
            h = 1e-6 * max(1.0, abs(flat[i]))
            keep = flat[i]
            flat[i] = keep + h; lp, _ = f(base)
            flat[i] = keep - h; lm, _ = f(base)
            flat[i] = keep
            fd = (lp - lm) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd),
                                           1e-3 * gmax + 1e-12)
            if err > worst:
                worst, worst_at = err, (name, i, gflat[i], fd)
    print(f"[{label}] entries {n_entries} gmax {gmax:.3e} worst {worst:.3e} at {worst_at}",
          flush=True)
    return worst

all_names = sorted(rf.params)
wa = check("sur/flat/all", make_loss("sur", None, weight), all_names)
wb = check("vol/real/all", make_loss("vol", real_normals, weight), all_names)
wc = check("sur/real/heads", make_loss("sur", real_normals, weight), HEAD_ONLY)
print(f"[time] {time.monotonic()-t_start:.1f}s  worst overall {max(wa, wb, wc):.3e}")
