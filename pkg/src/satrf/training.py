"""Two-phase optimisation of the radiance field against posed views and
low-resolution depth priors.

Phase one renders a cosine-weighted accumulated albedo (no anisotropy); the
anisotropy head weights receive no gradient and stay at their initial values.
Phase two switches to the full reflectance renderer.  Depth supervision is
active throughout, restricted each step to the subset of rays whose rendered
depth is either spread out or far from the prior relative to the prior's own
uncertainty.

All geometry here is in the field's normalized coordinates; ray banks convert
from scene units once, up front.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import field as field_mod
from . import nn
from . import render
from . import scene as scene_mod


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    lambda_depth: float = 10.0 / 3.0
    pretrain_fraction: float = 0.2
    batch_rays: int = 1024
    lr: float = 5e-4
    lr_decay: float = 0.9
    lr_decay_every: int = 0        # 0: iterations // 10
    n_stratified: int = 64
    n_guided: int = 64
    sigma_g: float = 0.0           # 0: 3x the dataset's prior noise sigma
    render_mode: str = "sur"
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0
    grad_clip: float = 0.0         # 0: off

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0.0 <= self.pretrain_fraction <= 1.0:
            raise ValueError("pretrain_fraction must lie in [0,1]")
        if self.render_mode not in ("sur", "vol"):
            raise ValueError(f"render_mode must be sur|vol, got {self.render_mode!r}")
        if self.n_stratified < 1:
            raise ValueError("need at least one stratified sample")
        if self.batch_rays < 1:
            raise ValueError("batch_rays must be positive")

    @property
    def pretrain_steps(self) -> int:
        return int(np.floor(self.pretrain_fraction * self.iterations))

    @property
    def decay_interval(self) -> int:
        if self.lr_decay_every > 0:
            return self.lr_decay_every
        return max(self.iterations // 10, 1)


@dataclass
class LogRow:
    step: int
    phase: str
    colour_loss: float
    depth_loss: float
    rsub_frac: float
    lr: float
    seconds: float


LOG_HEADER = "step,phase,colour_loss,depth_loss,rsub_frac,lr,seconds"


def save_log(path, rows: list[LogRow]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(LOG_HEADER + "\n")
        for r in rows:
            f.write(f"{r.step},{r.phase},{r.colour_loss!r},{r.depth_loss!r},"
                    f"{r.rsub_frac!r},{r.lr!r},{r.seconds:.3f}\n")


def load_log(path) -> list[LogRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != LOG_HEADER:
            raise ValueError(f"{path}: unexpected log header {header!r}")
        for line in f:
            parts = line.strip().split(",")
            rows.append(LogRow(int(parts[0]), parts[1], float(parts[2]),
                               float(parts[3]), float(parts[4]), float(parts[5]),
                               float(parts[6])))
    return rows


def split_seed(seed: int, label: str) -> np.random.Generator:
    """Independent, reproducible stream per (seed, purpose label)."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(label.encode("utf-8"))]))


# ---------------------------------------------------------------------------
# ray bank


@dataclass
class RayBank:
    """Flattened per-pixel training data in normalized field coordinates."""

    origins: np.ndarray      # (N,3)
    dirs: np.ndarray         # (N,3) unit, into the scene
    t_near: np.ndarray       # (N,)
    t_far: np.ndarray        # (N,)
    target: np.ndarray       # (N,3)
    dbar: np.ndarray         # (N,) prior depth along the ray
    corr: np.ndarray         # (N,) prior confidence in [0,1]
    prior_ok: np.ndarray     # (N,) prior usable for guiding/supervision
    sun: np.ndarray          # (3,)
    noise_sigma: float       # prior noise, normalized units


def build_ray_bank(ds: scene_mod.Dataset) -> RayBank:
    """Rays, colours and upsampled priors for every training-view pixel."""
    if not ds.views:
        raise scene_mod.DatasetError("dataset has no training views")
    tr = ds.transform
    suns = [v.spec.sun for v in ds.views]
    for s in suns[1:]:
        if not np.allclose(s, suns[0], atol=1e-12):
            raise scene_mod.DatasetError("training views disagree on the sun direction")
    parts = {k: [] for k in ("o", "d", "tn", "tf", "c", "db", "co")}
    for view in ds.views:
        spec = view.spec
        zmin = float(ds.meta.get("height_min", ds.gt_dsm.min()))
        zmax = float(ds.meta.get("height_max", ds.gt_dsm.max()))
        origins, direction, t_near, t_far = scene_mod.view_rays(spec, zmin, zmax)
        n = origins.shape[0]
        dbar = scene_mod.resize_bilinear(view.prior_dbar, spec.height, spec.width)
        corr = scene_mod.resize_bilinear(view.prior_corr, spec.height, spec.width)
        parts["o"].append(tr.to_norm(origins))
        parts["d"].append(np.tile(direction, (n, 1)))
        parts["tn"].append(tr.length_to_norm(t_near))
        parts["tf"].append(tr.length_to_norm(t_far))
        parts["c"].append(view.image.reshape(-1, 3))
        parts["db"].append(tr.length_to_norm(dbar.reshape(-1)))
        parts["co"].append(np.clip(corr.reshape(-1), 0.0, 1.0))
    t_near = np.concatenate(parts["tn"])
    t_far = np.concatenate(parts["tf"])
    dbar = np.concatenate(parts["db"])
    prior_ok = (dbar >= t_near) & (dbar <= t_far)
    noise = float(ds.meta.get("noise_sigma", 0.0))
    return RayBank(origins=np.concatenate(parts["o"]),
                   dirs=np.concatenate(parts["d"]),
                   t_near=t_near, t_far=t_far,
                   target=np.concatenate(parts["c"]),
                   dbar=dbar, corr=np.concatenate(parts["co"]),
                   prior_ok=prior_ok, sun=suns[0],
                   noise_sigma=float(tr.length_to_norm(noise)))


# ---------------------------------------------------------------------------
# sampling


def batched_samples(rng: np.random.Generator, t_near, t_far, dbar, prior_ok,
                    sigma_g: float, n_strat: int, n_guided: int):
    """Stratified plus prior-guided sample positions for a batch of rays.

    Rays whose prior is unusable fall back to a second stratified draw for
    the guided share.  Returns (t (R,S), delta (R,S), fell_back (R,)).
    """
    r = t_near.shape[0]
    span = t_far - t_near
    u = rng.random((r, n_strat))
    t = t_near[:, None] + (np.arange(n_strat)[None, :] + u) * (span / n_strat)[:, None]
    fell_back = np.zeros(r, dtype=bool)
    if n_guided > 0:
        draws = dbar[:, None] + sigma_g * rng.standard_normal((r, n_guided))
        fell_back = ~np.asarray(prior_ok, dtype=bool)
        draws = np.clip(draws, t_near[:, None], t_far[:, None])
        if np.any(fell_back):
            u2 = rng.random((r, n_guided))
            alt = t_near[:, None] + (np.arange(n_guided)[None, :] + u2) * (span / n_guided)[:, None]
            draws = np.where(fell_back[:, None], alt, draws)
        t = np.concatenate([t, draws], axis=1)
    t = np.sort(t, axis=1)
    n_total = t.shape[1]
    eps = np.maximum(span, 1.0)[:, None] * 1e-12
    t = t + np.arange(n_total)[None, :] * eps
    last = np.maximum(t_far[:, None] - t[:, -1:], eps)
    delta = np.concatenate([np.diff(t, axis=1), last], axis=1)
    return t, delta, fell_back


# ---------------------------------------------------------------------------
# losses


def colour_loss(colour, target, batch_rays: int):
    """Sum of squared channel errors over the batch, divided by batch size."""
    diff = colour - target
    return ad.tsum(diff * diff) * (1.0 / batch_rays)


def rsub_mask(depth_value: np.ndarray, dbar: np.ndarray, spread: np.ndarray,
              sigma_prior: np.ndarray) -> np.ndarray:
    """Rays needing depth supervision: spread or error beyond the prior's
    own uncertainty.  Pure array predicate, no graph involvement."""
    return (spread > sigma_prior) | (np.abs(depth_value - dbar) > sigma_prior)


def depth_loss(depth, dbar, weight, batch_rays: int):
    """Confidence-weighted squared depth error over the selected rays.

    ``weight`` is corr * mask, already detached; the gradient flows only
    through the rendered depth.
    """
    diff = depth - dbar
    return ad.tsum(weight * diff * diff) * (1.0 / batch_rays)


# ---------------------------------------------------------------------------
# the loop


def _global_norm_clip(grads: dict[str, np.ndarray], clip: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > clip:
        scale = clip / total
        for g in grads.values():
            g *= scale


def _dump_abort(workdir, step, phase, sigma_stats, loss_parts) -> None:
    if workdir is None:
        return
    try:
        from . import imgio
        info = {"step": step, "phase": phase}
        info.update({f"sigma_{k}": repr(v) for k, v in sigma_stats.items()})
        info.update({k: repr(v) for k, v in loss_parts.items()})
        imgio.write_kv(f"{workdir}/abort_dump.txt", info)
    except OSError:
        pass


def train(ds: scene_mod.Dataset, rf: field_mod.RadianceField, cfg: TrainConfig,
          workdir=None, progress=None, start_step: int = 0) -> list[LogRow]:
    """Optimize ``rf.params`` in place; returns the interval log.

    ``start_step`` resumes a checkpointed run: steps, phases, and the lr
    schedule continue as if the earlier steps had just happened (optimizer
    moments start fresh).  ``progress``, if given, is called as
    progress(step, row_or_none) once per step.  Raises TrainingAborted on a
    non-finite loss, after dumping diagnostics to ``workdir`` when set.
    """
    if not 0 <= start_step < cfg.iterations:
        raise ValueError(f"start_step {start_step} outside [0, {cfg.iterations})")
    bank = build_ray_bank(ds)
    pool = bank.origins.shape[0]
    batch = min(cfg.batch_rays, pool)
    sigma_g = cfg.sigma_g if cfg.sigma_g > 0 else 3.0 * bank.noise_sigma
    if sigma_g <= 0:
        sigma_g = 0.02
    sigma_prior_all = 1.0 - bank.corr
    n_pre = cfg.pretrain_steps
    interval = cfg.decay_interval

    rng = split_seed(cfg.seed, "train")
    perm = rng.permutation(pool)
    ptr = 0
    adam = nn.adam_init(rf.params, lr=cfg.lr)
    decays_done = min(start_step // interval, (cfg.iterations - 1) // interval)
    adam.lr = cfg.lr * cfg.lr_decay ** decays_done
    rows: list[LogRow] = []
    acc_c = acc_d = acc_f = 0.0
    acc_n = 0
    t0 = time.perf_counter()

    for step in range(start_step, cfg.iterations):
        if ptr + batch > pool:
            perm = rng.permutation(pool)
            ptr = 0
        idx = perm[ptr:ptr + batch]
        ptr += batch
        lamb = step < n_pre
        phase = "lambertian" if lamb else "rpv"

        t, delta, _ = batched_samples(rng, bank.t_near[idx], bank.t_far[idx],
                                      bank.dbar[idx], bank.prior_ok[idx],
                                      sigma_g, cfg.n_stratified, cfg.n_guided)
        o = bank.origins[idx]
        d = bank.dirs[idx]
        normals = None
        if not lamb:
            pts = render.sample_points(o, d, t).reshape(-1, 3)
            nrm, _ = field_mod.analytic_normals(rf.params, pts, rf.cfg)
            normals = nrm.reshape(batch, -1, 3)

        g = ad.Graph()
        tensors = {k: g.tensor(v, param=True) for k, v in rf.params.items()}
        out = render.render_batch(tensors, rf.cfg, o, d, t, delta, bank.sun,
                                  mode=cfg.render_mode, lambertian=lamb,
                                  normals=normals)
        loss_c = colour_loss(out["colour"], bank.target[idx], batch)

        depth_val = ad.value_of(out["depth"])
        spread = render.depth_std(out["weights"], t, depth_val)
        sigma_prior = sigma_prior_all[idx]
        mask = rsub_mask(depth_val, bank.dbar[idx], spread, sigma_prior)
        mask &= ~out["empty"]
        mask &= bank.prior_ok[idx]
        weight = np.where(mask, bank.corr[idx], 0.0)
        loss_d = depth_loss(out["depth"], bank.dbar[idx], weight, batch)
        loss = loss_c + cfg.lambda_depth * loss_d

        lc = float(ad.value_of(loss_c))
        ld = float(ad.value_of(loss_d))
        if not np.isfinite(lc + ld):
            sig = ad.value_of(out["weights"].alpha)
            stats = {"alpha_min": float(np.nanmin(sig)), "alpha_max": float(np.nanmax(sig)),
                     "finite": bool(np.all(np.isfinite(sig)))}
            _dump_abort(workdir, step, phase, stats,
                        {"colour_loss": lc, "depth_loss": ld})
            raise TrainingAborted(
                f"non-finite loss at step {step} ({phase}): colour={lc}, depth={ld}")

        grads_by_idx = ad.backward(loss)
        grads = {name: grads_by_idx[tensors[name].idx] for name in rf.params}
        if cfg.grad_clip > 0:
            _global_norm_clip(grads, cfg.grad_clip)
        nn.adam_step(rf.params, grads, adam)
        if (step + 1) % interval == 0 and step + 1 < cfg.iterations:
            adam.lr *= cfg.lr_decay

        acc_c += lc
        acc_d += ld
        acc_f += float(mask.mean())
        acc_n += 1
        row = None
        if (step + 1) % cfg.log_every == 0 or step + 1 == cfg.iterations:
            row = LogRow(step=step, phase=phase, colour_loss=acc_c / acc_n,
                         depth_loss=acc_d / acc_n, rsub_frac=acc_f / acc_n,
                         lr=adam.lr, seconds=time.perf_counter() - t0)
            rows.append(row)
            acc_c = acc_d = acc_f = 0.0
            acc_n = 0
        if (workdir is not None and cfg.checkpoint_every > 0
                and (step + 1) % cfg.checkpoint_every == 0):
            field_mod.save_field(f"{workdir}/checkpoint_{step + 1:06d}.rfld",
                                 rf.cfg, rf.params)
        if progress is not None:
            progress(step, row)
    return rows
