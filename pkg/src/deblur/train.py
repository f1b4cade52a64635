"""Run configuration, Adam, alternating GAN training, evaluation and inference."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint, dataset, imaging
from .losses import FeatureExtractor, LossWeights, adversarial_losses, generator_loss
from .metrics import MetricReport
from .models import DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator
from .nn import Module, make_rng
from .tensor import Tensor, gradients, no_grad

log = logging.getLogger(__name__)

PATH_KEYS = ("train_dir", "val_dir", "out_dir", "resume")


class TrainingError(RuntimeError):
    pass


@dataclass
class RunConfig:
    seed: int
    train_dir: str = ""
    val_dir: str = ""
    out_dir: str = "run"
    resume: str = ""
    # generator
    arch: str = "pix2pix"
    use_self_attention: bool = False
    use_channel_attention: bool = False
    use_global_residual: bool = True
    use_spectral_norm: bool = False
    use_edge_channel: bool = False
    feedback_iterations: int = 0
    base_channels: int = 0
    rir_depth: int = 3
    res_blocks: int = 9
    residual_zero_init: bool = True
    # discriminator
    disc_widths: tuple[int, ...] = (64, 128, 256, 512)
    # losses
    classical_loss: str = "l1"
    lambda_classical: float = -1.0  # negative: per-kind default
    adversarial_weight: float = 1.0
    perceptual_seed: int = 0
    # optimizer
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # schedule
    steps: int = 500
    epochs: int = 0  # used when steps == 0
    batch_size: int = 4
    patch_size: int = 64
    checkpoint_interval: int = 0  # 0: final checkpoint only

    def generator_config(self, size: tuple[int, int] | None = None) -> GeneratorConfig:
        return GeneratorConfig(
            arch=self.arch, use_self_attention=self.use_self_attention,
            use_channel_attention=self.use_channel_attention, use_global_residual=self.use_global_residual,
            use_spectral_norm=self.use_spectral_norm, use_edge_channel=self.use_edge_channel,
            feedback_iterations=self.feedback_iterations, input_size=size or (self.patch_size, self.patch_size),
            base_channels=self.base_channels, rir_depth=self.rir_depth, res_blocks=self.res_blocks,
            residual_zero_init=self.residual_zero_init)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(widths=self.disc_widths, use_spectral_norm=self.use_spectral_norm)

    def loss_weights(self) -> LossWeights:
        lam = None if self.lambda_classical < 0 else self.lambda_classical
        return LossWeights(self.classical_loss, lam, self.adversarial_weight)

    def model_dict(self) -> dict:
        """Everything that determines the trained weights: no paths, no checkpoint cadence."""
        d = dataclasses.asdict(self)
        for k in PATH_KEYS + ("checkpoint_interval",):
            d.pop(k)
        d["disc_widths"] = list(self.disc_widths)
        return d


def _coerce(f: dataclasses.Field, raw: str):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if kind == "bool":
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{f.name}: expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind.startswith("tuple"):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    return raw


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def load_run_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    raw = parse_config(Path(path).read_text())
    raw.update(overrides or {})
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    if "seed" not in raw:
        raise ValueError("config must set 'seed'")
    base = Path(path).parent
    kwargs = {}
    for k, v in raw.items():
        val = _coerce(known[k], v)
        if k in PATH_KEYS and val and not Path(val).is_absolute():
            val = str((base / val).resolve())
        kwargs[k] = val
    return RunConfig(**kwargs)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for k, p in self.params.items():
            g = grads[k].astype(p.data.dtype, copy=False)
            m, v = self.m[k], self.v[k]
            tmp = np.multiply(g, 1 - b1)
            m *= b1
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= 1 - b2
            v *= b2
            v += tmp
            # p -= lr/c1 * m / (sqrt(v/c2) + eps), without full-size temporaries
            np.sqrt(v, out=tmp)
            tmp *= 1 / math.sqrt(c2)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p.data -= tmp

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/m/{k}": a for k, a in self.m.items()}
        out.update({f"{prefix}/v/{k}": a for k, a in self.v.items()})
        return out

    def load(self, tensors: dict[str, np.ndarray], prefix: str, t: int) -> None:
        for k in self.params:
            self.m[k][...] = tensors[f"{prefix}/m/{k}"]
            self.v[k][...] = tensors[f"{prefix}/v/{k}"]
        self.t = t


def model_inputs(blurred: np.ndarray, edges: bool) -> Tensor:
    """uint8 ``(N,H,W,3)`` batch -> normalized ``[N,3(+1),H,W]`` tensor."""
    if edges:
        return Tensor(np.concatenate([imaging.edge_input(b).data for b in blurred]))
    return Tensor(np.concatenate([imaging.normalize(b).data for b in blurred]))


def _check_finite(loss: Tensor, grads: dict[str, np.ndarray], params: dict[str, Tensor], what: str) -> None:
    if np.all(np.isfinite(loss.data)) and all(np.all(np.isfinite(g)) for g in grads.values()):
        return
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise TrainingError(f"{what}: parameter {name} holds non-finite values")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"{what}: non-finite gradient for parameter {name} (loss={float(loss.data)})")
    if loss.data.size > 1:
        raise TrainingError(f"{what}: non-finite output with finite parameters")
    raise TrainingError(f"{what}: non-finite loss {float(loss.data)}")


class Trainer:
    def __init__(self, cfg: RunConfig, train_data: tuple[np.ndarray, np.ndarray]):
        self.cfg = cfg
        seeds = np.random.SeedSequence(cfg.seed).spawn(3)
        self.gcfg = cfg.generator_config()
        self.generator = build_generator(self.gcfg, np.random.Generator(np.random.PCG64(seeds[0])))
        self.discriminator = build_discriminator(cfg.discriminator_config(), np.random.Generator(np.random.PCG64(seeds[1])))
        self.data_rng = np.random.Generator(np.random.PCG64(seeds[2]))
        self.weights = cfg.loss_weights()
        self.phi = FeatureExtractor(cfg.perceptual_seed) if self.weights.classical_kind == "perceptual" else None
        self.g_params = self.generator.parameters()
        self.d_params = self.discriminator.parameters()
        self.opt_g = Adam(self.g_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.opt_d = Adam(self.d_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.blurred, self.sharp = train_data
        if len(self.blurred) < 1:
            raise TrainingError("training set is empty")
        if len(self.blurred) < cfg.batch_size:
            raise TrainingError(f"training set has {len(self.blurred)} pairs, fewer than batch_size")
        self.step = 0

    @property
    def steps_per_epoch(self) -> int:
        return max(1, len(self.blurred) // self.cfg.batch_size)

    def total_steps(self) -> int:
        return self.cfg.steps if self.cfg.steps > 0 else self.cfg.epochs * self.steps_per_epoch

    def _batch(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self.data_rng.choice(len(self.blurred), self.cfg.batch_size, replace=False)
        b, s = self.blurred[idx], self.sharp[idx]
        p = self.cfg.patch_size
        h, w = b.shape[1:3]
        if (h, w) != (p, p):
            if h < p or w < p:
                raise TrainingError(f"training images {w}x{h} smaller than patch_size {p}")
            ys = self.data_rng.integers(0, h - p + 1, len(idx))
            xs = self.data_rng.integers(0, w - p + 1, len(idx))
            b = np.stack([im[y : y + p, x : x + p] for im, y, x in zip(b, ys, xs)])
            s = np.stack([im[y : y + p, x : x + p] for im, y, x in zip(s, ys, xs)])
        return b, s

    def train_step(self) -> tuple[float, float]:
        """One discriminator update then one generator update."""
        blurred, sharp = self._batch()
        x = model_inputs(blurred, self.gcfg.use_edge_channel)
        target = model_inputs(sharp, False)
        self.generator.train()
        self.discriminator.train()
        fake = self.generator(x)
        if not np.all(np.isfinite(fake.data)):
            _check_finite(fake, {}, self.g_params, f"step {self.step + 1} generator")

        _, d_loss = adversarial_losses(self.discriminator(target), self.discriminator(fake.detach()))
        d_grads = gradients(d_loss, self.d_params)
        _check_finite(d_loss, d_grads, self.d_params, f"step {self.step + 1} discriminator")
        self.opt_d.step(d_grads)

        g_loss = generator_loss(self.weights, self.discriminator(fake), fake, target, self.phi)
        g_grads = gradients(g_loss, self.g_params)
        _check_finite(g_loss, g_grads, self.g_params, f"step {self.step + 1} generator")
        self.opt_g.step(g_grads)
        self.step += 1
        return float(g_loss.data), float(d_loss.data)

    def state(self) -> tuple[dict[str, np.ndarray], dict]:
        tensors = {f"g/{k}": v for k, v in self.generator.state_dict().items()}
        tensors.update({f"d/{k}": v for k, v in self.discriminator.state_dict().items()})
        tensors.update(self.opt_g.state("opt_g"))
        tensors.update(self.opt_d.state("opt_d"))
        run = self.cfg.model_dict()
        meta = {
            "run_config": run,
            "generator": self.gcfg.to_dict(),
            "config_hash": checkpoint.config_hash(run),
            "step": self.step,
            "epoch": self.step // self.steps_per_epoch,
            "adam_t": [self.opt_g.t, self.opt_d.t],
            "rng_state": _rng_state(self.data_rng),
        }
        return tensors, meta

    def save(self, path) -> None:
        tensors, meta = self.state()
        checkpoint.save(path, tensors, meta)

    def restore(self, path) -> None:
        tensors, meta = checkpoint.load(path)
        if meta.get("config_hash") != checkpoint.config_hash(self.cfg.model_dict()):
            raise TrainingError(f"{path} was written by a different run configuration")
        self.generator.load_state_dict(_strip(tensors, "g/"))
        self.discriminator.load_state_dict(_strip(tensors, "d/"))
        self.opt_g.load(tensors, "opt_g", meta["adam_t"][0])
        self.opt_d.load(tensors, "opt_d", meta["adam_t"][1])
        self.data_rng.bit_generator.state = _rng_restore(meta["rng_state"])
        self.step = int(meta["step"])


def _strip(tensors: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def _rng_state(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"], "state": {k: str(v) for k, v in st["state"].items()},
            "has_uint32": st["has_uint32"], "uinteger": st["uinteger"]}


def _rng_restore(d: dict) -> dict:
    return {"bit_generator": d["bit_generator"], "state": {k: int(v) for k, v in d["state"].items()},
            "has_uint32": d["has_uint32"], "uinteger": d["uinteger"]}


def restore_images(model: Module, gcfg: GeneratorConfig, blurred: np.ndarray, batch: int = 4) -> np.ndarray:
    """Eval-mode restoration of a uint8 ``(N,H,W,3)`` batch to uint8."""
    model.eval()
    out = []
    with no_grad():
        for i in range(0, len(blurred), batch):
            y = model(model_inputs(blurred[i : i + batch], gcfg.use_edge_channel))
            out.extend(imaging.denormalize(y.data[j : j + 1]) for j in range(y.shape[0]))
    return np.stack(out)


def evaluate(model: Module, gcfg: GeneratorConfig, names, blurred, sharp) -> tuple[MetricReport, MetricReport]:
    """Reports for restored-vs-sharp and, as a baseline, blurred-vs-sharp."""
    restored = restore_images(model, gcfg, blurred)
    rep, base = MetricReport(), MetricReport()
    for n, b, r, s in zip(names, blurred, restored, sharp):
        rep.add(n, s, r)
        base.add(n, s, b)
    return rep, base


def train(cfg: RunConfig, progress=None) -> Path:
    """Train per ``cfg``; returns the final checkpoint path.

    Writes ``train_log.tsv`` (per-epoch losses and validation metrics; wall
    clock only on ``#`` lines), periodic ``ckpt_<step>.dbgn`` and
    ``final.dbgn``, plus ``val_report.tsv`` when a validation set is given.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, tb, ts = dataset.load_pairs(cfg.train_dir)
    val = dataset.load_pairs(cfg.val_dir) if cfg.val_dir else None
    trainer = Trainer(cfg, (tb, ts))
    if cfg.resume:
        trainer.restore(cfg.resume)
    total = trainer.total_steps()
    log_path = out / "train_log.tsv"
    mode = "a" if cfg.resume else "w"
    started = time.time()
    with open(log_path, mode) as fh:
        if not cfg.resume:
            fh.write("epoch\tstep\tg_loss\td_loss\tval_psnr\tval_ssim\n")
        g_sum = d_sum = 0.0
        n = 0
        while trainer.step < total:
            g, d = trainer.train_step()
            g_sum, d_sum, n = g_sum + g, d_sum + d, n + 1
            if progress:
                progress(trainer.step, total, g, d)
            if cfg.checkpoint_interval and trainer.step % cfg.checkpoint_interval == 0:
                trainer.save(out / f"ckpt_{trainer.step:06d}.dbgn")
            if trainer.step % trainer.steps_per_epoch == 0 or trainer.step == total:
                vp = vs = float("nan")
                if val is not None:
                    rep, _ = evaluate(trainer.generator, trainer.gcfg, *val)
                    vp, vs = rep.mean_psnr, rep.mean_ssim
                fh.write(f"{trainer.step // trainer.steps_per_epoch}\t{trainer.step}\t{g_sum / n!r}\t"
                         f"{d_sum / n!r}\t{vp!r}\t{vs!r}\n")
                fh.write(f"# elapsed {time.time() - started:.1f}s\n")
                fh.flush()
                g_sum = d_sum = 0.0
                n = 0
    final = out / "final.dbgn"
    trainer.save(final)
    if val is not None:
        rep, base = evaluate(trainer.generator, trainer.gcfg, *val)
        rep.write(out / "val_report.tsv")
        base.write(out / "val_baseline.tsv")
    return final


def load_generator(path, size: tuple[int, int] | None = None):
    """Rebuild the generator stored in a checkpoint, optionally for another image size."""
    tensors, meta = checkpoint.load(path)
    run = meta.get("run_config")
    if run is None or meta.get("config_hash") != checkpoint.config_hash(run):
        raise checkpoint.CheckpointError(f"{path}: configuration hash mismatch")
    gdict = dict(meta["generator"])
    if size is not None:
        gdict["input_size"] = list(size)
    gcfg = GeneratorConfig(**gdict)
    model = build_generator(gcfg, make_rng(0))
    try:
        model.load_state_dict(_strip(tensors, "g/"))
    except (KeyError, ValueError) as e:
        raise checkpoint.CheckpointError(f"{path}: checkpoint does not fit {gcfg.arch} at {size}: {e}") from None
    return model, gcfg
