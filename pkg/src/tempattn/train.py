"""Training loop, early stopping, checkpoint persistence and inference."""

from __future__ import annotations

import contextlib
import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .config import TrainConfig
from .data import Batch, fill_holes, make_dataset, steps_per_epoch, to_signed, to_unit, training_batch, \
    validation_batches
from .losses import LossWeights, PerceptualProxy, adv_d_loss, adv_g_loss, perceptual_loss, recon_loss, \
    total_g_loss
from .module import Module
from .networks import Discriminator, Generator, composite, local_crop_positions
from .optim import Adam, NumericAbort
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def log_columns(n_heads: int) -> list[str]:
    return ["step", "loss_r", "loss_p", "loss_advG", "loss_D"] + [f"t{i + 1}" for i in range(n_heads)] + ["ms"]


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to improve on the best validation loss."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be at least 1")
        self.patience = patience
        self.best = float("inf")
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch; True if it is the new best."""
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@contextlib.contextmanager
def frozen(module: Module):
    params = module.parameters()
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


def _all_finite(module: Module) -> bool:
    return all(np.isfinite(p.data).all() for p in module.parameters())


@dataclass
class TrainResult:
    rows: list[dict] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_val: float = float("inf")
    stopped_early: bool = False
    steps: int = 0


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        init = np.random.default_rng([cfg.seed, 0])
        self.G = Generator(cfg, init, self.dtype)
        self.D = Discriminator(cfg, init, self.dtype)
        self.proxy = PerceptualProxy(seed=cfg.seed + 1234, dtype=self.dtype)
        self.weights = LossWeights(cfg.lambda1, cfg.lambda2, cfg.lambda_p, cfg.lambda_adv)
        self.opt_g = Adam(self.G.named_parameters(), cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.opt_d = Adam(self.D.named_parameters(), cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.rng = np.random.default_rng([cfg.seed, 5])
        self.step = 0

    # -- one optimisation step -------------------------------------------
    def train_step(self, batch: Batch) -> dict:
        cfg = self.cfg
        start = time.perf_counter()
        x_in = Tensor(batch.image_in)
        gt = Tensor(batch.gt)
        n, h, w, _ = batch.gt.shape
        i_c, i_out, temps = self.G(x_in, batch.mask, batch.sketch)
        comp = composite(i_out, x_in, batch.mask)
        tops, lefts = local_crop_positions(batch.mask, n, h, w, self.D.crop, self.rng)

        if cfg.freeze_discriminator:
            with no_grad():
                loss_d = adv_d_loss(self.D(gt, tops, lefts), self.D(comp.detach(), tops, lefts))
        else:
            self.D.zero_grad()
            d_real = self.D(gt, tops, lefts, update=True)
            d_fake = self.D(comp.detach(), tops, lefts)
            loss_d = adv_d_loss(d_real, d_fake)
            self._check(loss_d, "loss_D")
            loss_d.backward()
            self.opt_d.step()

        self.G.zero_grad()
        l_r = recon_loss(i_c, i_out, gt, self.weights)
        l_p = perceptual_loss(i_c, gt, self.proxy)
        with frozen(self.D):
            l_adv = adv_g_loss(self.D(comp, tops, lefts))
        total = total_g_loss(l_r, l_p, l_adv, self.weights)
        self._check(total, "loss_G")
        total.backward()
        self.opt_g.step()
        self.step += 1
        if not (_all_finite(self.G) and _all_finite(self.D)):
            raise NumericAbort(f"non-finite parameter after step {self.step}")

        t_mean = temps.data.astype(np.float64).mean(axis=0)
        row = {"step": self.step, "loss_r": float(l_r.data), "loss_p": float(l_p.data),
               "loss_advG": float(l_adv.data), "loss_D": float(loss_d.data)}
        row.update({f"t{i + 1}": float(t) for i, t in enumerate(t_mean)})
        row["ms"] = (time.perf_counter() - start) * 1e3
        return row

    def _check(self, loss: Tensor, name: str) -> None:
        if not np.isfinite(loss.data).all():
            raise NumericAbort(f"non-finite {name}={float(loss.data)} at step {self.step + 1}")

    # -- validation ------------------------------------------------------
    def validation_loss(self, dataset: np.ndarray) -> float:
        total, count = 0.0, 0
        with no_grad():
            for batch in validation_batches(dataset, self.cfg, self.dtype):
                i_c, i_out, _ = self.G(Tensor(batch.image_in), batch.mask, batch.sketch)
                total += float(recon_loss(i_c, i_out, Tensor(batch.gt), self.weights).data) * len(batch.gt)
                count += len(batch.gt)
        return total / max(count, 1)

    # -- persistence -----------------------------------------------------
    def to_checkpoint(self) -> ckpt_io.Checkpoint:
        tensors = {f"G/{k}": np.asarray(v) for k, v in self.G.state_dict().items()}
        tensors.update({f"D/{k}": np.asarray(v) for k, v in self.D.state_dict().items()})
        tensors["meta/config"] = np.frombuffer(self.cfg.to_text().encode("utf-8"), dtype=np.uint8)
        optimizer = self.opt_g.state_arrays("G/")
        optimizer.update(self.opt_d.state_arrays("D/"))
        return ckpt_io.Checkpoint(tensors=tensors, optimizer=optimizer,
                                  rng_state=self.rng.bit_generator.state, step=self.step)

    def save(self, path) -> None:
        ckpt_io.save(path, self.to_checkpoint())

    def load_checkpoint(self, ckpt: ckpt_io.Checkpoint) -> None:
        g_state = {k[2:]: v for k, v in ckpt.tensors.items() if k.startswith("G/")}
        d_state = {k[2:]: v for k, v in ckpt.tensors.items() if k.startswith("D/")}
        try:
            self.G.load_state_dict(g_state)
            self.D.load_state_dict(d_state)
        except (KeyError, ValueError) as exc:
            raise ckpt_io.CheckpointError(f"checkpoint does not match the configured architecture: {exc}") from None
        self.opt_g.load_state_arrays(ckpt.optimizer, "G/")
        self.opt_d.load_state_arrays(ckpt.optimizer, "D/")
        self.rng.bit_generator.state = ckpt.rng_state
        self.step = ckpt.step

    @classmethod
    def from_checkpoint(cls, path, cfg: TrainConfig | None = None) -> "Trainer":
        ckpt = ckpt_io.load(path)
        if cfg is None:
            cfg = config_from_checkpoint(ckpt)
        trainer = cls(cfg)
        trainer.load_checkpoint(ckpt)
        return trainer

    # -- loop ------------------------------------------------------------
    def train_loop(self, out_dir, train_set: np.ndarray | None = None, val_set: np.ndarray | None = None,
                   max_steps: int | None = None, validate: bool = True) -> TrainResult:
        """Train until ``max_steps`` or early stopping; writes ``train_log.csv`` and ``best.ckpt``."""
        cfg = self.cfg
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
        if train_set is None:
            train_set = make_dataset(cfg.n_train, cfg.image_size, [cfg.seed, 10])
        if val_set is None:
            val_set = make_dataset(cfg.n_val, cfg.image_size, [cfg.seed, 11])
        if len(train_set) == 0:
            raise ValueError("training set is empty")
        max_steps = cfg.max_steps if max_steps is None else max_steps
        per_epoch = steps_per_epoch(len(train_set), cfg.batch_size)
        stopper = EarlyStopping(cfg.patience)
        result = TrainResult()
        columns = log_columns(cfg.n_heads)
        log_path = out / "train_log.csv"
        mode = "a" if self.step > 0 and log_path.exists() else "w"
        try:
            fh = log_path.open(mode, newline="")
        except OSError as exc:
            raise OSError(f"cannot open log {log_path}: {exc.strerror}") from exc
        with fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            if mode == "w":
                writer.writeheader()
            while self.step < max_steps:
                row = self.train_step(training_batch(train_set, cfg, self.step, self.dtype))
                writer.writerow(row)
                result.rows.append(row)
                if validate and self.step % per_epoch == 0:
                    val = self.validation_loss(val_set)
                    result.val_losses.append(val)
                    logger.info("epoch %d step %d val %.5f", self.step // per_epoch, self.step, val)
                    if stopper.update(val):
                        result.best_val = val
                        self.save(out / "best.ckpt")
                    if stopper.should_stop:
                        result.stopped_early = True
                        break
        self.save(out / "last.ckpt")
        result.steps = self.step
        return result


def config_from_checkpoint(ckpt: ckpt_io.Checkpoint) -> TrainConfig:
    raw = ckpt.tensors.get("meta/config")
    if raw is None:
        raise ckpt_io.CheckpointError("checkpoint carries no configuration")
    return TrainConfig.from_text(bytes(raw.astype(np.uint8)).decode("utf-8"))


def infer(image: np.ndarray, mask: np.ndarray, model: Trainer, sketch: np.ndarray | None = None) -> np.ndarray:
    """Inpaint one ``H x W x 3`` image in ``[0, 1]``; known pixels are returned unchanged."""
    cfg = model.cfg
    image = np.asarray(image, dtype=np.float64)
    mask = (np.asarray(mask) > 0).astype(np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got {image.shape}")
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} differ in size")
    if image.shape[0] != cfg.image_size or image.shape[1] != cfg.image_size:
        raise ValueError(f"model expects {cfg.image_size}x{cfg.image_size} images, got {image.shape[:2]}")
    if cfg.sketch_guided and sketch is None:
        sketch = np.zeros_like(mask)
    if not cfg.sketch_guided and sketch is not None:
        raise ValueError("model was trained without a sketch channel")
    gt = to_signed(image)[None]
    x_in = fill_holes(gt, mask[None], cfg.hole_fill).astype(model.dtype)
    sk = None if sketch is None else (np.asarray(sketch) > 0).astype(model.dtype)[None] * mask[None]
    with no_grad():
        _, i_out, _ = model.G(Tensor(x_in), mask[None], sk)
    out = to_unit(i_out.data[0].astype(np.float64))
    keep = mask[..., None] == 0
    return np.where(keep, image, out)
