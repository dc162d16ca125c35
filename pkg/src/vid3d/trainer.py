"""Mini-batch SGD training with step learning-rate schedules and clip-level
jittering (random spatio-temporal crop plus horizontal flip).

Training is bit-reproducible for a fixed (seed, config, dataset): the
train/validation split, per-epoch shuffles and jitter draws all come from
one seeded generator, and gradient accumulation order over a batch is the
item index order.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import network, ops
from .errors import ConfigError, DataError, ShapeError
from .videodata import center_crop, split_into_clips


@dataclass(frozen=True)
class StepSchedule:
    unit: str  # "epochs" | "iters"
    divisor: float
    every: int
    stop: int

    def validate(self):
        if self.unit not in ("epochs", "iters"):
            raise ConfigError(f"schedule unit must be epochs or iters, got {self.unit!r}")
        if self.divisor <= 1.0:
            raise ConfigError(f"schedule divisor must exceed 1, got {self.divisor}")
        if self.every < 1 or self.stop < 1:
            raise ConfigError("schedule step interval and stop point must be positive")
        return self


def step_epochs(divisor, every_n_epochs, stop_epoch):
    return StepSchedule("epochs", divisor, every_n_epochs, stop_epoch).validate()


def step_iters(divisor, every_n_iters, stop_iter):
    return StepSchedule("iters", divisor, every_n_iters, stop_iter).validate()


# the two published recipes: divide by 10 every 4 epochs stopping at 16, and
# divide by 2 every 150K iterations stopping at 1.9M
ARCH_SEARCH_SCHEDULE = step_epochs(10.0, 4, 16)
LARGE_SCALE_SCHEDULE = step_iters(2.0, 150_000, 1_900_000)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 30
    initial_lr: float = 0.003
    schedule: StepSchedule = ARCH_SEARCH_SCHEDULE
    momentum: float = 0.9
    seed: int = 0
    augmentation: bool = True
    val_fraction: float = 0.2
    weight_decay: float = 0.0  # hook, off by default

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.initial_lr < 0:
            raise ConfigError(f"initial_lr must be non-negative, got {self.initial_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        self.schedule.validate()
        return self


def lr_at(config, epoch_or_iter):
    """Piecewise-constant schedule value at the given epoch or iteration."""
    if epoch_or_iter < 0:
        raise ConfigError(f"schedule index must be >= 0, got {epoch_or_iter}")
    sched = config.schedule
    return config.initial_lr / sched.divisor ** (epoch_or_iter // sched.every)


def init_state(net):
    """Zero velocity tensors mirroring the parameter shapes."""
    return {name: np.zeros_like(p) for name, p in net.params.items()}


def sgd_step(net, grads, state, lr, momentum, weight_decay=0.0):
    """v <- momentum * v - lr * g;  p <- p + v (in place)."""
    for name, p in net.params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {name} {p.shape}")
        if weight_decay:
            g = g + weight_decay * p
        v = state[name]
        v *= momentum
        v -= lr * g
        p += v


def augment_clip(frames, rng, crop_h, crop_w, clip_len=16):
    """Random 16-frame window, random spatial crop, 50% horizontal flip.
    frames: (c, l, h, w) with l >= clip_len and spatial extents >= the crop."""
    c, l, h, w = frames.shape
    if l < clip_len:
        raise DataError(f"video of {l} frames is shorter than a {clip_len}-frame clip")
    if h < crop_h or w < crop_w:
        raise DataError(f"cannot crop {crop_h}x{crop_w} from {h}x{w} frames")
    t0 = int(rng.integers(0, l - clip_len + 1))
    y0 = int(rng.integers(0, h - crop_h + 1))
    x0 = int(rng.integers(0, w - crop_w + 1))
    clip = frames[:, t0:t0 + clip_len, y0:y0 + crop_h, x0:x0 + crop_w]
    if rng.random() < 0.5:
        clip = clip[:, :, :, ::-1]
    return np.ascontiguousarray(clip)


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)  # (epoch, iter, lr, loss, clip_accuracy)
    wall_clock: float = 0.0
    net: object = None

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write("epoch,iter,lr,loss,clip_accuracy\n")
            for epoch, it, lr, loss, acc in self.rows:
                f.write(f"{epoch},{it},{lr!r},{loss!r},{acc!r}\n")

    @property
    def final_accuracy(self):
        return self.rows[-1][4] if self.rows else float("nan")


def split_train_val(records, val_fraction, rng):
    """Stratified, seeded split; returns (train_ids, val_ids)."""
    by_class = {}
    for i, rec in enumerate(records):
        by_class.setdefault(rec.label, []).append(i)
    train_ids, val_ids = [], []
    for label in sorted(by_class):
        ids = np.array(by_class[label])
        rng.shuffle(ids)
        n_val = int(round(len(ids) * val_fraction))
        val_ids.extend(ids[:n_val].tolist())
        train_ids.extend(ids[n_val:].tolist())
    return sorted(train_ids), sorted(val_ids)


def _eval_clip_batches(net, records, ids, batch_size):
    """Non-overlapped 16-frame clips, center-cropped; yields (batch, labels)."""
    c, clip_len, ch, cw = net.spec.input_shape
    clips, labels = [], []
    for i in ids:
        rec = records[i]
        for start in split_into_clips(rec.length, clip_len, 0):
            clip = center_crop(rec.frames[:, start:start + clip_len], ch, cw)
            clips.append(clip)
            labels.append(rec.label)
    for j in range(0, len(clips), batch_size):
        yield np.stack(clips[j:j + batch_size]), np.array(labels[j:j + batch_size])


def evaluate_clip_accuracy(net, records, ids, batch_size=64):
    """Fraction of non-overlapped held-out clips whose argmax matches the label."""
    correct = total = 0
    for batch, labels in _eval_clip_batches(net, records, ids, batch_size):
        fwd = network.forward(net, batch)
        pred = fwd.activations[network.logits_name(net.spec)].argmax(axis=1)
        correct += int((pred == labels).sum())
        total += len(labels)
    return correct / total if total else float("nan")


def train(net, records, config, log=None):
    """Run the schedule to its stop point; evaluates held-out clip accuracy
    each epoch. Aborts with a diagnostic if the loss diverges to NaN."""
    config.validate()
    if not records:
        raise DataError("empty dataset")
    c, clip_len, crop_h, crop_w = net.spec.input_shape
    labels_seen = {rec.label for rec in records}
    if max(labels_seen) >= net.spec.class_count:
        raise DataError(f"dataset labels {sorted(labels_seen)} exceed "
                        f"class count {net.spec.class_count}")
    rng = np.random.default_rng(config.seed)
    train_ids, val_ids = split_train_val(records, config.val_fraction, rng)
    if not train_ids:
        raise DataError("empty training split")

    state = init_state(net)
    report = TrainReport(net=net)
    sched = config.schedule
    t_start = time.time()
    it = 0
    epoch = 0
    while True:
        if sched.unit == "epochs" and epoch >= sched.stop:
            break
        if sched.unit == "iters" and it >= sched.stop:
            break
        if config.augmentation:
            # fresh random 16-frame window + jittered crop per video per epoch
            order = np.array(train_ids)
            rng.shuffle(order)
            samples = [(i, None) for i in order.tolist()]
        else:
            units = []
            for i in train_ids:
                for start in split_into_clips(records[i].length, clip_len, 0):
                    units.append((i, start))
            order = np.arange(len(units))
            rng.shuffle(order)
            samples = [units[j] for j in order.tolist()]

        epoch_loss = 0.0
        epoch_n = 0
        for b0 in range(0, len(samples), config.batch_size):
            if sched.unit == "iters" and it >= sched.stop:
                break
            chunk = samples[b0:b0 + config.batch_size]
            clips, labels = [], []
            for i, start in chunk:
                rec = records[i]
                if start is None:
                    clip = augment_clip(rec.frames, rng, crop_h, crop_w, clip_len)
                else:
                    clip = center_crop(rec.frames[:, start:start + clip_len], crop_h, crop_w)
                clips.append(clip)
                labels.append(rec.label)
            batch = np.stack(clips)
            labels = np.array(labels)
            lr = lr_at(config, epoch if sched.unit == "epochs" else it)
            fwd = network.forward(net, batch, record_switches=True)
            logits = fwd.activations[network.logits_name(net.spec)]
            loss, _, grad_logits = ops.softmax_xent(logits, labels)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training diverged: loss={loss} at epoch {epoch}, iter {it}")
            grads = network.backward(net, fwd, grad_logits)
            grads.pop("__input__")
            sgd_step(net, grads, state, lr, config.momentum, config.weight_decay)
            epoch_loss += loss * len(chunk)
            epoch_n += len(chunk)
            it += 1

        val_acc = evaluate_clip_accuracy(net, records, val_ids) if val_ids else float("nan")
        mean_loss = epoch_loss / max(epoch_n, 1)
        lr_row = lr_at(config, epoch if sched.unit == "epochs" else max(it - 1, 0))
        report.rows.append((epoch, it, lr_row, mean_loss, val_acc))
        if log:
            log(f"epoch {epoch}: iters={it} lr={lr_row:.6g} loss={mean_loss:.4f} "
                f"val_clip_acc={val_acc:.4f}")
        epoch += 1

    report.wall_clock = time.time() - t_start
    return report
