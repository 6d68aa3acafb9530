"""End-to-end optimization of the forecaster on window samples.

Training follows a fixed regimen: Adam at learning rate 0.001, batch size 1,
leaky-ReLU slope 0.1, seeded shuffling, gradient-norm clipping at 10. Every
run is reproducible from (config, seed); checkpoints are a versioned binary
container of named float64 parameter blocks plus optimizer moments, so a
reloaded model replays forward passes bit-identically.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .decoder import GaussianDecoder, GaussianSequence, gaussian_nll
from .encoder import PatchEncoder
from .errors import CheckpointError, ConfigError, NumericError
from .social import SocialPool
from .windows import Window

_MAGIC = b"BVCK"
_VERSION = 1
_KIND_ARRAY = 0
_KIND_BYTES = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1
    epochs: int = 30
    seed: int = 0
    leaky_slope: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    precision: str = "float64"  # float64 for gradient-check fidelity, float32 for speed

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32


class Forecaster(nn.Module):
    """Full pipeline: history rasters -> social tensor -> context -> Gaussians."""

    def __init__(self, leaky_slope: float = 0.1):
        super().__init__()
        self.encoder = PatchEncoder(leaky_slope)
        self.social = SocialPool(leaky_slope)
        self.decoder = GaussianDecoder()

    def init_parameters(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self.encoder.init_parameters(rng)
        self.social.init_parameters(rng)
        self.decoder.init_parameters(rng)

    def forward(self, history: torch.Tensor) -> torch.Tensor:
        social_tensor = self.encoder.encode_scene(history)
        context = self.social(social_tensor)
        return self.decoder(context)


def build_model(config: TrainConfig) -> Forecaster:
    model = Forecaster(config.leaky_slope).to(config.dtype)
    model.init_parameters(config.seed)
    return model


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict[str, np.ndarray]                 # float64 blocks, torch parameter names
    adam: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    epochs_completed: int = 0
    best_eval_nll: float | None = None

    def build_model(self) -> Forecaster:
        model = build_model(self.config)
        with torch.no_grad():
            for name, param in model.named_parameters():
                if name not in self.params:
                    raise CheckpointError(f"checkpoint is missing parameter block {name!r}")
                param.copy_(torch.from_numpy(self.params[name]).to(param.dtype))
        return model


def checkpoint_from(
    model: Forecaster,
    optimizer: torch.optim.Adam | None,
    config: TrainConfig,
    epochs_completed: int,
    best_eval_nll: float | None,
) -> Checkpoint:
    params = {
        name: p.detach().cpu().double().numpy().copy() for name, p in model.named_parameters()
    }
    adam: dict[str, dict[str, np.ndarray]] = {}
    if optimizer is not None:
        lookup = {id(p): name for name, p in model.named_parameters()}
        for p, state in optimizer.state.items():
            name = lookup[id(p)]
            adam[name] = {
                "step": np.asarray(float(state["step"]), dtype=np.float64),
                "exp_avg": state["exp_avg"].detach().cpu().double().numpy().copy(),
                "exp_avg_sq": state["exp_avg_sq"].detach().cpu().double().numpy().copy(),
            }
    return Checkpoint(
        config=config,
        params=params,
        adam=adam,
        epochs_completed=epochs_completed,
        best_eval_nll=best_eval_nll,
    )


def _write_block(fh, name: str, kind: int, payload: bytes) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", kind))
    fh.write(payload)


def _array_payload(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    head = struct.pack("<B", arr.ndim) + b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    meta = {
        "config": asdict(ckpt.config),
        "epochs_completed": ckpt.epochs_completed,
        "best_eval_nll": ckpt.best_eval_nll,
    }
    _write_block(buf, "meta", _KIND_BYTES, _bytes_payload(json.dumps(meta, sort_keys=True).encode()))
    for name in sorted(ckpt.params):
        _write_block(buf, f"param/{name}", _KIND_ARRAY, _array_payload(ckpt.params[name]))
    for name in sorted(ckpt.adam):
        for key in ("step", "exp_avg", "exp_avg_sq"):
            _write_block(buf, f"adam/{name}/{key}", _KIND_ARRAY, _array_payload(ckpt.adam[name][key]))
    Path(path).write_bytes(buf.getvalue())


def _bytes_payload(data: bytes) -> bytes:
    return struct.pack("<Q", len(data)) + data


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def done(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    r = _Reader(data, path)
    if r.take(4) != _MAGIC:
        raise CheckpointError(f"checkpoint {path} has wrong magic bytes")
    (version,) = struct.unpack("<I", r.take(4))
    if version != _VERSION:
        raise CheckpointError(f"checkpoint {path} has version {version}, expected {_VERSION}")

    blocks: dict[str, np.ndarray | bytes] = {}
    while not r.done():
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (kind,) = struct.unpack("<B", r.take(1))
        if kind == _KIND_ARRAY:
            (ndim,) = struct.unpack("<B", r.take(1))
            shape = tuple(struct.unpack("<I", r.take(4))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape)
            blocks[name] = arr.copy()
        elif kind == _KIND_BYTES:
            (length,) = struct.unpack("<Q", r.take(8))
            blocks[name] = r.take(length)
        else:
            raise CheckpointError(f"checkpoint {path} has unknown block kind {kind}")

    if "meta" not in blocks:
        raise CheckpointError(f"checkpoint {path} has no meta block")
    try:
        meta = json.loads(blocks["meta"].decode("utf-8"))
        raw = dict(meta["config"])
        raw["adam_betas"] = tuple(raw["adam_betas"])
        config = TrainConfig(**raw)
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"checkpoint {path} meta block is corrupt: {exc}") from None

    params = {}
    adam: dict[str, dict[str, np.ndarray]] = {}
    for name, value in blocks.items():
        if name.startswith("param/"):
            params[name[len("param/"):]] = value
        elif name.startswith("adam/"):
            pname, key = name[len("adam/"):].rsplit("/", 1)
            adam.setdefault(pname, {})[key] = value
    return Checkpoint(
        config=config,
        params=params,
        adam=adam,
        epochs_completed=int(meta["epochs_completed"]),
        best_eval_nll=meta["best_eval_nll"],
    )


def _restore_optimizer(optimizer: torch.optim.Adam, model: Forecaster, ckpt: Checkpoint) -> None:
    by_name = dict(model.named_parameters())
    for name, state in ckpt.adam.items():
        p = by_name[name]
        optimizer.state[p] = {
            "step": torch.tensor(float(state["step"])),
            "exp_avg": torch.from_numpy(state["exp_avg"].copy()).to(p.dtype),
            "exp_avg_sq": torch.from_numpy(state["exp_avg_sq"].copy()).to(p.dtype),
        }


def _batch_tensors(windows: Sequence[Window], dtype: torch.dtype):
    hist = np.stack([w.history_array() for w in windows])
    target = np.stack([w.future for w in windows])
    return torch.from_numpy(hist).to(dtype), torch.from_numpy(target).to(dtype)


def evaluate_nll(model: Forecaster, windows: Sequence[Window], batch_size: int = 16) -> float:
    """Mean NLL over windows without touching parameters."""
    dtype = next(model.parameters()).dtype
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            chunk = windows[i : i + batch_size]
            hist, target = _batch_tensors(chunk, dtype)
            loss = gaussian_nll(model(hist), target)
            total += float(loss) * len(chunk)
            count += len(chunk)
    return total / count


def train(
    config: TrainConfig,
    train_windows: Sequence[Window],
    eval_windows: Sequence[Window] = (),
    resume: Checkpoint | None = None,
) -> tuple[Checkpoint, list[dict]]:
    """Optimize the forecaster; returns the best-eval checkpoint (last-epoch
    checkpoint when there are no eval windows) and per-epoch loss records."""
    if not train_windows:
        raise ConfigError("training requires a nonempty train window set")

    if resume is not None:
        if resume.epochs_completed > config.epochs:
            raise ConfigError(
                f"checkpoint already trained {resume.epochs_completed} epochs > target {config.epochs}"
            )
        model = resume.build_model()
    else:
        model = build_model(config)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )
    if resume is not None:
        _restore_optimizer(optimizer, model, resume)

    # One shuffle stream for the whole run; replaying completed epochs keeps
    # resumed runs on the identical sequence.
    rng = np.random.default_rng(config.seed)
    start_epoch = resume.epochs_completed if resume is not None else 0
    for _ in range(start_epoch):
        rng.permutation(len(train_windows))

    best_eval = resume.best_eval_nll if resume is not None else None
    best_ckpt = resume if resume is not None else None
    records: list[dict] = []

    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = rng.permutation(len(train_windows))
        model.train()
        total, count = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            batch = [train_windows[j] for j in order[i : i + config.batch_size]]
            hist, target = _batch_tensors(batch, config.dtype)
            optimizer.zero_grad()
            loss = gaussian_nll(model(hist), target)
            if not torch.isfinite(loss):
                ids = ", ".join(f"{w.tv_id}/{w.t}" for w in batch)
                raise NumericError(f"non-finite loss at epoch {epoch} on window(s) {ids}")
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            total += float(loss.detach()) * len(batch)
            count += len(batch)
        train_nll = total / count

        eval_nll = None
        if eval_windows:
            model.eval()
            eval_nll = evaluate_nll(model, eval_windows)
        records.append({"epoch": epoch, "train_nll": train_nll, "eval_nll": eval_nll})

        if eval_windows:
            if best_eval is None or eval_nll < best_eval:
                best_eval = eval_nll
                best_ckpt = checkpoint_from(model, optimizer, config, epoch, best_eval)
        else:
            best_ckpt = checkpoint_from(model, optimizer, config, epoch, None)

    if best_ckpt is None:
        best_ckpt = checkpoint_from(model, optimizer, config, config.epochs, best_eval)
    return best_ckpt, records


def write_loss_log(records: Sequence[dict], path) -> None:
    lines = ["epoch,train_nll,eval_nll"]
    for r in records:
        ev = "" if r["eval_nll"] is None else repr(r["eval_nll"])
        lines.append(f"{r['epoch']},{r['train_nll']!r},{ev}")
    Path(path).write_text("\n".join(lines) + "\n")


def forward_window(model: Forecaster, window: Window) -> GaussianSequence:
    dtype = next(model.parameters()).dtype
    hist, _ = _batch_tensors([window], dtype)
    with torch.no_grad():
        out = model(hist)
    return GaussianSequence(out.squeeze(0).double().numpy())


def forward_windows(
    model: Forecaster, windows: Sequence[Window], batch_size: int = 16
) -> list[GaussianSequence]:
    dtype = next(model.parameters()).dtype
    out: list[GaussianSequence] = []
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            hist, _ = _batch_tensors(windows[i : i + batch_size], dtype)
            preds = model(hist).double().numpy()
            out.extend(GaussianSequence(p) for p in preds)
    return out
