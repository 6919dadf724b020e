"""Compact 1-D residual classifier, training loop, and checkpoint format.

The network is a small stand-in for a large pretrained ECG backbone: a strided
stem convolution, a stack of residual blocks, global average pooling and a
linear head producing one logit per class. Training drives Adam with the
analytic masked-BCE gradient from :mod:`ecglab.loss`.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.special import expit
from torch import nn

from . import loss as mloss
from ._util import substream
from .errors import FormatError, ShapeError
from .waveform import zscore

CKPT_MAGIC = b"ECGK"
CKPT_VERSION = 1
PREDICT_CHUNK = 256


@dataclass(frozen=True)
class ModelConfig:
    input_length: int = 5000
    n_classes: int = 108
    n_blocks: int = 4
    channels: tuple = (8, 16, 16, 32)
    kernel_size: int = 7
    stem_channels: int = 8
    stem_kernel: int = 15
    stem_stride: int = 5
    strides: tuple = (2, 2, 2, 5)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if len(self.channels) != self.n_blocks or len(self.strides) != self.n_blocks:
            raise ValueError("channels and strides need one entry per block")
        if self.kernel_size % 2 == 0 or self.stem_kernel % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        if self.input_length % self.downsampling:
            raise ValueError(f"input_length {self.input_length} is not divisible by the "
                             f"total downsampling factor {self.downsampling}")

    @property
    def downsampling(self):
        return self.stem_stride * math.prod(self.strides)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-4
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


class ResBlock(nn.Module):
    def __init__(self, c_in, c_out, kernel_size, stride):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(c_in, c_out, kernel_size, stride=stride, padding=pad)
        self.conv2 = nn.Conv1d(c_out, c_out, kernel_size, padding=pad)
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Conv1d(c_in, c_out, 1, stride=stride)

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        h = torch.relu(self.conv1(x))
        return torch.relu(self.conv2(h) + identity)


class ResNet1d(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.stem = nn.Conv1d(1, cfg.stem_channels, cfg.stem_kernel, stride=cfg.stem_stride,
                              padding=cfg.stem_kernel // 2)
        blocks = []
        c_in = cfg.stem_channels
        for c_out, stride in zip(cfg.channels, cfg.strides):
            blocks.append(ResBlock(c_in, c_out, cfg.kernel_size, stride))
            c_in = c_out
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Linear(c_in, cfg.n_classes)

    def forward(self, x):
        # x: (N, L) -> logits (N, C)
        h = torch.relu(self.stem(x.unsqueeze(1)))
        h = self.blocks(h)
        return self.head(h.mean(dim=-1))


def init_params(cfg: ModelConfig, seed=0) -> ResNet1d:
    """Build a network with fan-in scaled uniform weights drawn from ``seed``."""
    model = ResNet1d(cfg).to(torch.float32)
    gen = torch.Generator().manual_seed(int(substream(seed, "init").integers(2**62)))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.zero_()
                continue
            fan_in = p.shape[1] * (p.shape[2] if p.ndim == 3 else 1)
            # He bound for ReLU layers, plain 1/sqrt(fan_in) for the head
            bound = math.sqrt(6.0 / fan_in) if not name.startswith("head") else 1 / math.sqrt(fan_in)
            p.uniform_(-bound, bound, generator=gen)
    return model


def _as_batch(segments, cfg: ModelConfig):
    x = np.asarray(segments, dtype=np.float32)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != cfg.input_length:
        raise ShapeError(f"expected (N, {cfg.input_length}) input, got {x.shape}")
    return torch.from_numpy(np.ascontiguousarray(x))


def forward(segments, model: ResNet1d) -> np.ndarray:
    """Logits (N x C, float64) for an (N x L) batch, computed in fixed-size chunks."""
    x = _as_batch(segments, model.cfg)
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, x.shape[0], PREDICT_CHUNK):
            out.append(model(x[i:i + PREDICT_CHUNK]).double().numpy())
    if not out:
        return np.empty((0, model.cfg.n_classes))
    return np.concatenate(out)


def predict(segments, model: ResNet1d) -> np.ndarray:
    return expit(forward(segments, model))


class _MaskedBCE(torch.autograd.Function):
    """Bridges the numpy loss and its analytic gradient into autograd."""

    @staticmethod
    def forward(ctx, logits, Y, eps):
        l = logits.detach().double().numpy()
        ctx.save_for_backward(torch.from_numpy(mloss.masked_bce_grad(l, Y, mloss.LossConfig(eps))))
        return logits.new_tensor(mloss.masked_bce(l, Y, mloss.LossConfig(eps)))

    @staticmethod
    def backward(ctx, grad_out):
        (grad,) = ctx.saved_tensors
        return (grad_out * grad).to(torch.float32), None, None


@dataclass
class TrainResult:
    model: ResNet1d
    loss_trace: list = field(default_factory=list)
    steps: int = 0


def fit(X, Y, mcfg: ModelConfig, tcfg: TrainConfig, lcfg=mloss.LossConfig(), model=None,
        normalized=True, log=None) -> TrainResult:
    """Minibatch Adam on arrays ``X`` (N x L) and ``Y`` (N x C, entries in {-1,0,1}).

    The per-epoch trace is the masked BCE pooled over every observed label
    seen in the epoch (sum of terms / count), evaluated with the weights in
    effect when each batch was processed.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if len(X) != len(Y) or Y.shape[1] != mcfg.n_classes:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} disagree with n_classes={mcfg.n_classes}")
    mloss.build_mask(Y)  # validates label alphabet up front
    if model is None:
        model = init_params(mcfg, tcfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=tcfg.learning_rate)
    result = TrainResult(model)
    model.train()
    for epoch in range(tcfg.epochs):
        order = substream(tcfg.seed, "shuffle", epoch).permutation(len(X))
        total, count = 0.0, 0.0
        for i in range(0, len(order), tcfg.batch_size):
            idx = np.sort(order[i:i + tcfg.batch_size])
            xb = X[idx] if normalized else zscore(X[idx])
            yb = Y[idx]
            logits = model(_as_batch(xb, mcfg))
            s, c = mloss.masked_bce_parts(logits.detach().double().numpy(), yb)
            total += s
            count += c
            loss = _MaskedBCE.apply(logits, yb, lcfg.epsilon)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            result.steps += 1
        result.loss_trace.append(total / (count + lcfg.epsilon))
        if log is not None:
            log(epoch, result.loss_trace[-1])
    model.eval()
    return result


def pairs_to_arrays(pairs, dtype=np.float32):
    """Stack z-scored segment values and their event label rows."""
    if not pairs:
        return np.empty((0, 0), dtype=dtype), np.empty((0, 0), dtype=np.int8)
    X = np.empty((len(pairs), len(pairs[0].segment.values)), dtype=dtype)
    for i, p in enumerate(pairs):
        X[i] = zscore(p.segment.values)
    Y = np.stack([p.event.labels for p in pairs]).astype(np.int8)
    return X, Y


def train(pairs, mcfg: ModelConfig, tcfg: TrainConfig, lcfg=mloss.LossConfig(), log=None):
    """Train from paired samples; returns ``(model, loss_trace)``."""
    if not pairs:
        raise ValueError("training set is empty")
    X, Y = pairs_to_arrays(pairs)
    res = fit(X, Y, mcfg, tcfg, lcfg, log=log)
    return res.model, res.loss_trace


# -- checkpoint ---------------------------------------------------------------

def save_checkpoint(path, model: ResNet1d, tcfg: TrainConfig | None = None, extra=None):
    """Versioned binary: magic, version, JSON header length, JSON header, float32 params."""
    state = model.state_dict()
    header = {
        "model_config": asdict(model.cfg),
        "train_config": asdict(tcfg) if tcfg else None,
        "seed": tcfg.seed if tcfg else None,
        "params": [[k, list(v.shape)] for k, v in state.items()],
        "dtype": "<f4",
        **(extra or {}),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(v.detach().cpu().numpy().astype("<f4").tobytes() for v in state.values())
    Path(path).write_bytes(CKPT_MAGIC + struct.pack("<HI", CKPT_VERSION, len(blob)) + blob + body)
    return path


def load_checkpoint(path):
    """Returns ``(model, header dict)``."""
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    version, n = struct.unpack_from("<HI", buf, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(buf[10:10 + n])
    mcfg = ModelConfig(**header["model_config"])
    model = ResNet1d(mcfg)
    flat = np.frombuffer(buf, dtype="<f4", offset=10 + n)
    state, pos = {}, 0
    for name, shape in header["params"]:
        size = math.prod(shape)
        if pos + size > flat.size:
            raise FormatError(f"{path}: parameter data truncated at {name}")
        state[name] = torch.from_numpy(flat[pos:pos + size].reshape(shape).copy())
        pos += size
    if pos != flat.size:
        raise FormatError(f"{path}: {flat.size - pos} trailing parameter values")
    model.load_state_dict(state)
    model.eval()
    return model, header
