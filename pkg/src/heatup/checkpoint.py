"""Binary checkpoints.

Layout::

    8 bytes   magic b"HUPEMB01"
    8 bytes   little-endian uint64 length L of the descriptor
    L bytes   UTF-8 JSON descriptor (architecture, schedule, position, RNG
              state, training log, and the name/shape of every block)
    ...       little-endian float64 blocks in descriptor order
    4 bytes   little-endian CRC-32 of everything between magic and CRC
"""

import json
import math
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (CheckpointChecksumError, CheckpointFormatError,
                     CheckpointTruncatedError, CheckpointVersionError)
from .layers import BatchNormNoScale
from .numerics import Rng
from .training import (Architecture, TemperatureSchedule, Trainer, TrainingLog,
                       init_params)

MAGIC = b"HUPEMB01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    net: object
    head: object
    trainer: object = None
    extra: dict = None


def _blocks(net, head, trainer):
    blocks = []
    for i, layer in enumerate(net.linear_layers):
        blocks.append((f"linear{i}.weight", layer.weight.value))
        if layer.bias is not None:
            blocks.append((f"linear{i}.bias", layer.bias.value))
    blocks.append(("head.weight", head.weight.value))
    if head.bias is not None:
        blocks.append(("head.bias", head.bias.value))
    if isinstance(net.norm, BatchNormNoScale):
        blocks.append(("bn.running_mean", net.norm.running_mean))
        blocks.append(("bn.running_var", net.norm.running_var))
    if trainer is not None:
        for j, v in enumerate(trainer.opt.velocity):
            blocks.append((f"velocity{j}", v))
    return blocks


def save_checkpoint(path, net, head, trainer=None, extra=None):
    """Write network, head and (optionally) trainer state to ``path``."""
    blocks = _blocks(net, head, trainer)
    desc = {
        "format_version": FORMAT_VERSION,
        "architecture": net.arch.to_dict(),
        "alpha": head.alpha,
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "extra": extra or {},
    }
    if trainer is not None:
        desc["trainer"] = {
            "schedule": trainer.schedule.to_dict(),
            "batch_size": trainer.batch_size,
            "momentum": trainer.opt.momentum,
            "weight_decay": trainer.opt.weight_decay,
            "lr": trainer.opt.lr,
            "epoch": trainer.epoch,
            "rng_seed": trainer.rng.seed,
            "rng_state": trainer.rng.get_state(),
            "log": trainer.log.records,
        }
    header = json.dumps(desc, sort_keys=True).encode("utf-8")
    payload = bytearray(struct.pack("<Q", len(header)))
    payload += header
    for _, a in blocks:
        payload += np.ascontiguousarray(a, dtype="<f8").tobytes()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    os.replace(tmp, path)


def read_checkpoint_raw(path):
    """Validate the file and return ``(descriptor, {name: array})``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        if len(raw) < 8 and MAGIC.startswith(raw):
            raise CheckpointTruncatedError(f"{path}: file ends inside the magic bytes")
        raise CheckpointFormatError(f"{path}: bad magic bytes {raw[:8]!r}")
    if len(raw) < 8 + 8:
        raise CheckpointTruncatedError(f"{path}: file ends inside the header")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if len(raw) < 16 + hlen:
        raise CheckpointTruncatedError(f"{path}: file ends inside the descriptor")
    try:
        desc = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable descriptor: {exc}") from exc
    if not isinstance(desc, dict) or "blocks" not in desc:
        raise CheckpointFormatError(f"{path}: descriptor lacks a block table")
    try:
        shapes = [[int(d) for d in b["shape"]] for b in desc["blocks"]]
        names = [str(b["name"]) for b in desc["blocks"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: malformed block table: {exc}") from exc
    if any(d < 0 for shape in shapes for d in shape):
        raise CheckpointFormatError(f"{path}: negative block dimension")
    sizes = [math.prod(shape) * 8 for shape in shapes]
    expected = 16 + hlen + sum(sizes) + 4
    if len(raw) < expected:
        raise CheckpointTruncatedError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise CheckpointFormatError(f"{path}: {len(raw) - expected} trailing bytes")
    (crc,) = struct.unpack_from("<I", raw, expected - 4)
    if zlib.crc32(raw[8:expected - 4]) & 0xFFFFFFFF != crc:
        raise CheckpointChecksumError(f"{path}: CRC-32 mismatch")
    if desc.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {desc.get('format_version')}, expected {FORMAT_VERSION}")
    arrays = {}
    offset = 16 + hlen
    for name, shape, size in zip(names, shapes, sizes):
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=size // 8,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset += size
    return desc, arrays


def load_checkpoint(path):
    """Rebuild a :class:`Checkpoint`; nothing is constructed unless the file is valid."""
    desc, arrays = read_checkpoint_raw(path)
    try:
        arch = Architecture.from_dict(desc["architecture"])
        net, head = init_params(arch, Rng(0))
        head.alpha = desc["alpha"]
        trainer = None
        if "trainer" in desc:
            t = desc["trainer"]
            rng = Rng(t["rng_seed"])
            rng.set_state(t["rng_state"])
            trainer = Trainer(net, head, TemperatureSchedule.from_dict(t["schedule"]), rng,
                              t["batch_size"], t["momentum"], t["weight_decay"])
            trainer.opt.lr = t["lr"]
            trainer.epoch = t["epoch"]
            trainer.log = TrainingLog(t["log"])
        expected = _blocks(net, head, trainer)
        if [n for n, _ in expected] != [b["name"] for b in desc["blocks"]]:
            raise CheckpointFormatError(f"{path}: block table does not match the architecture")
        for name, target in expected:
            if target.shape != arrays[name].shape:
                raise CheckpointFormatError(f"{path}: block {name} has shape "
                                            f"{arrays[name].shape}, expected {target.shape}")
            target[...] = arrays[name]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: inconsistent descriptor: {exc}") from exc
    return Checkpoint(net, head, trainer, desc.get("extra") or {})
