"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"VRAE" | u32 version | u32 header length | header JSON (UTF-8)
    | u32 entry count
    | per entry: u32 name length | name (UTF-8) | u8 rank | rank x u64 dims | float32 payload

Entry names are prefixed ``param:``, ``buffer:``, ``adam.m:`` or ``adam.v:``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import VraeConfig, VraeNetwork, build_network
from .nn.optim import AdamState

MAGIC = b"VRAE"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: VraeConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    adam: AdamState | None = None
    step: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_network(cls, net: VraeNetwork, adam: AdamState | None = None, step: int = 0,
                     seed: int = 0, extra: dict | None = None) -> "Checkpoint":
        params = {k: v.astype(np.float32, copy=True) for k, v in net.parameters().items()}
        buffers = {k: v.astype(np.float32, copy=True) for k, v in net.buffers().items()}
        if adam is not None:
            adam = AdamState(adam.lr, adam.beta1, adam.beta2, adam.epsilon, adam.step,
                             {k: v.astype(np.float32, copy=True) for k, v in adam.m.items()},
                             {k: v.astype(np.float32, copy=True) for k, v in adam.v.items()})
        return cls(net.config, params, buffers, adam, step, seed, dict(extra or {}))

    def to_network(self, dtype=np.float32) -> VraeNetwork:
        net = build_network(self.config, seed=self.seed, dtype=dtype)
        for store, saved in ((net.parameters(), self.params), (net.buffers(), self.buffers)):
            if set(store) != set(saved):
                diff = sorted(set(store) ^ set(saved))
                raise CheckpointError(f"checkpoint entries do not match the network: {diff[:5]}")
            for name, arr in store.items():
                if arr.shape != saved[name].shape:
                    raise CheckpointError(f"{name}: shape {saved[name].shape} != network {arr.shape}")
                arr[...] = saved[name]
        return net

    def header(self) -> dict:
        adam = None
        if self.adam is not None:
            adam = {"lr": self.adam.lr, "beta1": self.adam.beta1, "beta2": self.adam.beta2,
                    "epsilon": self.adam.epsilon, "step": self.adam.step}
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "adam": adam,
            "step": self.step,
            "seed": self.seed,
            "extra": self.extra,
        }


def _entries(ckpt: Checkpoint):
    for name, arr in ckpt.params.items():
        yield f"param:{name}", arr
    for name, arr in ckpt.buffers.items():
        yield f"buffer:{name}", arr
    if ckpt.adam is not None:
        for name, arr in ckpt.adam.m.items():
            yield f"adam.m:{name}", arr
        for name, arr in ckpt.adam.v.items():
            yield f"adam.v:{name}", arr


def to_bytes(ckpt: Checkpoint) -> bytes:
    header = json.dumps(ckpt.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    entries = list(_entries(ckpt))
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header, struct.pack("<I", len(entries))]
    for name, arr in entries:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a VRAE checkpoint (bad magic bytes)")
    version, header_len = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; this build reads version {FORMAT_VERSION}")
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

    (count,) = r.unpack("<I")
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "buffer": {}, "adam.m": {}, "adam.v": {}}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        full = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        kind, _, name = full.partition(":")
        if kind not in groups:
            raise CheckpointError(f"unknown checkpoint entry kind {kind!r}")
        groups[kind][name] = arr
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after the last entry")

    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["epsilon"], a["step"], groups["adam.m"], groups["adam.v"])
    return Checkpoint(
        config=VraeConfig.from_dict(header["config"]),
        params=groups["param"],
        buffers=groups["buffer"],
        adam=adam,
        step=header["step"],
        seed=header["seed"],
        extra=header.get("extra", {}),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
