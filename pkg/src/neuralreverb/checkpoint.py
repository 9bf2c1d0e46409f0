"""Versioned binary checkpoint container.

Layout: magic, u32 format version, u64 header length, JSON header (config,
phase/epoch metadata, tensor table), raw little-endian tensor payload,
then a SHA-256 digest of everything before it. Round trips are bit-exact;
truncation or corruption raises IntegrityError, an unknown version raises
VersionError.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .errors import IntegrityError, VersionError

MAGIC = b"NRVC"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict             # name -> np.ndarray
    phase: str = "init"
    epoch: int = 0
    best_val_loss: float = float("inf")
    extra: dict = field(default_factory=dict)
    opt: dict | None = None  # {"m": {...}, "v": {...}, "t": int, "lr": float}


def save_checkpoint(ck: Checkpoint, path) -> None:
    tensors = []
    payload = bytearray()

    def put(name: str, arr: np.ndarray) -> None:
        arr = np.ascontiguousarray(arr)
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        tensors.append(
            {
                "name": name,
                "dtype": arr.dtype.str.replace(">", "<"),
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)

    for name in sorted(ck.params):
        put(name, ck.params[name])
    opt_meta = None
    if ck.opt is not None:
        for kind in ("m", "v"):
            for name in sorted(ck.opt[kind]):
                put(f"opt.{kind}.{name}", ck.opt[kind][name])
        opt_meta = {"t": int(ck.opt["t"]), "lr": float(ck.opt["lr"])}

    header = json.dumps(
        {
            "config": ck.config.to_dict(),
            "phase": ck.phase,
            "epoch": int(ck.epoch),
            "best_val_loss": float(ck.best_val_loss),
            "extra": ck.extra,
            "opt": opt_meta,
            "tensors": tensors,
        },
        sort_keys=True,
    ).encode("utf-8")

    body = bytearray()
    body += MAGIC
    body += FORMAT_VERSION.to_bytes(4, "little")
    body += len(header).to_bytes(8, "little")
    body += header
    body += payload
    digest = hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(digest)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 + 8 + 32:
        raise IntegrityError(f"{path}: file too short to be a checkpoint")
    if blob[: len(MAGIC)] != MAGIC:
        raise IntegrityError(f"{path}: bad magic, not a checkpoint file")
    version = int.from_bytes(blob[4:8], "little")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")

    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch (corrupt or truncated)")

    header_len = int.from_bytes(blob[8:16], "little")
    header_end = 16 + header_len
    if header_end > len(body):
        raise IntegrityError(f"{path}: header extends past end of file")
    try:
        header = json.loads(body[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable header") from exc

    payload = body[header_end:]
    arrays: dict = {}
    for entry in header["tensors"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(payload):
            raise IntegrityError(f"{path}: tensor {entry['name']} extends past payload")
        arr = np.frombuffer(payload[lo:hi], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()

    params = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    opt = None
    if header["opt"] is not None:
        opt = {
            "m": {k[len("opt.m.") :]: v for k, v in arrays.items() if k.startswith("opt.m.")},
            "v": {k[len("opt.v.") :]: v for k, v in arrays.items() if k.startswith("opt.v.")},
            "t": header["opt"]["t"],
            "lr": header["opt"]["lr"],
        }

    return Checkpoint(
        config=ModelConfig.from_dict(header["config"]),
        params=params,
        phase=header["phase"],
        epoch=header["epoch"],
        best_val_loss=header["best_val_loss"],
        extra=header["extra"],
        opt=opt,
    )
