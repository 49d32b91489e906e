"""Binary checkpoint container for network parameters and Adam state.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"MNNCKPT\\n"
    8       4     uint32 format version (currently 1)
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header, keys sorted, no whitespace
    20+H    8*P   parameters, float64 little-endian, flattened in layer order
    ...     8*P   Adam first moments   (only when header "adam" is not null)
    ...     8*P   Adam second moments  (same)

Layer order is the order of ``NetworkSpec.shapes()``: the conv kernel and bias
when present, then weight ``(in, out)`` and bias for each dense layer.  The
header holds ``spec`` (``NetworkSpec.to_dict``), ``seed``, ``n_params``,
``adam`` (``{"t", "lr", "beta1", "beta2", "eps"}`` or null) and a free-form
``metadata`` object.  No timestamps are written, so equal inputs give equal
bytes.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .nn import AdamState, NetworkParams, NetworkSpec

MAGIC = b"MNNCKPT\n"
VERSION = 1
_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def _split(flat: np.ndarray, spec: NetworkSpec) -> tuple:
    out, i = [], 0
    for shape in spec.shapes():
        n = int(np.prod(shape))
        out.append(flat[i:i + n].reshape(shape).astype(np.float64))
        i += n
    return tuple(out)


def save_checkpoint(path, params: NetworkParams, adam: AdamState | None = None,
                    metadata: dict | None = None) -> None:
    header = {
        "spec": params.spec.to_dict(),
        "seed": params.seed,
        "n_params": params.spec.param_count(),
        "adam": None if adam is None else {
            "t": adam.t, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps},
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(blob)), blob, params.flat().astype(_F64).tobytes()]
    if adam is not None:
        parts.append(np.concatenate([m.ravel() for m in adam.m]).astype(_F64).tobytes())
        parts.append(np.concatenate([v.ravel() for v in adam.v]).astype(_F64).tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[NetworkParams, AdamState | None, dict]:
    """Return ``(params, adam_state_or_None, metadata)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
        spec = NetworkSpec.from_dict(header["spec"])
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    n = spec.param_count()
    if header.get("n_params") != n:
        raise CheckpointError(f"{path}: header parameter count does not match spec")
    body = np.frombuffer(data, dtype=_F64, offset=20 + hlen)
    n_blocks = 3 if header["adam"] is not None else 1
    if body.size != n_blocks * n:
        raise CheckpointError(f"{path}: expected {n_blocks * n} values, found {body.size}")
    params = NetworkParams(spec, _split(body[:n], spec), header.get("seed"))
    adam = None
    if header["adam"] is not None:
        a = header["adam"]
        adam = AdamState(_split(body[n:2 * n], spec), _split(body[2 * n:], spec),
                         int(a["t"]), a["lr"], a["beta1"], a["beta2"], a["eps"])
    return params, adam, header.get("metadata", {})
