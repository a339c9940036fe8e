"""
Checkpoint - Binary parameter snapshots.

Layout:
    b"P2G1"                      magic
    uint32 little-endian         header length in bytes
    header                       UTF-8 JSON (sorted keys)
    payload                      little-endian float32 tensors, back to back

The header holds the manifest (name, shape, dtype, byte offset), the model
configuration, the optimizer hyperparameters, the seed and free-form metadata.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from errors import ConfigMismatch, CorruptCheckpoint, InvalidConfig, ShapeMismatch
from models.gnn_model import ModelConfig, init_model
from models.tensor_nn import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b'P2G1'
FORMAT_VERSION = 1
DTYPE = '<f4'


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: ParamStore
    optimizer: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    metadata: Dict = field(default_factory=dict)


def checkpoint_bytes(params: ParamStore, cfg: ModelConfig, optimizer: Optional[Dict[str, float]] = None,
                     seed: int = 0, metadata: Optional[Dict] = None) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in params.items():
        raw = np.ascontiguousarray(tensor.data, dtype=DTYPE).tobytes()
        manifest.append({'name': name, 'shape': list(tensor.shape), 'dtype': DTYPE, 'offset': offset})
        chunks.append(raw)
        offset += len(raw)

    header = {
        'format_version': FORMAT_VERSION,
        'manifest': manifest,
        'model_config': cfg.to_dict(),
        'optimizer': dict(optimizer or {}),
        'seed': int(seed),
        'metadata': dict(metadata or {}),
        'payload_bytes': offset,
    }
    header_raw = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return MAGIC + struct.pack('<I', len(header_raw)) + header_raw + b''.join(chunks)


def save_checkpoint(path: str, params: ParamStore, cfg: ModelConfig, optimizer: Optional[Dict[str, float]] = None,
                    seed: int = 0, metadata: Optional[Dict] = None) -> int:
    """Write a checkpoint; returns the number of bytes written."""
    data = checkpoint_bytes(params, cfg, optimizer, seed, metadata)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)
    logger.info(f"Saved checkpoint {path} ({params.n_parameters()} parameters, {len(data)} bytes)")
    return len(data)


def _read_tensor(entry: Dict, payload: memoryview):
    shape = tuple(int(d) for d in entry['shape'])
    count = int(np.prod(shape)) if shape else 1
    start = int(entry['offset'])
    end = start + count * 4
    if entry.get('dtype') != DTYPE or count < 0 or start < 0 or end > len(payload):
        raise CorruptCheckpoint(f"tensor {entry.get('name')} lies outside the payload")
    array = np.frombuffer(payload[start:end], dtype=DTYPE).reshape(shape).astype(np.float64)
    return entry['name'], array


def parse_checkpoint(data: bytes, expected: Optional[ModelConfig] = None) -> Checkpoint:
    """
    Decode checkpoint bytes.

    Args:
        data: Raw file contents
        expected: When given, the stored model configuration must equal it

    Raises:
        CorruptCheckpoint: bad magic, truncated header or payload, bad manifest
        ConfigMismatch: stored configuration differs from `expected`
    """
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint: bad magic")
    (header_len,) = struct.unpack('<I', data[4:8])
    if len(data) < 8 + header_len:
        raise CorruptCheckpoint("truncated header")
    try:
        header = json.loads(data[8:8 + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"unreadable header: {e}")
    if not isinstance(header, dict):
        raise CorruptCheckpoint("unreadable header: not a JSON object")

    if header.get('format_version') != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {header.get('format_version')}")

    try:
        cfg = ModelConfig.from_dict(header['model_config'])
    except (KeyError, TypeError, InvalidConfig) as e:
        raise CorruptCheckpoint(f"invalid stored model config: {e}")

    if expected is not None:
        differing = cfg.diff(expected)
        if differing:
            raise ConfigMismatch(differing, "checkpoint vs requested model config")

    payload = memoryview(data)[8 + header_len:]
    if len(payload) != header.get('payload_bytes'):
        raise CorruptCheckpoint(f"payload has {len(payload)} bytes, header declares {header.get('payload_bytes')}")

    manifest = header.get('manifest', [])
    if not isinstance(manifest, list):
        raise CorruptCheckpoint("malformed manifest: not a list")
    arrays = {}
    for entry in manifest:
        try:
            name, array = _read_tensor(entry, payload)
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptCheckpoint(f"malformed manifest entry {entry!r}: {e!r}")
        arrays[name] = array

    try:
        seed = int(header.get('seed', 0))
    except (TypeError, ValueError) as e:
        raise CorruptCheckpoint(f"invalid stored seed: {e}")
    params = init_model(cfg, seed)
    try:
        params.load_arrays(arrays)
    except ShapeMismatch as e:
        raise CorruptCheckpoint(f"manifest does not match the model: {e}")

    return Checkpoint(cfg, params, header.get('optimizer', {}), seed, header.get('metadata', {}))


def load_checkpoint(path: str, expected: Optional[ModelConfig] = None) -> Checkpoint:
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {e}")
    ckpt = parse_checkpoint(data, expected)
    logger.info(f"Loaded checkpoint {path} ({ckpt.params.n_parameters()} parameters)")
    return ckpt
