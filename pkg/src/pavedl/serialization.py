"""Versioned binary model container.

Layout (all integers little-endian)::

    magic        8 bytes   b"PAVEDLM\\x00"
    version      uint32    FORMAT_VERSION
    header_len   uint64    byte length of the JSON header
    header       UTF-8 JSON, sorted keys, no whitespace:
                   model_spec, normalizer (or null), parameters [{name, shape}],
                   metadata (free-form JSON object)
    payload      every parameter in declaration order as row-major float64 ('<f8')

The header carries everything needed to rebuild the model; ``read`` then
``write`` reproduces the original bytes exactly.
"""

from dataclasses import dataclass, field
import json
import struct

import numpy as np

from .architectures import Model, ModelSpec
from .pms.encoding import IndicatorScaler

MAGIC = b"PAVEDLM\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class FormatError(ValueError):
    """Unreadable or version-incompatible model container."""


@dataclass
class ModelContainer:
    model: Model
    normalizer: IndicatorScaler = None
    metadata: dict = field(default_factory=dict)

    def header(self):
        return {
            "format_version": FORMAT_VERSION,
            "model_spec": self.model.spec.to_dict(),
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
            "parameters": [{"name": k, "shape": list(v.shape)} for k, v in self.model.parameters().items()],
            "metadata": self.metadata,
        }

    def to_bytes(self):
        header = json.dumps(self.header(), sort_keys=True, separators=(",", ":"),
                            allow_nan=False).encode("utf-8")
        payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes()
                           for p in self.model.parameters().values())
        return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + payload

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _PREFIX.size:
            raise FormatError("file too short to be a model container")
        magic, version, header_len = _PREFIX.unpack_from(data)
        if magic != MAGIC:
            raise FormatError("not a model container (bad magic bytes)")
        if version != FORMAT_VERSION:
            raise FormatError(f"container format version {version} is not supported (expected {FORMAT_VERSION})")
        start = _PREFIX.size
        try:
            header = json.loads(data[start:start + header_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"corrupt container header: {exc}")
        spec = ModelSpec.from_dict(header["model_spec"])
        model = Model(spec, rng=0)
        params = model.parameters()
        declared = [(p["name"], tuple(p["shape"])) for p in header["parameters"]]
        actual = [(k, v.shape) for k, v in params.items()]
        if declared != actual:
            raise FormatError("parameter table does not match the model specification")
        offset = start + header_len
        expected = offset + 8 * sum(int(np.prod(s)) for _, s in declared)
        if len(data) != expected:
            raise FormatError(f"payload size mismatch: {len(data)} bytes, expected {expected}")
        for name, shape in declared:
            count = int(np.prod(shape))
            params[name][...] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            offset += 8 * count
        normalizer = None if header["normalizer"] is None else IndicatorScaler.from_dict(header["normalizer"])
        return cls(model, normalizer, header["metadata"])


def save_model(path, model, normalizer=None, metadata=None):
    data = ModelContainer(model, normalizer, metadata or {}).to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load_model(path):
    with open(path, "rb") as fh:
        return ModelContainer.from_bytes(fh.read())
