"""Binary parameter container.

Layout, all integers little-endian::

    b"TFCN"                   magic
    u32 version               currently 1
    u32 in_channels
    u32 input_size
    u32 skip                  0 or 1
    u32 n_blocks
    u32 width * n_blocks
    f32 data                  every parameter, in Topology.shapes() order, C order

Momentum buffers are not stored.
"""

import struct

import numpy as np

from ..exceptions import ConfigurationError
from .model import NetworkParams, Topology

MAGIC = b"TFCN"
VERSION = 1


def _topology_header(topo):
    head = struct.pack("<4sIIIII", MAGIC, VERSION, topo.in_channels, topo.input_size,
                       int(topo.skip), topo.n_blocks)
    return head + struct.pack(f"<{topo.n_blocks}I", *topo.widths)


def dumps(params):
    chunks = [_topology_header(params.topology)]
    for name in params.topology.shapes():
        chunks.append(params.weights[name].astype("<f4").tobytes())
    return b"".join(chunks)


def loads(blob, expected=None):
    """Decode a checkpoint; reject it if ``expected`` topology differs."""
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise ConfigurationError("not a TFCN checkpoint (bad magic)")
    version, in_ch, size, skip, n_blocks = struct.unpack_from("<IIIII", blob, 4)
    if version != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    offset = 24 + 4 * n_blocks
    if len(blob) < offset:
        raise ConfigurationError("truncated checkpoint header")
    widths = struct.unpack_from(f"<{n_blocks}I", blob, 24)
    topo = Topology(widths=widths, in_channels=in_ch, skip=bool(skip), input_size=size)
    if expected is not None and expected != topo:
        raise ConfigurationError(f"checkpoint topology {topo} does not match {expected}")
    weights = {}
    for name, shape in topo.shapes().items():
        n = int(np.prod(shape))
        if len(blob) < offset + 4 * n:
            raise ConfigurationError(f"truncated checkpoint data at {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        weights[name] = arr.astype(np.float64).reshape(shape)
        offset += 4 * n
    if offset != len(blob):
        raise ConfigurationError(f"{len(blob) - offset} trailing bytes in checkpoint")
    return NetworkParams(topo, weights)


def save(params, path):
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load(path, expected=None):
    with open(path, "rb") as fh:
        return loads(fh.read(), expected)
