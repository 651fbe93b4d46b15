"""Binary checkpoint format for network parameters.

Layout (all integers and floats little-endian):

    bytes 0..3    magic "XSEP"
    u32           format version (currently 1)
    u32 x 5       architecture header: channels K, transforms I,
                  depth L, filter size f, patch size
    payload       every parameter tensor as float64, row-major, in the
                  canonical order of network.param_names()
    8 bytes       blake2b-64 checksum of the payload

Save -> load roundtrips are bit-exact; the checksum is verified on load
and the architecture header must match any expectations the caller
states.
"""

import hashlib
import struct

import numpy as np

from .network import dict_to_params, param_names, params_to_dict

MAGIC = b"XSEP"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


def _payload_bytes(params):
    d = params_to_dict(params)
    chunks = []
    for name in param_names(params.channels, params.transforms):
        value = d[name]
        if isinstance(value, np.ndarray):
            chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
        else:
            chunks.append(struct.pack("<d", float(value)))
    return b"".join(chunks)


def save_checkpoint(params, path, patch_size=50):
    """Serialize params; deterministic bytes for identical inputs."""
    payload = _payload_bytes(params)
    header = struct.pack(
        "<5I",
        params.channels,
        params.transforms,
        params.depth,
        params.filter_size,
        int(patch_size),
    )
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(header)
        fh.write(payload)
        fh.write(digest)


def load_checkpoint(path, channels=None, transforms=None, depth=None,
                    filter_size=None, patch_size=None):
    """Deserialize params; returns (NetworkParams, patch_size).

    Any architecture keyword stated by the caller must match the header.
    Raises CheckpointError on bad magic, version, checksum, truncation,
    or architecture mismatch.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 + 20 + 8:
        raise CheckpointError(f"file too short ({len(blob)} bytes) to be a checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    k, i, depth_hdr, f, patch_hdr = struct.unpack_from("<5I", blob, 8)

    expectations = (
        ("channels", channels, k),
        ("transforms", transforms, i),
        ("depth", depth, depth_hdr),
        ("filter size", filter_size, f),
        ("patch size", patch_size, patch_hdr),
    )
    for label, expected, actual in expectations:
        if expected is not None and int(expected) != actual:
            raise CheckpointError(f"architecture mismatch: {label} {actual} != expected {expected}")

    payload = blob[28:-8]
    digest = blob[-8:]
    if hashlib.blake2b(payload, digest_size=8).digest() != digest:
        raise CheckpointError("checksum mismatch (truncated or corrupted payload)")

    names = param_names(k, i)
    shapes = _entry_shapes(k, i, f)
    expected_len = sum(
        8 if shapes[n] is None else 8 * int(np.prod(shapes[n])) for n in names
    )
    if len(payload) != expected_len:
        raise CheckpointError(
            f"payload length {len(payload)} does not match header arithmetic {expected_len}"
        )

    d = {}
    offset = 0
    for name in names:
        shape = shapes[name]
        if shape is None:
            (d[name],) = struct.unpack_from("<d", payload, offset)
            offset += 8
        else:
            count = int(np.prod(shape))
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            d[name] = arr.astype(np.float64).reshape(shape)
            offset += 8 * count
    return dict_to_params(d, k, i, depth_hdr), patch_hdr


def _entry_shapes(k, i, f):
    """Tensor shape per canonical name; None marks a scalar."""
    shapes = {
        "code_step": (k, f, f),
        "code_synth": (k, f, f),
        "mix_step": (f, f),
        "mix_synth": (f, f),
        "xray_synth": (k, f, f),
        "tau1": None,
        "tau2": None,
        "lambda1": None,
        "lambda2": None,
        "gamma": None,
    }
    for s in range(3):
        shapes[f"rgb_step/{s}"] = (f, f)
        shapes[f"rgb_synth/{s}"] = (f, f)
        shapes[f"rgb_out/{s}"] = (k, f, f)
    for j in range(i):
        shapes[f"mu/{j}"] = None
    return shapes
