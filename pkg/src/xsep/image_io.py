"""Image file I/O: PNG (via Pillow) and binary PGM/PPM.

Grayscale images may be 8- or 16-bit; RGB images are 8-bit.  Loading
scales values to [0, 1] by the bit-depth maximum; saving quantizes with
rounding, clamping out-of-range values with a warning.  File bytes are
deterministic for identical inputs.
"""

import logging

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

PNM_MAGICS = {b"P5": 1, b"P6": 3}


class ImageFormatError(ValueError):
    """Unsupported or corrupt image file."""


def load_image(path):
    """Read PNG/PGM/PPM; returns a (H, W) plane or a (3, H, W) RGB image
    with values in [0, 1]."""
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in PNM_MAGICS:
        return _load_pnm(path)
    if head == b"\x89P":
        return _load_png(path)
    raise ImageFormatError(f"{path}: unsupported format (magic {head!r})")


def _load_png(path):
    with Image.open(path) as img:
        mode = img.mode
        if mode in ("L", "I;16", "I"):
            arr = np.asarray(img, dtype=np.float64)
            maxval = 255.0 if mode == "L" else 65535.0
            return arr / maxval
        if mode == "RGB":
            arr = np.asarray(img, dtype=np.float64) / 255.0
            return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise ImageFormatError(f"{path}: unsupported PNG mode {mode!r}")


def _load_pnm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        magic, width, height, maxval, offset = _parse_pnm_header(data)
    except (ValueError, IndexError) as exc:
        raise ImageFormatError(f"{path}: corrupt header ({exc})") from exc
    channels = PNM_MAGICS[magic]
    if maxval not in (255, 65535):
        raise ImageFormatError(f"{path}: unsupported maxval {maxval}")
    if channels == 3 and maxval != 255:
        raise ImageFormatError(f"{path}: 16-bit RGB is unsupported")
    count = width * height * channels
    itemsize = 1 if maxval == 255 else 2
    if len(data) - offset < count * itemsize:
        raise ImageFormatError(f"{path}: truncated pixel data at byte {len(data)}")
    dtype = np.uint8 if maxval == 255 else ">u2"
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    arr = raw.astype(np.float64) / maxval
    if channels == 1:
        return arr.reshape(height, width)
    return np.ascontiguousarray(arr.reshape(height, width, 3).transpose(2, 0, 1))


def _parse_pnm_header(data):
    # magic, then three decimal fields (width, height, maxval) separated by
    # whitespace/comments, then a single whitespace byte before the pixels.
    magic = data[:2]
    if magic not in PNM_MAGICS:
        raise ValueError(f"bad magic {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError(f"expected digits at byte {pos}")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ValueError(f"missing header terminator at byte {pos}")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"bad dimensions {width}x{height}")
    return magic, width, height, maxval, pos


def _quantize(values, maxval):
    values = np.asarray(values, dtype=np.float64)
    if values.min() < 0.0 or values.max() > 1.0:
        log.warning(
            "image values outside [0, 1] (range [%.4g, %.4g]); clamping",
            values.min(), values.max(),
        )
        values = np.clip(values, 0.0, 1.0)
    return np.rint(values * maxval)


def save_image(image, path, bit_depth=16):
    """Write a plane (grayscale) or (3, H, W) array (RGB) as PNG or
    PGM/PPM depending on the file extension."""
    path = str(path)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (2, 3) or (image.ndim == 3 and image.shape[0] != 3):
        raise ValueError(f"expected (H, W) or (3, H, W), got {image.shape}")
    if bit_depth not in (8, 16):
        raise ValueError(f"bit depth must be 8 or 16, got {bit_depth}")
    rgb = image.ndim == 3
    if rgb and bit_depth == 16:
        raise ValueError("16-bit RGB is unsupported")
    lower = path.lower()
    if lower.endswith(".png"):
        _save_png(image, path, bit_depth, rgb)
    elif lower.endswith((".pgm", ".ppm", ".pnm")):
        _save_pnm(image, path, bit_depth, rgb)
    else:
        raise ValueError(f"{path}: unknown extension (use .png, .pgm or .ppm)")


def _save_png(image, path, bit_depth, rgb):
    if rgb:
        q = _quantize(image, 255).astype(np.uint8)
        Image.fromarray(np.ascontiguousarray(q.transpose(1, 2, 0)), "RGB").save(path)
    elif bit_depth == 8:
        Image.fromarray(_quantize(image, 255).astype(np.uint8), "L").save(path)
    else:
        arr = _quantize(image, 65535).astype(np.uint16)
        Image.fromarray(arr).save(path)  # uint16 infers 16-bit grayscale


def _save_pnm(image, path, bit_depth, rgb):
    maxval = 255 if bit_depth == 8 else 65535
    q = _quantize(image, maxval)
    if rgb:
        header = b"P6\n%d %d\n%d\n" % (image.shape[2], image.shape[1], maxval)
        payload = q.transpose(1, 2, 0).astype(np.uint8).tobytes()
    else:
        header = b"P5\n%d %d\n%d\n" % (image.shape[1], image.shape[0], maxval)
        dtype = np.uint8 if maxval == 255 else ">u2"
        payload = q.astype(dtype).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
