"""Readers and writers for the on-disk formats: PFM disparity maps,
PPM/PGM images and masks, named-tensor weight files, and sequence
manifests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .camera import Pose, pose_from_flat


# --- PFM --------------------------------------------------------------

def write_pfm(path: str | Path, data: np.ndarray, scale: float = 1.0) -> None:
    """Write a single-channel PFM file.

    Header is "Pf\\n<width> <height>\\n<scale>\\n"; the sign of the
    written scale encodes endianness (negative = little-endian), and
    rows are stored bottom-to-top as 32-bit floats.
    """
    if data.ndim != 2:
        raise ValueError(f"PFM writer expects a 2-d map, got shape {data.shape}")
    if scale <= 0:
        raise ValueError("scale must be positive; endianness sets its sign")
    h, w = data.shape
    little = np.little_endian
    header = f"Pf\n{w} {h}\n{-scale if little else scale}\n".encode("ascii")
    body = np.flipud(data).astype("<f4" if little else ">f4").tobytes()
    Path(path).write_bytes(header + body)


def read_pfm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, rest = raw.split(b"\n", 1)
    if magic.strip() != b"Pf":
        raise ValueError(f"not a grayscale PFM file: magic {magic!r}")
    dims, rest = rest.split(b"\n", 1)
    w, h = (int(tok) for tok in dims.split())
    scale_line, body = rest.split(b"\n", 1)
    scale = float(scale_line)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(body[: 4 * w * h], dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


# --- PPM / PGM --------------------------------------------------------

def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 (or [0,1] float) array as binary PPM."""
    rgb = _to_u8(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM writer expects (H, W, 3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write an (H, W) uint8 (or [0,1] float) array as binary PGM."""
    gray = _to_u8(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM writer expects (H, W), got {gray.shape}")
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes())


def _to_u8(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == np.uint8:
        return a
    return np.clip(np.rint(np.asarray(a, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file.

    Returns float64 in [0, 1]: (H, W) for PGM, (H, W, 3) for PPM.
    Comment lines (#) in the header are skipped.
    """
    raw = Path(path).read_bytes()
    magic, pos = _pnm_token(raw, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    fields = []
    while len(fields) < 3:
        tok, pos = _pnm_token(raw, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"bad maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else ">u2"
    channels = 3 if magic == b"P6" else 1
    count = w * h * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    img = data.astype(np.float64) / maxval
    return img.reshape(h, w) if channels == 1 else img.reshape(h, w, 3)


def _pnm_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and # comments, return the next token and the
    # position just past its single trailing whitespace byte
    while pos < len(raw):
        c = raw[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            pos = raw.index(b"\n", pos) + 1
        else:
            break
    start = pos
    while pos < len(raw) and not raw[pos : pos + 1].isspace():
        pos += 1
    return raw[start:pos], pos + 1


def load_image_gray(path: str | Path) -> np.ndarray:
    """Read a PGM/PPM file as a grayscale float image in [0, 1]."""
    img = read_pnm(path)
    if img.ndim == 3:
        img = img @ np.array([0.299, 0.587, 0.114])
    return img


def write_error_map_ppm(path: str | Path, error: np.ndarray, max_error: float = 5.0) -> None:
    """Color-map absolute errors onto a blue (0) to red (>= max_error) ramp."""
    e = np.clip(np.abs(np.asarray(error, dtype=np.float64)) / max_error, 0.0, 1.0)
    rgb = np.stack([e, 0.25 * np.sin(np.pi * e), 1.0 - e], axis=-1)
    write_ppm(path, rgb)


# --- weight files -----------------------------------------------------

def save_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Named-tensor text format: per tensor, "name ndim extents... values..."."""
    lines = []
    for name, arr in tensors.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"tensor name may not contain whitespace: {name!r}")
        arr = np.asarray(arr, dtype=np.float64)
        parts = [name, str(arr.ndim)]
        parts += [str(e) for e in arr.shape]
        parts += [repr(v) for v in arr.ravel()]
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    tokens = Path(path).read_text().split()
    tensors: dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        name = tokens[i]
        ndim = int(tokens[i + 1])
        shape = tuple(int(tok) for tok in tokens[i + 2 : i + 2 + ndim])
        i += 2 + ndim
        n = int(np.prod(shape)) if shape else 1
        vals = np.array([float(tok) for tok in tokens[i : i + n]])
        if vals.size != n:
            raise ValueError(f"weight file truncated while reading {name!r}")
        tensors[name] = vals.reshape(shape)
        i += n
    return tensors


# --- sequence manifests ------------------------------------------------

def read_manifest(path: str | Path) -> list[tuple[str, str, Pose]]:
    """One frame per line: "<left-path> <right-path> <12 pose reals>".

    The pose is world-from-camera for the left camera of that frame.
    """
    frames = []
    base = Path(path).parent
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 14:
            raise ValueError(f"manifest line {lineno}: expected 14 fields, got {len(toks)}")
        pose = pose_from_flat(np.array([float(tok) for tok in toks[2:]]))
        frames.append((str(base / toks[0]), str(base / toks[1]), pose))
    return frames


def write_manifest(path: str | Path, frames: list[tuple[str, str, Pose]]) -> None:
    lines = []
    for left, right, pose in frames:
        mat = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(f"{left} {right} " + " ".join(repr(v) for v in mat.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")
