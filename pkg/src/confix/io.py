"""Scene and camera persistence.

Scenes travel as binary little-endian PLY using the common splat layout:
positions x/y/z, colors f_dc_0..2, opacity stored as a logit, scale_0..2
stored as log-scales, and rot_0..3 as a (w, x, y, z) quaternion. The
reader maps properties by name and ignores anything it does not know
(normals, higher-order color coefficients), so dumps from other splat
tools load as long as the required fields are present.

Cameras travel as a JSON array of view records.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import CameraView, GaussianScene

_REQUIRED_PROPS = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

# PLY scalar type name -> numpy little-endian dtype string
_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


def save_scene(path: str | Path, scene: GaussianScene) -> None:
    """Write a scene as binary little-endian PLY (float32 properties)."""
    scene.validate()
    path = Path(path)
    n = len(scene)
    header_lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {n}",
    ]
    header_lines += [f"property float {name}" for name in _REQUIRED_PROPS]
    header_lines.append("end_header")
    header = "\n".join(header_lines) + "\n"

    data = np.empty((n, len(_REQUIRED_PROPS)), dtype="<f4")
    data[:, 0:3] = scene.means
    data[:, 3:6] = scene.colors
    data[:, 6] = scene.opacity_logits
    data[:, 7:10] = scene.log_scales
    data[:, 10:14] = scene.rotations
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def load_scene(path: str | Path) -> GaussianScene:
    """Read a splat PLY file.

    Args:
        path: PLY file in binary little-endian format.

    Returns:
        The parsed scene, in file record order.

    Raises:
        ValueError: malformed header, missing required property, or
            non-finite record values (the message names the record index).
    """
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()

    end_tag = b"end_header\n"
    end = blob.find(end_tag)
    if not blob.startswith(b"ply") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(end_tag):]

    fmt = None
    count = None
    fields: list[tuple[str, str]] = []
    in_vertex = False
    for line in header[1:]:
        parts = line.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] == "vertex":
                in_vertex = True
                count = int(parts[2])
            else:
                if count is None:
                    raise ValueError(f"{path}: element '{parts[1]}' before vertex data is unsupported")
                in_vertex = False
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise ValueError(f"{path}: list properties are unsupported")
            type_name, prop_name = parts[1], parts[2]
            if type_name not in _PLY_DTYPES:
                raise ValueError(f"{path}: unknown property type '{type_name}'")
            fields.append((prop_name, _PLY_DTYPES[type_name]))
    if fmt != "binary_little_endian":
        raise ValueError(f"{path}: format must be binary_little_endian, got {fmt!r}")
    if count is None:
        raise ValueError(f"{path}: no vertex element")
    missing = [name for name in _REQUIRED_PROPS if name not in dict(fields)]
    if missing:
        raise ValueError(f"{path}: missing required propert{'y' if len(missing) == 1 else 'ies'}: {', '.join(missing)}")

    dtype = np.dtype(fields)
    need = count * dtype.itemsize
    if len(body) < need:
        raise ValueError(f"{path}: truncated vertex data ({len(body)} bytes, need {need})")
    records = np.frombuffer(body[:need], dtype=dtype)

    def col(name: str) -> np.ndarray:
        return records[name].astype(np.float64)

    scene = GaussianScene(
        means=np.stack([col("x"), col("y"), col("z")], axis=1),
        log_scales=np.stack([col(f"scale_{i}") for i in range(3)], axis=1),
        rotations=np.stack([col(f"rot_{i}") for i in range(4)], axis=1),
        opacity_logits=col("opacity"),
        colors=np.stack([col(f"f_dc_{i}") for i in range(3)], axis=1),
    )
    try:
        scene.validate()
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return scene


def save_cameras(path: str | Path, views: list[CameraView]) -> None:
    records = [
        {
            "view_id": v.view_id,
            "is_support": v.is_support,
            "width": v.width,
            "height": v.height,
            "K": [float(x) for x in v.K.reshape(-1)],
            "R": [float(x) for x in v.R.reshape(-1)],
            "t": [float(x) for x in v.t],
        }
        for v in views
    ]
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def load_cameras(path: str | Path) -> list[CameraView]:
    """Read a cameras.json array; view ids must be unique."""
    path = Path(path)
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(records, list):
        raise ValueError(f"{path}: expected a JSON array of views")
    views = []
    for i, rec in enumerate(records):
        required = {"view_id", "is_support", "width", "height", "K", "R", "t"}
        missing = required - set(rec)
        if missing:
            raise ValueError(f"{path}: view record {i} missing keys: {sorted(missing)}")
        try:
            views.append(
                CameraView(
                    view_id=int(rec["view_id"]),
                    is_support=bool(rec["is_support"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    K=np.array(rec["K"], dtype=np.float64).reshape(3, 3),
                    R=np.array(rec["R"], dtype=np.float64).reshape(3, 3),
                    t=np.array(rec["t"], dtype=np.float64),
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}: view record {i}: {exc}") from None
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate view ids")
    return views
