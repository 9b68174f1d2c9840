from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any

import torch

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, kind: str, payload: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format_version": FORMAT_VERSION, "kind": kind, **payload}, path)
    return path


def load_checkpoint(path: str | Path, kind: str) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(data, dict) or "format_version" not in data:
        raise CheckpointError(f"{path} is not a checkpoint written by this package")
    if data["format_version"] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {data['format_version']}, expected {FORMAT_VERSION}")
    if data.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {data.get('kind')!r} checkpoint, expected {kind!r}")
    return data


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parameter_checksum(module: torch.nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    h = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
