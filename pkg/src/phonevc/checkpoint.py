"""Checkpoint serialization.

A checkpoint is a single ``torch.save`` file holding the step counter, model
and discriminator parameter dicts, both optimizer states, the flat config,
corpus dimensions, vocabularies, and DSP settings, so inference needs nothing
but the checkpoint.  Use :func:`describe_checkpoint` to dump every parameter
name and shape.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .config import Config, desk_preset
from .nn.model import CorpusDims

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised for unreadable or incompatible checkpoints."""


def save_checkpoint(
    path: str | Path,
    step: int,
    model,
    disc,
    opt_g,
    opt_d,
    cfg: Config,
    dims: CorpusDims,
    vocab_data: dict,
    dsp_meta: dict,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "model": model.state_dict(),
        "disc": disc.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "config": cfg.to_flat(),
        "dims": dims.to_dict(),
        "vocabs": vocab_data,
        "dsp": dsp_meta,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises several unpickling error types
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path} is not a recognized checkpoint file")
    return payload


def config_from_checkpoint(payload: dict) -> Config:
    cfg = desk_preset()
    cfg.apply_flat(payload["config"])
    cfg.validate()
    return cfg


def describe_checkpoint(path: str | Path) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape for the model and discriminator banks."""
    payload = load_checkpoint(path)
    shapes: dict[str, tuple[int, ...]] = {}
    for group in ("model", "disc"):
        for name, tensor in payload[group].items():
            shapes[f"{group}.{name}"] = tuple(tensor.shape)
    return shapes
