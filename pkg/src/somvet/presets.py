"""Named model configurations.

paper-30x30 is the reference architecture (three conv+pool stages into
dense 512 and a 120-d latent, 30x30 map, temperature 10 -> 0.01 over
15000 iterations). The desk presets are scaled-down variants that train
in minutes on a laptop and are what the test suite exercises.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nn import LayerSpec


def _conv_block(channels: int) -> list[LayerSpec]:
    return [
        LayerSpec("conv2d", features=channels, kernel_size=3),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", stride=2),
    ]


@dataclass(frozen=True)
class Preset:
    name: str
    encoder: tuple
    decoder: tuple
    latent: int
    m: int
    t0: float = 10.0
    t_min: float = 0.01
    som_iters: int = 15000
    epochs: int = 10
    learning_rate: float = 0.5
    momentum: float = 0.9
    batch_size: int = 64
    gamma: float = 1e-3


def _desk(name: str, m: int) -> Preset:
    encoder = (
        *_conv_block(8),
        LayerSpec("flatten"),
        LayerSpec("dense", features=32),
        LayerSpec("relu"),
        LayerSpec("dense", features=16),
    )
    decoder = (
        LayerSpec("dense", features=32),
        LayerSpec("relu"),
        LayerSpec("dense", features=2048),
        LayerSpec("relu"),
        LayerSpec("reshape", shape=(8, 16, 16)),
        LayerSpec("transposed-conv2d", features=1, kernel_size=3, stride=2),
    )
    return Preset(name, encoder, decoder, latent=16, m=m)


def _paper() -> Preset:
    encoder = (
        *_conv_block(32),
        *_conv_block(64),
        *_conv_block(128),
        LayerSpec("flatten"),
        LayerSpec("dense", features=512),
        LayerSpec("relu"),
        LayerSpec("dense", features=120),
    )
    decoder = (
        LayerSpec("dense", features=512),
        LayerSpec("relu"),
        LayerSpec("dense", features=2048),
        LayerSpec("relu"),
        LayerSpec("reshape", shape=(128, 4, 4)),
        LayerSpec("transposed-conv2d", features=64, kernel_size=3, stride=2),
        LayerSpec("relu"),
        LayerSpec("transposed-conv2d", features=32, kernel_size=3, stride=2),
        LayerSpec("relu"),
        LayerSpec("transposed-conv2d", features=1, kernel_size=3, stride=2),
    )
    return Preset("paper-30x30", encoder, decoder, latent=120, m=30, epochs=20)


PRESETS = {
    "paper-30x30": _paper(),
    "desk-8x8": _desk("desk-8x8", 8),
    "desk-16x16": _desk("desk-16x16", 16),
}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]
