"""Region-level and clip-level embedding backbones.

Any embedding with the configured output width is acceptable to the
downstream pipeline, so backbones are pluggable: torchvision classifiers
truncated at the penultimate fully-connected layer (4096-wide) for region
crops, a compact 3D conv net for clips, and a lightweight seeded random
conv net for offline use. Pretrained weights are only ever read from a
local file; without one the networks keep their seeded random
initialization (recorded in the manifest).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

REGION_BACKBONES = ("alexnet", "vgg16", "random")
BLOCK_BACKBONES = ("conv3d", "random")

REGION_INPUT = 224
RANDOM_REGION_INPUT = 64
CLIP_INPUT = 112


class MissingWeights(RuntimeError):
    pass


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)


def _truncated_classifier(name: str) -> nn.Module:
    import torchvision.models as models

    if name == "alexnet":
        net = models.alexnet(weights=None)
    else:
        net = models.vgg16(weights=None)
    # keep everything up to the second ReLU of the classifier: 4096-wide
    net.classifier = nn.Sequential(*list(net.classifier.children())[:-1])
    return net


class RandomRegionNet(nn.Module):
    """Small conv encoder with a seeded random projection head."""

    def __init__(self, out_dim: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
        )
        self.head = nn.Linear(32 * 16, out_dim)

    def forward(self, x):
        return self.head(torch.flatten(self.features(x), 1))


class Conv3dClipNet(nn.Module):
    """Compact spatiotemporal encoder for 16-frame clips."""

    def __init__(self, out_dim: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv3d(3, 16, (3, 5, 5), stride=(1, 2, 2), padding=(1, 2, 2)),
            nn.ReLU(),
            nn.MaxPool3d((2, 2, 2)),
            nn.Conv3d(16, 32, 3, stride=(1, 2, 2), padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool3d((2, 3, 3)),
        )
        self.head = nn.Linear(32 * 2 * 9, out_dim)

    def forward(self, x):  # x: (n, 3, frames, h, w)
        return self.head(torch.flatten(self.features(x), 1))


def _maybe_load(net: nn.Module, weights_path) -> None:
    if weights_path is None:
        return
    try:
        state = torch.load(weights_path, map_location="cpu",
                           weights_only=True)
    except (FileNotFoundError, RuntimeError) as exc:
        raise MissingWeights(f"cannot load weights {weights_path}: {exc}")
    net.load_state_dict(state)


class RegionBackbone:
    def __init__(self, name: str, out_dim: int = 4096, seed: int = 0,
                 weights_path=None):
        if name not in REGION_BACKBONES:
            raise ValueError(f"unknown region backbone {name!r}")
        _seed_everything(seed)
        if name == "random":
            self.input_size = RANDOM_REGION_INPUT
            self.net = RandomRegionNet(out_dim)
        else:
            if out_dim != 4096:
                raise ValueError(f"{name} emits 4096-wide embeddings")
            self.input_size = REGION_INPUT
            self.net = _truncated_classifier(name)
        _maybe_load(self.net, weights_path)
        self.net.eval()
        self.name = name
        self.out_dim = out_dim
        self.pretrained = weights_path is not None

    @torch.no_grad()
    def embed(self, crops: np.ndarray) -> np.ndarray:
        """crops: (n, size, size, 3) uint8 -> (n, out_dim) float32."""
        x = torch.from_numpy(crops.astype(np.float32) / 255.0)
        x = x.permute(0, 3, 1, 2)
        return self.net(x).numpy().astype(np.float32)


class BlockBackbone:
    def __init__(self, name: str, out_dim: int = 4096, seed: int = 0,
                 weights_path=None):
        if name not in BLOCK_BACKBONES:
            raise ValueError(f"unknown block backbone {name!r}")
        _seed_everything(seed + 1)
        self.input_size = CLIP_INPUT if name == "conv3d" else RANDOM_REGION_INPUT
        self.net = Conv3dClipNet(out_dim)
        _maybe_load(self.net, weights_path)
        self.net.eval()
        self.name = name
        self.out_dim = out_dim
        self.pretrained = weights_path is not None

    @torch.no_grad()
    def embed(self, clip: np.ndarray) -> np.ndarray:
        """clip: (frames, size, size, 3) uint8 -> (out_dim,) float32."""
        x = torch.from_numpy(clip.astype(np.float32) / 255.0)
        x = x.permute(3, 0, 1, 2).unsqueeze(0)
        return self.net(x).numpy().astype(np.float32)[0]
