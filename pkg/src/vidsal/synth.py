"""Synthetic clip generator: textured moving squares over a noise background.

Gives every pipeline stage a ground truth: per-frame masks, per-object
presence extents, and exact flow fields. Pixels of an object that vanishes
at the next frame (or appeared at this one, for backward flow) get an
out-of-frame displacement so warping treats them as unmatched.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .core import FlowField, Frame
from .errors import InvalidArgument
from .flow import write_flow

EXTENTS_FILE = "extents.txt"

BG_LOW, BG_HIGH = 10, 110
FG_LOW, FG_HIGH = 145, 255
TEXTURE_SMOOTHING = 1.5  # correlation length in pixels


def _textured_noise(rng: np.random.Generator, height: int, width: int,
                    low: int, high: int) -> np.ndarray:
    """Locally smooth noise texture spanning [low, high] per channel."""
    field = rng.random((height, width, 3))
    for ch in range(3):
        field[..., ch] = gaussian_filter(field[..., ch], TEXTURE_SMOOTHING,
                                         mode="wrap")
        lo, hi = field[..., ch].min(), field[..., ch].max()
        field[..., ch] = (field[..., ch] - lo) / (hi - lo)
    return np.round(low + field * (high - low)).astype(np.uint8)


@dataclass(frozen=True)
class MovingSquare:
    size: int
    start: tuple[int, int]  # (x, y) at first_frame
    velocity: tuple[int, int]  # integer pixels per frame
    first_frame: int
    last_frame: int

    def position(self, t: int) -> tuple[int, int]:
        step = t - self.first_frame
        return (self.start[0] + self.velocity[0] * step,
                self.start[1] + self.velocity[1] * step)

    def present(self, t: int) -> bool:
        return self.first_frame <= t <= self.last_frame


@dataclass(frozen=True)
class SynthClip:
    frames: tuple[Frame, ...]
    gt_masks: tuple[np.ndarray, ...]
    extents: tuple[tuple[int, int, int], ...]  # (object_id, first, last)
    flows_fwd: tuple[FlowField, ...]
    flows_bwd: tuple[FlowField, ...]
    object_masks: tuple[tuple[np.ndarray, ...], ...]  # [object][frame]


def generate_clip(num_frames: int = 32, width: int = 64, height: int = 64,
                  seed: int = 7, second_object: bool = False) -> SynthClip:
    if num_frames < 2 or width < 32 or height < 32:
        raise InvalidArgument("clip must have >= 2 frames and be >= 32x32")
    rng = np.random.default_rng(seed)
    background = _textured_noise(rng, height, width, BG_LOW, BG_HIGH)

    objects = [MovingSquare(size=16, start=(6, 6), velocity=(1, 1),
                            first_frame=0, last_frame=num_frames - 1)]
    if second_object:
        objects.append(MovingSquare(
            size=8, start=(width - 18, height - 20), velocity=(-1, 0),
            first_frame=min(10, num_frames // 3),
            last_frame=min(21, num_frames - 4)))
    textures = [_textured_noise(rng, o.size, o.size, FG_LOW, FG_HIGH)
                for o in objects]

    for obj in objects:
        for t in (obj.first_frame, obj.last_frame):
            x, y = obj.position(t)
            if not (0 <= x and x + obj.size <= width
                    and 0 <= y and y + obj.size <= height):
                raise InvalidArgument("object leaves the frame; shrink the clip")

    frames, masks = [], []
    per_object = [[] for _ in objects]
    for t in range(num_frames):
        img = background.copy()
        mask = np.zeros((height, width), dtype=bool)
        for oi, (obj, tex) in enumerate(zip(objects, textures)):
            omask = np.zeros((height, width), dtype=bool)
            if obj.present(t):
                x, y = obj.position(t)
                img[y:y + obj.size, x:x + obj.size] = tex
                omask[y:y + obj.size, x:x + obj.size] = True
            mask |= omask
            per_object[oi].append(omask)
        frames.append(Frame(width=width, height=height, pixels=img, index=t))
        masks.append(mask)

    # pixels without a correspondence (occluded, disoccluded, or belonging to
    # a vanishing/appearing object) get an out-of-frame displacement so that
    # warping counts them as unmatched
    sentinel = (2.0 * width, 2.0 * height)
    fwd, bwd = [], []
    for t in range(num_frames - 1):
        vf = np.zeros((height, width, 2), dtype=np.float32)
        vb = np.zeros((height, width, 2), dtype=np.float32)
        vf[~masks[t] & masks[t + 1]] = sentinel  # about to be covered
        vb[~masks[t + 1] & masks[t]] = sentinel  # just revealed
        for obj in objects:
            if obj.present(t):
                x, y = obj.position(t)
                sl = np.s_[y:y + obj.size, x:x + obj.size]
                vf[sl] = obj.velocity if obj.present(t + 1) else sentinel
            if obj.present(t + 1):
                x, y = obj.position(t + 1)
                sl = np.s_[y:y + obj.size, x:x + obj.size]
                vb[sl] = ((-obj.velocity[0], -obj.velocity[1])
                          if obj.present(t) else sentinel)
        fwd.append(FlowField(width=width, height=height, vectors=vf))
        bwd.append(FlowField(width=width, height=height, vectors=vb))

    extents = tuple((i, o.first_frame, o.last_frame)
                    for i, o in enumerate(objects))
    return SynthClip(frames=tuple(frames), gt_masks=tuple(masks),
                     extents=extents, flows_fwd=tuple(fwd),
                     flows_bwd=tuple(bwd),
                     object_masks=tuple(tuple(m) for m in per_object))


def write_clip(clip: SynthClip, directory) -> None:
    """Lay out frames/, gt/, flows/ and the extents file."""
    directory = Path(directory)
    for sub in ("frames", "gt", "flows"):
        (directory / sub).mkdir(parents=True, exist_ok=True)
    for frame in clip.frames:
        Image.fromarray(np.asarray(frame.pixels)).save(
            directory / "frames" / f"frame_{frame.index:05d}.png")
    for t, mask in enumerate(clip.gt_masks):
        Image.fromarray((mask * np.uint8(255))).save(
            directory / "gt" / f"gt_{t:05d}.png")
    for t, (vf, vb) in enumerate(zip(clip.flows_fwd, clip.flows_bwd)):
        write_flow(vf, directory / "flows" / f"fwd_{t:05d}.flo")
        write_flow(vb, directory / "flows" / f"bwd_{t:05d}.flo")
    with open(directory / EXTENTS_FILE, "w") as fh:
        for object_id, first, last in clip.extents:
            fh.write(f"{object_id} {first} {last}\n")


def read_extents(path) -> list[tuple[int, int, int]]:
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append((int(parts[0]), int(parts[1]), int(parts[2])))
    return out
