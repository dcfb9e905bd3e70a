"""Classifier architectures behind one train/predict/persist surface.

Three families: a small 3-conv-layer network trained from scratch on 32x32
patches, and MobileNetV3-Large / ResNet-50 used as frozen feature extractors
under a learnable dense head of widths [1024, 128] on 128x128 patches. All
families expose class posteriors through a final softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import torch
from torch import nn

from .errors import DataError, ModelPersistenceError, PretrainedWeightsUnavailable

FAMILIES = ("conv3", "mobilenetv3_large", "resnet50")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_PRETRAIN_IDS = {
    "mobilenetv3_large": "torchvision/MobileNet_V3_Large_Weights.IMAGENET1K_V2",
    "resnet50": "torchvision/ResNet50_Weights.IMAGENET1K_V2",
}


@dataclass(frozen=True)
class BackboneSpec:
    """Architecture description; family fixes most of the contract."""

    family: str
    input_size: int
    head: tuple[int, ...]
    pretrained_features: bool
    frozen_features: bool

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown backbone family {self.family!r}")
        object.__setattr__(self, "head", tuple(int(w) for w in self.head))
        if self.family == "conv3":
            if self.input_size != 32 or self.pretrained_features:
                raise DataError("conv3 requires input_size 32 and no pretraining")
        else:
            if self.input_size != 128:
                raise DataError(f"{self.family} requires input_size 128")
            if not self.pretrained_features or not self.frozen_features:
                raise DataError(f"{self.family} requires pretrained, frozen features")
            if self.head != (1024, 128):
                raise DataError(f"{self.family} requires head widths (1024, 128)")

    @property
    def normalization(self) -> str:
        return "unit" if self.family == "conv3" else "imagenet"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "input_size": self.input_size,
            "head": list(self.head),
            "pretrained_features": self.pretrained_features,
            "frozen_features": self.frozen_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneSpec":
        return cls(
            family=d["family"],
            input_size=int(d["input_size"]),
            head=tuple(d["head"]),
            pretrained_features=bool(d["pretrained_features"]),
            frozen_features=bool(d["frozen_features"]),
        )


def default_spec(family: str) -> BackboneSpec:
    if family == "conv3":
        # Hidden width 24 puts the parameter count on the ~158 K contract.
        return BackboneSpec("conv3", 32, (24,), False, False)
    if family in ("mobilenetv3_large", "resnet50"):
        return BackboneSpec(family, 128, (1024, 128), True, True)
    raise DataError(f"unknown backbone family {family!r}")


class Conv3Net(nn.Module):
    """3 conv layers alternating with 2 max-pools, dense head, softmax out."""

    def __init__(self, head: Sequence[int] = (24,), num_classes: int = 2):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(64, 64, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        layers: list[nn.Module] = [nn.Flatten()]
        width = 64 * 8 * 8
        for w in head:
            layers += [nn.Linear(width, w), nn.ReLU(inplace=True)]
            width = w
        layers.append(nn.Linear(width, num_classes))
        self.classifier = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))


class FrozenFeatureNet(nn.Module):
    """Pretrained feature extractor (frozen) under a learnable dense head.

    The extractor stays in eval mode even while the head trains, so batch-norm
    running statistics are as immutable as the weights.
    """

    def __init__(self, extractor: nn.Module, feature_dim: int,
                 head: Sequence[int], num_classes: int, frozen: bool):
        super().__init__()
        self.extractor = extractor
        self.frozen = frozen
        if frozen:
            for p in self.extractor.parameters():
                p.requires_grad_(False)
            self.extractor.eval()
        layers: list[nn.Module] = []
        width = feature_dim
        for w in head:
            layers += [nn.Linear(width, w), nn.ReLU(inplace=True)]
            width = w
        layers.append(nn.Linear(width, num_classes))
        self.classifier = nn.Sequential(*layers)

    def train(self, mode: bool = True):
        super().train(mode)
        if self.frozen:
            self.extractor.eval()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.extractor(x))


class _MobileNetFeatures(nn.Module):
    def __init__(self, features: nn.Module):
        super().__init__()
        self.body = features

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.body(x)
        return torch.flatten(nn.functional.adaptive_avg_pool2d(x, 1), 1)


class _ResNetTwoStageFeatures(nn.Module):
    """Pooled features from the last two residual stages, concatenated.

    The head therefore sees 1024 + 2048 = 3072 features, which is what puts
    the trainable parameter count at ~3.2 M for the [1024, 128] head.
    """

    def __init__(self, resnet: nn.Module):
        super().__init__()
        self.stem = nn.Sequential(
            resnet.conv1, resnet.bn1, resnet.relu, resnet.maxpool,
            resnet.layer1, resnet.layer2, resnet.layer3,
        )
        self.stage5 = resnet.layer4

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s4 = self.stem(x)
        s5 = self.stage5(s4)
        p4 = torch.flatten(nn.functional.adaptive_avg_pool2d(s4, 1), 1)
        p5 = torch.flatten(nn.functional.adaptive_avg_pool2d(s5, 1), 1)
        return torch.cat([p4, p5], dim=1)


def _load_pretrained_state(family: str) -> dict:
    import torchvision.models as tvm

    try:
        if family == "mobilenetv3_large":
            weights = tvm.MobileNet_V3_Large_Weights.IMAGENET1K_V2
        else:
            weights = tvm.ResNet50_Weights.IMAGENET1K_V2
        return weights.get_state_dict(progress=False)
    except Exception as exc:
        raise PretrainedWeightsUnavailable(
            f"pretrained weights for {family} are not available: {exc}. "
            f"Download the torchvision checkpoint ({_PRETRAIN_IDS[family]}) on a "
            "machine with network access and place the .pth file under "
            "$TORCH_HOME/hub/checkpoints/ (default ~/.cache/torch/hub/checkpoints/)."
        ) from exc


@dataclass
class ModelHandle:
    """A built (possibly trained) classifier plus its provenance metadata."""

    spec: BackboneSpec
    module: nn.Module
    num_classes: int = 2
    metadata: dict = field(default_factory=dict)

    @property
    def input_size(self) -> int:
        return self.spec.input_size


def build_model(
    spec: BackboneSpec,
    num_classes: int = 2,
    load_pretrained: bool | None = None,
    init_seed: int | None = None,
) -> ModelHandle:
    """Construct an untrained model for a spec.

    load_pretrained=None follows spec.pretrained_features; passing False
    builds the identical architecture with random extractor weights, for
    offline environments and architecture-contract checks. Unavailable
    checkpoints raise PretrainedWeightsUnavailable with instructions.
    """
    import torchvision.models as tvm

    if init_seed is not None:
        torch.manual_seed(init_seed)
    want_pretrained = spec.pretrained_features if load_pretrained is None else load_pretrained
    checkpoint = None

    if spec.family == "conv3":
        module: nn.Module = Conv3Net(head=spec.head, num_classes=num_classes)
    elif spec.family == "mobilenetv3_large":
        net = tvm.mobilenet_v3_large(weights=None)
        if want_pretrained:
            net.load_state_dict(_load_pretrained_state(spec.family))
            checkpoint = _PRETRAIN_IDS[spec.family]
        module = FrozenFeatureNet(
            _MobileNetFeatures(net.features), 960, spec.head, num_classes,
            frozen=spec.frozen_features,
        )
    else:  # resnet50
        net = tvm.resnet50(weights=None)
        if want_pretrained:
            net.load_state_dict(_load_pretrained_state(spec.family))
            checkpoint = _PRETRAIN_IDS[spec.family]
        module = FrozenFeatureNet(
            _ResNetTwoStageFeatures(net), 3072, spec.head, num_classes,
            frozen=spec.frozen_features,
        )

    metadata = {
        "pretrain_checkpoint": checkpoint if want_pretrained else None,
        "normalization": spec.normalization,
        "num_classes": num_classes,
    }
    return ModelHandle(spec=spec, module=module, num_classes=num_classes, metadata=metadata)


def count_params(model: ModelHandle) -> dict[str, int]:
    total = sum(p.numel() for p in model.module.parameters())
    trainable = sum(p.numel() for p in model.module.parameters() if p.requires_grad)
    return {"total": total, "trainable": trainable}


def patches_to_tensor(patches: np.ndarray, spec: BackboneSpec) -> torch.Tensor:
    """(N, H, W, 3) uint8 -> normalized NCHW float32 tensor."""
    if patches.ndim == 3:
        patches = patches[None]
    if patches.ndim != 4 or patches.shape[-1] != 3:
        raise DataError(f"expected (N, H, W, 3) patches, got shape {patches.shape}")
    n, h, w, _ = patches.shape
    if h != spec.input_size or w != spec.input_size:
        raise DataError(
            f"patches are {h}x{w} but {spec.family} expects "
            f"{spec.input_size}x{spec.input_size}"
        )
    x = torch.from_numpy(np.ascontiguousarray(patches)).float().div_(255.0)
    x = x.permute(0, 3, 1, 2)
    if spec.normalization == "imagenet":
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        x = (x - mean) / std
    return x


def resize_patches(patches: np.ndarray, size: int) -> np.ndarray:
    """Resize a batch of (N, H, W, 3) patches to (N, size, size, 3)."""
    if patches.ndim == 3:
        patches = patches[None]
    if patches.shape[1] == size and patches.shape[2] == size:
        return patches
    out = np.empty((patches.shape[0], size, size, 3), dtype=patches.dtype)
    for i, p in enumerate(patches):
        interp = cv2.INTER_AREA if p.shape[0] > size else cv2.INTER_LINEAR
        out[i] = cv2.resize(p, (size, size), interpolation=interp)
    return out


def predict_proba(model: ModelHandle, patches: np.ndarray) -> np.ndarray:
    """Class posteriors for a batch; rows sum to 1 within 1e-5."""
    x = patches_to_tensor(np.asarray(patches), model.spec)
    model.module.eval()
    with torch.no_grad():
        logits = model.module(x)
        probs = torch.softmax(logits, dim=1)
    return probs.numpy()


def predict_labels(model: ModelHandle, patches: np.ndarray) -> np.ndarray:
    return predict_proba(model, patches).argmax(axis=1)


def save_model(model: ModelHandle, directory: str | Path) -> None:
    """Persist weights blob + metadata sidecar under one directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.module.state_dict(), directory / "weights.pt")
    sidecar = {
        "spec": model.spec.to_dict(),
        "num_classes": model.num_classes,
        "metadata": model.metadata,
    }
    (directory / "metadata.json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )


def load_model(directory: str | Path) -> ModelHandle:
    """Rebuild a model from save_model output; verifies weights match spec."""
    directory = Path(directory)
    meta_path = directory / "metadata.json"
    weights_path = directory / "weights.pt"
    if not meta_path.exists():
        raise ModelPersistenceError(f"missing metadata sidecar: {meta_path}")
    if not weights_path.exists():
        raise ModelPersistenceError(f"missing weights blob: {weights_path}")
    sidecar = json.loads(meta_path.read_text(encoding="utf-8"))
    spec = BackboneSpec.from_dict(sidecar["spec"])
    num_classes = int(sidecar.get("num_classes", 2))
    handle = build_model(spec, num_classes=num_classes, load_pretrained=False)
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    try:
        handle.module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ModelPersistenceError(
            f"weights in {directory} do not match metadata family "
            f"{spec.family!r}: {exc}"
        ) from exc
    handle.metadata = dict(sidecar.get("metadata", {}))
    return handle
