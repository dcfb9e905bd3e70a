"""Classifier pools and the four inference frameworks.

A pool holds one per-scenario classifier in fixed order. On top of it sit:
the single model (no pool), majority vote, stacking over concatenated member
posteriors, and dynamic selection through a scenario-identity selector that
routes each input to one member.
"""

from __future__ import annotations

import json
import logging
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from sklearn.svm import SVC
from torch import nn

from .backbones import (
    BackboneSpec,
    ModelHandle,
    build_model,
    load_model,
    predict_proba,
    resize_patches,
    save_model,
)
from .errors import DataError, PoolSignatureMismatch
from .records import EMPTY, LABELS, OCCUPIED, SampleRecord
from .splits import ScenarioSplit
from .training import TrainConfig, fit_classifier, train, union_records

log = logging.getLogger(__name__)

FRAMEWORK_KINDS = ("single_model", "dynamic_selection", "stacking", "majority_vote")

# Fixed posterior ordering: [p(empty), p(occupied)] per member, members in
# pool order. Serialized in pool.json because stacking breaks silently if the
# convention drifts.
POSTERIOR_ORDER = LABELS


@dataclass(frozen=True)
class Pool:
    """Ordered, immutable collection of per-scenario classifiers."""

    members: tuple[tuple[str, ModelHandle], ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 2:
            raise DataError("pool requires >= 2 members")
        keys = [k for k, _ in self.members]
        if len(set(keys)) != len(keys):
            raise DataError(f"pool scenario keys must be distinct, got {keys}")
        for key, handle in self.members:
            if handle.num_classes != 2:
                raise DataError(f"pool member {key!r} is not a 2-class model")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def scenario_keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.members)

    @property
    def family(self) -> str:
        return self.members[0][1].spec.family


@dataclass
class MetaModel:
    """Fusion-level model: a stacking estimator or the dynse selector."""

    kind: str  # stacking_svm | stacking_mlp | dynse_selector
    estimator: object  # sklearn estimator, or ModelHandle for dynse
    pool_signature: tuple[str, ...]

    def check_pool(self, pool: Pool) -> None:
        if tuple(pool.scenario_keys) != tuple(self.pool_signature):
            raise PoolSignatureMismatch(
                f"meta-model trained against pool {list(self.pool_signature)}, "
                f"applied to pool {list(pool.scenario_keys)}"
            )


def pool_posteriors(pool: Pool, patches: np.ndarray) -> np.ndarray:
    """(N, 2n) posterior matrix: member posteriors concatenated in pool order."""
    patches = np.asarray(patches)
    if patches.ndim == 3:
        patches = patches[None]
    blocks = []
    for _, handle in pool.members:
        resized = resize_patches(patches, handle.input_size)
        blocks.append(predict_proba(handle, resized))
    return np.concatenate(blocks, axis=1)


def posterior_vector(pool: Pool, patch: np.ndarray) -> np.ndarray:
    """Length-2n vector [p1(empty), p1(occupied), p2(empty), ...]."""
    return pool_posteriors(pool, patch)[0]


def fuse_votes(member_probs: np.ndarray) -> tuple[str, dict]:
    """Majority vote over one sample's (n_members, 2) posterior block.

    Each member votes its argmax; absolute majority wins. Even-pool ties fall
    back to the higher mean posterior across members; an exact residual tie
    goes to occupied (never claim a free spot on a coin flip).
    """
    member_probs = np.asarray(member_probs, dtype=np.float64)
    votes = member_probs.argmax(axis=1)
    n_occ = int(votes.sum())
    n_emp = len(votes) - n_occ
    tally = {
        "votes": {EMPTY: n_emp, OCCUPIED: n_occ},
        "tie_break": None,
        "mean_posterior": member_probs.mean(axis=0).tolist(),
    }
    if n_occ > n_emp:
        return OCCUPIED, tally
    if n_emp > n_occ:
        return EMPTY, tally
    mean = member_probs.mean(axis=0)
    if mean[1] > mean[0]:
        tally["tie_break"] = "mean_posterior"
        return OCCUPIED, tally
    if mean[0] > mean[1]:
        tally["tie_break"] = "mean_posterior"
        return EMPTY, tally
    tally["tie_break"] = "default_occupied"
    return OCCUPIED, tally


def majority_vote(pool: Pool, patch: np.ndarray) -> tuple[str, dict]:
    probs = pool_posteriors(pool, patch)[0].reshape(len(pool), 2)
    return fuse_votes(probs)


def train_pool(
    source_scenarios: Sequence[ScenarioSplit],
    spec: BackboneSpec,
    config: TrainConfig,
    load_pretrained: bool | None = None,
) -> Pool:
    """One member per scenario, each trained on that scenario alone."""
    if len(source_scenarios) < 2:
        raise DataError("pool requires >= 2 members")
    members = []
    for split in source_scenarios:
        model = build_model(spec, init_seed=config.seed, load_pretrained=load_pretrained)
        run = train(model, split, config)
        log.info(
            "pool member %s: best val acc %.4f (epoch %d)",
            split.scenario_key, run.model.metadata["val_accuracy"], run.chosen_epoch,
        )
        members.append((split.scenario_key, run.model))
    return Pool(members=tuple(members))


def build_single_model(
    source_scenarios: Sequence[ScenarioSplit] | ScenarioSplit,
    spec: BackboneSpec,
    config: TrainConfig,
    load_pretrained: bool | None = None,
) -> ModelHandle:
    """The single global model: trained on the union of all source scenarios."""
    model = build_model(spec, init_seed=config.seed, load_pretrained=load_pretrained)
    train(model, source_scenarios, config)
    return model


class ShallowMLP:
    """Stacking MLP with the literal layer sizes [16, 8, 2], softmax output.

    sklearn-like fit/predict_proba surface so it is interchangeable with the
    SVM estimator; trained full-batch with Adam, seeded for determinism.
    """

    hidden_layer_sizes = (16, 8)

    def __init__(self, seed: int = 0, epochs: int = 400, lr: float = 1e-2):
        self.seed = seed
        self.epochs = epochs
        self.lr = lr
        self.net: nn.Sequential | None = None
        self.n_features_in_: int | None = None
        self.n_outputs_ = 2

    def fit(self, x: np.ndarray, y: np.ndarray) -> "ShallowMLP":
        x = np.asarray(x, dtype=np.float32)
        self.n_features_in_ = x.shape[1]
        torch.manual_seed(self.seed)
        self.net = nn.Sequential(
            nn.Linear(x.shape[1], 16), nn.ReLU(),
            nn.Linear(16, 8), nn.ReLU(),
            nn.Linear(8, 2),
        )
        xt = torch.from_numpy(x)
        yt = torch.from_numpy(np.asarray(y, dtype=np.int64))
        optimizer = torch.optim.Adam(self.net.parameters(), lr=self.lr)
        loss_fn = nn.CrossEntropyLoss()
        for _ in range(self.epochs):
            optimizer.zero_grad()
            loss = loss_fn(self.net(xt), yt)
            loss.backward()
            optimizer.step()
        self.net.eval()
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.net is None:
            raise DataError("ShallowMLP is not fitted")
        with torch.no_grad():
            logits = self.net(torch.from_numpy(np.asarray(x, dtype=np.float32)))
            return torch.softmax(logits, dim=1).numpy()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def train_stacking_meta(
    pool: Pool,
    train_records: Sequence[SampleRecord],
    kind: str = "svm",
    seed: int = 0,
) -> MetaModel:
    """Fit the stacking meta-model on pool posteriors of training samples.

    svm: RBF kernel, C=0.1. mlp: layer sizes [16, 8, 2]. Training on the
    members' own training samples is the default; their near-perfect
    posteriors there are a known overfit risk, so callers wanting a held-out
    meta signal can pass validation records instead.
    """
    if kind not in ("svm", "mlp"):
        raise DataError(f"stacking kind must be svm or mlp, got {kind!r}")
    if not train_records:
        raise DataError("stacking meta-model needs training records")
    outside = sorted(
        {r.scenario_key for r in train_records} - set(pool.scenario_keys)
    )
    if outside:
        log.warning("stacking records from scenarios outside the pool: %s", outside)

    from .records import load_patch

    patches = np.stack([load_patch(r) for r in train_records])
    x = pool_posteriors(pool, patches)
    y = np.array([LABELS.index(r.label) for r in train_records], dtype=np.int64)
    if kind == "svm":
        estimator: object = SVC(kernel="rbf", C=0.1, probability=True, random_state=seed)
    else:
        estimator = ShallowMLP(seed=seed)
    estimator.fit(x, y)
    return MetaModel(
        kind=f"stacking_{kind}", estimator=estimator, pool_signature=pool.scenario_keys
    )


def stacking_predict_batch(
    pool: Pool, meta: MetaModel, patches: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Labels (as indices) and confidences for a batch via the meta-model."""
    if not meta.kind.startswith("stacking_"):
        raise DataError(f"not a stacking meta-model: {meta.kind}")
    meta.check_pool(pool)
    x = pool_posteriors(pool, patches)
    proba = meta.estimator.predict_proba(x)
    labels = proba.argmax(axis=1)
    return labels, proba.max(axis=1)


def stacking_predict(pool: Pool, meta: MetaModel, patch: np.ndarray) -> str:
    labels, _ = stacking_predict_batch(pool, meta, patch[None] if patch.ndim == 3 else patch)
    return LABELS[int(labels[0])]


def train_dynse_selector(
    source_scenarios: Sequence[ScenarioSplit],
    spec: BackboneSpec,
    config: TrainConfig,
    load_pretrained: bool | None = None,
) -> MetaModel:
    """Train the competence selector: patch -> source scenario index.

    Uses the same backbone family as the pool, with an n-way softmax head.
    """
    if len(source_scenarios) < 2:
        raise DataError("dynse selector needs >= 2 source scenarios")
    keys = tuple(s.scenario_key for s in source_scenarios)
    scenario_index = {k: i for i, k in enumerate(keys)}
    train_records, val_records = union_records(list(source_scenarios))
    selector = build_model(
        spec,
        num_classes=len(keys),
        init_seed=config.seed,
        load_pretrained=load_pretrained,
    )
    fit_classifier(
        selector,
        train_records,
        val_records,
        config,
        class_of=lambda r: scenario_index[r.scenario_key],
    )
    selector.metadata["scenario_keys"] = list(keys)
    return MetaModel(kind="dynse_selector", estimator=selector, pool_signature=keys)


def dynse_predict_batch(
    pool: Pool, selector: MetaModel, patches: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, confidences, selected member indices) under hard routing.

    The member with the highest selector score handles the sample; score ties
    resolve to the lowest member index (argmax convention).
    """
    if selector.kind != "dynse_selector":
        raise DataError(f"not a dynse selector: {selector.kind}")
    selector.check_pool(pool)
    handle: ModelHandle = selector.estimator  # type: ignore[assignment]
    patches = np.asarray(patches)
    if patches.ndim == 3:
        patches = patches[None]
    scores = predict_proba(handle, resize_patches(patches, handle.input_size))
    chosen = scores.argmax(axis=1)
    member_probs = pool_posteriors(pool, patches).reshape(len(patches), len(pool), 2)
    routed = member_probs[np.arange(len(patches)), chosen]
    return routed.argmax(axis=1), routed.max(axis=1), chosen


def dynse_predict(pool: Pool, selector: MetaModel, patch: np.ndarray) -> tuple[str, str]:
    """(label, selected scenario key) for one patch."""
    labels, _, chosen = dynse_predict_batch(pool, selector, patch)
    return LABELS[int(labels[0])], pool.scenario_keys[int(chosen[0])]


def save_pool(pool: Pool, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scenario_keys": list(pool.scenario_keys),
        "family": pool.family,
        "posterior_order": list(POSTERIOR_ORDER),
        "members": {},
    }
    for key, handle in pool.members:
        member_dir = directory / "members" / key
        save_model(handle, member_dir)
        manifest["members"][key] = str(member_dir.relative_to(directory))
    (directory / "pool.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def load_pool(directory: str | Path) -> Pool:
    directory = Path(directory)
    manifest = json.loads((directory / "pool.json").read_text(encoding="utf-8"))
    if tuple(manifest.get("posterior_order", ())) != POSTERIOR_ORDER:
        raise DataError(
            f"pool at {directory} uses posterior order "
            f"{manifest.get('posterior_order')}, expected {list(POSTERIOR_ORDER)}"
        )
    members = tuple(
        (key, load_model(directory / manifest["members"][key]))
        for key in manifest["scenario_keys"]
    )
    return Pool(members=members)


def save_meta(meta: MetaModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    info = {"kind": meta.kind, "pool_signature": list(meta.pool_signature)}
    (directory / "meta.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    if meta.kind == "dynse_selector":
        save_model(meta.estimator, directory / "selector")  # type: ignore[arg-type]
    else:
        with (directory / "estimator.pkl").open("wb") as fh:
            pickle.dump(meta.estimator, fh)


def load_meta(directory: str | Path) -> MetaModel:
    directory = Path(directory)
    info = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    if info["kind"] == "dynse_selector":
        estimator: object = load_model(directory / "selector")
    else:
        with (directory / "estimator.pkl").open("rb") as fh:
            estimator = pickle.load(fh)
    return MetaModel(
        kind=info["kind"],
        estimator=estimator,
        pool_signature=tuple(info["pool_signature"]),
    )
