"""Planted synthetic datasets for end-to-end checks.

Each action owns 3-5 designated objects. Object words are drawn around the
action's cluster center and action words around the mean of their
designated objects, with per-coordinate noise of ``noise`` times the mean
distance between cluster centers. A video of action z puts ``mass`` of its
probability on z's designated objects and the rest on all other objects.
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from zsaction.embeddings import EmbeddingTable
from zsaction.translation import ObjectScores


@dataclass
class PlantedDataset:
    table: EmbeddingTable
    objects: List[str]
    actions: List[str]
    designated: Dict[str, List[str]]
    videos: List[ObjectScores]
    truth: Dict[str, str]


def planted_dataset(seed=0, n_objects=40, n_actions=8, n_videos=200, dim=32, noise=0.05, mass=0.8,
                    group_sizes=(3, 5)) -> PlantedDataset:
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_actions, dim))
    diffs = centers[:, None, :] - centers[None, :, :]
    dists = np.sqrt((diffs ** 2).sum(-1))[np.triu_indices(n_actions, 1)]
    sd = noise * float(dists.mean())

    sizes = rng.integers(group_sizes[0], group_sizes[1] + 1, size=n_actions)
    if sizes.sum() > n_objects:
        raise ValueError("not enough objects for the requested designated groups")
    owner = np.full(n_objects, -1)
    perm = rng.permutation(n_objects)
    start = 0
    for z, s in enumerate(sizes):
        owner[perm[start:start + s]] = z
        start += s

    tokens, vecs = [], []
    objects = [f"obj{i:02d}" for i in range(n_objects)]
    obj_vecs = np.empty((n_objects, dim))
    for i in range(n_objects):
        center = centers[owner[i]] if owner[i] >= 0 else rng.normal(size=dim)
        obj_vecs[i] = center + rng.normal(scale=sd, size=dim)
    tokens += objects
    vecs += list(obj_vecs)

    actions, designated = [], {}
    for z in range(n_actions):
        members = np.flatnonzero(owner == z)
        anchor = obj_vecs[members].mean(axis=0)
        words = [f"act{z}w{w}" for w in range(int(rng.integers(2, 4)))]
        for w in words:
            tokens.append(w)
            vecs.append(anchor + rng.normal(scale=sd, size=dim))
        name = " ".join(words)
        actions.append(name)
        designated[name] = [objects[i] for i in members]

    videos, truth = [], {}
    for v in range(n_videos):
        z = v % n_actions
        on = owner == z
        p = np.zeros(n_objects)
        p[on] = mass * rng.dirichlet(np.ones(on.sum()))
        p[~on] = (1 - mass) * rng.dirichlet(np.ones((~on).sum()))
        vid = f"vid{v:03d}"
        videos.append(ObjectScores(p, id=vid))
        truth[vid] = actions[z]

    return PlantedDataset(EmbeddingTable(tokens, np.array(vecs)), objects, actions, designated, videos, truth)
