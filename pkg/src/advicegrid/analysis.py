"""Post-hoc diagnostics: goal-embedding correlation matrices and
cumulative-success-rate curves, emitted as CSV for external plotting."""

from __future__ import annotations

import json
import os

import numpy as np

from . import nn
from .goals import AvoidAnyGoal, AvoidAnyLava, Reach, constituents, render_instruction


class ConstantVector(ValueError):
    pass


class EmptyResults(ValueError):
    pass


def correlation_distance(u, v) -> float:
    """1 minus the Pearson correlation of two vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise ValueError(f"need two equal-length vectors, got {u.shape} and {v.shape}")
    uc = u - u.mean()
    vc = v - v.mean()
    nu = np.linalg.norm(uc)
    nv = np.linalg.norm(vc)
    if nu == 0.0 or nv == 0.0:
        raise ConstantVector("correlation distance is undefined for constant vectors")
    return float(1.0 - (uc @ vc) / (nu * nv))


def _group_key(goal):
    # order rows by tile type, then colour, of the first constituent
    first = constituents(goal)[0]
    if isinstance(first, Reach):
        kind = 0 if first.kind == "goal" else 1
        colour = ("red", "blue", "green").index(first.colour)
    elif isinstance(first, AvoidAnyLava):
        kind, colour = 2, 0
    elif isinstance(first, AvoidAnyGoal):
        kind, colour = 2, 1
    else:
        kind, colour = 3, 0
    return (kind, colour, render_instruction(goal))


def order_goals_by_group(goals):
    return sorted(goals, key=_group_key)


def correlation_matrix(embeddings):
    """Pairwise correlation distances plus a copy scaled by the max entry."""
    if len(embeddings) < 2:
        raise ValueError("need at least two embeddings")
    n = len(embeddings)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = correlation_distance(embeddings[i], embeddings[j])
            mat[i, j] = d
            mat[j, i] = d
    peak = mat.max()
    normalized = mat / peak if peak > 0 else mat.copy()
    return mat, normalized


def csr_curve(results):
    """Cumulative success rate by episode length.

    ``results`` holds (success, length) pairs; the curve is evaluated at
    every distinct length present plus the maximum length, and gives the
    fraction of all episodes that succeeded with length <= x.
    """
    results = list(results)
    if not results:
        raise EmptyResults("no episodes")
    for _, length in results:
        if length < 0:
            raise ValueError("episode lengths must be >= 0")
    total = len(results)
    xs = sorted({length for _, length in results})
    curve = []
    for x in xs:
        wins = sum(1 for success, length in results if success and length <= x)
        curve.append((x, wins / total))
    return curve


def goal_embeddings(model, store, goals):
    """Pre-attention embedding vector per goal, in the given order."""
    out = []
    with nn.no_grad():
        for g in goals:
            out.append(model.encode_goal(store, render_instruction(g)).data.copy())
    return out


def export_embeddings(model, store, goals, path):
    """One CSV row per goal: instruction text then the embedding values."""
    embeddings = goal_embeddings(model, store, goals)
    with open(path, "w", encoding="utf-8") as fh:
        dim = len(embeddings[0]) if embeddings else 0
        fh.write("goal," + ",".join(f"e{i}" for i in range(dim)) + "\n")
        for g, vec in zip(goals, embeddings):
            fh.write('"' + render_instruction(g) + '",')
            fh.write(",".join(repr(float(x)) for x in vec) + "\n")
    return embeddings


def export_correlations(model, store, goals, out_dir):
    """Write embeddings, the correlation-distance matrix, its normalized copy,
    and a JSON sidecar with row labels and grouping, into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    ordered = order_goals_by_group(goals)
    embeddings = export_embeddings(model, store, ordered, os.path.join(out_dir, "embeddings.csv"))
    mat, norm = correlation_matrix(embeddings)
    np.savetxt(os.path.join(out_dir, "correlation_distance.csv"), mat, delimiter=",")
    np.savetxt(os.path.join(out_dir, "correlation_distance_normalized.csv"), norm, delimiter=",")
    labels = [render_instruction(g) for g in ordered]
    groups = [_group_key(g)[:2] for g in ordered]
    with open(os.path.join(out_dir, "labels.json"), "w", encoding="utf-8") as fh:
        json.dump({"labels": labels, "groups": groups}, fh, indent=2)
    return mat, norm, labels


def write_csr_csv(results, path):
    curve = csr_curve(results)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("episode_length,cumulative_success_rate\n")
        for x, y in curve:
            fh.write(f"{x},{y:.6f}\n")
    return curve


def read_episode_jsonl(path):
    """Episodes from a JSON-lines file of {"success": bool, "length": int}."""
    results = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            results.append((bool(rec["success"]), int(rec["length"])))
    return results
