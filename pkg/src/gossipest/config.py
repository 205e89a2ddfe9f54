"""YAML experiment configuration loading.

A config file mirrors ExperimentConfig section by section:

    sensing:
      field_dim: 5
      sensors: {cycle_components: 10}      # or a list of row-major matrices
      noise_cov: identity                  # or {diag: [...]} or a full matrix
      gamma0: 0.0
      noise_dist: gaussian                 # gaussian | uniform | laplace
    topology:
      base: {ring: 10}                     # ring/path/complete: N, or {file: edges.txt}
      protocol: gossip                     # fixed | gossip | bernoulli
      weights: uniform                     # gossip only; or a list
    theta_star: [1, 1, 1, 1, 1]
    distributed: {tau1: 1.0, a: 15.0, tau2: 0.1, b: 0.4, gain: optimal}
    centralized: mirror                    # or {tau_c: ..., a_c: ..., gain: ...} or omitted
    iterations: 200000
    trials: 50
    seed: 7
    record_every: 100
    outputs: results/demo

Shorthand topologies: "ring: N" and "complete: N" are fixed graphs;
"gossip-uniform: N" is uniform pairwise gossip over the complete graph on N.
Gains accept "optimal" (inverse of the pooled Grammian), "identity", or a
row-major matrix.  "centralized: mirror" copies tau1, a, and the gain from
the distributed design.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .analysis import optimal_gain
from .errors import ConfigError
from .estimators import CentralizedParams, DistributedParams
from .graphs import (BernoulliLinkFailure, FixedTopology, Graph, PairwiseGossip,
                     complete_graph, laplacian, path_graph, read_edge_list, ring_graph)
from .harness import ExperimentConfig
from .sensing import SensingModel


def _require(data, key, section):
    if key not in data:
        raise ConfigError(f"missing key {key!r} in {section} section")
    return data[key]


def _matrix(value, name):
    try:
        m = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a numeric array") from exc
    return np.atleast_2d(m)


def _build_sensors(entry, field_dim):
    if isinstance(entry, dict) and "cycle_components" in entry:
        n = int(entry["cycle_components"])
        if n < 1:
            raise ConfigError("cycle_components must be >= 1")
        mats = []
        for k in range(n):
            row = np.zeros((1, field_dim))
            row[0, k % field_dim] = 1.0
            mats.append(row)
        return mats
    if isinstance(entry, list):
        return [_matrix(h, f"sensors[{k}]") for k, h in enumerate(entry)]
    raise ConfigError("sensors must be a list of matrices or {cycle_components: N}")


def _build_noise_cov(entry, total):
    if entry is None or entry == "identity":
        return np.eye(total)
    if isinstance(entry, dict) and "diag" in entry:
        d = np.asarray(entry["diag"], dtype=np.float64)
        if d.shape != (total,):
            raise ConfigError(f"noise_cov diag must have length {total}")
        return np.diag(d)
    return _matrix(entry, "noise_cov")


def build_sensing(data) -> SensingModel:
    field_dim = int(_require(data, "field_dim", "sensing"))
    mats = _build_sensors(_require(data, "sensors", "sensing"), field_dim)
    total = sum(h.shape[0] for h in mats)
    return SensingModel(
        field_dim=field_dim,
        matrices=tuple(mats),
        noise_cov=_build_noise_cov(data.get("noise_cov", "identity"), total),
        gamma0=float(data.get("gamma0", 0.0)),
        noise_dist=str(data.get("noise_dist", "gaussian")),
        moment_margin=float(data.get("moment_margin", 1.0)),
    )


def _build_graph(entry, base_dir) -> Graph:
    if not isinstance(entry, dict) or len(entry) != 1:
        raise ConfigError(f"graph entry must be a single-key mapping, got {entry!r}")
    kind, value = next(iter(entry.items()))
    if kind == "ring":
        return ring_graph(int(value))
    if kind == "path":
        return path_graph(int(value))
    if kind == "complete":
        return complete_graph(int(value))
    if kind == "file":
        return read_edge_list(Path(base_dir) / str(value))
    raise ConfigError(f"unknown graph kind {kind!r}")


def build_topology(data, base_dir="."):
    if not isinstance(data, dict):
        raise ConfigError("topology must be a mapping")
    if len(data) == 1:
        kind, value = next(iter(data.items()))
        if kind in ("ring", "path", "complete", "file"):
            return FixedTopology(laplacian(_build_graph(data, base_dir)))
        if kind == "gossip-uniform":
            return PairwiseGossip.uniform(complete_graph(int(value)))
    base = _build_graph(_require(data, "base", "topology"), base_dir)
    protocol = str(data.get("protocol", "fixed"))
    if protocol == "fixed":
        return FixedTopology(laplacian(base))
    if protocol == "bernoulli":
        return BernoulliLinkFailure(base, float(_require(data, "p", "topology")))
    if protocol == "gossip":
        weights = data.get("weights", "uniform")
        if weights == "uniform":
            return PairwiseGossip.uniform(base)
        return PairwiseGossip(base, np.asarray(weights, dtype=np.float64))
    raise ConfigError(f"unknown topology protocol {protocol!r}")


def _build_gain(entry, model):
    if entry is None or entry == "optimal":
        return optimal_gain(model)
    if entry == "identity":
        return np.eye(model.field_dim)
    return _matrix(entry, "gain")


def build_distributed(data, model) -> DistributedParams:
    return DistributedParams(
        tau1=float(_require(data, "tau1", "distributed")),
        a=float(_require(data, "a", "distributed")),
        tau2=float(_require(data, "tau2", "distributed")),
        b=float(_require(data, "b", "distributed")),
        gain=_build_gain(data.get("gain", "optimal"), model),
        epsilon1=float(data.get("epsilon1", model.moment_margin)),
    )


def build_centralized(data, model, distributed) -> CentralizedParams:
    if data == "mirror":
        return CentralizedParams(tau_c=distributed.tau1, a_c=distributed.a,
                                 gain=distributed.gain)
    return CentralizedParams(
        tau_c=float(_require(data, "tau_c", "centralized")),
        a_c=float(_require(data, "a_c", "centralized")),
        gain=_build_gain(data.get("gain", "optimal"), model),
    )


def build_config(data: dict, base_dir=".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    model = build_sensing(_require(data, "sensing", "config"))
    topology = build_topology(_require(data, "topology", "config"), base_dir)
    distributed = build_distributed(_require(data, "distributed", "config"), model)
    centralized = None
    if data.get("centralized") is not None:
        centralized = build_centralized(data["centralized"], model, distributed)
    initial = data.get("initial_estimate")
    return ExperimentConfig(
        sensing=model,
        topology=topology,
        distributed=distributed,
        centralized=centralized,
        theta_star=np.asarray(_require(data, "theta_star", "config"), dtype=np.float64),
        iterations=int(_require(data, "iterations", "config")),
        trials=int(data.get("trials", 1)),
        seed=int(data.get("seed", 0)),
        record_every=int(data.get("record_every", 1)),
        outputs=data.get("outputs"),
        allow_invalid=bool(data.get("allow_invalid", False)),
        initial_estimate=initial if initial is None else np.asarray(initial, dtype=np.float64),
        workers=int(data.get("workers", 1)),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return build_config(data, base_dir=path.parent)
