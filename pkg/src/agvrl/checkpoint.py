"""Versioned JSON checkpoints for the learners.

A checkpoint lists every network as per-layer row-major weight and bias
arrays.  Floats are written with ``repr`` precision so loading is
bit-exact.  With ``resume=True`` a ``.npz`` sidecar stores the replay buffer
and the JSON carries the RNG states needed to continue a run exactly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .agents import ALGORITHMS, OffPolicyAgent
from .nn import AdamState, Mlp
from .replay import ReplayBuffer

FORMAT = 1


class CheckpointError(ValueError):
    pass


def _net_to_dict(net: Mlp) -> dict:
    return {"layer_dims": list(net.layer_dims), "head": net.head,
            "weights": [w.ravel().tolist() for w in net.weights],
            "biases": [b.tolist() for b in net.biases]}


def _net_from_dict(d: dict) -> Mlp:
    dims = [int(x) for x in d["layer_dims"]]
    if len(d["weights"]) != len(dims) - 1 or len(d["biases"]) != len(dims) - 1:
        raise CheckpointError("layer count does not match layer_dims")
    weights = [np.array(w, dtype=np.float64).reshape(dims[i], dims[i + 1]) for i, w in enumerate(d["weights"])]
    biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    return Mlp(dims, weights, biases, d.get("head", "linear"))


def _opt_to_dict(opt: AdamState) -> dict:
    return {"t": opt.t, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
            "m": [a.tolist() for a in opt.m], "v": [a.tolist() for a in opt.v]}


def _opt_from_dict(d: dict) -> AdamState:
    return AdamState([np.array(a, dtype=np.float64) for a in d["m"]],
                     [np.array(a, dtype=np.float64) for a in d["v"]],
                     int(d["t"]), float(d["beta1"]), float(d["beta2"]), float(d["eps"]))


def _jsonable_params(params: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def checkpoint_dict(agent: OffPolicyAgent, config_hash: str | None = None, env_config: dict | None = None,
                    extra: dict | None = None, optimizer: bool = True) -> dict:
    doc = {
        "format": FORMAT,
        "algorithm": agent.algorithm,
        "obs_dim": agent.obs_dim_,
        "act_dim": agent.act_dim_,
        "params": _jsonable_params(agent.get_params()),
        "networks": {name: _net_to_dict(net) for name, net in agent.networks().items()},
        "n_updates": agent.n_updates_,
        "total_steps": agent.total_steps_,
        "config_hash": config_hash,
        "env": env_config,
    }
    if hasattr(agent, "alpha_"):
        doc["alpha"] = float(agent.alpha_[0])
    if optimizer:
        doc["optimizers"] = {name: _opt_to_dict(o) for name, o in agent.optimizers().items()}
        if hasattr(agent, "alpha_opt_"):
            doc["optimizers"]["alpha"] = _opt_to_dict(agent.alpha_opt_)
    if extra:
        doc["extra"] = extra
    return doc


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_checkpoint(agent: OffPolicyAgent, path, config_hash=None, env_config=None, extra=None,
                    resume: bool = False, env_rng_state=None) -> Path:
    """Write ``agent`` to ``path``; ``resume`` adds RNG states and a replay-buffer sidecar."""
    path = Path(path)
    doc = checkpoint_dict(agent, config_hash, env_config, extra)
    if resume:
        doc["resume"] = {"agent_rng": agent.rng_.bit_generator.state, "env_rng": env_rng_state,
                         "buffer": sidecar_path(path).name}
        sd = agent.buffer_.state_dict()
        meta = np.array([sd["capacity"], sd["pushed"], sd["next"]], dtype=np.int64)
        tmp = sidecar_path(path).with_suffix(".tmp.npz")
        np.savez(tmp, meta=meta, s=sd["s"], a=sd["a"], rw=sd["rw"], s_next=sd["s_next"], done=sd["done"])
        os.replace(tmp, sidecar_path(path))
    _atomic_write(path, json.dumps(doc))
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".buffer.npz")


def read_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {doc.get('format') if isinstance(doc, dict) else None!r}")
    if doc.get("algorithm") not in ALGORITHMS:
        raise CheckpointError(f"{path}: unknown algorithm {doc.get('algorithm')!r}")
    return doc


def agent_from_dict(doc: dict) -> OffPolicyAgent:
    params = dict(doc["params"])
    params["hidden_sizes"] = tuple(params["hidden_sizes"])
    agent = ALGORITHMS[doc["algorithm"]](**params).initialize(int(doc["obs_dim"]), int(doc["act_dim"]))
    nets = {name: _net_from_dict(d) for name, d in doc["networks"].items()}
    expected = agent.networks()
    if set(nets) != set(expected):
        raise CheckpointError(f"network set {sorted(nets)} does not match {doc['algorithm']}")
    for name, net in nets.items():
        if net.layer_dims != expected[name].layer_dims:
            raise CheckpointError(f"{name}: layer_dims {net.layer_dims} do not match the agent")
    agent.actor_ = nets["actor"]
    if "actor_target" in nets:
        agent.actor_target_ = nets["actor_target"]
    agent.critics_ = [nets[f"critic{i}"] for i in range(agent.n_critics)]
    agent.critic_targets_ = [nets[f"critic{i}_target"] for i in range(agent.n_critics)]
    opts = doc.get("optimizers")
    if opts:
        agent.actor_opt_ = _opt_from_dict(opts["actor"])
        agent.critic_opts_ = [_opt_from_dict(opts[f"critic{i}"]) for i in range(agent.n_critics)]
        if "alpha" in opts:
            agent.alpha_opt_ = _opt_from_dict(opts["alpha"])
    else:
        agent.actor_opt_ = AdamState.for_params(agent.actor_)
        agent.critic_opts_ = [AdamState.for_params(c) for c in agent.critics_]
    if "alpha" in doc:
        agent.alpha_[0] = float(doc["alpha"])
    agent.n_updates_ = int(doc.get("n_updates", 0))
    agent.total_steps_ = int(doc.get("total_steps", 0))
    return agent


def load_checkpoint(path, resume: bool = False) -> tuple[OffPolicyAgent, dict]:
    """Rebuild the agent stored at ``path``; with ``resume`` also restore RNG and replay buffer."""
    doc = read_checkpoint(path)
    agent = agent_from_dict(doc)
    if resume:
        state = doc.get("resume")
        if not state:
            raise CheckpointError(f"{path}: checkpoint carries no resume state")
        agent.rng_.bit_generator.state = state["agent_rng"]
        with np.load(Path(path).with_name(state["buffer"])) as z:
            capacity, pushed, nxt = (int(v) for v in z["meta"])
            agent.buffer_ = ReplayBuffer.from_state_dict(
                {"capacity": capacity, "pushed": pushed, "next": nxt, "s": z["s"], "a": z["a"],
                 "rw": z["rw"], "s_next": z["s_next"], "done": z["done"]})
    return agent, doc
