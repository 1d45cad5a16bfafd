"""Behaviour cloning of the naive controller into the DQN architecture.

A sanity check on representational capacity: if the encoder plus network
can imitate the naive policy, a poor DQN result is a learning failure, not a
capacity failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nnfa
from .dqn import N_ACTIONS, encode_state, feature_scale
from .naive import run_naive
from .simcore import BuildingConfig, Elevator
from .traffic import TrafficRecord


@dataclass
class CloneResult:
    net: nnfa.NetworkParams
    accuracy: float  # held-out action match, unmasked argmax
    masked_accuracy: float  # held-out match after restricting to legal actions
    majority_rate: float  # held-out share of the training set's most common action
    n_train: int
    n_test: int
    scale: np.ndarray


def record_naive_pairs(tape: Sequence[TrafficRecord], config: BuildingConfig = BuildingConfig(),
                       seed: int = 0):
    """Run the naive controller once; return (features, actions, legal masks)."""
    xs, ys, masks = [], [], []

    def record(env, action):
        xs.append(encode_state(env.state))
        ys.append(int(action))
        m = np.zeros(N_ACTIONS, dtype=bool)
        m[[int(a) for a in env.legal_actions()]] = True
        masks.append(m)

    run_naive(Elevator(tape, config), seed=seed, on_decision=record)
    return np.array(xs), np.array(ys), np.array(masks)


def _softmax_xent(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    rows = np.arange(len(y))
    loss = -np.mean(np.log(p[rows, y] + 1e-300))
    grad = p
    grad[rows, y] -= 1.0
    return loss, grad / len(y)


def clone_naive(tape: Sequence[TrafficRecord], epochs: int = 50, seed: int = 0,
                config: BuildingConfig = BuildingConfig(),
                sizes: Sequence[int] = None, lr: float = 0.05, momentum: float = 0.9,
                batch_size: int = 64, test_fraction: float = 0.2) -> CloneResult:
    """Fit the network to (encoded state, naive action) pairs with cross-entropy.

    The output layer starts at zero weights and log-prior biases, so with no
    training the net predicts the training majority everywhere.
    """
    if not tape:
        raise ValueError("empty tape")
    x, y, masks = record_naive_pairs(tape, config, seed)
    scale = feature_scale(config.floor_count, config.capacity_kg)
    x = x / scale
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_test = max(1, int(round(test_fraction * len(y))))
    test, train_idx = order[:n_test], order[n_test:]

    if sizes is None:
        sizes = (x.shape[1], 64, 64, N_ACTIONS)
    net = nnfa.init_network(sizes, seed=seed)
    counts = np.bincount(y[train_idx], minlength=N_ACTIONS).astype(float)
    prior = (counts + 1e-3) / (counts.sum() + N_ACTIONS * 1e-3)
    net.layers[-1].weight[:] = 0.0
    net.layers[-1].bias[:] = np.log(prior)

    opt = nnfa.Momentum(momentum)
    for _ in range(epochs):
        perm = rng.permutation(train_idx)
        for start in range(0, len(perm), batch_size):
            b = perm[start:start + batch_size]
            logits = nnfa.forward(net, x[b])
            _, g = _softmax_xent(logits, y[b])
            net = opt.step(net, nnfa.backward(net, x[b], g), lr)

    logits = nnfa.forward(net, x[test])
    acc = float(np.mean(np.argmax(logits, axis=1) == y[test]))
    masked = np.where(masks[test], logits, -np.inf)
    macc = float(np.mean(np.argmax(masked, axis=1) == y[test]))
    majority = int(np.argmax(counts))
    return CloneResult(net, acc, macc, float(np.mean(y[test] == majority)),
                       len(train_idx), n_test, scale)
