"""Built-in learners: uniform random, tabular Q-learning, linear softmax REINFORCE.

Learners only see integer action indices, a feature vector and a discrete
state key; they know nothing about the security domain.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyMask


@dataclass
class Transition:
    key: bytes
    features: np.ndarray
    mask: np.ndarray
    action: int
    reward: float
    next_key: bytes
    next_features: np.ndarray
    next_mask: np.ndarray
    done: bool


def _check_mask(mask: np.ndarray) -> None:
    if len(mask) == 0:
        raise EmptyMask("no valid actions to choose from")


class RandomLearner:
    algorithm = "random"
    uses_features = False

    def select(self, key, features, mask, rng: random.Random, greedy: bool = False) -> int:
        _check_mask(mask)
        return int(mask[rng.randrange(len(mask))])

    def record(self, transition: Transition) -> None:
        pass

    def end_episode(self) -> None:
        pass

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, state: dict) -> None:
        pass


class QLearner:
    """Tabular TD(0) with epsilon-greedy exploration.

    The table maps a state key to a sparse ``{action: value}`` dict; unseen
    entries read as 0.  Python's dict handles hash collisions by exact-key
    comparison, so distinct states never share a row.

    Until ``learning_start`` transitions have been seen the table is frozen
    and actions are uniformly random; the buffered warm-up transitions are
    replayed once, in order, when that threshold is reached.
    """

    algorithm = "qlearning"
    uses_features = False

    def __init__(self, learning_rate: float = 0.5, discount: float = 0.95,
                 learning_start: int = 10000, total_timesteps: int = 50000,
                 epsilon_start: float = 1.0, epsilon_end: float = 0.05,
                 epsilon_fraction: float = 0.5):
        self.learning_rate = learning_rate
        self.discount = discount
        self.learning_start = learning_start
        self.total_timesteps = total_timesteps
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_fraction = epsilon_fraction
        self.table: dict[bytes, dict[int, float]] = {}
        self.steps = 0
        self._warmup: list[Transition] = []

    @property
    def epsilon(self) -> float:
        if self.steps < self.learning_start:
            return 1.0
        horizon = self.epsilon_fraction * self.total_timesteps
        frac = min(1.0, self.steps / horizon) if horizon > 0 else 1.0
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def q(self, key: bytes, action: int) -> float:
        row = self.table.get(key)
        return row.get(action, 0.0) if row else 0.0

    def _best(self, key: bytes, mask: np.ndarray) -> tuple[float, list[int]]:
        row = self.table.get(key) or {}
        best, ties = -math.inf, []
        for a in mask:
            a = int(a)
            v = row.get(a, 0.0)
            if v > best:
                best, ties = v, [a]
            elif v == best:
                ties.append(a)
        return best, ties

    def select(self, key, features, mask, rng: random.Random, greedy: bool = False) -> int:
        _check_mask(mask)
        if not greedy and rng.random() < self.epsilon:
            return int(mask[rng.randrange(len(mask))])
        _, ties = self._best(key, mask)
        if greedy or len(ties) == 1:
            return min(ties)
        return ties[rng.randrange(len(ties))]

    def td_update(self, t: Transition) -> None:
        target = t.reward
        if not t.done and len(t.next_mask):
            target += self.discount * self._best(t.next_key, t.next_mask)[0]
        row = self.table.setdefault(t.key, {})
        old = row.get(t.action, 0.0)
        row[t.action] = old + self.learning_rate * (target - old)

    def record(self, transition: Transition) -> None:
        self.steps += 1
        if self.steps < self.learning_start:
            self._warmup.append(transition)
            return
        if self._warmup:
            for t in self._warmup:
                self.td_update(t)
            self._warmup.clear()
        self.td_update(transition)

    def end_episode(self) -> None:
        pass

    def state_dict(self) -> dict:
        return {
            "steps": self.steps,
            "table": {k.hex(): {str(a): v for a, v in sorted(row.items())}
                      for k, row in sorted(self.table.items())},
        }

    def load_state_dict(self, state: dict) -> None:
        self.steps = state["steps"]
        self.table = {bytes.fromhex(k): {int(a): float(v) for a, v in row.items()}
                      for k, row in state["table"].items()}
        self._warmup = []


def masked_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def log_prob(weights: np.ndarray, bias: np.ndarray, x: np.ndarray, mask: np.ndarray,
             action: int) -> float:
    logits = weights[mask] @ x + bias[mask]
    m = logits.max()
    lse = m + math.log(np.exp(logits - m).sum())
    return float(weights[action] @ x + bias[action] - lse)


def grad_log_prob(weights: np.ndarray, bias: np.ndarray, x: np.ndarray, mask: np.ndarray,
                  action: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of log pi(action | x) restricted to the mask, as dense arrays."""
    probs = masked_softmax(weights[mask] @ x + bias[mask])
    coef = -probs
    coef[int(np.flatnonzero(mask == action)[0])] += 1.0
    gw = np.zeros_like(weights)
    gb = np.zeros_like(bias)
    gw[mask] = coef[:, None] * x[None, :]
    gb[mask] = coef
    return gw, gb


class PolicyGradientLearner:
    """Linear softmax policy trained with episodic REINFORCE.

    Returns are centred on a running baseline (starting at 0); within an
    episode that has any spread the advantages are then standardised.  A
    one-step episode therefore gets the plain REINFORCE update.
    """

    algorithm = "policy_gradient"
    greedy_eval = False

    def __init__(self, n_actions: int, n_features: int, learning_rate: float = 0.001,
                 discount: float = 0.99, baseline_decay: float = 0.9):
        self.learning_rate = learning_rate
        self.discount = discount
        self.baseline_decay = baseline_decay
        self.weights = np.zeros((n_actions, n_features))
        self.bias = np.zeros(n_actions)
        self.baseline = 0.0
        self.steps = 0
        self._episode: list[Transition] = []

    def probabilities(self, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return masked_softmax(self.weights[mask] @ features + self.bias[mask])

    def select(self, key, features, mask, rng: random.Random, greedy: bool = False) -> int:
        _check_mask(mask)
        probs = self.probabilities(features, mask)
        if greedy:
            return int(mask[int(np.argmax(probs))])
        i = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
        return int(mask[min(i, len(mask) - 1)])

    def record(self, transition: Transition) -> None:
        self.steps += 1
        self._episode.append(transition)

    def end_episode(self) -> None:
        if not self._episode:
            return
        returns = np.empty(len(self._episode))
        g = 0.0
        for i in range(len(self._episode) - 1, -1, -1):
            g = self._episode[i].reward + self.discount * g
            returns[i] = g
        adv = returns - self.baseline
        spread = float(adv.std())
        if spread > 1e-8:
            adv = (adv - adv.mean()) / spread
        for t, a in zip(self._episode, adv):
            probs = self.probabilities(t.features, t.mask)
            coef = -probs
            coef[int(np.flatnonzero(t.mask == t.action)[0])] += 1.0
            step = self.learning_rate * a * coef
            self.weights[t.mask] += step[:, None] * t.features[None, :]
            self.bias[t.mask] += step
        d = self.baseline_decay
        self.baseline = d * self.baseline + (1 - d) * float(returns.mean())
        self._episode.clear()

    def state_dict(self) -> dict:
        return {"steps": self.steps, "baseline": self.baseline,
                "weights": self.weights.tolist(), "bias": self.bias.tolist()}

    def load_state_dict(self, state: dict) -> None:
        weights = np.asarray(state["weights"], dtype=float)
        bias = np.asarray(state["bias"], dtype=float)
        if weights.shape != self.weights.shape or bias.shape != self.bias.shape:
            raise ValueError(f"parameter shape {weights.shape} != {self.weights.shape}")
        self.weights, self.bias = weights, bias
        self.steps = state["steps"]
        self.baseline = state["baseline"]
        self._episode = []
