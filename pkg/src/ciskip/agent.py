"""P-DQN agent over the composite (attribute, threshold) action.

The thresholds-network proposes one threshold per attribute from the tree
state; the attributes-network scores every attribute in a single pass over
the state concatenated with the range-normalized threshold vector.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset import FeatureSchema
from .neural import AdamState, NetworkParams, adam_step, backward, forward, init_network
from .replay import Transition
from .tree import Action

__all__ = ["Action", "Agent", "AgentConfig", "AgentError"]


class AgentError(ValueError):
    pass


@dataclass
class AgentConfig:
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    lr_q: float = 1e-3
    lr_x: float = 1e-3
    hidden: tuple[int, ...] = (128, 64)
    batch_size: int = 32
    warmup_steps: int = 128
    target_sync_period: int = 100
    replay_capacity: int = 10_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    priority_floor: float = 0.01

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise AgentError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise AgentError("need 0 <= eps_end <= eps_start <= 1")
        if min(self.batch_size, self.replay_capacity, self.target_sync_period) < 1:
            raise AgentError("batch size, replay capacity and sync period must be positive")
        if self.warmup_steps < self.batch_size:
            raise AgentError("warmup_steps must be at least batch_size")

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, d) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise AgentError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**d)


class Agent:
    def __init__(self, schema: FeatureSchema, state_dim: int, config: AgentConfig | None = None,
                 seed: int = 0):
        self.schema = schema
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.K = len(schema)
        self.lows, self.highs = schema.lows, schema.highs
        self.rng = np.random.default_rng(seed)
        hidden = list(self.config.hidden)
        init_rng = np.random.default_rng(self.rng.integers(2 ** 63))
        self.thresholds_net = init_network([state_dim] + hidden + [self.K], "relu", "logistic", init_rng)
        self.attributes_net = init_network([state_dim + self.K] + hidden + [self.K], "relu", "linear",
                                           init_rng)
        self.target_attributes_net = self.attributes_net.copy()
        self.adam_x = AdamState.zeros_like(self.thresholds_net)
        self.adam_q = AdamState.zeros_like(self.attributes_net)
        self.updates = 0

    # -- inference -------------------------------------------------------

    def _check_state(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] != self.state_dim:
            raise AgentError(f"state width {s.shape[-1]} != {self.state_dim}")
        return s

    def normalize(self, X):
        span = self.highs - self.lows
        return np.where(span > 0, (np.asarray(X) - self.lows) / np.where(span > 0, span, 1.0), 0.0)

    def denormalize(self, U):
        return self.lows + np.asarray(U) * (self.highs - self.lows)

    def _unit_thresholds(self, s):
        return forward(self.thresholds_net, self._check_state(s))[0]

    def predict_thresholds(self, s) -> np.ndarray:
        """Threshold proposal for every attribute, inside its schema range."""
        return np.clip(self.denormalize(self._unit_thresholds(s)), self.lows, self.highs)

    def _q_unit(self, s, unit_x, use_target=False):
        net = self.target_attributes_net if use_target else self.attributes_net
        return forward(net, np.concatenate([s, unit_x], axis=-1))[0]

    def q_values(self, s, X, use_target: bool = False) -> np.ndarray:
        s = self._check_state(s)
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.K:
            raise AgentError(f"threshold vector width {X.shape[-1]} != {self.K}")
        return self._q_unit(s, self.normalize(X), use_target)

    def select_action(self, s, eps: float, rng: np.random.Generator | None = None) -> Action:
        """Epsilon-greedy: uniform attribute and threshold, or argmax Q (lowest index on ties)."""
        if not 0.0 <= eps <= 1.0:
            raise AgentError(f"epsilon must be in [0, 1], got {eps}")
        rng = self.rng if rng is None else rng
        if rng.random() < eps:
            k = int(rng.integers(self.K))
            return Action(k, float(rng.uniform(self.lows[k], self.highs[k])))
        X = self.predict_thresholds(s)
        k = int(np.argmax(self.q_values(s, X)))
        return Action(k, float(X[k]))

    def td_target(self, tr: Transition) -> float:
        return float(self._targets([tr])[0])

    def _targets(self, batch) -> np.ndarray:
        rewards = np.array([tr.reward for tr in batch], dtype=np.float64)
        terminal = np.array([tr.terminal for tr in batch], dtype=bool)
        if np.any(rewards[~terminal] != 0.0):
            raise AgentError("non-terminal transition carries a nonzero reward")
        y = rewards.copy()
        if np.any(~terminal):
            s_next = self._check_state(np.stack([tr.next_state for tr in batch])[~terminal])
            q_next = self._q_unit(s_next, self._unit_thresholds(s_next), use_target=True)
            y[~terminal] = self.config.gamma * q_next.max(axis=1)
        return y

    # -- learning --------------------------------------------------------

    def _taken_inputs(self, batch):
        S = self._check_state(np.stack([tr.state for tr in batch]))
        ks = np.array([tr.action.attribute for tr in batch], dtype=np.int64)
        unit_x = self._unit_thresholds(S).copy()
        taken = np.array([tr.action.threshold for tr in batch], dtype=np.float64)
        span = self.highs[ks] - self.lows[ks]
        unit_x[np.arange(len(batch)), ks] = np.where(span > 0, (taken - self.lows[ks]) /
                                                     np.where(span > 0, span, 1.0), 0.0)
        return S, ks, unit_x

    def update_q(self, batch, weights=None):
        """One Adam step on the squared TD error of the taken attribute.

        The taken threshold replaces slot ``k`` of the current threshold
        proposal; the other slots come from the thresholds-network.
        """
        B = len(batch)
        w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
        y = self._targets(batch)
        S, ks, unit_x = self._taken_inputs(batch)
        q, cache = forward(self.attributes_net, np.concatenate([S, unit_x], axis=1))
        td = y - q[np.arange(B), ks]
        loss = float(np.mean(w * td ** 2))
        grad_out = np.zeros_like(q)
        grad_out[np.arange(B), ks] = -2.0 * w * td / B
        grads = backward(self.attributes_net, cache, grad_out)
        self.attributes_net, self.adam_q = adam_step(self.attributes_net, grads, self.adam_q,
                                                     lr=self.config.lr_q)
        return loss, td

    def update_x(self, batch, weights=None) -> float:
        """One Adam step pushing the threshold proposal toward higher total Q.

        Gradients pass through the attributes-network input; its own weights
        are not touched.
        """
        B = len(batch)
        w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
        S = self._check_state(np.stack([tr.state for tr in batch]))
        unit_x, x_cache = forward(self.thresholds_net, S)
        q, q_cache = forward(self.attributes_net, np.concatenate([S, unit_x], axis=1))
        loss = float(np.mean(w * -q.sum(axis=1)))
        grad_q = np.repeat((-w / B)[:, None], self.K, axis=1)
        dinput = backward(self.attributes_net, q_cache, grad_q).inputs
        grads = backward(self.thresholds_net, x_cache, dinput[:, self.state_dim:])
        self.thresholds_net, self.adam_x = adam_step(self.thresholds_net, grads, self.adam_x,
                                                     lr=self.config.lr_x)
        return loss

    def update(self, batch, weights=None):
        """Returns (loss_q, loss_x, |td errors|) and hard-syncs the target net on schedule."""
        if not batch:
            raise AgentError("empty batch")
        loss_q, td = self.update_q(batch, weights)
        loss_x = self.update_x(batch, weights)
        self.updates += 1
        if self.updates % self.config.target_sync_period == 0:
            self.sync_target()
        return loss_q, loss_x, np.abs(td)

    def sync_target(self):
        self.target_attributes_net = self.attributes_net.copy()

    # -- checkpointing ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "schema": self.schema.to_json(),
            "state_dim": self.state_dim,
            "updates": self.updates,
            "rng_state": self.rng.bit_generator.state,
            "thresholds_net": self.thresholds_net.to_json(),
            "attributes_net": self.attributes_net.to_json(),
            "target_attributes_net": self.target_attributes_net.to_json(),
            "adam_x": self.adam_x.to_json(),
            "adam_q": self.adam_q.to_json(),
        }

    @classmethod
    def from_json(cls, d) -> "Agent":
        agent = cls(FeatureSchema.from_json(d["schema"]), d["state_dim"],
                    AgentConfig.from_json(d["config"]))
        agent.updates = int(d["updates"])
        agent.rng.bit_generator.state = d["rng_state"]
        agent.thresholds_net = NetworkParams.from_json(d["thresholds_net"])
        agent.attributes_net = NetworkParams.from_json(d["attributes_net"])
        agent.target_attributes_net = NetworkParams.from_json(d["target_attributes_net"])
        agent.adam_x = AdamState.from_json(d["adam_x"])
        agent.adam_q = AdamState.from_json(d["adam_q"])
        return agent
