"""Q-value network architectures built from the plain-numpy layers.

Three families are used throughout the project:

* ``QNetwork``           -- conv encoder + two hidden fc layers + action head
* ``RecurrentQNetwork``  -- conv encoder + LSTM + action head
* ``KnowledgeEmbedderNet`` -- separate state / knowledge encoders whose
  embeddings are concatenated before the joint head

Every network carries an ``arch`` dict describing how to rebuild it, which
is what checkpoints serialize.
"""

from __future__ import annotations

import numpy as np

from .layers import LSTM, Conv2d, Dense, Flatten, ReLU

# Integer observations are scaled into a small float range before they hit
# the first layer; float inputs are taken as-is (used by tests and by the
# knowledge branch, whose inputs are already normalized).
OBS_SCALE = 0.1


def encode_obs(obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs)
    if np.issubdtype(obs.dtype, np.integer):
        return obs.astype(np.float64) * OBS_SCALE
    return obs.astype(np.float64, copy=False)


def default_conv_spec(view_size: int) -> list[tuple[int, int]]:
    """Conv stages (out_channels, kernel) per view size; the small 5x5 view
    gets a single stage."""
    if view_size <= 5:
        return [(16, 2)]
    return [(16, 2), (32, 2)]


def conv_out_dim(view_size: int, in_channels: int, conv_spec) -> int:
    side = view_size
    ch = in_channels
    for out_ch, ksize in conv_spec:
        side = side - ksize + 1
        ch = out_ch
    if side <= 0:
        raise ValueError(f"conv spec {conv_spec} collapses a {view_size}x{view_size} view")
    return side * side * ch


class LayerStack:
    """Sequential container with prefixed parameter names."""

    def __init__(self, layers: list):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", arr) for name, arr in layer.params())
        return out

    def grads(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", arr) for name, arr in layer.grads())
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()


def _encoder_layers(view_size, in_channels, conv_spec, rng):
    layers = []
    ch = in_channels
    for out_ch, ksize in conv_spec:
        layers.append(Conv2d(ch, out_ch, ksize, rng))
        layers.append(ReLU())
        ch = out_ch
    layers.append(Flatten())
    return layers, conv_out_dim(view_size, in_channels, conv_spec)


def _fc_layers(in_dim, widths, out_dim, rng):
    layers = []
    dim = in_dim
    for w in widths:
        layers.append(Dense(dim, w, rng))
        layers.append(ReLU())
        dim = w
    layers.append(Dense(dim, out_dim, rng))
    return layers


class QNetwork:
    """Feed-forward Q-network: obs [B,V,V,C] -> Q-values [B,A]."""

    def __init__(self, arch: dict, rng: np.random.Generator):
        self.arch = dict(arch)
        v, c = arch["view_size"], arch["in_channels"]
        self.obs_shape = (v, v, c)
        self.action_count = arch["action_count"]
        enc, flat_dim = _encoder_layers(v, c, arch["conv_spec"], rng)
        fc = _fc_layers(flat_dim, arch["fc_widths"], self.action_count, rng)
        self.stack = LayerStack(enc + fc)

    @classmethod
    def build(cls, view_size, action_count, latent_dim, rng, *, in_channels=3, conv_spec=None):
        arch = {
            "type": "q",
            "view_size": view_size,
            "in_channels": in_channels,
            "conv_spec": [list(s) for s in (conv_spec if conv_spec is not None
                                            else default_conv_spec(view_size))],
            "fc_widths": [latent_dim, latent_dim],
            "action_count": action_count,
        }
        return cls(arch, rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.stack.forward(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.stack.backward(dy)

    def params(self):
        return self.stack.params()

    def grads(self):
        return self.stack.grads()

    def param_arrays(self):
        return [a for _, a in self.params()]

    def grad_arrays(self):
        return [g for _, g in self.grads()]

    def zero_grads(self):
        self.stack.zero_grads()


class RecurrentQNetwork:
    """Recurrent Q-network: per-step conv encoding feeds an LSTM whose
    output goes through the action head. Processes whole sequences for
    training and single steps (threading hidden state) at decision time.
    """

    def __init__(self, arch: dict, rng: np.random.Generator):
        self.arch = dict(arch)
        v, c = arch["view_size"], arch["in_channels"]
        self.obs_shape = (v, v, c)
        self.action_count = arch["action_count"]
        self.hidden_size = arch["hidden_size"]
        enc, flat_dim = _encoder_layers(v, c, arch["conv_spec"], rng)
        self.encoder = LayerStack(enc)
        self.lstm = LSTM(flat_dim, self.hidden_size, rng)
        self.head = Dense(self.hidden_size, self.action_count, rng)

    @classmethod
    def build(cls, view_size, action_count, hidden_size, rng, *, in_channels=3, conv_spec=None):
        arch = {
            "type": "rq",
            "view_size": view_size,
            "in_channels": in_channels,
            "conv_spec": [list(s) for s in (conv_spec if conv_spec is not None
                                            else default_conv_spec(view_size))],
            "hidden_size": hidden_size,
            "action_count": action_count,
        }
        return cls(arch, rng)

    def zero_hidden(self, batch_size: int | None = None):
        shape = (self.hidden_size,) if batch_size is None else (batch_size, self.hidden_size)
        return np.zeros(shape), np.zeros(shape)

    def _check_hidden(self, h):
        if h.shape[-1] != self.hidden_size:
            raise ValueError(
                f"hidden state has size {h.shape[-1]}, network expects {self.hidden_size}")

    def forward_seq(self, obs_seq: np.ndarray, h0: np.ndarray, c0: np.ndarray):
        """obs_seq [B,L,V,V,C] (raw) -> (q [B,L,A], (h_T, c_T))."""
        self._check_hidden(h0)
        bsz, length = obs_seq.shape[:2]
        x = encode_obs(obs_seq).reshape((bsz * length,) + self.obs_shape)
        feat = self.encoder.forward(x).reshape(bsz, length, -1)
        hs, (h_t, c_t) = self.lstm.forward_seq(feat, h0, c0)
        q = self.head.forward(hs.reshape(bsz * length, -1)).reshape(bsz, length, -1)
        return q, (h_t, c_t)

    def backward_seq(self, dq: np.ndarray) -> None:
        bsz, length, _ = dq.shape
        dh = self.head.backward(dq.reshape(bsz * length, -1)).reshape(bsz, length, -1)
        dfeat = self.lstm.backward_seq(dh)
        self.encoder.backward(dfeat.reshape((bsz * length, -1)))

    def step(self, obs: np.ndarray, h: np.ndarray, c: np.ndarray):
        """Single decision step for one observation [V,V,C]; hidden
        vectors are unbatched [H]. Returns (q [A], (h', c'))."""
        self._check_hidden(h)
        x = encode_obs(obs)[None]
        feat = self.encoder.forward(x)
        h_new, c_new = self.lstm.step(feat[0], h, c)
        q = self.head.forward(h_new[None])[0]
        return q, (h_new, c_new)

    def params(self):
        out = [(f"enc.{n}", a) for n, a in self.encoder.params()]
        out += [(f"lstm.{n}", a) for n, a in self.lstm.params()]
        out += [(f"head.{n}", a) for n, a in self.head.params()]
        return out

    def grads(self):
        out = [(f"enc.{n}", g) for n, g in self.encoder.grads()]
        out += [(f"lstm.{n}", g) for n, g in self.lstm.grads()]
        out += [(f"head.{n}", g) for n, g in self.head.grads()]
        return out

    def param_arrays(self):
        return [a for _, a in self.params()]

    def grad_arrays(self):
        return [g for _, g in self.grads()]

    def zero_grads(self):
        self.encoder.zero_grads()
        self.lstm.zero_grads()
        self.head.zero_grads()


class KnowledgeEmbedderNet:
    """Two-branch Q-network: the observation and an external knowledge
    vector are embedded separately, concatenated, and mapped to Q-values.
    """

    def __init__(self, arch: dict, rng: np.random.Generator):
        self.arch = dict(arch)
        v, c = arch["view_size"], arch["in_channels"]
        self.obs_shape = (v, v, c)
        self.action_count = arch["action_count"]
        self.knowledge_dim = arch["knowledge_dim"]
        self.state_embedding = arch["state_fc"][-1]
        self.knowledge_embedding = arch["knowledge_fc"][-1]

        enc, flat_dim = _encoder_layers(v, c, arch["conv_spec"], rng)
        state_fc = []
        dim = flat_dim
        for w in arch["state_fc"]:
            state_fc += [Dense(dim, w, rng), ReLU()]
            dim = w
        self.state_stack = LayerStack(enc + state_fc)

        know_fc = []
        dim = self.knowledge_dim
        for w in arch["knowledge_fc"]:
            know_fc += [Dense(dim, w, rng), ReLU()]
            dim = w
        self.know_stack = LayerStack(know_fc)

        joint_in = self.state_embedding + self.knowledge_embedding
        self.joint_stack = LayerStack(
            _fc_layers(joint_in, [arch["combined_dim"]], self.action_count, rng))

    @classmethod
    def build(cls, view_size, action_count, rng, *, knowledge_dim,
              latent_dim, state_embedding, knowledge_latent, knowledge_embedding,
              combined_dim, in_channels=3, conv_spec=None):
        arch = {
            "type": "k",
            "view_size": view_size,
            "in_channels": in_channels,
            "conv_spec": [list(s) for s in (conv_spec if conv_spec is not None
                                            else default_conv_spec(view_size))],
            "state_fc": [latent_dim, state_embedding],
            "knowledge_dim": knowledge_dim,
            "knowledge_fc": [knowledge_latent, knowledge_embedding],
            "combined_dim": combined_dim,
            "action_count": action_count,
        }
        return cls(arch, rng)

    def forward(self, obs_x: np.ndarray, know_x: np.ndarray) -> np.ndarray:
        s = self.state_stack.forward(obs_x)
        k = self.know_stack.forward(know_x)
        return self.joint_stack.forward(np.concatenate([s, k], axis=1))

    def backward(self, dq: np.ndarray) -> None:
        dj = self.joint_stack.backward(dq)
        ds, dk = dj[:, :self.state_embedding], dj[:, self.state_embedding:]
        self.state_stack.backward(ds)
        self.know_stack.backward(dk)

    def params(self):
        out = [(f"state.{n}", a) for n, a in self.state_stack.params()]
        out += [(f"know.{n}", a) for n, a in self.know_stack.params()]
        out += [(f"joint.{n}", a) for n, a in self.joint_stack.params()]
        return out

    def grads(self):
        out = [(f"state.{n}", g) for n, g in self.state_stack.grads()]
        out += [(f"know.{n}", g) for n, g in self.know_stack.grads()]
        out += [(f"joint.{n}", g) for n, g in self.joint_stack.grads()]
        return out

    def param_arrays(self):
        return [a for _, a in self.params()]

    def grad_arrays(self):
        return [g for _, g in self.grads()]

    def zero_grads(self):
        self.state_stack.zero_grads()
        self.know_stack.zero_grads()
        self.joint_stack.zero_grads()


_NET_TYPES = {"q": QNetwork, "rq": RecurrentQNetwork, "k": KnowledgeEmbedderNet}


def build_network(arch: dict, rng: np.random.Generator | None = None):
    """Instantiate a network from its arch dict (used by checkpoints)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    try:
        cls = _NET_TYPES[arch["type"]]
    except KeyError:
        raise ValueError(f"unknown network type {arch.get('type')!r}") from None
    return cls(arch, rng)


def clone_network(net):
    """Architecture + parameter copy (used to create target networks)."""
    twin = build_network(net.arch)
    for dst, src in zip(twin.param_arrays(), net.param_arrays()):
        dst[...] = src
    return twin


def same_architecture(a, b) -> bool:
    return a.arch == b.arch
