"""Capsule layers: squashing, primary capsules, vote transforms, and routing.

A capsule is a vector whose direction encodes instantiation parameters and
whose length (always < 1 after squashing) encodes presence. Votes are rank-4
tensors [B, N_in, N_out, D_out]: one predicted output vector per
(input capsule, output capsule) pair. Routing turns votes into output
capsules, either iteratively (dynamic agreement) or in a single attention
pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (
    Tensor,
    conv2d,
    matmul,
    relu,
    sigmoid,
    softmax,
    square,
    vector_norm,
)

__all__ = [
    "squash",
    "CapsuleBank",
    "PrimaryCapsules",
    "SharedAffine",
    "ConvAffine",
    "ConstantAffine",
    "make_affine",
    "RoutingSpec",
    "RoutingState",
    "dynamic_routing",
    "attention_routing",
    "DynamicRouting",
    "AttentionRouting",
    "make_routing",
    "Decoder",
    "RegressionHead",
    "classify",
]


def squash(s: Tensor, eps: float = 1e-12) -> Tensor:
    """Shrink vectors along the last axis to length n^2 / (1 + n^2).

    Direction is preserved and the output norm is strictly below 1; the zero
    vector maps to itself. Computed as s * n / (1 + n^2) with the norm guarded
    by ``eps``.
    """
    n = vector_norm(s, eps)
    gain = n / (1.0 + square(n))
    return s * gain.reshape(gain.shape + (1,))


@dataclass
class CapsuleBank:
    """A set of capsule vectors plus the spatial layout they came from.

    ``grid`` and ``caps_per_cell`` are retained for transforms that need the
    original feature-map arrangement (e.g. convolutional vote kernels); digit
    banks carry neither.
    """

    activations: Tensor  # [B, n_caps, d]
    role: str = "primary"
    grid: tuple[int, int] | None = None
    caps_per_cell: int | None = None

    @property
    def n_caps(self) -> int:
        return self.activations.shape[1]

    @property
    def d(self) -> int:
        return self.activations.shape[2]


class PrimaryCapsules:
    """Strided convolution whose output channels regroup into squashed capsules.

    Channel c of grid cell (gy, gx) contributes component c % d of capsule
    (gy * W + gx) * caps_per_cell + c // d, i.e. capsules enumerate the grid
    row-major with ``caps_per_cell`` vectors per cell.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        d: int = 8,
        kernel: int = 9,
        stride: int = 2,
        rng: np.random.Generator | None = None,
    ):
        if out_channels % d:
            raise ConfigurationError(
                f"primary capsules need out_channels divisible by capsule size: "
                f"{out_channels} % {d} != 0"
            )
        rng = rng or np.random.default_rng(0)
        self.caps_per_cell = out_channels // d
        self.d = d
        self.kernel = kernel
        self.stride = stride
        std = np.sqrt(2.0 / (in_channels * kernel * kernel))
        self.weight = Tensor(
            rng.normal(0.0, std, size=(out_channels, in_channels, kernel, kernel)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def __call__(self, features: Tensor) -> CapsuleBank:
        z = conv2d(features, self.weight, stride=self.stride)
        z = z + self.bias.reshape((1, self.bias.size, 1, 1))
        bsz, ch, hg, wg = z.shape
        caps = z.reshape((bsz, self.caps_per_cell, self.d, hg, wg))
        caps = caps.transpose((0, 3, 4, 1, 2))
        caps = caps.reshape((bsz, hg * wg * self.caps_per_cell, self.d))
        return CapsuleBank(
            squash(caps), role="primary", grid=(hg, wg), caps_per_cell=self.caps_per_cell
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


# ---------------------------------------------------------------- vote transforms
class SharedAffine:
    """One learned D_in x (N_out * D_out) matrix per input capsule."""

    def __init__(
        self,
        n_in: int,
        d_in: int,
        n_out: int,
        d_out: int,
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.n_out, self.d_out = n_out, d_out
        std = 1.0 / np.sqrt(d_in)
        self.weight = Tensor(
            rng.normal(0.0, std, size=(n_in, d_in, n_out * d_out)), requires_grad=True
        )

    def __call__(self, bank: CapsuleBank) -> Tensor:
        u = bank.activations
        bsz, n, d = u.shape
        if (n, d) != self.weight.shape[:2]:
            raise DimensionError(
                f"shared affine built for {self.weight.shape[:2]} capsules, got {(n, d)}"
            )
        votes = matmul(u.reshape((bsz, n, 1, d)), self.weight)  # [B, N, 1, J*D]
        return votes.reshape((bsz, n, self.n_out, self.d_out))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight)]


class ConvAffine:
    """Votes from a small convolution over the primary-capsule grid.

    The capsule bank is laid back out as a feature map and convolved with a
    kernel emitting caps_per_cell * N_out * D_out channels, so every input
    capsule still produces one vote per output capsule.
    """

    def __init__(
        self,
        caps_per_cell: int,
        d_in: int,
        n_out: int,
        d_out: int,
        rng: np.random.Generator | None = None,
        kernel: int = 3,
        padding: int = 1,
    ):
        rng = rng or np.random.default_rng(0)
        self.caps_per_cell = caps_per_cell
        self.d_in = d_in
        self.n_out, self.d_out = n_out, d_out
        self.padding = padding
        in_ch = caps_per_cell * d_in
        out_ch = caps_per_cell * n_out * d_out
        std = np.sqrt(2.0 / (in_ch * kernel * kernel))
        self.weight = Tensor(
            rng.normal(0.0, std, size=(out_ch, in_ch, kernel, kernel)), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, bank: CapsuleBank) -> Tensor:
        if bank.grid is None or bank.caps_per_cell is None:
            raise ConfigurationError("convolutional votes need a grid-structured capsule bank")
        hg, wg = bank.grid
        cpl = bank.caps_per_cell
        u = bank.activations
        bsz = u.shape[0]
        fmap = u.reshape((bsz, hg, wg, cpl, self.d_in))
        fmap = fmap.transpose((0, 3, 4, 1, 2)).reshape((bsz, cpl * self.d_in, hg, wg))
        z = conv2d(fmap, self.weight, stride=1, padding=self.padding)
        z = z + self.bias.reshape((1, self.bias.size, 1, 1))
        votes = z.reshape((bsz, cpl, self.n_out, self.d_out, hg, wg))
        votes = votes.transpose((0, 4, 5, 1, 2, 3))
        return votes.reshape((bsz, hg * wg * cpl, self.n_out, self.d_out))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


class ConstantAffine:
    """Fixed all-ones transform: every vote component is the sum of the input capsule.

    Has no learnable parameters; useful as an ablation of what the vote
    transform contributes.
    """

    def __init__(self, n_out: int, d_out: int):
        self.template = Tensor(np.ones((n_out, d_out)))

    def __call__(self, bank: CapsuleBank) -> Tensor:
        u = bank.activations
        bsz, n, _ = u.shape
        totals = u.sum(axis=-1).reshape((bsz, n, 1, 1))
        return totals * self.template

    def parameters(self) -> list[tuple[str, Tensor]]:
        return []


def make_affine(
    kind: str,
    *,
    n_in: int,
    d_in: int,
    n_out: int,
    d_out: int,
    caps_per_cell: int,
    rng: np.random.Generator | None = None,
):
    if kind == "shared":
        return SharedAffine(n_in, d_in, n_out, d_out, rng)
    if kind == "conv":
        return ConvAffine(caps_per_cell, d_in, n_out, d_out, rng)
    if kind == "constant":
        return ConstantAffine(n_out, d_out)
    raise ConfigurationError(f"unknown vote transform kind: {kind!r}")


# ---------------------------------------------------------------------- routing
@dataclass
class RoutingSpec:
    """How votes become output capsules.

    ``iterations`` only matters for the dynamic method; the attention fields
    only matter for the attention method.
    """

    method: str = "attention"  # "dynamic" | "attention"
    iterations: int = 3
    softmax_axis: str = "input_caps"  # "input_caps" | "output_caps"
    scale_by_sqrt_d: bool = False

    def __post_init__(self):
        if self.method not in ("dynamic", "attention"):
            raise ConfigurationError(f"unknown routing method: {self.method!r}")
        if self.softmax_axis not in ("input_caps", "output_caps"):
            raise ConfigurationError(f"unknown softmax axis: {self.softmax_axis!r}")


@dataclass
class RoutingState:
    """Diagnostics captured during routing (plain arrays, not graph nodes)."""

    logits: np.ndarray  # final [B, N_in, N_out]
    coefficients: list[np.ndarray] = field(default_factory=list)  # one per iteration
    outputs: list[np.ndarray] = field(default_factory=list)  # squashed v per iteration


def _check_votes(votes: Tensor) -> tuple[int, int, int, int]:
    if votes.ndim != 4:
        raise DimensionError(f"routing expects votes [B, N_in, N_out, D_out], got {votes.shape}")
    return votes.shape


def dynamic_routing(votes: Tensor, iterations: int) -> tuple[CapsuleBank, RoutingState]:
    """Iterative routing-by-agreement.

    Starting from zero logits, each round softmaxes the logits over output
    capsules, forms weighted vote sums, squashes them, and reinforces logits
    by the dot product between votes and outputs. Gradients flow through every
    iteration; nothing is detached.
    """
    if iterations < 1:
        raise ConfigurationError(f"dynamic routing needs iterations >= 1, got {iterations}")
    bsz, n_in, n_out, d_out = _check_votes(votes)
    logits = Tensor(np.zeros((bsz, n_in, n_out)))
    state = RoutingState(logits=np.zeros((bsz, n_in, n_out)))
    v = None
    for _ in range(iterations):
        coupling = softmax(logits, axis=2)
        s = (coupling.reshape((bsz, n_in, n_out, 1)) * votes).sum(axis=1)
        v = squash(s)
        agreement = (votes * v.reshape((bsz, 1, n_out, d_out))).sum(axis=-1)
        logits = logits + agreement
        state.coefficients.append(coupling.data.copy())
        state.outputs.append(v.data.copy())
    state.logits = logits.data.copy()
    return CapsuleBank(v, role="digit"), state


def attention_routing(
    votes: Tensor,
    weight: Tensor,
    bias: Tensor,
    softmax_axis: str = "input_caps",
    scale_by_sqrt_d: bool = False,
) -> tuple[CapsuleBank, RoutingState]:
    """Single-pass routing: votes score themselves through a shared projection.

    Each vote is projected to a scalar logit by one weight vector of length
    D_out plus a bias (the same projection for every capsule pair), optionally
    scaled by 1/sqrt(D_out), then normalized by softmax over the chosen axis
    (input capsules by default). Outputs are squashed attention-weighted vote
    sums. No iteration takes place.
    """
    bsz, n_in, n_out, d_out = _check_votes(votes)
    if weight.shape != (d_out, 1):
        raise DimensionError(f"attention projection expects weight [{d_out}, 1], got {weight.shape}")
    logits = matmul(votes, weight).reshape((bsz, n_in, n_out)) + bias
    if scale_by_sqrt_d:
        logits = logits * (1.0 / np.sqrt(d_out))
    axis = 1 if softmax_axis == "input_caps" else 2
    attn = softmax(logits, axis=axis)
    s = (attn.reshape((bsz, n_in, n_out, 1)) * votes).sum(axis=1)
    v = squash(s)
    state = RoutingState(
        logits=logits.data.copy(), coefficients=[attn.data.copy()], outputs=[v.data.copy()]
    )
    return CapsuleBank(v, role="digit"), state


class DynamicRouting:
    """Parameter-free wrapper running ``dynamic_routing`` a fixed number of rounds."""

    def __init__(self, iterations: int = 3):
        self.iterations = iterations

    def __call__(self, votes: Tensor) -> tuple[CapsuleBank, RoutingState]:
        return dynamic_routing(votes, self.iterations)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return []


class AttentionRouting:
    """Learned single-pass routing; holds the shared projection weights."""

    def __init__(
        self,
        d_out: int,
        softmax_axis: str = "input_caps",
        scale_by_sqrt_d: bool = False,
    ):
        # Zero projection means uniform attention at initialization; weights
        # receive gradients as soon as votes differ.
        self.weight = Tensor(np.zeros((d_out, 1)), requires_grad=True)
        self.bias = Tensor(np.zeros(()), requires_grad=True)
        self.softmax_axis = softmax_axis
        self.scale_by_sqrt_d = scale_by_sqrt_d

    def __call__(self, votes: Tensor) -> tuple[CapsuleBank, RoutingState]:
        return attention_routing(
            votes, self.weight, self.bias, self.softmax_axis, self.scale_by_sqrt_d
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


def make_routing(spec: RoutingSpec, d_out: int):
    if spec.method == "dynamic":
        return DynamicRouting(spec.iterations)
    return AttentionRouting(d_out, spec.softmax_axis, spec.scale_by_sqrt_d)


# ------------------------------------------------------------------- read-outs
class _Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: str = "relu"):
        std = np.sqrt(2.0 / n_in) if gain == "relu" else np.sqrt(2.0 / (n_in + n_out))
        self.weight = Tensor(rng.normal(0.0, std, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


class Decoder:
    """Reconstruct the flattened input image from all digit capsules.

    Two ReLU layers feed a sigmoid readout sized to the image, so outputs live
    in (0, 1) like the pixels they imitate.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: tuple[int, int] = (128, 256),
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.layers = [
            _Linear(in_dim, hidden[0], rng),
            _Linear(hidden[0], hidden[1], rng),
            _Linear(hidden[1], out_dim, rng, gain="linear"),
        ]

    def __call__(self, digit_caps: Tensor) -> Tensor:
        bsz = digit_caps.shape[0]
        x = digit_caps.reshape((bsz, -1))
        x = relu(self.layers[0](x))
        x = relu(self.layers[1](x))
        return sigmoid(self.layers[2](x))

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"fc{i + 1}.{n}", t) for n, t in layer.parameters()]
        return out


class RegressionHead:
    """Linear readout of all digit capsules to one scalar per sample."""

    def __init__(self, in_dim: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.linear = _Linear(in_dim, 1, rng, gain="linear")

    def __call__(self, digit_caps: Tensor) -> Tensor:
        bsz = digit_caps.shape[0]
        return self.linear(digit_caps.reshape((bsz, -1))).reshape((bsz,))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.linear.parameters()]


def classify(digit_caps: Tensor, positive_class: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class indices and positive-class scores from capsule norms.

    The prediction is the argmax of the capsule lengths; exact ties resolve to
    the lower index. Scores are the raw length of the ``positive_class``
    capsule, suitable for ranking metrics.
    """
    norms = vector_norm(digit_caps).data
    preds = norms.argmax(axis=1).astype(np.int64)
    return preds, norms[:, positive_class].copy()
