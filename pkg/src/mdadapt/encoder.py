"""The trainable embedding model and its momentum copy.

A deliberately small backbone: per-frame affine projection + tanh, mean
pooling over frames, and an output affine map. It preserves the
segment-of-frames -> fixed-dimension-vector contract while keeping analytic
gradients short enough to hand-derive and cheap enough to verify against
finite differences. Outputs are not length-normalized; cosine scoring
absorbs scale.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ShapeError
from .validation import as_matrix

ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class Segment:
    """A contiguous span of frames cut from one utterance.

    frame_offset records where the span starts in the source utterance so
    that non-overlap of paired views stays checkable after the cut.
    """

    frames: np.ndarray  # (num_frames, input_dim)
    source_utterance_id: str
    domain_id: str
    frame_offset: int = 0

    def __post_init__(self):
        frames = as_matrix(self.frames, "frames")
        if frames.shape[0] < 1:
            raise ShapeError("segment needs at least one frame")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class EncoderParams:
    """Parameter set of the embedding model (also used as a gradient holder).

    Shapes: w1 (hidden_dim, input_dim), b1 (hidden_dim,),
    w2 (embed_dim, hidden_dim), b2 (embed_dim,).
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise ShapeError("w1/w2 must be 2-D and b1/b2 1-D")
        if w1.shape[0] != b1.shape[0]:
            raise ShapeError(f"b1 length {b1.shape[0]} != hidden dim {w1.shape[0]}")
        if w2.shape[1] != w1.shape[0]:
            raise ShapeError(f"w2 expects {w2.shape[1]} inputs, hidden dim is {w1.shape[0]}")
        if w2.shape[0] != b2.shape[0]:
            raise ShapeError(f"b2 length {b2.shape[0]} != embed dim {w2.shape[0]}")
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite entries")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[0]

    @property
    def num_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


def init_params(
    input_dim: int,
    hidden_dim: int,
    embed_dim: int,
    rng: np.random.Generator,
    activation: str = "tanh",
) -> EncoderParams:
    """Random initialization, scaled 1/sqrt(fan_in) per layer."""
    w1 = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(hidden_dim, input_dim))
    b1 = np.zeros(hidden_dim)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(embed_dim, hidden_dim))
    b2 = np.zeros(embed_dim)
    return EncoderParams(w1=w1, b1=b1, w2=w2, b2=b2, activation=activation)


def zeros_like(p: EncoderParams) -> EncoderParams:
    return EncoderParams(
        w1=np.zeros_like(p.w1),
        b1=np.zeros_like(p.b1),
        w2=np.zeros_like(p.w2),
        b2=np.zeros_like(p.b2),
        activation=p.activation,
    )


def add_scaled(p: EncoderParams, g: EncoderParams, scale: float) -> EncoderParams:
    """p + scale * g, elementwise; used for both accumulation and SGD steps."""
    _check_same_shape(p, g)
    return replace(
        p,
        w1=p.w1 + scale * g.w1,
        b1=p.b1 + scale * g.b1,
        w2=p.w2 + scale * g.w2,
        b2=p.b2 + scale * g.b2,
    )


def params_to_vector(p: EncoderParams) -> np.ndarray:
    """Flatten parameters to one vector (order: w1, b1, w2, b2, row-major)."""
    return np.concatenate([p.w1.ravel(), p.b1, p.w2.ravel(), p.b2])


def vector_to_params(vec: np.ndarray, template: EncoderParams) -> EncoderParams:
    """Inverse of params_to_vector, shapes taken from `template`."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != template.num_params:
        raise ShapeError(f"expected {template.num_params} values, got {vec.size}")
    sizes = [template.w1.size, template.b1.size, template.w2.size, template.b2.size]
    parts = np.split(vec, np.cumsum(sizes)[:-1])
    return replace(
        template,
        w1=parts[0].reshape(template.w1.shape),
        b1=parts[1].copy(),
        w2=parts[2].reshape(template.w2.shape),
        b2=parts[3].copy(),
    )


def _check_same_shape(a: EncoderParams, b: EncoderParams) -> None:
    if (
        a.w1.shape != b.w1.shape
        or a.b1.shape != b.b1.shape
        or a.w2.shape != b.w2.shape
        or a.b2.shape != b.b2.shape
    ):
        raise ShapeError("parameter sets have mismatched shapes")
    if a.activation != b.activation:
        raise ShapeError("parameter sets have different activations")


def _hidden(p: EncoderParams, frames: np.ndarray) -> np.ndarray:
    pre = frames @ p.w1.T + p.b1
    if p.activation == "tanh":
        return np.tanh(pre)
    return pre


def encode(p: EncoderParams, segment: Segment) -> np.ndarray:
    """Forward pass: per-frame affine + activation, mean-pool, output affine.

    Raises:
        ShapeError: frame dimension does not match the encoder's input_dim.
    """
    if segment.input_dim != p.input_dim:
        raise ShapeError(
            f"segment frames are {segment.input_dim}-dim, encoder expects {p.input_dim}"
        )
    hidden = _hidden(p, segment.frames)
    pooled = hidden.mean(axis=0)
    return p.w2 @ pooled + p.b2


def encode_grad(p: EncoderParams, segment: Segment, upstream) -> EncoderParams:
    """Gradient of <upstream, encode(p, segment)> w.r.t. every parameter.

    Returns a parameter-shaped holder with the same activation tag.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (p.embed_dim,):
        raise ShapeError(
            f"upstream must have shape ({p.embed_dim},), got {upstream.shape}"
        )
    if segment.input_dim != p.input_dim:
        raise ShapeError(
            f"segment frames are {segment.input_dim}-dim, encoder expects {p.input_dim}"
        )
    frames = segment.frames
    num_frames = frames.shape[0]
    hidden = _hidden(p, frames)  # (T, H)
    pooled = hidden.mean(axis=0)

    grad_w2 = np.outer(upstream, pooled)
    grad_b2 = upstream.copy()
    grad_pooled = p.w2.T @ upstream  # (H,)

    # mean pooling spreads the pooled gradient evenly over frames
    grad_hidden = np.tile(grad_pooled / num_frames, (num_frames, 1))
    if p.activation == "tanh":
        grad_pre = grad_hidden * (1.0 - hidden * hidden)
    else:
        grad_pre = grad_hidden
    grad_w1 = grad_pre.T @ frames
    grad_b1 = grad_pre.sum(axis=0)
    return EncoderParams(
        w1=grad_w1, b1=grad_b1, w2=grad_w2, b2=grad_b2, activation=p.activation
    )


def momentum_update(
    theta_k: EncoderParams, theta: EncoderParams, m: float
) -> EncoderParams:
    """Exponential moving average of parameters: m * theta_k + (1 - m) * theta.

    Returns a fresh parameter set; neither input is mutated.

    Raises:
        ShapeError: shape mismatch between the two parameter sets.
        ValueError: m outside [0, 1).
    """
    if not (0.0 <= m < 1.0):
        raise ValueError(f"momentum coefficient must be in [0, 1), got {m}")
    _check_same_shape(theta_k, theta)
    return replace(
        theta_k,
        w1=m * theta_k.w1 + (1.0 - m) * theta.w1,
        b1=m * theta_k.b1 + (1.0 - m) * theta.b1,
        w2=m * theta_k.w2 + (1.0 - m) * theta.w2,
        b2=m * theta_k.b2 + (1.0 - m) * theta.b2,
    )


# ---------------------------------------------------------------------------
# Checkpoint format: structured text, one header line, dims, activation, then
# one line per parameter array with entries at 17 significant digits (exact
# round trip for IEEE 754 doubles).
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = "mdadapt-encoder"
CHECKPOINT_VERSION = 1


def dump_params(p: EncoderParams) -> str:
    out = io.StringIO()
    out.write(f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n")
    out.write(f"input_dim {p.input_dim}\n")
    out.write(f"hidden_dim {p.hidden_dim}\n")
    out.write(f"embed_dim {p.embed_dim}\n")
    out.write(f"activation {p.activation}\n")
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(p, name)
        body = " ".join(f"{v:.17g}" for v in arr.ravel())
        out.write(f"{name} {body}\n")
    return out.getvalue()


def save_params(p: EncoderParams, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_params(p))


def _parse_array(body: str) -> np.ndarray:
    return np.array([float(tok) for tok in body.split()], dtype=np.float64)


def parse_params(text: str) -> EncoderParams:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise ShapeError("not an encoder checkpoint")
    header = lines[0].split()
    if header[1] != f"v{CHECKPOINT_VERSION}":
        raise ShapeError(f"unsupported checkpoint version {header[1]}")
    fields: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        fields[key] = rest
    try:
        input_dim = int(fields["input_dim"])
        hidden_dim = int(fields["hidden_dim"])
        embed_dim = int(fields["embed_dim"])
        activation = fields["activation"].strip()
        w1 = _parse_array(fields["w1"]).reshape(hidden_dim, input_dim)
        b1 = _parse_array(fields["b1"])
        w2 = _parse_array(fields["w2"]).reshape(embed_dim, hidden_dim)
        b2 = _parse_array(fields["b2"])
    except KeyError as exc:
        raise ShapeError(f"checkpoint missing field {exc}") from exc
    except ValueError as exc:
        raise ShapeError(f"malformed checkpoint: {exc}") from exc
    return EncoderParams(w1=w1, b1=b1, w2=w2, b2=b2, activation=activation)


def load_params(path) -> EncoderParams:
    with open(path, "r", encoding="ascii") as fh:
        return parse_params(fh.read())
