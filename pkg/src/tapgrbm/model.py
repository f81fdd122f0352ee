"""Model containers, initialization from data, and the on-disk format.

A model is a chain of layers ``0 .. L`` of sites with per-site priors, and a
dense coupling matrix between every pair of adjacent layers.  Layer 0 is the
visible layer.  :class:`GrbmModel` is the one-hidden-layer case and
:class:`DbmModel` the general one; both expose ``layers`` and ``weights`` so
inference code can treat them uniformly.

File layout (all integers and floats little-endian)::

    b"TAPM" | u16 version | u32 header length | JSON header | float64 payload | sha256

The digest covers every preceding byte.  The payload stores, for each layer,
its parameter arrays in ``UnitParams.present_names`` order, followed by each
weight matrix in row-major order.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ModelCorruptError, ModelFileError, ModelVersionError
from .units import Family, UnitParams

MAGIC = b"TAPM"
FORMAT_VERSION = 1
DEFAULT_SIGMA = 1e-3
MOMENT_CLAMP = 1e-3

_PREFIX = struct.Struct("<4sHI")
_DIGEST_SIZE = 32


def _check_weight(W, n_in, n_out, index):
    W = np.asarray(W, dtype=float)
    if W.shape != (n_in, n_out):
        raise InputError(f"weight matrix {index} has shape {W.shape}, expected {(n_in, n_out)}")
    if not np.all(np.isfinite(W)):
        raise InputError(f"weight matrix {index} has non-finite entries")
    return W


@dataclass
class DbmModel:
    """Layered Boltzmann machine with couplings only between adjacent layers."""

    layers: list[UnitParams]
    weights: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layers = list(self.layers)
        if len(self.layers) < 2:
            raise InputError("a model needs a visible layer and at least one hidden layer")
        if len(self.weights) != len(self.layers) - 1:
            raise InputError("need exactly one weight matrix per pair of adjacent layers")
        for p in self.layers:
            if len(p.shape) != 1:
                raise InputError("layer parameters must be one-dimensional arrays")
        self.weights = [
            _check_weight(W, self.layers[l].size, self.layers[l + 1].size, l) for l, W in enumerate(self.weights)
        ]

    @property
    def sizes(self):
        return [p.size for p in self.layers]

    @property
    def depth(self):
        """Number of hidden layers."""
        return len(self.layers) - 1

    @property
    def n_visible(self):
        return self.layers[0].size

    def copy(self):
        return copy.deepcopy(self)

    def block_weights(self):
        """Symmetric coupling matrix over all sites, zero except adjacent blocks."""
        offsets = np.cumsum([0] + self.sizes)
        J = np.zeros((offsets[-1], offsets[-1]))
        for l, W in enumerate(self.weights):
            J[offsets[l] : offsets[l + 1], offsets[l + 1] : offsets[l + 2]] = W
        return J + J.T

    def as_grbm(self):
        if self.depth != 1:
            raise InputError("only a one-hidden-layer model can be viewed as an RBM")
        return GrbmModel(self.weights[0].copy(), self.layers[0], self.layers[1], dict(self.metadata))


class GrbmModel(DbmModel):
    """Bipartite model: one visible and one hidden layer."""

    def __init__(self, W, vis_params: UnitParams, hid_params: UnitParams, metadata=None):
        super().__init__([vis_params, hid_params], [W], metadata or {})

    @property
    def W(self):
        return self.weights[0]

    @W.setter
    def W(self, value):
        self.weights[0] = _check_weight(value, self.n_visible, self.n_hidden, 0)

    @property
    def vis_params(self):
        return self.layers[0]

    @vis_params.setter
    def vis_params(self, value):
        self.layers[0] = value

    @property
    def hid_params(self):
        return self.layers[1]

    @hid_params.setter
    def hid_params(self, value):
        self.layers[1] = value

    @property
    def n_hidden(self):
        return self.layers[1].size

    def as_grbm(self):
        return self

    def as_dbm(self):
        return DbmModel(list(self.layers), [self.W.copy()], dict(self.metadata))

    def __repr__(self):
        return (
            f"GrbmModel({self.n_visible} {self.vis_params.family.value} x "
            f"{self.n_hidden} {self.hid_params.family.value})"
        )


def model_equal(m1: DbmModel, m2: DbmModel) -> bool:
    """Bitwise equality of all parameters."""
    return (
        len(m1.layers) == len(m2.layers)
        and all(p.equals(q) for p, q in zip(m1.layers, m2.layers))
        and all(np.array_equal(a, b) for a, b in zip(m1.weights, m2.weights))
    )


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def visible_params_from_data(family, data, bounds=(0.0, 1.0)) -> UnitParams:
    """Per-site priors matched to the empirical moments of ``data``.

    Means and variances are clamped away from degenerate values so constant
    pixels get large but finite parameters.  Truncated Gaussians use the
    Gaussian moment map ``V = 1/var, U = mean/var``.
    """
    family = Family(family)
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InputError("data sample must be a non-empty 2-D array")
    lo, hi = bounds
    if family is Family.BINARY:
        m = np.clip(data.mean(axis=0), MOMENT_CLAMP, 1 - MOMENT_CLAMP)
        return UnitParams.binary(np.log(m) - np.log1p(-m))
    width = hi - lo

    def gauss_fit(mean, var):
        mean = np.clip(mean, lo + MOMENT_CLAMP * width, hi - MOMENT_CLAMP * width)
        var = np.maximum(var, MOMENT_CLAMP * width * width)
        return mean / var, 1.0 / var

    if family is Family.TRUNC_GAUSS:
        U, V = gauss_fit(data.mean(axis=0), data.var(axis=0))
        return UnitParams.trunc_gauss(U, V, lo, hi)
    nz = data != 0
    count = nz.sum(axis=0)
    rho = np.clip(count / data.shape[0], MOMENT_CLAMP, 1 - MOMENT_CLAMP)
    safe = np.maximum(count, 1)
    mean = np.where(nz, data, 0.0).sum(axis=0) / safe
    var = np.where(nz, data * data, 0.0).sum(axis=0) / safe - mean * mean
    U, V = gauss_fit(np.where(count > 0, mean, 0.5 * (lo + hi)), var)
    return UnitParams.tgb(rho, U, V, lo, hi)


def init_model(
    sizes,
    vis_family="binary",
    hid_family="binary",
    data_sample=None,
    sigma=DEFAULT_SIGMA,
    seed=0,
    bounds=(0.0, 1.0),
    hid_bounds=(0.0, 1.0),
) -> GrbmModel:
    """Fresh model with ``W ~ N(0, sigma^2)`` and data-matched visible priors.

    ``sizes`` is ``(n_visible, n_hidden)``.  Without ``data_sample`` the
    visible layer gets neutral parameters as well.
    """
    n_v, n_h = (int(s) for s in sizes)
    if n_v <= 0 or n_h <= 0:
        raise InputError("layer sizes must be positive")
    if not sigma > 0:
        raise InputError("sigma must be positive")
    if data_sample is None:
        vis = UnitParams.neutral(vis_family, n_v, *bounds)
    else:
        data_sample = np.asarray(data_sample, dtype=float)
        if data_sample.ndim != 2 or data_sample.shape[1] != n_v:
            raise InputError(f"data sample must have {n_v} columns")
        vis = visible_params_from_data(vis_family, data_sample, bounds)
    hid = UnitParams.neutral(hid_family, n_h, *hid_bounds)
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, sigma, size=(n_v, n_h))
    return GrbmModel(W, vis, hid, {"seed": seed, "sigma": sigma, "epoch": 0})


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _header(model: DbmModel):
    return {
        "kind": "grbm" if isinstance(model, GrbmModel) else "dbm",
        "layers": [
            {"family": p.family.value, "size": p.size, "params": list(p.present_names)} for p in model.layers
        ],
        "weights": [list(W.shape) for W in model.weights],
        "metadata": model.metadata,
    }


def save_model(model: DbmModel, path) -> None:
    header = json.dumps(_header(model), sort_keys=True, default=str).encode()
    chunks = [getattr(p, n) for p in model.layers for n in p.present_names] + list(model.weights)
    payload = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks)
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + payload
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_model(path) -> DbmModel:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST_SIZE:
        raise ModelCorruptError(f"{path}: file too short")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})")
    body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelCorruptError(f"{path}: checksum mismatch")
    try:
        header = json.loads(body[_PREFIX.size : _PREFIX.size + header_len])
    except ValueError as exc:
        raise ModelCorruptError(f"{path}: unreadable header") from exc
    offset = _PREFIX.size + header_len
    if offset > len(body) or (len(body) - offset) % 8:
        raise ModelCorruptError(f"{path}: payload is not a whole number of float64 values")
    data = np.frombuffer(body, dtype="<f8", offset=offset).astype(float)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > data.size:
            raise ModelCorruptError(f"{path}: payload shorter than header declares")
        out = data[pos : pos + n]
        pos += n
        return out

    try:
        layers = []
        for spec in header["layers"]:
            values = {name: take(spec["size"]) for name in spec["params"]}
            layers.append(UnitParams(Family(spec["family"]), **values))
        weights = [take(r * c).reshape(r, c) for r, c in header["weights"]]
        kind, metadata = header["kind"], header["metadata"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelCorruptError(f"{path}: malformed header ({exc})") from exc
    if pos != data.size:
        raise ModelCorruptError(f"{path}: trailing payload bytes")
    if kind == "grbm":
        return GrbmModel(weights[0], layers[0], layers[1], metadata)
    return DbmModel(layers, weights, metadata)
