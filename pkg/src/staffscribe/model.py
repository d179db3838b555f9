"""Image encoder and the three decoder heads.

The encoder is a convolutional stack that pools height aggressively and
width lightly, followed by a per-column projection and a bidirectional
LSTM, yielding one feature vector per vertical image slice.  Decoders
turn slice encodings into per-slice output distributions:

* baseline: two parallel linear classifiers (pitch axis, rhythm axis),
* flag: a binary staff-symbol vector plus per-position rhythm and
  accidental classifiers over a two-rows-per-position note grid,
* rnn: a vertical recurrent cell emitting a fixed number of
  (pitch, rhythm) predictions per slice through one shared classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from . import diffcore as dc
from . import notation as nt
from .ctc import FlagActivation
from .diffcore import Tensor
from .labels import DEFAULT_FLAG_SPACE, STREAM_COUNT, FlagSpace

PITCH_BLANK = len(nt.PITCH_AXIS_VOCAB)
RHYTHM_BLANK = len(nt.RHYTHM_AXIS_VOCAB)
DECODER_KINDS = ("baseline", "flag", "rnn")


@dataclass(frozen=True)
class EncoderConfig:
    filters: tuple[int, ...] = (32, 64, 128, 256)
    kernel: int = 3
    pool_h: tuple[int, ...] = (2, 2, 2, 2)
    pool_w: tuple[int, ...] = (2, 2, 1, 1)
    proj_dim: int = 512
    lstm_hidden: int = 256
    lstm_layers: int = 2
    leaky_slope: float = 0.1
    input_height: int = 128

    def __post_init__(self):
        if not (len(self.filters) == len(self.pool_h) == len(self.pool_w)):
            raise ValueError("filters/pool_h/pool_w must have equal length")
        if self.input_height % self.height_downsample:
            raise ValueError(
                f"input height {self.input_height} not divisible by "
                f"total height pooling {self.height_downsample}"
            )

    @property
    def height_downsample(self) -> int:
        return prod(self.pool_h)

    @property
    def width_downsample(self) -> int:
        return prod(self.pool_w)

    @property
    def column_features(self) -> int:
        return self.filters[-1] * (self.input_height // self.height_downsample)

    @property
    def slice_dim(self) -> int:
        return 2 * self.lstm_hidden


# small preset for gradient checks and desk-scale training runs
TINY_ENCODER = EncoderConfig(
    filters=(8, 12, 16, 24),
    proj_dim=96,
    lstm_hidden=48,
    lstm_layers=1,
    input_height=16,
)
SMALL_ENCODER = EncoderConfig(
    filters=(12, 20, 28, 40),
    proj_dim=144,
    lstm_hidden=72,
    lstm_layers=1,
    input_height=128,
)


@dataclass(frozen=True)
class ModelConfig:
    decoder: str = "baseline"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    flag_staff_latent: int = 128
    flag_note_latent: int = 256
    rnn_hidden: int = 256
    dtype: str = "float64"
    flag_space: FlagSpace = DEFAULT_FLAG_SPACE

    def __post_init__(self):
        if self.decoder not in DECODER_KINDS:
            raise ValueError(f"unknown decoder kind {self.decoder!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def tiny_config(decoder: str, dtype: str = "float64") -> ModelConfig:
    return ModelConfig(
        decoder=decoder,
        encoder=TINY_ENCODER,
        flag_staff_latent=24,
        flag_note_latent=48,
        rnn_hidden=32,
        dtype=dtype,
    )


def small_config(decoder: str, dtype: str = "float32") -> ModelConfig:
    return ModelConfig(
        decoder=decoder,
        encoder=SMALL_ENCODER,
        flag_staff_latent=48,
        flag_note_latent=96,
        rnn_hidden=64,
        dtype=dtype,
    )


# ---------------------------------------------------------------------------
# preprocessing

def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment."""
    in_h, in_w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def preprocess(pixels: np.ndarray, target_height: int = 128) -> np.ndarray:
    """Invert (ink becomes 1, paper 0) and resize to a fixed height.

    Width scales by the same factor, rounded to the nearest pixel.
    """
    if pixels.ndim != 2 or pixels.size == 0:
        raise ValueError(f"preprocess: need a non-empty 2-D image, got {pixels.shape}")
    h, w = pixels.shape
    if h < 8:
        raise ValueError(f"preprocess: image height {h} below minimum 8")
    inverted = 1.0 - pixels
    out_w = max(1, round(w * target_height / h))
    return bilinear_resize(inverted, target_height, out_w)


# ---------------------------------------------------------------------------
# parameter initialization

def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class TranscriptionModel:
    """Holds a named parameter dict and builds fresh graphs per call."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(np.random.PCG64(seed))
        self._init_encoder(rng)
        self._init_head(rng)

    # -- construction -------------------------------------------------------

    def _add(self, name, values):
        self.params[name] = dc.tensor(values, dtype=self.config.np_dtype, name=name)

    def _init_encoder(self, rng):
        cfg = self.config.encoder
        dt = self.config.np_dtype
        in_ch = 1
        for i, out_ch in enumerate(cfg.filters):
            k = cfg.kernel
            self._add(f"enc.conv{i}.w", _uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k, dt))
            self._add(f"enc.conv{i}.b", np.zeros(out_ch, dtype=dt))
            in_ch = out_ch
        self._add(
            "enc.proj.w",
            _uniform(rng, (cfg.column_features, cfg.proj_dim), cfg.column_features, dt),
        )
        self._add("enc.proj.b", np.zeros(cfg.proj_dim, dtype=dt))
        in_dim = cfg.proj_dim
        for layer in range(cfg.lstm_layers):
            for direction in ("fwd", "bwd"):
                base = f"enc.lstm{layer}.{direction}"
                n = cfg.lstm_hidden
                self._add(f"{base}.w_ih", _uniform(rng, (in_dim, 4 * n), in_dim, dt))
                self._add(f"{base}.w_hh", _uniform(rng, (n, 4 * n), n, dt))
                self._add(f"{base}.b", np.zeros(4 * n, dtype=dt))
            in_dim = cfg.slice_dim

    def _init_head(self, rng):
        cfg = self.config
        dt = cfg.np_dtype
        d = cfg.encoder.slice_dim
        n_pitch = PITCH_BLANK + 1
        n_rhythm = RHYTHM_BLANK + 1
        if cfg.decoder == "baseline":
            self._add("head.pitch.w", _uniform(rng, (d, n_pitch), d, dt))
            self._add("head.pitch.b", np.zeros(n_pitch, dtype=dt))
            self._add("head.rhythm.w", _uniform(rng, (d, n_rhythm), d, dt))
            self._add("head.rhythm.b", np.zeros(n_rhythm, dtype=dt))
        elif cfg.decoder == "flag":
            sp = cfg.flag_space
            self._add("head.staff_latent.w", _uniform(rng, (d, cfg.flag_staff_latent), d, dt))
            self._add("head.staff_latent.b", np.zeros(cfg.flag_staff_latent, dtype=dt))
            self._add("head.note_latent.w", _uniform(rng, (d, cfg.flag_note_latent), d, dt))
            self._add("head.note_latent.b", np.zeros(cfg.flag_note_latent, dtype=dt))
            self._add(
                "head.staff.w",
                _uniform(rng, (cfg.flag_staff_latent, sp.staff_bits), cfg.flag_staff_latent, dt),
            )
            self._add("head.staff.b", np.zeros(sp.staff_bits, dtype=dt))
            self._add(
                "head.rhythm.w",
                _uniform(
                    rng,
                    (cfg.flag_note_latent, sp.rows * sp.rhythm_classes),
                    cfg.flag_note_latent,
                    dt,
                ),
            )
            self._add("head.rhythm.b", np.zeros(sp.rows * sp.rhythm_classes, dtype=dt))
            self._add(
                "head.accidental.w",
                _uniform(
                    rng,
                    (cfg.flag_note_latent, sp.rows * sp.accidental_classes),
                    cfg.flag_note_latent,
                    dt,
                ),
            )
            self._add(
                "head.accidental.b", np.zeros(sp.rows * sp.accidental_classes, dtype=dt)
            )
        else:  # rnn
            n = cfg.rnn_hidden
            self._add("head.cell.w_ih", _uniform(rng, (d, n), d, dt))
            self._add("head.cell.w_hh", _uniform(rng, (n, n), n, dt))
            self._add("head.cell.b", np.zeros(n, dtype=dt))
            cls_in = d + n
            self._add("head.pitch.w", _uniform(rng, (cls_in, n_pitch), cls_in, dt))
            self._add("head.pitch.b", np.zeros(n_pitch, dtype=dt))
            self._add("head.rhythm.w", _uniform(rng, (cls_in, n_rhythm), cls_in, dt))
            self._add("head.rhythm.b", np.zeros(n_rhythm, dtype=dt))

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- encoder ------------------------------------------------------------

    def encode(self, images: np.ndarray) -> Tensor:
        """Images (B, H, W) in [0, 1] (ink high) -> slice encodings (T, B, D).

        H must equal the configured input height; T = ceil(W / width
        downsampling).
        """
        cfg = self.config.encoder
        if images.ndim != 3:
            raise dc.ShapeError(f"encode: need (B, H, W) batch, got {images.shape}")
        B, H, W = images.shape
        if H != cfg.input_height:
            raise dc.ShapeError(
                f"encode: height {H} != configured input height {cfg.input_height}"
            )
        if W < cfg.width_downsample:
            raise dc.ShapeError(
                f"encode: width {W} below minimum {cfg.width_downsample}"
            )
        x = dc.tensor(images[:, None, :, :], dtype=self.config.np_dtype)
        pad = cfg.kernel // 2
        for i in range(len(cfg.filters)):
            x = dc.conv2d(x, self.params[f"enc.conv{i}.w"], self.params[f"enc.conv{i}.b"], padding=pad)
            x = dc.leaky_relu(x, cfg.leaky_slope)
            x = dc.maxpool2d(x, cfg.pool_h[i], cfg.pool_w[i])
        _, C, Hc, T = x.shape
        # one feature vector per column: (B, C, Hc, T) -> (T, B, C*Hc)
        x = dc.transpose(x, (3, 0, 1, 2))
        x = dc.reshape(x, (T * B, C * Hc))
        x = dc.affine(x, self.params["enc.proj.w"], self.params["enc.proj.b"])
        x = dc.leaky_relu(x, cfg.leaky_slope)
        seq = dc.reshape(x, (T, B, cfg.proj_dim))
        for layer in range(cfg.lstm_layers):
            seq = self._bilstm_layer(seq, layer, B)
        return seq

    def _bilstm_layer(self, seq: Tensor, layer: int, batch: int) -> Tensor:
        cfg = self.config.encoder
        T = seq.shape[0]
        steps = [dc.index_axis0(seq, t) for t in range(T)]
        outputs: dict[str, list[Tensor]] = {}
        for direction in ("fwd", "bwd"):
            base = f"enc.lstm{layer}.{direction}"
            w_ih = self.params[f"{base}.w_ih"]
            w_hh = self.params[f"{base}.w_hh"]
            b = self.params[f"{base}.b"]
            h = dc.tensor(np.zeros((batch, cfg.lstm_hidden)), dtype=self.config.np_dtype)
            c = dc.tensor(np.zeros((batch, cfg.lstm_hidden)), dtype=self.config.np_dtype)
            acc = []
            order = range(T) if direction == "fwd" else range(T - 1, -1, -1)
            for t in order:
                h, c = dc.lstm_step(steps[t], h, c, w_ih, w_hh, b)
                acc.append(h)
            outputs[direction] = acc if direction == "fwd" else acc[::-1]
        merged = [
            dc.concat([f, b], axis=1)
            for f, b in zip(outputs["fwd"], outputs["bwd"])
        ]
        return dc.stack(merged, axis=0)

    # -- decoder heads ------------------------------------------------------

    def head_baseline(self, enc: Tensor) -> tuple[Tensor, Tensor]:
        """Per-slice log-prob lattices: ((B, T, P+1), (B, T, R+1))."""
        return (
            self._axis_lattice(enc, "head.pitch"),
            self._axis_lattice(enc, "head.rhythm"),
        )

    def _axis_lattice(self, enc: Tensor, prefix: str, extra: Tensor | None = None) -> Tensor:
        T, B, D = enc.shape
        flat = dc.reshape(enc, (T * B, D))
        if extra is not None:
            flat = dc.concat([flat, extra], axis=1)
        logits = dc.affine(flat, self.params[f"{prefix}.w"], self.params[f"{prefix}.b"])
        lp = dc.log_softmax(logits, axis=-1)
        V = lp.shape[-1]
        return dc.transpose(dc.reshape(lp, (T, B, V)), (1, 0, 2))

    def head_flag(self, enc: Tensor) -> list[FlagActivation]:
        """One factorized activation per batch sample."""
        sp = self.config.flag_space
        slope = self.config.encoder.leaky_slope
        T, B, D = enc.shape
        flat = dc.reshape(enc, (T * B, D))
        staff_latent = dc.leaky_relu(
            dc.affine(flat, self.params["head.staff_latent.w"], self.params["head.staff_latent.b"]),
            slope,
        )
        note_latent = dc.leaky_relu(
            dc.affine(flat, self.params["head.note_latent.w"], self.params["head.note_latent.b"]),
            slope,
        )
        staff = dc.affine(staff_latent, self.params["head.staff.w"], self.params["head.staff.b"])
        rhythm = dc.affine(note_latent, self.params["head.rhythm.w"], self.params["head.rhythm.b"])
        acc = dc.affine(
            note_latent, self.params["head.accidental.w"], self.params["head.accidental.b"]
        )
        staff = dc.transpose(dc.reshape(staff, (T, B, sp.staff_bits)), (1, 0, 2))
        rhythm = dc.transpose(
            dc.reshape(rhythm, (T, B, sp.rows, sp.rhythm_classes)), (1, 0, 2, 3)
        )
        acc = dc.transpose(
            dc.reshape(acc, (T, B, sp.rows, sp.accidental_classes)), (1, 0, 2, 3)
        )
        return [
            FlagActivation(
                dc.index_axis0(staff, b),
                dc.index_axis0(rhythm, b),
                dc.index_axis0(acc, b),
                sp,
            )
            for b in range(B)
        ]

    def head_rnn(self, enc: Tensor) -> list[tuple[Tensor, Tensor]]:
        """STREAM_COUNT (pitch, rhythm) lattice pairs, each (B, T, V+1).

        The hidden state starts at zero per slice and is updated by a
        tanh cell; the same classifier reads (slice encoding, hidden
        state) at every output step.
        """
        cfg = self.config
        T, B, D = enc.shape
        flat = dc.reshape(enc, (T * B, D))
        h = dc.tensor(np.zeros((T * B, cfg.rnn_hidden)), dtype=cfg.np_dtype)
        out: list[tuple[Tensor, Tensor]] = []
        for _ in range(STREAM_COUNT):
            h = dc.rnn_step(
                flat, h,
                self.params["head.cell.w_ih"],
                self.params["head.cell.w_hh"],
                self.params["head.cell.b"],
            )
            out.append(
                (
                    self._axis_lattice(enc, "head.pitch", extra=h),
                    self._axis_lattice(enc, "head.rhythm", extra=h),
                )
            )
        return out

    # -- persistence --------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.values for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise dc.CheckpointError(f"checkpoint lacks parameters: {sorted(missing)}")
        for name, p in self.params.items():
            arr = arrays[name]
            if arr.shape != p.values.shape:
                raise dc.CheckpointError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model {p.values.shape}"
                )
            p.values = arr.astype(self.config.np_dtype)


# ---------------------------------------------------------------------------
# config <-> checkpoint header

def config_to_header(config: ModelConfig) -> dict[str, str]:
    e = config.encoder
    return {
        "decoder": config.decoder,
        "dtype": config.dtype,
        "filters": ",".join(map(str, e.filters)),
        "kernel": str(e.kernel),
        "pool_h": ",".join(map(str, e.pool_h)),
        "pool_w": ",".join(map(str, e.pool_w)),
        "proj_dim": str(e.proj_dim),
        "lstm_hidden": str(e.lstm_hidden),
        "lstm_layers": str(e.lstm_layers),
        "leaky_slope": repr(e.leaky_slope),
        "input_height": str(e.input_height),
        "flag_staff_latent": str(config.flag_staff_latent),
        "flag_note_latent": str(config.flag_note_latent),
        "rnn_hidden": str(config.rnn_hidden),
    }


def config_from_header(header: dict[str, str]) -> ModelConfig:
    def ints(key):
        return tuple(int(x) for x in header[key].split(","))

    encoder = EncoderConfig(
        filters=ints("filters"),
        kernel=int(header["kernel"]),
        pool_h=ints("pool_h"),
        pool_w=ints("pool_w"),
        proj_dim=int(header["proj_dim"]),
        lstm_hidden=int(header["lstm_hidden"]),
        lstm_layers=int(header["lstm_layers"]),
        leaky_slope=float(header["leaky_slope"]),
        input_height=int(header["input_height"]),
    )
    return ModelConfig(
        decoder=header["decoder"],
        encoder=encoder,
        flag_staff_latent=int(header["flag_staff_latent"]),
        flag_note_latent=int(header["flag_note_latent"]),
        rnn_hidden=int(header["rnn_hidden"]),
        dtype=header["dtype"],
    )
