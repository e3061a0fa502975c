"""Autoencoder + self-organizing map composition.

Two training regimes are provided. Separate training fits the autoencoder
first, freezes it, encodes the dataset once and fits the map on the cached
latents. Combined training optimizes the weighted sum of reconstruction
loss and map loss in one loop, back-propagating both paths into the
encoder; the map loss gradient uses the neighborhood-weighted squared
distances with winner assignments held fixed within a batch, while the
reported map loss stays the plain winner distance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import som as som_mod
from .formats import FormatError, Reader
from .nn import Batch, LayerSpec, Network, iterate_minibatches, mse_grad, mse_loss, sgd_step
from .som import DecaySchedule, SomMap, decay_value

MODEL_MAGIC = b"DSOM"
MODEL_VERSION = 1

DEFAULT_GAMMA = 1e-3


def encode_stamps(encoder: Network, stamps: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Latent vectors for (n, 32, 32) pixel stamps, computed in chunks."""
    stamps = np.asarray(stamps, dtype=encoder.dtype)
    if stamps.ndim == 2:
        stamps = stamps[None]
    d = encoder.output_shape[0]
    out = np.empty((stamps.shape[0], d), dtype=encoder.dtype)
    for lo in range(0, stamps.shape[0], chunk):
        hi = min(stamps.shape[0], lo + chunk)
        out[lo:hi] = encoder.forward(stamps[lo:hi, None, :, :])
    return out


@dataclass
class DesomModel:
    encoder: Network
    decoder: Network
    som: SomMap
    gamma: float = DEFAULT_GAMMA
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.som.d
        if self.encoder.output_shape != (d,):
            raise ValueError(
                f"encoder output {self.encoder.output_shape} does not match map dimension {d}"
            )
        if self.decoder.input_shape != (d,):
            raise ValueError(
                f"decoder input {self.decoder.input_shape} does not match map dimension {d}"
            )
        if self.decoder.output_shape != (1, 32, 32):
            raise ValueError(f"decoder must emit (1, 32, 32), got {self.decoder.output_shape}")

    @property
    def m(self) -> int:
        return self.som.m

    @property
    def d(self) -> int:
        return self.som.d

    def encode(self, stamps: np.ndarray, chunk: int = 512) -> np.ndarray:
        return encode_stamps(self.encoder, stamps, chunk)

    def decode(self, latents: np.ndarray, chunk: int = 512) -> np.ndarray:
        latents = np.asarray(latents, dtype=self.decoder.dtype)
        out = np.empty((latents.shape[0], 32, 32), dtype=self.decoder.dtype)
        for lo in range(0, latents.shape[0], chunk):
            hi = min(latents.shape[0], lo + chunk)
            out[lo:hi] = self.decoder.forward(latents[lo:hi])[:, 0]
        return out


def total_loss(model: DesomModel, batch) -> tuple[float, float, float]:
    """(L_tot, L_dec, L_som) for a batch: reconstruction pixel MSE plus
    gamma times the quantization error of the batch latents."""
    if not isinstance(batch, Batch):
        batch = Batch(np.asarray(batch))
    z = model.encode(batch.inputs)
    recon = model.decode(z)
    l_dec = mse_loss(recon, batch.inputs.astype(recon.dtype))
    l_som = som_mod.quantization_error(model.som, z)
    return l_dec + model.gamma * l_som, l_dec, l_som


def assign_cell(model: DesomModel, stamp: np.ndarray) -> tuple[int, int]:
    """Map cell (i, j) owning a normalized stamp."""
    stamp = np.asarray(stamp)
    if stamp.min() < 0.0 or stamp.max() > 1.0:
        raise ValueError("stamp is not normalized to [0, 1]")
    z = model.encode(stamp)
    (i, j), _ = som_mod.best_matching_unit(model.som, z[0])
    return i, j


def assign_cells(model: DesomModel, stamps: np.ndarray) -> np.ndarray:
    """Flat cell index per stamp; reshaped via divmod(idx, m) when needed."""
    stamps = np.asarray(stamps)
    if stamps.size and (stamps.min() < 0.0 or stamps.max() > 1.0):
        raise ValueError("stamps are not normalized to [0, 1]")
    idx, _ = som_mod.assign(model.som, model.encode(stamps))
    return idx


def decode_prototypes(model: DesomModel) -> np.ndarray:
    """(m, m, 32, 32) grid of decoded prototype images, clipped to [0, 1]."""
    imgs = model.decode(model.som.flat)
    return np.clip(imgs, 0.0, 1.0).reshape(model.m, model.m, 32, 32)


@dataclass(frozen=True)
class AeConfig:
    encoder_specs: tuple
    decoder_specs: tuple
    epochs: int = 8
    learning_rate: float = 0.05
    batch_size: int = 64
    momentum: float = 0.0


@dataclass(frozen=True)
class SomConfig:
    m: int = 8
    sched: DecaySchedule = field(default_factory=DecaySchedule)
    space: str = "grid"
    init: str = "compact"  # compact | samples
    init_samples: int = 1000


def init_som(m: int, latents: np.ndarray, kind: str, seed: int) -> SomMap:
    if kind == "compact":
        return SomMap.compact(m, latents, seed=seed)
    if kind == "samples":
        return SomMap.from_samples(m, latents, seed=seed)
    raise ValueError(f"unknown map init {kind!r}")


def train_separate(
    data: np.ndarray,
    ae_cfg: AeConfig,
    som_cfg: SomConfig,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
) -> tuple[DesomModel, dict]:
    """Two-stage training: autoencoder first, then the map on frozen latents.

    Returns (model, history) where history carries the per-epoch
    reconstruction losses and the recorded quantization errors.
    """
    from .nn import fit_autoencoder

    _, init_seed, fit_seed = np.random.SeedSequence(seed).generate_state(3)
    ae = fit_autoencoder(
        ae_cfg.encoder_specs,
        ae_cfg.decoder_specs,
        data,
        epochs=ae_cfg.epochs,
        learning_rate=ae_cfg.learning_rate,
        batch_size=ae_cfg.batch_size,
        momentum=ae_cfg.momentum,
        seed=seed,
    )
    latents = encode_stamps(ae.encoder, np.asarray(data, dtype=np.float32))
    warm = latents[: som_cfg.init_samples]
    som0 = init_som(som_cfg.m, warm, som_cfg.init, seed=int(init_seed))
    trained, qe_history = som_mod.fit_som(
        som0, latents, som_cfg.sched, seed=int(fit_seed), space=som_cfg.space
    )
    model = DesomModel(
        ae.encoder,
        ae.decoder,
        trained,
        gamma,
        provenance={
            "mode": "separate",
            "seed": int(seed),
            "ae_epochs": ae_cfg.epochs,
            "som_iters": som_cfg.sched.n_iters,
        },
    )
    return model, {"l_dec": ae.loss_history, "l_som": qe_history}


_GRID_DIST2_CACHE: dict = {}


def _grid_dist2(m: int) -> np.ndarray:
    """(m*m, m*m) squared grid distances between cell pairs, cached."""
    if m not in _GRID_DIST2_CACHE:
        coords = som_mod.grid_coordinates(m).reshape(m * m, 2)
        diff = coords[:, None, :] - coords[None, :, :]
        _GRID_DIST2_CACHE[m] = (diff ** 2).sum(axis=-1)
    return _GRID_DIST2_CACHE[m]


def combined_step_gradients(
    encoder: Network,
    decoder: Network,
    sommap: SomMap,
    xb: np.ndarray,
    gamma: float,
    temperature: float,
    bmu: np.ndarray | None = None,
):
    """Losses and analytic gradients of the combined objective on one batch.

    The objective is pixel MSE plus gamma times the neighborhood-weighted
    mean of squared latent-to-prototype distances, with winner assignments
    (and the grid kernel) treated as constants. Returns a dict with losses,
    the winner indices, and gradient arrays for encoder, decoder and map;
    the caller applies the updates.
    """
    b = xb.shape[0]
    z = encoder.forward(xb)
    recon = decoder.forward(z)
    l_dec = mse_loss(recon, xb)
    wflat = sommap.flat
    if bmu is None:
        bmu, d2 = som_mod.assign(sommap, z)
    else:
        d2 = ((z.astype(np.float64) - wflat[bmu].astype(np.float64)) ** 2).sum(axis=1)
    l_som = float(np.mean(d2.astype(np.float64)))

    h = np.exp(-_grid_dist2(sommap.m)[bmu] / float(temperature) ** 2)  # (b, M)
    zf = z.astype(np.float64)
    wf = wflat.astype(np.float64)
    sq = ((zf[:, None, :] - wf[None, :, :]) ** 2).sum(axis=-1)  # (b, M)
    l_sur = float((h * sq).sum() / b)
    l_obj = l_dec + gamma * l_sur

    gz_dec = decoder.backward(mse_grad(recon, xb))
    hsum = h.sum(axis=1)
    gz_sur = (2.0 / b) * (zf * hsum[:, None] - h @ wf)
    encoder.backward(gz_dec + np.asarray(gamma * gz_sur, dtype=gz_dec.dtype))
    gw_sur = (2.0 / b) * (wf * h.sum(axis=0)[:, None] - h.T @ zf)
    return {
        "l_obj": l_obj,
        "l_dec": l_dec,
        "l_som": l_som,
        "l_sur": l_sur,
        "bmu": bmu,
        "grad_enc": [g.copy() for g in encoder.gradients()],
        "grad_dec": [g.copy() for g in decoder.gradients()],
        "grad_som": gamma * gw_sur,
    }


def combined_objective(
    encoder: Network,
    decoder: Network,
    sommap: SomMap,
    xb: np.ndarray,
    gamma: float,
    temperature: float,
    bmu: np.ndarray,
) -> float:
    """The scalar objective of combined_step_gradients at fixed assignments
    (used by finite-difference checks)."""
    z_net = encoder.forward(xb)
    recon = decoder.forward(z_net)
    l_dec = mse_loss(recon, xb)
    z = z_net.astype(np.float64)
    wf = sommap.flat.astype(np.float64)
    h = np.exp(-_grid_dist2(sommap.m)[bmu] / float(temperature) ** 2)
    sq = ((z[:, None, :] - wf[None, :, :]) ** 2).sum(axis=-1)
    return l_dec + gamma * float((h * sq).sum() / xb.shape[0])


@dataclass(frozen=True)
class CombinedConfig:
    encoder_specs: tuple
    decoder_specs: tuple
    m: int = 8
    epochs: int = 8
    learning_rate: float = 0.05
    batch_size: int = 64
    t0: float = 10.0
    t_min: float = 0.01
    init_samples: int = 1000


def train_combined(
    data: np.ndarray,
    cfg: CombinedConfig,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
) -> tuple[DesomModel, dict]:
    """Joint training of encoder, decoder and map on the weighted loss.

    With gamma = 0 the map receives no updates and the encoder/decoder
    trajectory is identical to plain autoencoder training with the same
    seed and batch order.
    """
    data = np.ascontiguousarray(data, dtype=np.float32)
    Batch(data)
    n = data.shape[0]

    ss = np.random.SeedSequence(seed)
    s_enc, s_dec, s_order = ss.spawn(3)  # same stream layout as fit_autoencoder
    s_som = ss.spawn(1)[0]
    encoder = Network(cfg.encoder_specs, (1, 32, 32), seed=np.random.default_rng(s_enc))
    d = encoder.output_shape[0]
    decoder = Network(cfg.decoder_specs, (d,), seed=np.random.default_rng(s_dec))
    if decoder.output_shape != (1, 32, 32):
        raise ValueError(f"decoder must reconstruct (1, 32, 32), got {decoder.output_shape}")

    warm = data[: min(cfg.init_samples, n)][:, None, :, :]
    warm_z = encoder.forward(warm)
    sommap = SomMap.from_samples(cfg.m, warm_z, seed=int(s_som.generate_state(1)[0]))

    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_iters = max(1, cfg.epochs * batches_per_epoch)
    order_rng = np.random.default_rng(s_order)
    history = {"l_dec": [], "l_som": []}
    vel_e = vel_d = None
    t = 0
    for _, idx in iterate_minibatches(n, cfg.batch_size, cfg.epochs, order_rng):
        xb = data[idx][:, None, :, :]
        if gamma != 0.0:
            temperature = decay_value(cfg.t0, cfg.t_min, t, total_iters)
            step = combined_step_gradients(encoder, decoder, sommap, xb, gamma, temperature)
            l_dec, l_som = step["l_dec"], step["l_som"]
            if not np.isfinite(step["l_obj"]):
                raise RuntimeError(f"combined loss diverged at iteration {t}")
            sommap.weights -= np.asarray(
                cfg.learning_rate * step["grad_som"], dtype=sommap.weights.dtype
            ).reshape(sommap.weights.shape)
        else:
            z = encoder.forward(xb)
            recon = decoder.forward(z)
            l_dec = mse_loss(recon, xb)
            _, d2 = som_mod.assign(sommap, z)
            l_som = float(np.mean(d2.astype(np.float64)))
            if not np.isfinite(l_dec):
                raise RuntimeError(f"combined loss diverged at iteration {t}")
            gz = decoder.backward(mse_grad(recon, xb))
            encoder.backward(gz)
        vel_d = sgd_step(decoder, cfg.learning_rate, 0.0, vel_d)
        vel_e = sgd_step(encoder, cfg.learning_rate, 0.0, vel_e)
        history["l_dec"].append(l_dec)
        history["l_som"].append(l_som)
        t += 1

    model = DesomModel(
        encoder,
        decoder,
        sommap,
        gamma,
        provenance={"mode": "combined", "seed": int(seed), "iterations": total_iters},
    )
    return model, history


def _flat_params(net: Network) -> np.ndarray:
    if net.dtype != np.float32:
        raise ValueError("model files store float32 parameters; cast the model first")
    if not net.parameters():
        return np.empty(0, dtype=np.float32)
    return np.concatenate([p.ravel() for p in net.parameters()])


def _load_params(net: Network, flat: np.ndarray, what: str) -> None:
    expected = net.n_parameters()
    if flat.size != expected:
        raise ValueError(f"{what} section holds {flat.size} values, expected {expected}")
    out, pos = [], 0
    for p in net.parameters():
        out.append(flat[pos:pos + p.size].reshape(p.shape))
        pos += p.size
    net.set_parameters(out)


def save_model(path, model: DesomModel) -> None:
    config = {
        "encoder_specs": [s.to_json() for s in model.encoder.specs],
        "decoder_specs": [s.to_json() for s in model.decoder.specs],
        "m": model.m,
        "d": model.d,
        "gamma": model.gamma,
        "provenance": model.provenance,
    }
    cfg_bytes = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if model.som.weights.dtype != np.float32:
        raise ValueError("model files store float32 map weights; cast the model first")
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC + struct.pack("<I", MODEL_VERSION))
        f.write(struct.pack("<Q", len(cfg_bytes)))
        f.write(cfg_bytes)
        for arr in (_flat_params(model.encoder), _flat_params(model.decoder),
                    np.ascontiguousarray(model.som.weights, dtype="<f4").ravel()):
            f.write(struct.pack("<Q", arr.size))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> DesomModel:
    with open(path, "rb") as f:
        r = Reader(f.read())
    r.magic(MODEL_MAGIC)
    r.version(MODEL_VERSION)
    cfg_len = r.u64("config length")
    cfg_at = r.pos
    try:
        config = json.loads(r.take(cfg_len, "config json").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"config section is not valid JSON: {e}", cfg_at) from None

    enc_specs = tuple(LayerSpec.from_json(s) for s in config["encoder_specs"])
    dec_specs = tuple(LayerSpec.from_json(s) for s in config["decoder_specs"])
    m, d = int(config["m"]), int(config["d"])
    encoder = Network(enc_specs, (1, 32, 32), seed=0, dtype=np.float32)
    decoder = Network(dec_specs, (d,), seed=0, dtype=np.float32)

    def section(what: str, expected: int) -> np.ndarray:
        at = r.pos
        count = r.u64(f"{what} count")
        if count != expected:
            raise FormatError(f"{what} section holds {count} values, expected {expected}", at)
        return r.f32_array(count, f"{what} values")

    enc_flat = section("encoder", encoder.n_parameters())
    dec_flat = section("decoder", decoder.n_parameters())
    som_flat = section("map weights", m * m * d)
    r.done()
    _load_params(encoder, enc_flat, "encoder")
    _load_params(decoder, dec_flat, "decoder")
    sommap = SomMap(som_flat.reshape(m, m, d))
    return DesomModel(encoder, decoder, sommap, float(config["gamma"]), config.get("provenance", {}))
