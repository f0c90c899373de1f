"""Versioned binary checkpoints.

Layout: 8-byte magic "RRKMCKP1", little-endian u32 version, then six
length-prefixed sections in fixed order (params, latents, weights, config,
moments, rng), each carrying a CRC32 over its payload. Payloads are typed
entries: raw little-endian f64/i64 arrays for numeric state and JSON for
scalars, so a save/load round trip is bit-exact and training can resume with
identical optimizer moments and RNG stream.
"""

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import VersionMismatch
from .feature_maps import MapParams
from .rkm_core import LatentModel, RkmHyper
from .robust_stats import WeightVector
from .trainer import TrainConfig, TrainResult

MAGIC = b"RRKMCKP1"
VERSION = 1
SECTION_ORDER = ("params", "latents", "weights", "config", "moments", "rng")

_KIND_F64 = 0
_KIND_I64 = 1
_KIND_JSON = 2


@dataclass
class Checkpoint:
    """Everything needed to regenerate, denoise, or resume training.

    interconnection is U over the full training set; with it, generation and
    denoising work from the checkpoint alone."""

    params: MapParams
    model: LatentModel
    weights: WeightVector
    config: TrainConfig
    moments_m: np.ndarray
    moments_v: np.ndarray
    adam_t: int
    epochs_done: int
    reweighted: bool
    rng_state: dict
    interconnection: np.ndarray | None = None
    version: int = VERSION

    @classmethod
    def from_result(cls, result: TrainResult) -> "Checkpoint":
        return cls(
            params=result.params,
            model=result.model,
            weights=result.weights,
            config=result.config,
            moments_m=result.optimizer.m,
            moments_v=result.optimizer.v,
            adam_t=result.optimizer.t,
            epochs_done=result.epochs_done,
            reweighted=result.reweighted,
            rng_state=result.rng_state,
            interconnection=result.interconnection,
        )


def _pack_entries(entries: list[tuple[str, int, object]]) -> bytes:
    parts = [struct.pack("<I", len(entries))]
    for name, kind, value in entries:
        raw_name = name.encode()
        parts.append(struct.pack("<HB", len(raw_name), kind))
        parts.append(raw_name)
        if kind == _KIND_JSON:
            blob = json.dumps(value, sort_keys=True).encode()
            parts.append(struct.pack("<Q", len(blob)))
            parts.append(blob)
        else:
            dtype = "<f8" if kind == _KIND_F64 else "<i8"
            arr = np.ascontiguousarray(np.atleast_1d(np.asarray(value)), dtype=dtype)
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def _unpack_entries(payload: bytes, section: str) -> dict:
    out = {}
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(payload):
            raise VersionMismatch(
                f"checkpointing: section '{section}' truncated while reading entries"
            )
        chunk = payload[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    for _ in range(count):
        name_len, kind = struct.unpack("<HB", take(3))
        name = take(name_len).decode()
        if kind == _KIND_JSON:
            (blob_len,) = struct.unpack("<Q", take(8))
            out[name] = json.loads(take(blob_len).decode())
        else:
            (ndim,) = struct.unpack("<B", take(1))
            shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
            dtype = "<f8" if kind == _KIND_F64 else "<i8"
            n_items = int(np.prod(shape, dtype=np.int64))
            out[name] = np.frombuffer(take(n_items * 8), dtype=dtype).reshape(shape).copy()
    return out


def _sections_from_checkpoint(ckpt: Checkpoint) -> dict[str, bytes]:
    p = ckpt.params
    m = ckpt.model
    w = ckpt.weights
    return {
        "params": _pack_entries(
            [
                ("encoder_sizes", _KIND_I64, list(p.encoder_sizes)),
                ("decoder_sizes", _KIND_I64, list(p.decoder_sizes)),
                ("theta", _KIND_F64, p.theta),
                ("zeta", _KIND_F64, p.zeta),
                ("prelu_alpha", _KIND_JSON, p.prelu_alpha),
            ]
        ),
        "latents": _pack_entries(
            [
                ("H", _KIND_F64, m.H),
                ("eigvals", _KIND_F64, m.eigvals),
                ("U", _KIND_F64, ckpt.interconnection
                 if ckpt.interconnection is not None else np.empty((0, 0))),
                (
                    "hyper",
                    _KIND_JSON,
                    {"eta": m.hyper.eta, "lambda_reg": m.hyper.lambda_reg,
                     "latent_dim": m.hyper.latent_dim},
                ),
            ]
        ),
        "weights": _pack_entries(
            [
                ("weights", _KIND_F64, w.weights),
                ("distances_sq", _KIND_F64, w.distances_sq),
                (
                    "meta",
                    _KIND_JSON,
                    {"threshold": w.threshold, "alpha": w.alpha, "n_mcd": w.n_mcd},
                ),
            ]
        ),
        "config": _pack_entries([("config", _KIND_JSON, asdict(ckpt.config))]),
        "moments": _pack_entries(
            [
                ("m", _KIND_F64, ckpt.moments_m),
                ("v", _KIND_F64, ckpt.moments_v),
                (
                    "meta",
                    _KIND_JSON,
                    {"t": ckpt.adam_t, "epochs_done": ckpt.epochs_done,
                     "reweighted": ckpt.reweighted},
                ),
            ]
        ),
        "rng": _pack_entries([("state", _KIND_JSON, ckpt.rng_state)]),
    }


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    sections = _sections_from_checkpoint(ckpt)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        for name in SECTION_ORDER:
            payload = sections[name]
            raw_name = name.encode()
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<QI", len(payload), zlib.crc32(payload)))
            fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    """Read and validate a checkpoint; CRC or version trouble raises
    VersionMismatch naming the offending section."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise VersionMismatch(
            f"checkpointing.load_checkpoint: bad magic {blob[:8]!r}, expected {MAGIC!r}"
        )
    (version,) = struct.unpack("<I", blob[8:12])
    if version != VERSION:
        raise VersionMismatch(
            f"checkpointing.load_checkpoint: file version {version}, this build "
            f"reads version {VERSION}"
        )
    pos = 12
    sections: dict[str, bytes] = {}
    while pos < len(blob):
        (name_len,) = struct.unpack("<I", blob[pos : pos + 4])
        pos += 4
        name = blob[pos : pos + name_len].decode()
        pos += name_len
        payload_len, crc = struct.unpack("<QI", blob[pos : pos + 12])
        pos += 12
        payload = blob[pos : pos + payload_len]
        pos += payload_len
        if len(payload) != payload_len:
            raise VersionMismatch(
                f"checkpointing.load_checkpoint: section '{name}' truncated"
            )
        if zlib.crc32(payload) != crc:
            raise VersionMismatch(
                f"checkpointing.load_checkpoint: checksum mismatch in section '{name}'"
            )
        sections[name] = payload
    missing = [s for s in SECTION_ORDER if s not in sections]
    if missing:
        raise VersionMismatch(
            f"checkpointing.load_checkpoint: missing sections {missing}"
        )

    params_e = _unpack_entries(sections["params"], "params")
    latents_e = _unpack_entries(sections["latents"], "latents")
    weights_e = _unpack_entries(sections["weights"], "weights")
    config_e = _unpack_entries(sections["config"], "config")
    moments_e = _unpack_entries(sections["moments"], "moments")
    rng_e = _unpack_entries(sections["rng"], "rng")

    params = MapParams(
        encoder_sizes=tuple(int(v) for v in params_e["encoder_sizes"]),
        decoder_sizes=tuple(int(v) for v in params_e["decoder_sizes"]),
        theta=params_e["theta"],
        zeta=params_e["zeta"],
        prelu_alpha=float(params_e["prelu_alpha"]),
    )
    wmeta = weights_e["meta"]
    weights = WeightVector(
        weights=weights_e["weights"],
        distances_sq=weights_e["distances_sq"],
        threshold=float(wmeta["threshold"]),
        alpha=float(wmeta["alpha"]),
        n_mcd=int(wmeta["n_mcd"]),
    )
    hmeta = latents_e["hyper"]
    model = LatentModel(
        H=latents_e["H"],
        eigvals=latents_e["eigvals"],
        weights=weights,
        hyper=RkmHyper(
            eta=float(hmeta["eta"]),
            lambda_reg=float(hmeta["lambda_reg"]),
            latent_dim=int(hmeta["latent_dim"]),
        ),
    )
    cfg_dict = dict(config_e["config"])
    cfg_dict["enc_hidden"] = tuple(cfg_dict["enc_hidden"])
    cfg_dict["dec_hidden"] = tuple(cfg_dict["dec_hidden"])
    config = TrainConfig(**cfg_dict)
    mmeta = moments_e["meta"]
    u = latents_e["U"]
    return Checkpoint(
        params=params,
        model=model,
        weights=weights,
        config=config,
        moments_m=moments_e["m"],
        moments_v=moments_e["v"],
        adam_t=int(mmeta["t"]),
        epochs_done=int(mmeta["epochs_done"]),
        reweighted=bool(mmeta["reweighted"]),
        rng_state=rng_e["state"],
        interconnection=None if u.size == 0 else u,
        version=version,
    )
