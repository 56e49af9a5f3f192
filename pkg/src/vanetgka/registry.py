"""Trust authority: system initialization, node registration, pseudonyms,
and the non-repudiation trace.

Identity material per node U: certification pair Q_U = H1(TID_U) and
s_U = psi * Q_U under the TA secret psi.  RSUs additionally get a long-term
key pair and a TA-signed beacon; vehicles get fresh per-RSU-range key pairs
and pseudonyms from :func:`refresh_vehicle_epoch`.

A pseudonym is the padded true identity XORed with a mask derived from the
Diffie-Hellman value g^(psi*alpha), so only the TA (via :func:`trace`) can
undo it.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .crypto import (
    G1Elem,
    GElem,
    PSEUDONYM_LEN,
    Scalar,
    SystemParams,
    get_profile,
    rand_zq_star,
    schnorr_sign,
)
from .errors import DuplicateIdentity, TraceMismatch, UnknownIdentity

ROLE_RSU = "rsu"
ROLE_VEHICLE = "vehicle"

MAX_TID_LEN = PSEUDONYM_LEN - 1  # one byte of the pseudonym holds the length


@dataclass(frozen=True)
class NodeCredentials:
    """Registration record for one node.

    ``sk``/``pk`` and ``loc`` are present for RSUs only; vehicle key pairs
    are ephemeral per RSU range and never issued by the TA.
    """

    tid: bytes
    role: str
    q_u: G1Elem
    s_u: G1Elem
    sk: Scalar | None = None
    pk: GElem | None = None
    loc: tuple[int, int] | None = None  # centimeters


@dataclass(frozen=True)
class VehicleEpoch:
    """Per-RSU-range vehicle material: ephemeral key pair and pseudonym."""

    alpha: Scalar
    pk_v: GElem
    fid: bytes


@dataclass
class TaState:
    sk_ta: Scalar
    params: SystemParams
    registry: dict[bytes, NodeCredentials] = field(default_factory=dict)
    beacons: dict[bytes, wire.RsuBeacon] = field(default_factory=dict)


def ta_init(profile: str = "default", rng: random.Random | None = None) -> TaState:
    """Set up system parameters and the TA key pair."""
    rng = rng or random.Random()
    params = get_profile(profile)
    params.validate()
    sk_ta = rand_zq_star(rng, params.q)
    pk_g = params.g_exp(params.g, sk_ta)
    pk_g1 = params.g1_mul(sk_ta, 1)
    return TaState(sk_ta=sk_ta, params=params.with_ta_keys(pk_g, pk_g1))


def _check_new_tid(ta: TaState, tid: bytes) -> None:
    if not 0 < len(tid) <= MAX_TID_LEN:
        raise ValueError(f"tid must be 1..{MAX_TID_LEN} bytes")
    if tid in ta.registry:
        raise DuplicateIdentity(f"tid {tid!r} already registered")


def beacon_signed_bytes(
    params: SystemParams, pk_rsu: GElem, loc: tuple[int, int], loc_hash: Scalar
) -> bytes:
    """Canonical byte string the TA signs for an RSU beacon."""
    return (
        params.encode_elem(pk_rsu)
        + loc[0].to_bytes(8, "big", signed=True)
        + loc[1].to_bytes(8, "big", signed=True)
        + params.encode_elem(loc_hash)
    )


def register_rsu(
    ta: TaState, tid: bytes, loc: tuple[int, int], rng: random.Random
) -> tuple[NodeCredentials, wire.RsuBeacon]:
    """Issue RSU credentials plus the TA-signed beacon it will broadcast."""
    _check_new_tid(ta, tid)
    params = ta.params
    xi = rand_zq_star(rng, params.q)
    q_u = params.hash_to_g1(tid)
    creds = NodeCredentials(
        tid=tid,
        role=ROLE_RSU,
        q_u=q_u,
        s_u=params.g1_mul(ta.sk_ta, q_u),
        sk=xi,
        pk=params.g_exp(params.g, xi),
        loc=loc,
    )
    loc_hash = params.hash_to_scalar(
        loc[0].to_bytes(8, "big", signed=True) + loc[1].to_bytes(8, "big", signed=True)
    )
    sig_c, sig_s = schnorr_sign(
        params, ta.sk_ta, beacon_signed_bytes(params, creds.pk, loc, loc_hash), rng
    )
    beacon = wire.RsuBeacon(
        pk_rsu=creds.pk,
        loc_x=loc[0],
        loc_y=loc[1],
        loc_hash=loc_hash,
        sig_c=sig_c,
        sig_s=sig_s,
    )
    ta.registry[tid] = creds
    ta.beacons[tid] = beacon
    return creds, beacon


def register_vehicle(ta: TaState, tid: bytes) -> NodeCredentials:
    """Issue a vehicle's base credentials (certification pair only)."""
    _check_new_tid(ta, tid)
    q_u = ta.params.hash_to_g1(tid)
    creds = NodeCredentials(
        tid=tid,
        role=ROLE_VEHICLE,
        q_u=q_u,
        s_u=ta.params.g1_mul(ta.sk_ta, q_u),
    )
    ta.registry[tid] = creds
    return creds


def pad_tid(tid: bytes) -> bytes:
    if not 0 < len(tid) <= MAX_TID_LEN:
        raise ValueError(f"tid must be 1..{MAX_TID_LEN} bytes")
    return bytes([len(tid)]) + tid + bytes(MAX_TID_LEN - len(tid))


def unpad_tid(padded: bytes) -> bytes:
    n = padded[0]
    if n == 0 or n > MAX_TID_LEN:
        raise TraceMismatch("bad length byte after unmasking")
    if any(padded[1 + n :]):
        raise TraceMismatch("nonzero padding after unmasking")
    return padded[1 : 1 + n]


def _xor42(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(
        PSEUDONYM_LEN, "big"
    )


def refresh_vehicle_epoch(
    creds: NodeCredentials, params: SystemParams, rng: random.Random
) -> VehicleEpoch:
    """New ephemeral key pair and pseudonym on entering an RSU range."""
    alpha = rand_zq_star(rng, params.q)
    mask = params.mask_hash(params.g_exp(params.pk_ta_g, alpha))
    return VehicleEpoch(
        alpha=alpha,
        pk_v=params.g_exp(params.g, alpha),
        fid=_xor42(pad_tid(creds.tid), mask),
    )


def trace(ta: TaState, fid: bytes, pk_v: GElem) -> bytes:
    """Recover the true identity behind a pseudonym.

    Works because g^(psi*alpha) can be computed from either side:
    the vehicle used pk_ta^alpha, the TA uses pk_v^psi.
    """
    if len(fid) != PSEUDONYM_LEN:
        raise ValueError(f"fid must be {PSEUDONYM_LEN} bytes")
    mask = ta.params.mask_hash(ta.params.g_exp(pk_v, ta.sk_ta))
    return unpad_tid(_xor42(fid, mask))


def credential_sound(params: SystemParams, creds: NodeCredentials) -> bool:
    """Pairing consistency: e(s_U, P) == e(Q_U, pk_ta_g1)."""
    return params.pair(creds.s_u, 1) == params.pair(creds.q_u, params.pk_ta_g1)


# ---------------------------------------------------------------------------
# Persistence: public registry and secret keystore as separate JSON files
# ---------------------------------------------------------------------------


def save_ta(ta: TaState, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    registry = {
        "params": ta.params.to_json_dict(),
        "nodes": [
            {
                "tid": creds.tid.hex(),
                "role": creds.role,
                "q_u": str(creds.q_u),
                "pk": str(creds.pk) if creds.pk is not None else None,
                "loc": list(creds.loc) if creds.loc is not None else None,
                "beacon": (
                    wire.encode_message(
                        ta.beacons[creds.tid], ta.params.element_width
                    ).hex()
                    if creds.tid in ta.beacons
                    else None
                ),
            }
            for creds in ta.registry.values()
        ],
    }
    keystore = {
        "sk_ta": str(ta.sk_ta),
        "nodes": {
            creds.tid.hex(): {
                "s_u": str(creds.s_u),
                "sk": str(creds.sk) if creds.sk is not None else None,
            }
            for creds in ta.registry.values()
        },
    }
    (directory / "registry.json").write_text(json.dumps(registry, indent=2))
    (directory / "keystore.json").write_text(json.dumps(keystore, indent=2))


def load_ta(directory: Path | str) -> TaState:
    directory = Path(directory)
    registry = json.loads((directory / "registry.json").read_text())
    keystore = json.loads((directory / "keystore.json").read_text())
    params = SystemParams.from_json_dict(registry["params"])
    ta = TaState(sk_ta=int(keystore["sk_ta"]), params=params)
    for node in registry["nodes"]:
        tid = bytes.fromhex(node["tid"])
        secrets = keystore["nodes"][node["tid"]]
        creds = NodeCredentials(
            tid=tid,
            role=node["role"],
            q_u=int(node["q_u"]),
            s_u=int(secrets["s_u"]),
            sk=int(secrets["sk"]) if secrets["sk"] is not None else None,
            pk=int(node["pk"]) if node["pk"] is not None else None,
            loc=tuple(node["loc"]) if node["loc"] is not None else None,
        )
        ta.registry[tid] = creds
        if node.get("beacon"):
            msg = wire.decode_message(bytes.fromhex(node["beacon"]), params.element_width)
            ta.beacons[tid] = msg
    return ta


def lookup(ta: TaState, tid: bytes) -> NodeCredentials:
    try:
        return ta.registry[tid]
    except KeyError:
        raise UnknownIdentity(f"tid {tid!r} not registered") from None
