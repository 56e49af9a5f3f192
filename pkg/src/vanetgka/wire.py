"""Byte-exact wire codec for every protocol message.

Layout conventions (all integers big-endian):

  type tag          1 byte
  group element     element_width bytes (G, G1 and scalar values alike)
  pseudonym (fid)   exactly 42 bytes
  MAC               exactly 16 bytes, always the final field
  timestamp         8-byte unsigned milliseconds
  epoch             8-byte unsigned counter
  location coord    8-byte signed centimeters
  ciphertext        4-byte length prefix + bytes
  identity (tid)    4-byte length prefix + bytes

``decode(encode(m)) == m`` for every message, and decoding rejects unknown
tags, truncated input and trailing garbage.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .crypto import MAC_LEN, PSEUDONYM_LEN

_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1
_I64_MIN, _I64_MAX = -(2**63), 2**63 - 1


class _Writer:
    def __init__(self, width: int):
        self.width = width
        self.parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self.parts.append(v.to_bytes(1, "big"))

    def u64(self, v: int) -> None:
        if not 0 <= v <= _U64_MAX:
            raise ValueError(f"u64 field out of range: {v}")
        self.parts.append(v.to_bytes(8, "big"))

    def i64(self, v: int) -> None:
        if not _I64_MIN <= v <= _I64_MAX:
            raise ValueError(f"i64 field out of range: {v}")
        self.parts.append(v.to_bytes(8, "big", signed=True))

    def elem(self, v: int) -> None:
        if not 0 <= v < 256**self.width:
            raise ValueError(f"element {v} does not fit width {self.width}")
        self.parts.append(v.to_bytes(self.width, "big"))

    def fid(self, v: bytes) -> None:
        if len(v) != PSEUDONYM_LEN:
            raise ValueError(f"pseudonym must be {PSEUDONYM_LEN} bytes, got {len(v)}")
        self.parts.append(v)

    def mac(self, v: bytes) -> None:
        if len(v) != MAC_LEN:
            raise ValueError(f"mac must be {MAC_LEN} bytes, got {len(v)}")
        self.parts.append(v)

    def var(self, v: bytes) -> None:
        if len(v) > _U32_MAX:
            raise ValueError("variable field too long")
        self.parts.append(len(v).to_bytes(4, "big"))
        self.parts.append(v)

    def elem_list(self, vs: tuple[int, ...]) -> None:
        if len(vs) > _U32_MAX:
            raise ValueError("element list too long")
        self.parts.append(len(vs).to_bytes(4, "big"))
        for v in vs:
            self.elem(v)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, width: int):
        self.data = data
        self.width = width
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated message")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def i64(self) -> int:
        return int.from_bytes(self.take(8), "big", signed=True)

    def elem(self) -> int:
        return int.from_bytes(self.take(self.width), "big")

    def fid(self) -> bytes:
        return self.take(PSEUDONYM_LEN)

    def mac(self) -> bytes:
        return self.take(MAC_LEN)

    def var(self) -> bytes:
        n = int.from_bytes(self.take(4), "big")
        return self.take(n)

    def elem_list(self) -> tuple[int, ...]:
        n = int.from_bytes(self.take(4), "big")
        if self.pos + n * self.width > len(self.data):
            raise ValueError("truncated message")
        return tuple(self.elem() for _ in range(n))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ValueError(f"{len(self.data) - self.pos} trailing bytes")


# ---------------------------------------------------------------------------
# Message types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RingCommit:
    """Round-1 key agreement commitments among RSUs."""

    TAG = 0x01
    tid: bytes
    x_pub: int
    r_pub: int
    t_pub: int
    sig_c: int
    sig_s: int

    def _pack(self, w: _Writer) -> None:
        w.var(self.tid)
        w.elem(self.x_pub)
        w.elem(self.r_pub)
        w.elem(self.t_pub)
        w.elem(self.sig_c)
        w.elem(self.sig_s)

    @classmethod
    def _unpack(cls, r: _Reader) -> "RingCommit":
        return cls(r.var(), r.elem(), r.elem(), r.elem(), r.elem(), r.elem())


@dataclass(frozen=True)
class RingResponse:
    """Round-2 ring value, response scalar and deniability tokens."""

    TAG = 0x02
    tid: bytes
    y: int
    s: int
    tokens: tuple[int, ...]
    sig_c: int
    sig_s: int

    def _pack(self, w: _Writer) -> None:
        w.var(self.tid)
        w.elem(self.y)
        w.elem(self.s)
        w.elem_list(self.tokens)
        w.elem(self.sig_c)
        w.elem(self.sig_s)

    @classmethod
    def _unpack(cls, r: _Reader) -> "RingResponse":
        return cls(r.var(), r.elem(), r.elem(), r.elem_list(), r.elem(), r.elem())


@dataclass(frozen=True)
class RsuBeacon:
    """Periodic RSU announcement, signed by the trust authority."""

    TAG = 0x10
    pk_rsu: int
    loc_x: int
    loc_y: int
    loc_hash: int
    sig_c: int
    sig_s: int

    def _pack(self, w: _Writer) -> None:
        w.elem(self.pk_rsu)
        w.i64(self.loc_x)
        w.i64(self.loc_y)
        w.elem(self.loc_hash)
        w.elem(self.sig_c)
        w.elem(self.sig_s)

    @classmethod
    def _unpack(cls, r: _Reader) -> "RsuBeacon":
        return cls(r.elem(), r.i64(), r.i64(), r.elem(), r.elem(), r.elem())


@dataclass(frozen=True)
class AuthHello:
    """Vehicle hello: epoch public key, timestamp, pseudonym ciphertexts."""

    TAG = 0x11
    pk_v: int
    ts_ms: int
    gk_fid_ct: bytes  # pseudonym under a neighbor group key (or filler)
    kem_epk: int  # ephemeral public key of the hybrid encryption
    kem_ct: bytes  # (fid, nonce scalar) for the RSU
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.elem(self.pk_v)
        w.u64(self.ts_ms)
        w.var(self.gk_fid_ct)
        w.elem(self.kem_epk)
        w.var(self.kem_ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "AuthHello":
        return cls(r.elem(), r.u64(), r.var(), r.elem(), r.var(), r.mac())


@dataclass(frozen=True)
class AuthChallenge:
    """RSU challenge carrying its blinded certification values."""

    TAG = 0x12
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "AuthChallenge":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class AuthConfirm:
    """Vehicle key-confirmation response."""

    TAG = 0x13
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "AuthConfirm":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class ShareOffer:
    """Member's blinded group-key share, on the per-vehicle channel."""

    TAG = 0x20
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "ShareOffer":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class ShareUpdate:
    """Per-member rekey material (blinded share and share product)."""

    TAG = 0x21
    epoch: int
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.u64(self.epoch)
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "ShareUpdate":
        return cls(r.u64(), r.var(), r.mac())


@dataclass(frozen=True)
class GroupKeyNotice:
    """New group key broadcast, encrypted under the previous group key."""

    TAG = 0x22
    epoch: int
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.u64(self.epoch)
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "GroupKeyNotice":
        return cls(r.u64(), r.var(), r.mac())


@dataclass(frozen=True)
class LeaveUpdate:
    """Post-departure rekey broadcast listing the remaining members' shares."""

    TAG = 0x23
    epoch: int
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.u64(self.epoch)
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "LeaveUpdate":
        return cls(r.u64(), r.var(), r.mac())


@dataclass(frozen=True)
class GroupKeyTransfer:
    """Group key handed to a neighbor RSU under the RSU-to-RSU session key."""

    TAG = 0x24
    ct: bytes  # carries (group key, epoch as 8-byte big-endian)
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "GroupKeyTransfer":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class GroupBroadcast:
    """Group-wide message under the group key; sender fid inside."""

    TAG = 0x30
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "GroupBroadcast":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class UplinkMessage:
    """Vehicle-to-RSU confidential unicast on the per-vehicle channel."""

    TAG = 0x31
    fid: bytes
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.fid(self.fid)
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "UplinkMessage":
        return cls(r.fid(), r.var(), r.mac())


@dataclass(frozen=True)
class DirectoryRequest:
    """Member request for the share directory (one-to-one setup)."""

    TAG = 0x32
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "DirectoryRequest":
        return cls(r.var(), r.mac())


@dataclass(frozen=True)
class DirectoryListing:
    """RSU broadcast of all (blinded share, fid) pairs in the group."""

    TAG = 0x33
    epoch: int
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.u64(self.epoch)
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "DirectoryListing":
        return cls(r.u64(), r.var(), r.mac())


@dataclass(frozen=True)
class PeerMessage:
    """Vehicle-to-vehicle message: pairwise-key layer inside group-key layer."""

    TAG = 0x34
    ct: bytes
    mac: bytes

    def _pack(self, w: _Writer) -> None:
        w.var(self.ct)
        w.mac(self.mac)

    @classmethod
    def _unpack(cls, r: _Reader) -> "PeerMessage":
        return cls(r.var(), r.mac())


MESSAGE_TYPES = (
    RingCommit,
    RingResponse,
    RsuBeacon,
    AuthHello,
    AuthChallenge,
    AuthConfirm,
    ShareOffer,
    ShareUpdate,
    GroupKeyNotice,
    LeaveUpdate,
    GroupKeyTransfer,
    GroupBroadcast,
    UplinkMessage,
    DirectoryRequest,
    DirectoryListing,
    PeerMessage,
)

_BY_TAG = {t.TAG: t for t in MESSAGE_TYPES}

WireMessage = (
    RingCommit
    | RingResponse
    | RsuBeacon
    | AuthHello
    | AuthChallenge
    | AuthConfirm
    | ShareOffer
    | ShareUpdate
    | GroupKeyNotice
    | LeaveUpdate
    | GroupKeyTransfer
    | GroupBroadcast
    | UplinkMessage
    | DirectoryRequest
    | DirectoryListing
    | PeerMessage
)


def encode_message(msg: WireMessage, element_width: int) -> bytes:
    w = _Writer(element_width)
    w.u8(msg.TAG)
    msg._pack(w)
    return w.getvalue()


def decode_message(data: bytes, element_width: int) -> WireMessage:
    r = _Reader(data, element_width)
    tag = r.u8()
    try:
        cls = _BY_TAG[tag]
    except KeyError:
        raise ValueError(f"unknown type tag 0x{tag:02x}") from None
    msg = cls._unpack(r)
    r.done()
    return msg


def mac_input(msg: WireMessage, element_width: int) -> bytes:
    """Canonical bytes a message's MAC is computed over: the encoding with
    the mac field zeroed."""
    return encode_message(replace(msg, mac=bytes(MAC_LEN)), element_width)


def describe(msg: WireMessage) -> str:
    """Human-readable field dump (used by the ``codec dump`` CLI)."""
    lines = [f"{type(msg).__name__} (tag 0x{msg.TAG:02x})"]
    for f in fields(msg):
        v = getattr(msg, f.name)
        if isinstance(v, bytes):
            shown = v.hex()
            if len(shown) > 64:
                shown = f"{shown[:64]}... ({len(v)} bytes)"
            lines.append(f"  {f.name}: {shown}")
        elif isinstance(v, tuple):
            lines.append(f"  {f.name}: [{', '.join(str(x) for x in v)}]")
        else:
            lines.append(f"  {f.name}: {v}")
    return "\n".join(lines)
