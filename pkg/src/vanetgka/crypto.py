"""Algebraic and symmetric primitives.

The multiplicative group G is the signed-quadratic-residue group modulo a
safe prime p = 2q + 1: representatives are folded into [1, q] by
f(x) = x if x <= q else p - x, which picks from each class {x, p-x} the
one member that lies in [1, q].  Exponents live in Z_q.

The bilinear map is a toy instantiation over G1 = (Z_q, +) with generator
P = 1 and e(a, b) = gT^(a*b mod q).  It satisfies bilinearity,
nondegeneracy and computability, which is exactly what the protocol layers
need, and it makes desk-scale exhaustive testing possible.  It is
DELIBERATELY INSECURE (discrete logs in G1 are trivial); a production
deployment would swap in a real pairing behind the same ``SystemParams``
surface.

Symmetric primitives: a counter-mode keystream cipher built from SHA-256,
HMAC-SHA-256 truncated to 16 bytes, and an HMAC-based KDF producing
32-byte keys.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import os
import random
from dataclasses import dataclass, replace

from .errors import DecryptFail

# Representatives of G are ints in [1, q]; G1 elements and scalars are
# ints in [0, q-1].  Aliases for signature readability only.
GElem = int
G1Elem = int
Scalar = int

SYM_KEY_LEN = 32
SYM_NONCE_LEN = 16
MAC_LEN = 16
PSEUDONYM_LEN = 42


# ---------------------------------------------------------------------------
# Primality / parameter generation
# ---------------------------------------------------------------------------

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_probable_prime(n: int, rounds: int = 40) -> bool:
    """Miller-Rabin with fixed-seed witnesses (deterministic across runs)."""
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n % sp == 0:
            return n == sp
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    rng = random.Random(0x5AFE)
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def generate_safe_prime(q_bits: int, rng: random.Random) -> tuple[int, int]:
    """Return (p, q) with p = 2q + 1, both prime, q of q_bits bits."""
    while True:
        q = rng.getrandbits(q_bits) | (1 << (q_bits - 1)) | 1
        if is_probable_prime(q) and is_probable_prime(2 * q + 1):
            return 2 * q + 1, q


# ---------------------------------------------------------------------------
# System parameters and group operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Public parameters: the group, the pairing target, and TA public keys.

    ``pk_ta_g`` is the TA public key in G (g^psi) used for pseudonym masks
    and signature checks; ``pk_ta_g1`` is the TA key as a G1 element
    (psi * P) used inside pairings.  Both are None until a trust authority
    publishes them.
    """

    p: int
    q: int
    g: GElem
    gt: GElem
    pk_ta_g: GElem | None = None
    pk_ta_g1: G1Elem | None = None

    @property
    def element_width(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def validate(self) -> None:
        if not is_probable_prime(self.p):
            raise ValueError(f"p = {self.p} is not prime")
        if not is_probable_prime(self.q):
            raise ValueError(f"q = {self.q} is not prime")
        if self.p != 2 * self.q + 1:
            raise ValueError("p != 2q + 1")
        for name, elem in (("g", self.g), ("gt", self.gt)):
            if not 1 < elem <= self.q:
                raise ValueError(f"{name} = {elem} outside (1, q]")
            # order-q check uses the raw exponent q on purpose: the group
            # API below reduces exponents mod q, which would hide it
            if self.fold(pow(elem, self.q, self.p)) != 1:
                raise ValueError(f"{name} does not have order q")

    def with_ta_keys(self, pk_ta_g: GElem, pk_ta_g1: G1Elem) -> "SystemParams":
        return replace(self, pk_ta_g=pk_ta_g, pk_ta_g1=pk_ta_g1)

    # -- group G ------------------------------------------------------------

    def fold(self, x: int) -> GElem:
        """Canonical representative of {x, p-x} in [1, q]."""
        if not 1 <= x <= self.p - 1:
            raise ValueError(f"fold: {x} outside [1, p-1]")
        return x if x <= self.q else self.p - x

    def g_exp(self, a: GElem, b: Scalar) -> GElem:
        """a^b in G; exponents reduce mod q since the group has order q."""
        return self.fold(pow(a, b % self.q, self.p))

    def g_mul(self, a: GElem, b: GElem) -> GElem:
        return self.fold(a * b % self.p)

    def g_inv(self, a: GElem) -> GElem:
        return self.g_exp(a, self.q - 1)

    def g_prod(self, elems) -> GElem:
        out = 1
        for e in elems:
            out = out * e % self.p
        return self.fold(out)

    # -- toy pairing over G1 = (Z_q, +), P = 1 --------------------------------

    def pair(self, a: G1Elem, b: G1Elem) -> GElem:
        return self.g_exp(self.gt, a * b % self.q)

    def g1_mul(self, k: Scalar, a: G1Elem) -> G1Elem:
        """Scalar multiplication k*a in G1."""
        return k * a % self.q

    # -- hashing into the algebra --------------------------------------------

    def hash_to_g1(self, data: bytes) -> G1Elem:
        return _expand_to_int(b"h2g1", data, self.q) % (self.q - 1) + 1

    def hash_to_scalar(self, data: bytes) -> Scalar:
        return _expand_to_int(b"h2s", data, self.q) % (self.q - 1) + 1

    def mask_hash(self, e: GElem, out_len: int = PSEUDONYM_LEN) -> bytes:
        return _expand(b"mask", self.encode_elem(e), out_len)

    # -- serialization ---------------------------------------------------------

    def encode_elem(self, x: int) -> bytes:
        """Fixed-width big-endian encoding shared by G, G1 and scalar values."""
        return x.to_bytes(self.element_width, "big")

    def decode_elem(self, data: bytes) -> int:
        if len(data) != self.element_width:
            raise ValueError("wrong element width")
        return int.from_bytes(data, "big")

    @property
    def hash_config(self) -> dict[str, str]:
        """Identifiers of the hash instantiations behind H1, h, the
        pseudonym mask and the KDF (fixed in this implementation)."""
        return {
            "h1": "sha256-ctr",
            "h": "sha256-ctr",
            "mask": "sha256-ctr",
            "kdf": "hmac-sha256",
        }

    def to_json_dict(self) -> dict:
        d = {
            "p": str(self.p),
            "q": str(self.q),
            "g": str(self.g),
            "gt": str(self.gt),
            "element_width": self.element_width,
            "hash_config": self.hash_config,
        }
        if self.pk_ta_g is not None:
            d["pk_ta_g"] = str(self.pk_ta_g)
            d["pk_ta_g1"] = str(self.pk_ta_g1)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SystemParams":
        params = cls(
            p=int(d["p"]),
            q=int(d["q"]),
            g=int(d["g"]),
            gt=int(d["gt"]),
            pk_ta_g=int(d["pk_ta_g"]) if "pk_ta_g" in d else None,
            pk_ta_g1=int(d["pk_ta_g1"]) if "pk_ta_g1" in d else None,
        )
        if "hash_config" in d and d["hash_config"] != params.hash_config:
            raise ValueError("unsupported hash configuration")
        return params


# Parameter scales.  "test" is small enough for exhaustive checks, "small64"
# keeps runs fast while making random collisions negligible, "default" is the
# realistic size.  The larger primes are fixed constants so startup never
# pays safe-prime generation.
PROFILES: dict[str, SystemParams] = {
    "test": SystemParams(p=23, q=11, g=2, gt=2),
    "small64": SystemParams(
        p=12118870745514474443, q=6059435372757237221, g=4, gt=4
    ),
    "default": SystemParams(
        p=230198062262824088991305066793960020683173156635716654584224128060006756621007,
        q=115099031131412044495652533396980010341586578317858327292112064030003378310503,
        g=4,
        gt=4,
    ),
}


def get_profile(name: str) -> SystemParams:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown parameter profile {name!r}") from None


# ---------------------------------------------------------------------------
# Scalar sampling
# ---------------------------------------------------------------------------


def rand_zq_star(rng: random.Random, q: int) -> Scalar:
    """Uniform scalar in [1, q-1]."""
    return rng.randrange(1, q)


# ---------------------------------------------------------------------------
# Hash expansion
# ---------------------------------------------------------------------------


def _expand(domain: bytes, data: bytes, n: int) -> bytes:
    """n pseudorandom bytes: counter-mode SHA-256 with domain separation."""
    out = bytearray()
    ctr = 0
    prefix = len(domain).to_bytes(1, "big") + domain
    while len(out) < n:
        out += hashlib.sha256(prefix + ctr.to_bytes(8, "big") + data).digest()
        ctr += 1
    return bytes(out[:n])


def _expand_to_int(domain: bytes, data: bytes, q: int) -> int:
    # 16 extra bytes make the mod-(q-1) bias negligible
    width = (q.bit_length() + 7) // 8 + 16
    return int.from_bytes(_expand(domain, data, width), "big")


# ---------------------------------------------------------------------------
# Symmetric layer
# ---------------------------------------------------------------------------


def kdf(value: int, context: bytes) -> bytes:
    """32-byte key from a group element or scalar; contexts separate uses."""
    key = hashlib.sha256(b"kdf:" + context).digest()
    n = max(1, (value.bit_length() + 7) // 8)
    return _hmac.digest(key, value.to_bytes(n, "big"), "sha256")


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(
        len(a), "big"
    )


def _keystream(key: bytes, nonce: bytes, n: int) -> bytes:
    out = bytearray()
    ctr = 0
    while len(out) < n:
        out += hashlib.sha256(key + nonce + ctr.to_bytes(8, "big")).digest()
        ctr += 1
    return bytes(out[:n])


def sym_encrypt(key: bytes, plaintext: bytes, rng: random.Random | None = None) -> bytes:
    """nonce || plaintext XOR keystream.  Unauthenticated: pair with hmac_tag."""
    nonce = rng.randbytes(SYM_NONCE_LEN) if rng is not None else os.urandom(SYM_NONCE_LEN)
    return nonce + _xor(plaintext, _keystream(key, nonce, len(plaintext)))


def sym_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) < SYM_NONCE_LEN:
        raise DecryptFail("ciphertext shorter than nonce")
    nonce, body = ciphertext[:SYM_NONCE_LEN], ciphertext[SYM_NONCE_LEN:]
    return _xor(body, _keystream(key, nonce, len(body)))


def hmac_tag(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA-256 truncated to the 16-byte wire width."""
    return _hmac.digest(key, data, "sha256")[:MAC_LEN]


def macs_equal(a: bytes, b: bytes) -> bool:
    return _hmac.compare_digest(a, b)


# ---------------------------------------------------------------------------
# Schnorr signatures in G
# ---------------------------------------------------------------------------


def schnorr_sign(
    params: SystemParams, sk: Scalar, message: bytes, rng: random.Random | None = None
) -> tuple[Scalar, Scalar]:
    """Sign with commit R = g^k, challenge c = h(R || m), response k - c*sk.

    Without an rng the nonce is derandomized from the key and message,
    which never reuses k across distinct messages.
    """
    if rng is None:
        k = params.hash_to_scalar(b"signonce|" + params.encode_elem(sk) + message)
    else:
        k = rand_zq_star(rng, params.q)
    commit = params.g_exp(params.g, k)
    c = params.hash_to_scalar(params.encode_elem(commit) + message)
    s = (k - c * sk) % params.q
    return c, s


def schnorr_verify(
    params: SystemParams, pk: GElem, message: bytes, sig: tuple[Scalar, Scalar]
) -> bool:
    c, s = sig
    if not (0 <= c < params.q and 0 <= s < params.q):
        return False
    commit = params.g_mul(params.g_exp(params.g, s), params.g_exp(pk, c))
    return params.hash_to_scalar(params.encode_elem(commit) + message) == c
