"""Typed protocol failures.

Every rejection path in the protocol raises one of these instead of
returning sentinel values, so callers (and the simulator) can count and
classify failures without string matching.
"""


class ProtocolError(Exception):
    """Base class for all protocol-level rejections."""


class SigFail(ProtocolError):
    """A Schnorr signature did not verify."""


class LocHashMismatch(ProtocolError):
    """Beacon location hash does not match the signed location."""


class StaleTimestamp(ProtocolError):
    """Message timestamp older than the configured freshness window."""


class MacFail(ProtocolError):
    """An HMAC tag did not verify."""


class DecryptFail(ProtocolError):
    """Ciphertext malformed or could not be decrypted."""


class KeyConfirmFail(ProtocolError):
    """Mutual-authentication key confirmation values disagree."""


class TokenMismatch(ProtocolError):
    """A deniability token failed its pairwise check."""

    def __init__(self, sender_tid: bytes, verifier_tid: bytes):
        super().__init__(f"token from {sender_tid!r} failed check at {verifier_tid!r}")
        self.sender_tid = sender_tid
        self.verifier_tid = verifier_tid


class ChainBreak(ProtocolError):
    """The ring-value reconstruction chain did not close."""


class SchnorrFail(ProtocolError):
    """A ring member's response value failed verification."""

    def __init__(self, tid: bytes):
        super().__init__(f"response check failed for {tid!r}")
        self.tid = tid


class FidAbsent(ProtocolError):
    """The caller's pseudonym is not listed in a rekey broadcast."""


class StateError(ProtocolError):
    """Operation invoked out of order for the session's state machine."""


class EpochMismatch(ProtocolError):
    """Message or channel belongs to a different group-key epoch."""


class DuplicateIdentity(ProtocolError):
    """Identity already registered / already a group member."""


class UnknownIdentity(ProtocolError):
    """Identity not found where one was required."""


class TraceMismatch(ProtocolError):
    """Pseudonym unmasking failed: fid and public key do not belong together."""
