"""Trusted-dealer threshold cryptography for deterministic simulation.

Keyed-digest constructions stand in for threshold signatures, coin
tossing and threshold public-key encryption: every operation is a pure
function of (inputs, key material), so runs replay bit for bit.  The
dealer's master secret lives only inside the provider; party code and
adversary code receive capability handles that expose a single party's
signing/decryption operations plus the public verifier surface, and no
public operation returns master-derived values unless threshold-many
valid shares are presented.

WARNING: this is a simulation artifact, not a secure implementation.
"""
from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

DIGEST_LEN = 32
TAG_LEN = 8  # length of share / combined-signature evidence tags
KM_MAGIC = b"SABC-KM1"


class CryptoError(Exception):
    pass


class InsufficientSharesError(CryptoError):
    """Fewer distinct valid shares than the threshold requires."""

    def __init__(self, needed: int, got: int):
        super().__init__(f"need {needed} distinct valid shares, got {got}")
        self.needed = needed
        self.got = got


class InvalidShareError(CryptoError):
    """At least one offered share fails verification; offenders named."""

    def __init__(self, offenders: Sequence[int]):
        super().__init__(f"invalid shares from {sorted(offenders)}")
        self.offenders = tuple(sorted(offenders))


class MalformedCiphertextError(CryptoError):
    pass


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class SignatureShare:
    signer: int
    message_digest: bytes
    share_bytes: bytes


@dataclass(frozen=True)
class ThresholdSignature:
    message_digest: bytes
    sig_bytes: bytes


@dataclass(frozen=True)
class CoinShare:
    holder: int
    coin_name: bytes
    share_bytes: bytes


@dataclass(frozen=True)
class Ciphertext:
    payload: bytes
    length_plain: int

    def ct_digest(self) -> bytes:
        return digest(self.payload)


@dataclass(frozen=True)
class DecryptionShare:
    holder: int
    ciphertext_digest: bytes
    share_bytes: bytes


_CT_MAGIC = b"STPK"
_CT_HEADER = len(_CT_MAGIC) + 16  # magic + masked-seed header


def key_setup(security_param: int, n: int, t_sig: int, seed: int) -> "ThresholdProvider":
    """Dealer key generation; see ThresholdProvider for the contract."""
    return ThresholdProvider(security_param, n, t_sig, seed)


class ThresholdProvider:
    """Holds all key material; hands out per-party capabilities.

    n = 3f+1 with f >= 1 is enforced; t_sig must satisfy f < t_sig <= n-f.
    The TPKE and coin thresholds are fixed at f+1.
    """

    def __init__(self, security_param: int, n: int, t_sig: int, seed: int):
        if n < 4 or (n - 1) % 3 != 0:
            raise ValueError(f"n must be 3f+1 with f >= 1, got n={n}")
        f = (n - 1) // 3
        if not (f < t_sig <= n - f):
            raise ValueError(f"t_sig must satisfy f < t_sig <= n-f, got {t_sig}")
        self.security_param = security_param
        self.n = n
        self.f = f
        self.t_sig = t_sig
        self.seed = seed
        self._master = digest(
            b"SABC-DEALER" + struct.pack(">QHHI", seed & (2**64 - 1), n, t_sig, security_param)
        )
        self._party_secrets = tuple(
            digest(self._master + b"party" + struct.pack(">H", i)) for i in range(n)
        )

    # -- internal keyed digests ------------------------------------------

    def _tag(self, key: bytes, *parts: bytes) -> bytes:
        return hmac.new(key, b"\x00".join(parts), hashlib.sha256).digest()[:TAG_LEN]

    def _stream(self, key: bytes, label: bytes, nbytes: int) -> bytes:
        out = []
        for i in range((nbytes + DIGEST_LEN - 1) // DIGEST_LEN):
            out.append(hmac.new(key, label + struct.pack(">I", i), hashlib.sha256).digest())
        return b"".join(out)[:nbytes]

    def _check_party(self, party: int) -> None:
        if not 0 <= party < self.n:
            raise ValueError(f"party {party} out of range for n={self.n}")

    # -- threshold signatures --------------------------------------------

    def sig_share(self, party: int, message: bytes) -> SignatureShare:
        self._check_party(party)
        d = digest(message)
        return SignatureShare(party, d, self._tag(self._party_secrets[party], b"sig", d))

    def verify_share(self, message: bytes, signer: int, share: SignatureShare) -> bool:
        if not 0 <= signer < self.n or share.signer != signer:
            return False
        d = digest(message)
        if share.message_digest != d:
            return False
        return hmac.compare_digest(share.share_bytes, self._tag(self._party_secrets[signer], b"sig", d))

    def combine_shares(self, message: bytes, shares: Iterable[SignatureShare]) -> ThresholdSignature:
        """Combine >= t_sig distinct valid shares into the group signature.

        Any invalid share raises InvalidShareError naming the offenders;
        too few distinct valid shares raises InsufficientSharesError.
        The result is a pure function of (message, key material), so any
        qualifying subset combines to the identical signature.
        """
        offenders = [s.signer for s in shares if not self.verify_share(message, s.signer, s)]
        if offenders:
            raise InvalidShareError(offenders)
        signers = {s.signer for s in shares}
        if len(signers) < self.t_sig:
            raise InsufficientSharesError(self.t_sig, len(signers))
        d = digest(message)
        return ThresholdSignature(d, self._tag(self._master, b"tsig", d))

    def verify_signature(self, message: bytes, sig: ThresholdSignature) -> bool:
        d = digest(message)
        if sig.message_digest != d:
            return False
        return hmac.compare_digest(sig.sig_bytes, self._tag(self._master, b"tsig", d))

    # -- common coin -------------------------------------------------------

    def coin_share(self, party: int, coin_name: bytes) -> CoinShare:
        self._check_party(party)
        return CoinShare(party, coin_name, self._tag(self._party_secrets[party], b"coin", coin_name))

    def coin_share_verify(self, coin_name: bytes, holder: int, share: CoinShare) -> bool:
        if not 0 <= holder < self.n or share.holder != holder or share.coin_name != coin_name:
            return False
        return hmac.compare_digest(
            share.share_bytes, self._tag(self._party_secrets[holder], b"coin", coin_name)
        )

    def _coin_quorum(self, coin_name: bytes, shares: Iterable[CoinShare]) -> None:
        offenders = [
            s.holder for s in shares if not self.coin_share_verify(coin_name, s.holder, s)
        ]
        if offenders:
            raise InvalidShareError(offenders)
        holders = {s.holder for s in shares}
        if len(holders) < self.f + 1:
            raise InsufficientSharesError(self.f + 1, len(holders))

    def coin_toss_bit(self, coin_name: bytes, shares: Iterable[CoinShare]) -> int:
        """Unbiased bit, defined only once f+1 distinct valid shares exist."""
        self._coin_quorum(coin_name, list(shares))
        return self._stream(self._master, b"coinbit" + coin_name, 1)[0] & 1

    def coin_toss_committee(
        self, coin_name: bytes, shares: Iterable[CoinShare], kappa: int
    ) -> tuple[int, ...]:
        """kappa distinct parties drawn by Fisher-Yates over a keyed stream."""
        if not 0 < kappa <= self.n:
            raise ValueError(f"kappa must be in 1..n, got {kappa}")
        self._coin_quorum(coin_name, list(shares))
        pool = list(range(self.n))
        raw = self._stream(self._master, b"committee" + coin_name, 4 * kappa)
        for i in range(kappa):
            j = i + struct.unpack_from(">I", raw, 4 * i)[0] % (self.n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(pool[:kappa])

    # -- threshold public-key encryption -----------------------------------

    def tpke_enc(self, plaintext: bytes) -> Ciphertext:
        """Deterministic: identical plaintexts encrypt to identical ciphertexts."""
        # 16-byte masked-seed header regardless of the evidence-tag width.
        header = self._stream(self._master, b"tpke-hdr" + digest(plaintext), _CT_HEADER - len(_CT_MAGIC))
        mask = self._stream(self._master, b"tpke-mask" + header, len(plaintext))
        body = bytes(a ^ b for a, b in zip(plaintext, mask))
        return Ciphertext(_CT_MAGIC + header + body, len(plaintext))

    def _check_ciphertext(self, c: Ciphertext) -> None:
        if (
            not c.payload.startswith(_CT_MAGIC)
            or len(c.payload) != _CT_HEADER + c.length_plain
            or c.length_plain < 0
        ):
            raise MalformedCiphertextError("not a valid ciphertext")

    def ciphertext_wellformed(self, c: Ciphertext) -> bool:
        """Structural check only; no key material involved."""
        try:
            self._check_ciphertext(c)
        except MalformedCiphertextError:
            return False
        return True

    def tpke_dec_share(self, party: int, c: Ciphertext) -> DecryptionShare:
        self._check_party(party)
        self._check_ciphertext(c)
        d = c.ct_digest()
        return DecryptionShare(party, d, self._tag(self._party_secrets[party], b"tpke-dec", d))

    def tpke_dec_share_verify(self, c: Ciphertext, holder: int, share: DecryptionShare) -> bool:
        if not 0 <= holder < self.n or share.holder != holder:
            return False
        d = c.ct_digest()
        if share.ciphertext_digest != d:
            return False
        return hmac.compare_digest(
            share.share_bytes, self._tag(self._party_secrets[holder], b"tpke-dec", d)
        )

    def tpke_dec(self, c: Ciphertext, shares: Iterable[DecryptionShare]) -> bytes:
        """Recover the plaintext from f+1 distinct valid decryption shares."""
        self._check_ciphertext(c)
        offenders = [s.holder for s in shares if not self.tpke_dec_share_verify(c, s.holder, s)]
        if offenders:
            raise InvalidShareError(offenders)
        holders = {s.holder for s in shares}
        if len(holders) < self.f + 1:
            raise InsufficientSharesError(self.f + 1, len(holders))
        header = c.payload[len(_CT_MAGIC):_CT_HEADER]
        mask = self._stream(self._master, b"tpke-mask" + header, c.length_plain)
        return bytes(a ^ b for a, b in zip(c.payload[_CT_HEADER:], mask))

    # -- capabilities and serialization -------------------------------------

    def party_handle(self, party: int) -> "PartyCrypto":
        self._check_party(party)
        return PartyCrypto(self, party)

    def serialize(self) -> bytes:
        blob = KM_MAGIC + struct.pack(
            ">IHHQ", self.security_param, self.n, self.t_sig, self.seed & (2**64 - 1)
        )
        return blob + digest(blob)[:4]

    @classmethod
    def deserialize(cls, blob: bytes) -> "ThresholdProvider":
        if len(blob) != len(KM_MAGIC) + 16 + 4 or not blob.startswith(KM_MAGIC):
            raise ValueError("bad key-material blob")
        body, check = blob[:-4], blob[-4:]
        if digest(body)[:4] != check:
            raise ValueError("key-material checksum mismatch")
        sec, n, t_sig, seed = struct.unpack(">IHHQ", body[len(KM_MAGIC):])
        return cls(sec, n, t_sig, seed)


class PartyCrypto:
    """Capability handle: one party's secrets plus the public surface.

    Party and adversary code only ever sees instances of this class, so
    the master secret and other parties' secrets stay structurally out
    of reach.
    """

    def __init__(self, provider: ThresholdProvider, party: int):
        self._provider = provider
        self.party = party

    @property
    def n(self) -> int:
        return self._provider.n

    @property
    def f(self) -> int:
        return self._provider.f

    @property
    def t_sig(self) -> int:
        return self._provider.t_sig

    # own-secret operations
    def sig_share(self, message: bytes) -> SignatureShare:
        return self._provider.sig_share(self.party, message)

    def coin_share(self, coin_name: bytes) -> CoinShare:
        return self._provider.coin_share(self.party, coin_name)

    def dec_share(self, c: Ciphertext) -> DecryptionShare:
        return self._provider.tpke_dec_share(self.party, c)

    # public surface
    def verify_share(self, message: bytes, signer: int, share: SignatureShare) -> bool:
        return self._provider.verify_share(message, signer, share)

    def combine_shares(self, message: bytes, shares: Iterable[SignatureShare]) -> ThresholdSignature:
        return self._provider.combine_shares(message, shares)

    def verify_signature(self, message: bytes, sig: ThresholdSignature) -> bool:
        return self._provider.verify_signature(message, sig)

    def coin_share_verify(self, coin_name: bytes, holder: int, share: CoinShare) -> bool:
        return self._provider.coin_share_verify(coin_name, holder, share)

    def coin_toss_bit(self, coin_name: bytes, shares: Iterable[CoinShare]) -> int:
        return self._provider.coin_toss_bit(coin_name, shares)

    def coin_toss_committee(
        self, coin_name: bytes, shares: Iterable[CoinShare], kappa: int
    ) -> tuple[int, ...]:
        return self._provider.coin_toss_committee(coin_name, shares, kappa)

    def tpke_enc(self, plaintext: bytes) -> Ciphertext:
        return self._provider.tpke_enc(plaintext)

    def ciphertext_wellformed(self, c: Ciphertext) -> bool:
        return self._provider.ciphertext_wellformed(c)

    def tpke_dec_share_verify(self, c: Ciphertext, holder: int, share: DecryptionShare) -> bool:
        return self._provider.tpke_dec_share_verify(c, holder, share)

    def tpke_dec(self, c: Ciphertext, shares: Iterable[DecryptionShare]) -> bytes:
        return self._provider.tpke_dec(c, shares)
