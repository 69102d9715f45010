"""Per-slot agreement invocation.

Wraps one binary-agreement machine with the slot's input layer: each
party announces a 1-bit claim (V-message) for the slot, claiming 1 iff
it holds the verified (ciphertext, proof) pair.  Claims travel bare —
pair dissemination is the proposal/suggestion multicasts' job — though
a claim that does attach a pair is verified and adopted (an attached
pair that fails verification demotes the claim to 0).  Once 2f+1
claims are in, the local claim bit feeds the agreement machine.  A
party that learns the slot decided 1 without holding the pair
multicasts a recovery request; any holder answers with the pair.
After deciding 1, holders contribute decryption shares and the
plaintext is recovered from f+1 of them.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from .abba import AbbaMachine, AlreadyInputError
from .crypto import Ciphertext, DecryptionShare, PartyCrypto, ThresholdSignature
from .messages import DecShare, Message, Recover, RecoverResp, VMsg
from .ppb import verify_proof


class InvalidProofError(Exception):
    pass


class SlotInvocation:
    def __init__(self, instance: int, slot: int, crypto: PartyCrypto):
        self.instance = instance
        self.slot = slot
        self.crypto = crypto
        self.abba = AbbaMachine(instance, slot, crypto)
        self.pair: Optional[Tuple[Ciphertext, ThresholdSignature]] = None
        self.u = 0
        self.started = False
        self.input_bit: Optional[int] = None  # set when the machine got its input
        self.decided: Optional[Tuple[int, int]] = None  # (bit, round)
        self.plaintext: Optional[bytes] = None
        self._v_senders: Dict[int, int] = {}
        self._v_out: Optional[VMsg] = None
        self._dec_shares: Dict[int, DecryptionShare] = {}
        self._dec_pending: List[Tuple[int, DecryptionShare]] = []
        self._dec_share_sent = False
        self._recover_sent = False

    # -- pair dissemination ---------------------------------------------------

    def record_pair(self, ciphertext: Ciphertext, proof: ThresholdSignature,
                    out: List[Message]) -> bool:
        """Adopt a verified (ciphertext, proof) pair; idempotent."""
        if self.pair is not None:
            return verify_proof(self.crypto, self.instance, self.slot, ciphertext, proof)
        if not verify_proof(self.crypto, self.instance, self.slot, ciphertext, proof):
            return False
        self.pair = (ciphertext, proof)
        out.extend(self.abba.set_evidence_known())
        pending, self._dec_pending = self._dec_pending, []
        for sender, share in pending:
            self.on_dec_share(sender, DecShare(self.instance, self.slot, share), out)
        self._after_abba(out)
        if self.decided is not None and self.decided[0] == 1:
            self._emit_dec_share(out)
            self._try_decrypt()
        return True

    def inv_start(self, bit: int, ciphertext: Optional[Ciphertext] = None,
                  proof: Optional[ThresholdSignature] = None) -> List[Message]:
        """Fix the local claim and produce the V-message (flushed by the owner)."""
        if self.started:
            raise AlreadyInputError(f"slot {self.slot} invocation already started")
        out: List[Message] = []
        if bit == 1:
            if ciphertext is None or proof is None or not self.record_pair(
                ciphertext, proof, out
            ):
                raise InvalidProofError(f"slot {self.slot}: cannot start with unproven payload")
            self.u = 1
        self.started = True
        self._v_out = VMsg(self.instance, self.slot, self.u)
        self._maybe_input(out)
        return out

    def take_v(self) -> Optional[VMsg]:
        v, self._v_out = self._v_out, None
        return v

    def on_v(self, sender: int, msg: VMsg, out: List[Message]) -> None:
        if sender in self._v_senders:
            return
        effective = 0
        if msg.u == 1 and msg.ciphertext is not None and msg.proof is not None:
            if self.record_pair(msg.ciphertext, msg.proof, out):
                effective = 1  # a claimed 1 without a verifiable pair demotes to 0
        self._v_senders[sender] = effective
        if effective == 1 and self.u == 0:
            self.u = 1
        self._maybe_input(out)

    def _maybe_input(self, out: List[Message]) -> None:
        if (
            self.input_bit is None
            and self.started
            and len(self._v_senders) >= 2 * self.crypto.f + 1
        ):
            self.input_bit = self.u
            out.extend(self.abba.input(self.u))
            self._after_abba(out)

    # -- agreement traffic ----------------------------------------------------

    def on_preprocess(self, sender, msg, out: List[Message]) -> None:
        self.abba.on_preprocess(sender, msg, out)
        self._after_abba(out)

    def on_prevote(self, sender, msg, out: List[Message]) -> None:
        self.abba.on_prevote(sender, msg, out)
        self._after_abba(out)

    def on_mainvote(self, sender, msg, out: List[Message]) -> None:
        self.abba.on_mainvote(sender, msg, out)
        self._after_abba(out)

    def on_coin_share(self, sender, msg, out: List[Message]) -> None:
        self.abba.on_coin_share(sender, msg, out)
        self._after_abba(out)

    def on_decision(self, sender, msg, out: List[Message]) -> None:
        self.abba.on_decision(sender, msg, out)
        self._after_abba(out)

    def _after_abba(self, out: List[Message]) -> None:
        if self.abba.decided is None or self.decided is not None:
            return
        bit, round_, _sig = self.abba.decided
        self.decided = (bit, round_)
        if bit == 1:
            if self.pair is not None:
                self._emit_dec_share(out)
                self._try_decrypt()
            elif not self._recover_sent:
                self._recover_sent = True
                out.append(Recover(self.instance, self.slot))

    # -- decryption and recovery ----------------------------------------------

    def _emit_dec_share(self, out: List[Message]) -> None:
        if self._dec_share_sent or self.pair is None:
            return
        self._dec_share_sent = True
        out.append(DecShare(self.instance, self.slot, self.crypto.dec_share(self.pair[0])))

    def on_dec_share(self, sender: int, msg: DecShare, out: List[Message]) -> None:
        if self.plaintext is not None or sender in self._dec_shares:
            return
        if msg.share.holder != sender:
            return
        if self.pair is None:
            self._dec_pending.append((sender, msg.share))
            return
        if not self.crypto.tpke_dec_share_verify(self.pair[0], sender, msg.share):
            return
        self._dec_shares[sender] = msg.share
        self._try_decrypt()

    def _try_decrypt(self) -> None:
        if (
            self.plaintext is None
            and self.decided is not None
            and self.decided[0] == 1
            and self.pair is not None
            and len(self._dec_shares) >= self.crypto.f + 1
        ):
            shares = list(self._dec_shares.values())[: self.crypto.f + 1]
            self.plaintext = self.crypto.tpke_dec(self.pair[0], shares)

    def on_recover_resp(self, msg: RecoverResp, out: List[Message]) -> None:
        self.record_pair(msg.ciphertext, msg.proof, out)

    # -- outcome ----------------------------------------------------------------

    @property
    def outcome_ready(self) -> bool:
        if self.decided is None:
            return False
        return self.decided[0] == 0 or self.plaintext is not None
