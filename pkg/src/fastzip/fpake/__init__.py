"""Fuzzy PAKE: per-bit PAKE, Reed-Solomon commitment, key confirmation."""

from .field import P130, ReedSolomon, ecc_decode, ecc_encode
from .pake import BitPake, derive_keys
from .session import Outcome, Phase, ProtocolConfig, Role, Session, run_session
