"""Cryptographic building blocks for the timed-execution protocol.

Everything here is a pure function of its inputs. Randomness is always
drawn from an explicitly passed ``random.Random`` so that simulations are
reproducible from a seed.

Protocol constants (frozen, changing them breaks stored test vectors):

* hashing: keccak-256 over a tight fixed-width byte concatenation
* signatures: recoverable ECDSA on secp256k1 (RFC 6979 nonces), ``v = 27 + recid``
* asymmetric layer: ECIES on secp256k1. ECDH secret (SHA-256 of the
  compressed shared point) -> SHA-512(secret || ``ASYM_INFO``), first 32
  bytes AES key, next 12 bytes nonce -> AES-256-GCM. Wire format is
  ``ephemeral_pubkey(65) || ciphertext || tag(16)``
* symmetric layer: AES-256-GCM keyed directly by the 256-bit secret key,
  all-zero 96-bit nonce, associated data ``SYM_AAD``. Each key encrypts
  exactly one payload, so the fixed nonce is never reused under a key.
* secret sharing: Shamir over GF(2^8) (reduction polynomial 0x11b), bytewise
"""

from __future__ import annotations

import functools
import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import coincurve
from Crypto.Hash import keccak
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

__all__ = [
    "Address",
    "SecretKey256",
    "Digest",
    "KeyPair",
    "Signature",
    "Share",
    "Onion",
    "Ciphertext",
    "CryptoError",
    "EncodingError",
    "InvalidKeyError",
    "RecoveryError",
    "ThresholdError",
    "DecryptionError",
    "OnionLayerError",
    "hash256",
    "encode_packed",
    "commit",
    "random_secret",
    "keypair_generate",
    "derive_pubkey",
    "pubkey_to_address",
    "sign",
    "recover",
    "split_key",
    "combine_shares",
    "split_secret",
    "combine_secret",
    "asym_encrypt",
    "asym_decrypt",
    "wrap_onion",
    "unwrap_onion",
    "sym_encrypt",
    "sym_decrypt",
    "ASYM_OVERHEAD",
]

SECP256K1_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

ASYM_INFO = b"timedexec/ecies/v1"
SYM_AAD = b"timedexec/sym/v1"
SYM_NONCE = bytes(12)
# 65-byte ephemeral public key + 16-byte GCM tag, added once per onion layer.
ASYM_OVERHEAD = 81


class CryptoError(Exception):
    """Base class for every failure raised by this module."""


class EncodingError(CryptoError, TypeError):
    pass


class InvalidKeyError(CryptoError, ValueError):
    pass


class RecoveryError(CryptoError, ValueError):
    pass


class ThresholdError(CryptoError, ValueError):
    pass


class DecryptionError(CryptoError, ValueError):
    pass


class OnionLayerError(DecryptionError):
    """An onion layer failed authentication.

    ``layer`` counts unwrap steps, 0 being the outermost layer.
    """

    def __init__(self, layer: int, message: str = "") -> None:
        self.layer = layer
        super().__init__(message or f"onion layer {layer} failed authentication")


class _FixedBytes(bytes):
    size = 0

    def __new__(cls, value: bytes = b""):
        value = bytes(value)
        if len(value) != cls.size:
            raise ValueError(f"{cls.__name__} needs {cls.size} bytes, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(0x{self.hex()})"

    def __str__(self) -> str:
        return "0x" + self.hex()

    @classmethod
    def from_hex(cls, text: str):
        return cls(bytes.fromhex(text.removeprefix("0x")))


class Address(_FixedBytes):
    size = 20


class SecretKey256(_FixedBytes):
    size = 32


class Digest(_FixedBytes):
    size = 32


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes
    address: Address


@dataclass(frozen=True)
class Signature:
    v: int
    r: bytes
    s: bytes

    def to_bytes(self) -> bytes:
        return self.r + self.s + bytes([self.v])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        if len(data) != 65:
            raise RecoveryError("signature must be 65 bytes")
        return cls(v=data[64], r=bytes(data[:32]), s=bytes(data[32:64]))


@dataclass(frozen=True)
class Share:
    index: int
    payload: bytes

    def encode(self) -> bytes:
        return bytes([self.index]) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> "Share":
        if len(data) < 2 or data[0] == 0:
            raise DecryptionError("malformed share encoding")
        return cls(index=data[0], payload=bytes(data[1:]))


@dataclass(frozen=True)
class Onion:
    share_index: int
    layers: int
    ciphertext: bytes


@dataclass(frozen=True)
class Ciphertext:
    scheme: str  # "symmetric" | "asymmetric"
    data: bytes


# -- hashing ---------------------------------------------------------------


def hash256(data: bytes) -> Digest:
    return Digest(keccak.new(digest_bits=256, data=bytes(data)).digest())


def _encode_item(item) -> bytes:
    if isinstance(item, bool):
        raise EncodingError("booleans have no canonical encoding")
    if isinstance(item, int):
        if not 0 <= item < 1 << 256:
            raise EncodingError(f"integer {item} does not fit in uint256")
        return item.to_bytes(32, "big")
    if isinstance(item, (bytes, bytearray, memoryview)):
        return bytes(item)
    raise EncodingError(f"cannot encode {type(item).__name__}")


def encode_packed(items: Iterable) -> bytes:
    """Tight concatenation: addresses 20 bytes, ints 32 bytes BE, bytes verbatim."""
    return b"".join(_encode_item(item) for item in items)


def commit(items: Sequence) -> Digest:
    if not items:
        raise EncodingError("commit needs at least one item")
    return hash256(encode_packed(items))


# -- keys and signatures ---------------------------------------------------


def random_secret(rng: random.Random) -> SecretKey256:
    return SecretKey256(rng.randbytes(32))


def _check_scalar(private_key: bytes) -> int:
    if len(private_key) != 32:
        raise InvalidKeyError("private key must be 32 bytes")
    k = int.from_bytes(private_key, "big")
    if not 0 < k < SECP256K1_N:
        raise InvalidKeyError("private key out of range")
    return k


def pubkey_to_address(public_key: bytes) -> Address:
    return Address(hash256(public_key)[-20:])


@functools.lru_cache(maxsize=4096)
def _signing_key(private_key: bytes) -> coincurve.PrivateKey:
    _check_scalar(private_key)
    return coincurve.PrivateKey(private_key)


def derive_pubkey(private_key: bytes) -> bytes:
    """64-byte uncompressed public key (x || y, no 0x04 prefix)."""
    return _signing_key(bytes(private_key)).public_key.format(compressed=False)[1:]


def _random_scalar(rng: random.Random) -> bytes:
    while True:
        candidate = rng.randbytes(32)
        if 0 < int.from_bytes(candidate, "big") < SECP256K1_N:
            return candidate


def keypair_generate(rng: random.Random) -> KeyPair:
    private_key = _random_scalar(rng)
    public_key = derive_pubkey(private_key)
    return KeyPair(private_key, public_key, pubkey_to_address(public_key))


def sign(message: bytes, private_key: bytes) -> Signature:
    raw = _signing_key(bytes(private_key)).sign_recoverable(hash256(message), hasher=None)
    return Signature(v=27 + raw[64], r=raw[:32], s=raw[32:64])


def recover(message: bytes, sig: Signature) -> Address:
    if sig.v not in (27, 28) or len(sig.r) != 32 or len(sig.s) != 32:
        raise RecoveryError("malformed signature")
    r = int.from_bytes(sig.r, "big")
    s = int.from_bytes(sig.s, "big")
    if not (0 < r < SECP256K1_N and 0 < s < SECP256K1_N):
        raise RecoveryError("signature scalar out of range")
    try:
        pub = coincurve.PublicKey.from_signature_and_message(
            sig.r + sig.s + bytes([sig.v - 27]), hash256(message), hasher=None
        )
    except Exception as exc:  # libsecp256k1 raises plain Exception
        raise RecoveryError(str(exc)) from exc
    return pubkey_to_address(pub.format(compressed=False)[1:])


# -- Shamir secret sharing over GF(256) ------------------------------------

_EXP = [0] * 512
_LOG = [0] * 256


def _build_tables() -> None:
    x = 1
    for i in range(255):
        _EXP[i] = x
        _LOG[x] = i
        # multiply by the generator 0x03 modulo x^8 + x^4 + x^3 + x + 1
        x ^= (x << 1) ^ (0x11B if x & 0x80 else 0)
    for i in range(255, 512):
        _EXP[i] = _EXP[i - 255]


_build_tables()


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def _gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _EXP[_LOG[a] + 255 - _LOG[b]]


def split_secret(secret: bytes, m: int, n: int, rng: random.Random) -> list[Share]:
    """Split an arbitrary byte string; any ``m`` of the ``n`` shares recover it."""
    if not 1 <= m <= n <= 255:
        raise ValueError(f"need 1 <= m <= n <= 255, got m={m}, n={n}")
    payloads = [bytearray(len(secret)) for _ in range(n)]
    for pos, byte in enumerate(secret):
        coeffs = [byte] + list(rng.randbytes(m - 1))
        for x in range(1, n + 1):
            y = 0
            for c in reversed(coeffs):
                y = _gf_mul(y, x) ^ c
            payloads[x - 1][pos] = y
    return [Share(i + 1, bytes(p)) for i, p in enumerate(payloads)]


def combine_secret(shares: Sequence[Share], m: int) -> bytes:
    """Lagrange interpolation at zero over the first ``m`` shares."""
    if m < 1:
        raise ValueError("threshold must be positive")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate share indices")
    if len(shares) < m:
        raise ThresholdError(f"{len(shares)} shares given, {m} required")
    chosen = list(shares[:m])
    lengths = {len(s.payload) for s in chosen}
    if len(lengths) != 1:
        raise ValueError("share payloads differ in length")
    xs = [s.index for s in chosen]
    basis = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = _gf_mul(num, xj)
                den = _gf_mul(den, xi ^ xj)
        basis.append(_gf_div(num, den))
    size = lengths.pop()
    out = bytearray(size)
    for coef, share in zip(basis, chosen):
        if coef == 0:
            continue
        log_c = _LOG[coef]
        payload = share.payload
        for pos in range(size):
            y = payload[pos]
            if y:
                out[pos] ^= _EXP[log_c + _LOG[y]]
    return bytes(out)


def split_key(key: bytes, m: int, n: int, rng: random.Random) -> list[Share]:
    return split_secret(SecretKey256(key), m, n, rng)


def combine_shares(shares: Sequence[Share], m: int) -> SecretKey256:
    return SecretKey256(combine_secret(shares, m))


# -- encryption --------------------------------------------------------------


def _ecies_material(shared: bytes) -> tuple[bytes, bytes]:
    okm = hashlib.sha512(shared + ASYM_INFO).digest()
    return okm[:32], okm[32:44]


def asym_encrypt(public_key: bytes, plaintext: bytes, rng: random.Random) -> Ciphertext:
    if len(public_key) != 64:
        raise InvalidKeyError("public key must be 64 bytes")
    try:
        recipient = coincurve.PublicKey(b"\x04" + bytes(public_key))
    except Exception as exc:
        raise InvalidKeyError("public key is not on the curve") from exc
    ephemeral = coincurve.PrivateKey(_random_scalar(rng))
    key, nonce = _ecies_material(ephemeral.ecdh(recipient.format()))
    body = AESGCM(key).encrypt(nonce, bytes(plaintext), None)
    return Ciphertext("asymmetric", ephemeral.public_key.format(compressed=False) + body)


def asym_decrypt(private_key: bytes, ct: Ciphertext | bytes) -> bytes:
    data = ct.data if isinstance(ct, Ciphertext) else bytes(ct)
    secret = _signing_key(bytes(private_key))
    if len(data) < ASYM_OVERHEAD:
        raise DecryptionError("ciphertext too short")
    try:
        ephemeral = coincurve.PublicKey(data[:65])
    except Exception as exc:
        raise DecryptionError("bad ephemeral key") from exc
    key, nonce = _ecies_material(secret.ecdh(ephemeral.format()))
    try:
        return AESGCM(key).decrypt(nonce, data[65:], None)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc


def wrap_onion(share: Share, pubkeys: Sequence[bytes], rng: random.Random) -> Onion:
    """Encrypt ``share`` once per key, innermost (first key) to outermost."""
    if not pubkeys:
        raise ValueError("an onion needs at least one layer")
    data = share.encode()
    for pk in pubkeys:
        data = asym_encrypt(pk, data, rng).data
    return Onion(share.index, len(pubkeys), data)


def unwrap_onion(onion: Onion, privkeys: Sequence[bytes]) -> Share:
    """Peel an onion with keys ordered outermost first (reverse of wrap order)."""
    if len(privkeys) != onion.layers:
        raise ValueError(f"onion has {onion.layers} layers, got {len(privkeys)} keys")
    data = onion.ciphertext
    for layer, sk in enumerate(privkeys):
        try:
            data = asym_decrypt(sk, data)
        except (DecryptionError, InvalidKeyError) as exc:
            raise OnionLayerError(layer) from exc
    share = Share.decode(data)
    if share.index != onion.share_index:
        raise DecryptionError("onion share index mismatch")
    return share


def sym_encrypt(key: bytes, payload: bytes) -> Ciphertext:
    return Ciphertext("symmetric", AESGCM(bytes(SecretKey256(key))).encrypt(SYM_NONCE, bytes(payload), SYM_AAD))


def sym_decrypt(key: bytes, ct: Ciphertext | bytes) -> bytes:
    data = ct.data if isinstance(ct, Ciphertext) else bytes(ct)
    try:
        return AESGCM(bytes(SecretKey256(key))).decrypt(SYM_NONCE, data, SYM_AAD)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc
