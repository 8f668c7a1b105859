"""DES block cipher (FIPS 46-3) with CBC mode and PKCS#7 padding.

Pure Python. The S-box and P permutation are folded into eight 64-entry
lookup tables at import time, which keeps a block at a few tens of
microseconds. DES is here because the tool hides an optionally
DES-encrypted payload; it is not a secure choice for anything else.
"""

from __future__ import annotations

import hashlib

from .errors import IntegrityError, UsageError

BLOCK_SIZE = 8

# Bit positions are 1-based from the most significant bit, as in the standard.
_IP = (
    58, 50, 42, 34, 26, 18, 10, 2, 60, 52, 44, 36, 28, 20, 12, 4,
    62, 54, 46, 38, 30, 22, 14, 6, 64, 56, 48, 40, 32, 24, 16, 8,
    57, 49, 41, 33, 25, 17, 9, 1, 59, 51, 43, 35, 27, 19, 11, 3,
    61, 53, 45, 37, 29, 21, 13, 5, 63, 55, 47, 39, 31, 23, 15, 7,
)
_FP = (
    40, 8, 48, 16, 56, 24, 64, 32, 39, 7, 47, 15, 55, 23, 63, 31,
    38, 6, 46, 14, 54, 22, 62, 30, 37, 5, 45, 13, 53, 21, 61, 29,
    36, 4, 44, 12, 52, 20, 60, 28, 35, 3, 43, 11, 51, 19, 59, 27,
    34, 2, 42, 10, 50, 18, 58, 26, 33, 1, 41, 9, 49, 17, 57, 25,
)
_E = (
    32, 1, 2, 3, 4, 5, 4, 5, 6, 7, 8, 9,
    8, 9, 10, 11, 12, 13, 12, 13, 14, 15, 16, 17,
    16, 17, 18, 19, 20, 21, 20, 21, 22, 23, 24, 25,
    24, 25, 26, 27, 28, 29, 28, 29, 30, 31, 32, 1,
)
_P = (
    16, 7, 20, 21, 29, 12, 28, 17, 1, 15, 23, 26, 5, 18, 31, 10,
    2, 8, 24, 14, 32, 27, 3, 9, 19, 13, 30, 6, 22, 11, 4, 25,
)
_PC1 = (
    57, 49, 41, 33, 25, 17, 9, 1, 58, 50, 42, 34, 26, 18,
    10, 2, 59, 51, 43, 35, 27, 19, 11, 3, 60, 52, 44, 36,
    63, 55, 47, 39, 31, 23, 15, 7, 62, 54, 46, 38, 30, 22,
    14, 6, 61, 53, 45, 37, 29, 21, 13, 5, 28, 20, 12, 4,
)
_PC2 = (
    14, 17, 11, 24, 1, 5, 3, 28, 15, 6, 21, 10,
    23, 19, 12, 4, 26, 8, 16, 7, 27, 20, 13, 2,
    41, 52, 31, 37, 47, 55, 30, 40, 51, 45, 33, 48,
    44, 49, 39, 56, 34, 53, 46, 42, 50, 36, 29, 32,
)
_SHIFTS = (1, 1, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 1)
_SBOX = (
    (14, 4, 13, 1, 2, 15, 11, 8, 3, 10, 6, 12, 5, 9, 0, 7,
     0, 15, 7, 4, 14, 2, 13, 1, 10, 6, 12, 11, 9, 5, 3, 8,
     4, 1, 14, 8, 13, 6, 2, 11, 15, 12, 9, 7, 3, 10, 5, 0,
     15, 12, 8, 2, 4, 9, 1, 7, 5, 11, 3, 14, 10, 0, 6, 13),
    (15, 1, 8, 14, 6, 11, 3, 4, 9, 7, 2, 13, 12, 0, 5, 10,
     3, 13, 4, 7, 15, 2, 8, 14, 12, 0, 1, 10, 6, 9, 11, 5,
     0, 14, 7, 11, 10, 4, 13, 1, 5, 8, 12, 6, 9, 3, 2, 15,
     13, 8, 10, 1, 3, 15, 4, 2, 11, 6, 7, 12, 0, 5, 14, 9),
    (10, 0, 9, 14, 6, 3, 15, 5, 1, 13, 12, 7, 11, 4, 2, 8,
     13, 7, 0, 9, 3, 4, 6, 10, 2, 8, 5, 14, 12, 11, 15, 1,
     13, 6, 4, 9, 8, 15, 3, 0, 11, 1, 2, 12, 5, 10, 14, 7,
     1, 10, 13, 0, 6, 9, 8, 7, 4, 15, 14, 3, 11, 5, 2, 12),
    (7, 13, 14, 3, 0, 6, 9, 10, 1, 2, 8, 5, 11, 12, 4, 15,
     13, 8, 11, 5, 6, 15, 0, 3, 4, 7, 2, 12, 1, 10, 14, 9,
     10, 6, 9, 0, 12, 11, 7, 13, 15, 1, 3, 14, 5, 2, 8, 4,
     3, 15, 0, 6, 10, 1, 13, 8, 9, 4, 5, 11, 12, 7, 2, 14),
    (2, 12, 4, 1, 7, 10, 11, 6, 8, 5, 3, 15, 13, 0, 14, 9,
     14, 11, 2, 12, 4, 7, 13, 1, 5, 0, 15, 10, 3, 9, 8, 6,
     4, 2, 1, 11, 10, 13, 7, 8, 15, 9, 12, 5, 6, 3, 0, 14,
     11, 8, 12, 7, 1, 14, 2, 13, 6, 15, 0, 9, 10, 4, 5, 3),
    (12, 1, 10, 15, 9, 2, 6, 8, 0, 13, 3, 4, 14, 7, 5, 11,
     10, 15, 4, 2, 7, 12, 9, 5, 6, 1, 13, 14, 0, 11, 3, 8,
     9, 14, 15, 5, 2, 8, 12, 3, 7, 0, 4, 10, 1, 13, 11, 6,
     4, 3, 2, 12, 9, 5, 15, 10, 11, 14, 1, 7, 6, 0, 8, 13),
    (4, 11, 2, 14, 15, 0, 8, 13, 3, 12, 9, 7, 5, 10, 6, 1,
     13, 0, 11, 7, 4, 9, 1, 10, 14, 3, 5, 12, 2, 15, 8, 6,
     1, 4, 11, 13, 12, 3, 7, 14, 10, 15, 6, 8, 0, 5, 9, 2,
     6, 11, 13, 8, 1, 4, 10, 7, 9, 5, 0, 15, 14, 2, 3, 12),
    (13, 2, 8, 4, 6, 15, 11, 1, 10, 9, 3, 14, 5, 0, 12, 7,
     1, 15, 13, 8, 10, 3, 7, 4, 12, 5, 6, 11, 0, 14, 9, 2,
     7, 11, 4, 1, 9, 12, 14, 2, 0, 6, 10, 13, 15, 3, 5, 8,
     2, 1, 14, 7, 4, 10, 8, 13, 15, 12, 9, 0, 3, 5, 6, 11),
)


def _permute(value: int, table, in_bits: int) -> int:
    out = 0
    for pos in table:
        out = (out << 1) | ((value >> (in_bits - pos)) & 1)
    return out


def _build_sp():
    tables = []
    for box in range(8):
        entries = []
        for six in range(64):
            row = ((six >> 4) & 2) | (six & 1)
            col = (six >> 1) & 0xF
            nibble = _SBOX[box][row * 16 + col]
            placed = nibble << (28 - 4 * box)
            entries.append(_permute(placed, _P, 32))
        tables.append(tuple(entries))
    return tuple(tables)


_SP = _build_sp()


def _subkeys(key: bytes) -> list[int]:
    k = _permute(int.from_bytes(key, "big"), _PC1, 64)
    c, d = k >> 28, k & 0x0FFFFFFF
    keys = []
    for s in _SHIFTS:
        c = ((c << s) | (c >> (28 - s))) & 0x0FFFFFFF
        d = ((d << s) | (d >> (28 - s))) & 0x0FFFFFFF
        keys.append(_permute((c << 28) | d, _PC2, 56))
    return keys


def _feistel(r: int, subkey: int) -> int:
    x = _permute(r, _E, 32) ^ subkey
    sp = _SP
    return (
        sp[0][(x >> 42) & 63] | sp[1][(x >> 36) & 63]
        | sp[2][(x >> 30) & 63] | sp[3][(x >> 24) & 63]
        | sp[4][(x >> 18) & 63] | sp[5][(x >> 12) & 63]
        | sp[6][(x >> 6) & 63] | sp[7][x & 63]
    )


def _crypt_block(block: int, subkeys) -> int:
    block = _permute(block, _IP, 64)
    left, right = block >> 32, block & 0xFFFFFFFF
    for sk in subkeys:
        left, right = right, left ^ _feistel(right, sk)
    return _permute((right << 32) | left, _FP, 64)


class DES:
    """Single-block DES keyed with an 8-byte key (parity bits ignored)."""

    def __init__(self, key: bytes):
        if len(key) != BLOCK_SIZE:
            raise UsageError(f"DES key must be 8 bytes, got {len(key)}")
        self._enc = _subkeys(key)
        self._dec = self._enc[::-1]

    def encrypt_block(self, block: bytes) -> bytes:
        return _crypt_block(int.from_bytes(block, "big"), self._enc).to_bytes(8, "big")

    def decrypt_block(self, block: bytes) -> bytes:
        return _crypt_block(int.from_bytes(block, "big"), self._dec).to_bytes(8, "big")


def pkcs7_pad(data: bytes) -> bytes:
    n = BLOCK_SIZE - len(data) % BLOCK_SIZE
    return data + bytes([n]) * n


def pkcs7_unpad(data: bytes) -> bytes:
    if not data or len(data) % BLOCK_SIZE:
        raise IntegrityError("invalid padding")
    n = data[-1]
    if not 1 <= n <= BLOCK_SIZE or data[-n:] != bytes([n]) * n:
        raise IntegrityError("invalid padding")
    return data[:-n]


def cbc_encrypt(key: bytes, iv: bytes, plain: bytes) -> bytes:
    """Pad with PKCS#7 and encrypt in CBC mode."""
    cipher = DES(key)
    prev = int.from_bytes(iv, "big")
    data = pkcs7_pad(plain)
    out = bytearray()
    for i in range(0, len(data), BLOCK_SIZE):
        blk = int.from_bytes(data[i:i + BLOCK_SIZE], "big") ^ prev
        prev = _crypt_block(blk, cipher._enc)
        out += prev.to_bytes(8, "big")
    return bytes(out)


def cbc_decrypt(key: bytes, iv: bytes, cipher_text: bytes) -> bytes:
    if len(cipher_text) % BLOCK_SIZE:
        raise IntegrityError(
            f"ciphertext length {len(cipher_text)} is not a multiple of {BLOCK_SIZE}")
    cipher = DES(key)
    prev = int.from_bytes(iv, "big")
    out = bytearray()
    for i in range(0, len(cipher_text), BLOCK_SIZE):
        blk = int.from_bytes(cipher_text[i:i + BLOCK_SIZE], "big")
        out += (_crypt_block(blk, cipher._dec) ^ prev).to_bytes(8, "big")
        prev = blk
    return pkcs7_unpad(bytes(out))


def derive_key_iv(passphrase: str) -> tuple[bytes, bytes]:
    """Key = SHA-256(pass)[:8], IV = SHA-256(pass + "iv")[:8]."""
    if not passphrase:
        raise UsageError("empty passphrase")
    raw = passphrase.encode("utf-8")
    return hashlib.sha256(raw).digest()[:8], hashlib.sha256(raw + b"iv").digest()[:8]


def des_encrypt(plain: bytes, passphrase: str) -> bytes:
    key, iv = derive_key_iv(passphrase)
    return cbc_encrypt(key, iv, plain)


def des_decrypt(cipher_text: bytes, passphrase: str) -> bytes:
    key, iv = derive_key_iv(passphrase)
    return cbc_decrypt(key, iv, cipher_text)
