import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import crc32_bitwise, des_cbc_reference
from stegkit import des
from stegkit.errors import FormatError, IntegrityError, UsageError
from stegkit.payload import (BitStream, crc32, frame_payload, from_bits, parse_frame,
                             read_frame, to_bits)


@pytest.mark.parametrize("data", [b"", b"123456789", b"The quick brown fox jumps over the lazy dog",
                                  bytes(range(256))])
def test_crc_matches_bitwise_oracle(data):
    assert crc32(data) == crc32_bitwise(data)


def test_crc_published_check_value():
    assert crc32(b"123456789") == 0xCBF43926


def test_empty_frame_golden_bytes():
    assert crc32_bitwise(b"") == 0
    frame = frame_payload(b"", "")
    assert frame == b"STEG\x01\x00\x00\x00" + b"\x00" * 4 + b"\x00" * 4
    assert len(frame) == 16


def test_named_frame_layout():
    frame = frame_payload(b"secret", "s.txt")
    assert len(frame) == 12 + 5 + 6 + 4
    expected = (b"STEG" + bytes([1, 0]) + struct.pack("<H", 5) + b"s.txt"
                + struct.pack("<I", 6) + b"secret" + struct.pack("<I", crc32_bitwise(b"secret")))
    assert frame == expected


def test_encrypted_frame():
    frame = frame_payload(b"secret", "", "k")
    assert frame[5] == 0x01
    (body_len,) = struct.unpack_from("<I", frame, 8)
    assert body_len == 8
    key, iv = des.derive_key_iv("k")
    assert des_cbc_reference(key, iv, frame[12:20], decrypt=True) == b"secret\x02\x02"
    assert struct.unpack_from("<I", frame, 20)[0] == crc32(b"secret")
    assert parse_frame(frame, "k") == (b"secret", "")


def test_parse_errors():
    frame = frame_payload(b"hello", "n", "pw")
    with pytest.raises(FormatError, match="no hidden data"):
        parse_frame(b"X" + frame[1:], "pw")
    with pytest.raises(IntegrityError, match="passphrase required"):
        parse_frame(frame)
    with pytest.raises(IntegrityError, match="wrong passphrase"):
        parse_frame(frame, "other")
    with pytest.raises(FormatError):
        parse_frame(frame[:10])
    with pytest.raises(UsageError):
        frame_payload(b"x", "", "")


@settings(max_examples=60, deadline=None)
@given(body=st.binary(max_size=300), name=st.text(max_size=20),
       passphrase=st.one_of(st.none(), st.text(min_size=1, max_size=12)))
def test_frame_round_trip(body, name, passphrase):
    frame = frame_payload(body, name, passphrase)
    assert parse_frame(frame, passphrase) == (body, name)
    pos = 0

    def read(n):
        nonlocal pos
        pos += n
        return frame[pos - n:pos]

    assert read_frame(read) == frame


@settings(max_examples=60, deadline=None)
@given(body=st.binary(min_size=1, max_size=64), data=st.data())
def test_single_bit_flip_in_body_detected(body, data):
    frame = bytearray(frame_payload(body))
    bit = data.draw(st.integers(0, 8 * len(body) - 1))
    frame[12 + bit // 8] ^= 0x80 >> (bit % 8)
    with pytest.raises(IntegrityError):
        parse_frame(bytes(frame))


@settings(max_examples=40, deadline=None)
@given(pw=st.text(min_size=1, max_size=10), other=st.text(min_size=1, max_size=10))
def test_wrong_passphrase_rejected(pw, other):
    if pw == other:
        return
    frame = frame_payload(b"attack at dawn", "", pw)
    with pytest.raises(IntegrityError):
        parse_frame(frame, other)


def test_bits_examples():
    assert to_bits(b"A").tolist() == [0, 1, 0, 0, 0, 0, 0, 1]
    assert to_bits(b"\x00").tolist() == [0] * 8
    with pytest.raises(UsageError):
        from_bits([1, 0, 1])


@given(st.binary(max_size=100))
def test_bits_round_trip(data):
    assert from_bits(to_bits(data)) == data


def test_bitstream_pads_with_zeros():
    bs = BitStream(b"\xff")
    assert bs.read(6) == [1] * 6
    assert bs.read(4) == [1, 1, 0, 0]
    assert bs.exhausted and bs.cursor == 8


# -- DES -----------------------------------------------------------------------

# (key, plaintext, ciphertext), single-block DES known answers
KAT = [
    ("133457799BBCDFF1", "0123456789ABCDEF", "85E813540F0AB405"),
    ("0123456789ABCDEF", "4E6F772069732074", "3FA40E8A984D4815"),
    ("0101010101010101", "95F8A5E5DD31D900", "8000000000000000"),
]


@pytest.mark.parametrize("key,plain,cipher", KAT)
def test_des_known_answer(key, plain, cipher):
    d = des.DES(bytes.fromhex(key))
    assert d.encrypt_block(bytes.fromhex(plain)).hex().upper() == cipher
    assert d.decrypt_block(bytes.fromhex(cipher)).hex().upper() == plain


def test_des_matches_openssl_on_random_keys(rng):
    for _ in range(20):
        key, iv = rng.bytes(8), rng.bytes(8)
        plain = rng.bytes(int(rng.integers(0, 40)))
        ours = des.cbc_encrypt(key, iv, plain)
        assert ours == des_cbc_reference(key, iv, des.pkcs7_pad(plain))
        assert des.cbc_decrypt(key, iv, ours) == plain


def test_cbc_chaining():
    key, iv = b"8bytekey", b"initvect"
    a = des.cbc_encrypt(key, iv, b"AAAAAAAA" + b"BBBBBBBB")
    b = des.cbc_encrypt(key, iv, b"AAAAAAAB" + b"BBBBBBBB")
    assert a[8:16] != b[8:16]


@pytest.mark.parametrize("n", [0, 1, 7, 8, 9, 16, 23])
def test_ciphertext_length(n):
    assert len(des.des_encrypt(b"x" * n, "p")) == 8 * ((n + 1 + 7) // 8)


def test_key_derivation():
    import hashlib
    key, iv = des.derive_key_iv("k")
    assert key == hashlib.sha256(b"k").digest()[:8]
    assert iv == hashlib.sha256(b"kiv").digest()[:8]


def test_bad_padding_is_integrity_error():
    key, iv = des.derive_key_iv("p")
    junk = des_cbc_reference(key, iv, b"12345678\x00\x00\x00\x00\x00\x00\x00\x00")
    with pytest.raises(IntegrityError):
        des.des_decrypt(junk, "p")
    with pytest.raises(IntegrityError):
        des.des_decrypt(b"1234567", "p")


@settings(max_examples=30, deadline=None)
@given(st.binary(max_size=100), st.text(min_size=1, max_size=8))
def test_des_round_trip(data, pw):
    assert des.des_decrypt(des.des_encrypt(data, pw), pw) == data


def test_bits_are_msb_first_numpy():
    assert np.array_equal(to_bits(b"\x80\x01"), [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1])
