#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dtnsim/bsp.hpp"
#include "dtnsim/error.hpp"
#include "test_support.hpp"

namespace dtnsim {
namespace {

using testing::random_payload;
using testing::test_key;

std::string hex(const Bytes& b) {
  static constexpr char d[] = "0123456789abcdef";
  std::string s;
  for (auto c : b) {
    s += d[c >> 4];
    s += d[c & 15];
  }
  return s;
}

TEST(Primitives, Sha256OfHelloMatchesPublishedDigest) {
  EXPECT_EQ(sha256_hex("hello"),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

// PBKDF2-HMAC-SHA256 vectors for P="password", S="salt", dkLen=32.
TEST(Primitives, Pbkdf2MatchesPublishedVectors) {
  EXPECT_EQ(hex(pbkdf2_hmac_sha256("password", "salt", 1, 32)),
            "120fb6cffcf8b32c43e7225256c4f837a86548c92ccc35480805987cb70be17b");
  EXPECT_EQ(hex(pbkdf2_hmac_sha256("password", "salt", 2, 32)),
            "ae4d0c95af6b46d32d0adff928f06dd02a303f8ef3c251dfd6e2d85a95474c43");
  EXPECT_EQ(hex(pbkdf2_hmac_sha256("password", "salt", 4096, 32)),
            "c5e478d59288c841aa530db6845c4c8d962893a001ce4e11a4963873aa98134a");
}

TEST(Primitives, Base64RoundTripAndValidation) {
  std::mt19937_64 rng(7);
  for (std::size_t n = 0; n < 40; ++n) {
    const Bytes data = random_payload(rng, n);
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
  EXPECT_EQ(base64_encode(Bytes{'h', 'i'}), "aGk=");
  EXPECT_THROW(base64_decode("abc"), ParseError);
  EXPECT_THROW(base64_decode("ab=c"), ParseError);
  EXPECT_THROW(base64_decode("a!bc"), ParseError);
}

TEST(Primitives, ConstantTimeEqual) {
  EXPECT_TRUE(constant_time_equal("abcd", "abcd"));
  EXPECT_FALSE(constant_time_equal("abcd", "abce"));
  EXPECT_FALSE(constant_time_equal("xbcd", "abcd"));
  EXPECT_FALSE(constant_time_equal("abc", "abcd"));
  EXPECT_TRUE(constant_time_equal("", ""));
}

TEST(DeriveKey, DeterministicAndSaltSensitive) {
  const KeyConfig a{"secret", "salt-a", 10};
  const KeyConfig b{"secret", "salt-b", 10};
  EXPECT_EQ(derive_key(a), derive_key(a));
  EXPECT_NE(derive_key(a), derive_key(b));
  const Bytes direct = pbkdf2_hmac_sha256("secret", "salt-a", 10, 32);
  const SymmetricKey k = derive_key(a);
  EXPECT_TRUE(std::equal(direct.begin(), direct.end(), k.begin()));
}

TEST(DeriveKey, RejectsBadConfig) {
  EXPECT_THROW(derive_key(KeyConfig{"", "s", 10}), ConfigError);
  EXPECT_THROW(derive_key(KeyConfig{"x", "s", 0}), ConfigError);
}

TEST(EncryptedSize, ReproducesSecurityOverheadTable) {
  const std::pair<std::size_t, std::size_t> rows[] = {
      {64, 108},    {128, 192},   {256, 364},    {512, 704},    {1024, 1388},
      {2048, 2752}, {4096, 5484}, {8192, 10944}, {16384, 21868}};
  for (auto [plain, enc] : rows) EXPECT_EQ(encrypted_size(plain), enc) << plain;
  EXPECT_EQ(encrypted_size(1), 24u);
  EXPECT_EQ(encrypted_size(15), 24u);
  EXPECT_EQ(encrypted_size(16), 44u);  // aligned input still gets a pad block
}

TEST(EncryptedSize, OverheadConvergesForLargePayloads) {
  for (std::size_t n = 1024; n <= 65536; n += 97) {
    const double overhead = (static_cast<double>(encrypted_size(n)) - n) / n;
    EXPECT_GE(overhead, 1.0 / 3.0) << n;
    EXPECT_LE(overhead, 0.36) << n;
  }
}

TEST(Pcb, RoundTripRandomPayloads) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 4096);
  for (int i = 0; i < 200; ++i) {
    const Bytes plain = random_payload(rng, len(rng));
    const PCB pcb = pcb_encrypt(plain, test_key());
    EXPECT_EQ(pcb.ciphertext.size(), encrypted_size(plain.size()));
    EXPECT_EQ(base64_decode(pcb.iv).size(), kIvSize);
    EXPECT_EQ(pcb_decrypt(pcb, test_key()), plain);
  }
}

TEST(Pcb, SizesMatchTableRows) {
  EXPECT_EQ(pcb_encrypt(std::string(1024, 'a'), test_key()).ciphertext.size(), 1388u);
  EXPECT_EQ(pcb_encrypt(std::string(64, 'a'), test_key()).ciphertext.size(), 108u);
}

TEST(Pcb, RejectsEmptyPlaintext) {
  EXPECT_THROW(pcb_encrypt(std::string_view{}, test_key()), DomainError);
}

TEST(Pcb, WrongKeyNeverYieldsThePlaintext) {
  const SymmetricKey other = derive_key(KeyConfig{"other", "salt", 10});
  for (int i = 0; i < 50; ++i) {
    const PCB pcb = pcb_encrypt("attack at dawn", test_key());
    try {
      EXPECT_NE(testing::as_string(pcb_decrypt(pcb, other)), "attack at dawn");
    } catch (const IntegrityError&) {
    }
  }
}

TEST(Pcb, MalformedEnvelopeIsACryptoError) {
  PCB pcb = pcb_encrypt("payload", test_key());
  PCB bad_iv = pcb;
  bad_iv.iv = base64_encode(Bytes(8, 1));
  EXPECT_THROW(pcb_decrypt(bad_iv, test_key()), CryptoError);
  PCB bad_len = pcb;
  bad_len.ciphertext = base64_encode(Bytes(20, 1));
  EXPECT_THROW(pcb_decrypt(bad_len, test_key()), CryptoError);
  PCB not_b64 = pcb;
  not_b64.ciphertext = "***";
  EXPECT_THROW(pcb_decrypt(not_b64, test_key()), CryptoError);
}

TEST(Pcb, IvsAreUniqueAcrossTenThousandEncryptions) {
  std::set<std::string> ivs;
  for (int i = 0; i < 10000; ++i) ivs.insert(pcb_encrypt("x", test_key()).iv);
  EXPECT_EQ(ivs.size(), 10000u);
}

TEST(Pcb, SingleBitFlipIsDetected) {
  std::mt19937_64 rng(5);
  const Bytes plain = random_payload(rng, 300);
  const std::string digest = sha256_hex(plain);
  const PCB pcb = pcb_encrypt(plain, test_key());
  const Bytes ct = base64_decode(pcb.ciphertext);
  for (std::size_t bit = 0; bit < ct.size() * 8; bit += 7) {
    Bytes flipped = ct;
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    PCB tampered{pcb.iv, base64_encode(flipped)};
    try {
      EXPECT_NE(sha256_hex(pcb_decrypt(tampered, test_key())), digest) << bit;
    } catch (const IntegrityError&) {
    }
  }
}

TEST(Pib, CreateVerifyAndTamper) {
  const std::string h = sha256_hex("ciphertext");
  const PIB pib = pib_create(h, test_key());
  EXPECT_EQ(pib.signature.size(), 64u);
  EXPECT_TRUE(pib_verify(pib, h, test_key()));
  std::string flipped = h;
  flipped[10] = flipped[10] == 'a' ? 'b' : 'a';
  EXPECT_FALSE(pib_verify(pib, flipped, test_key()));
  EXPECT_FALSE(pib_verify(pib, h, derive_key(KeyConfig{"other", "salt", 10})));
}

TEST(Bab, RoundTripAndHopBinding) {
  const std::string hash = sha256_hex("p");
  const BabSubject subject{"toronto-1-deadbeef", "toronto", "ISS", hash};
  const BAB ab = bab_create(subject, "toronto", "london", test_key());
  EXPECT_TRUE(bab_verify(subject, ab, test_key()));
  EXPECT_TRUE(bab_verify(subject, ab, "toronto", "london", test_key()));

  BAB swapped = ab;
  swapped.security_dest = "moscow";
  EXPECT_FALSE(bab_verify(subject, swapped, test_key()));

  // A block signed for A->B does not authenticate B->C.
  const BAB bc = bab_create(subject, "london", "ISS", test_key());
  EXPECT_NE(ab.signature, bc.signature);
  EXPECT_FALSE(bab_verify(subject, ab, "london", "ISS", test_key()));

  BabSubject mutated = subject;
  mutated.destination = "tokyo";
  EXPECT_FALSE(bab_verify(mutated, ab, test_key()));

  EXPECT_THROW(bab_create(subject, "toronto", "toronto", test_key()), DomainError);
}

}  // namespace
}  // namespace dtnsim
