#include "dtnsim/bsp.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "dtnsim/error.hpp"

namespace dtnsim {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0x0f];
  }
  return out;
}

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
  return ctx;
}

bool is_base64_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' ||
         c == '/';
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return to_hex(digest, sizeof digest);
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::string hmac_sha256_hex(const SymmetricKey& key, std::string_view message) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int mac_len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
           reinterpret_cast<const unsigned char*>(message.data()), message.size(), mac,
           &mac_len) == nullptr) {
    throw CryptoError("HMAC-SHA256 failed");
  }
  return to_hex(mac, mac_len);
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64 length not a multiple of 4");
  std::size_t padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '=') {
      if (i + 2 < text.size()) throw ParseError("misplaced base64 padding");
      ++padding;
    } else if (padding > 0 || !is_base64_char(c)) {
      throw ParseError("invalid base64 character");
    }
  }
  Bytes out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("base64 decode failed");
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    throw CryptoError("RAND_bytes failed");
  }
  return out;
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

Bytes pbkdf2_hmac_sha256(std::string_view password, std::string_view salt, int iterations,
                         std::size_t length) {
  if (iterations < 1) throw DomainError("PBKDF2 iterations must be >= 1");
  Bytes out(length);
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                        reinterpret_cast<const unsigned char*>(salt.data()),
                        static_cast<int>(salt.size()), iterations, EVP_sha256(),
                        static_cast<int>(length), out.data()) != 1) {
    throw CryptoError("PBKDF2 failed");
  }
  return out;
}

SymmetricKey derive_key(const KeyConfig& cfg) {
  if (cfg.shared_secret.empty()) throw ConfigError("shared secret must not be empty");
  if (cfg.kdf_iterations < 1) throw ConfigError("kdf_iterations must be >= 1");

  using CacheKey = std::tuple<std::string, std::string, int>;
  static std::mutex mutex;
  static std::map<CacheKey, SymmetricKey> cache;

  CacheKey id{cfg.shared_secret, cfg.salt, cfg.kdf_iterations};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(id); it != cache.end()) return it->second;
  }
  const Bytes raw = pbkdf2_hmac_sha256(cfg.shared_secret, cfg.salt, cfg.kdf_iterations, 32);
  SymmetricKey key{};
  std::copy(raw.begin(), raw.end(), key.begin());
  std::lock_guard lock(mutex);
  return cache.emplace(std::move(id), key).first->second;
}

std::size_t encrypted_size(std::size_t plaintext_len) {
  const std::size_t padded = kAesBlockSize * (plaintext_len / kAesBlockSize + 1);
  return 4 * ((padded + 2) / 3);
}

PCB pcb_encrypt(std::span<const std::uint8_t> plaintext, const SymmetricKey& key) {
  if (plaintext.empty()) throw DomainError("cannot encrypt an empty payload");
  const Bytes iv = random_bytes(kIvSize);
  auto ctx = new_cipher_ctx();
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, key.data(), iv.data()) != 1) {
    throw CryptoError("AES-256-CBC init failed");
  }
  Bytes out(plaintext.size() + kAesBlockSize);
  int len1 = 0;
  int len2 = 0;
  if (EVP_EncryptUpdate(ctx.get(), out.data(), &len1, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1) {
    throw CryptoError("AES-256-CBC encryption failed");
  }
  out.resize(static_cast<std::size_t>(len1 + len2));
  return PCB{base64_encode(iv), base64_encode(out)};
}

PCB pcb_encrypt(std::string_view plaintext, const SymmetricKey& key) {
  return pcb_encrypt(
      std::span(reinterpret_cast<const std::uint8_t*>(plaintext.data()), plaintext.size()), key);
}

Bytes pcb_decrypt(const PCB& pcb, const SymmetricKey& key) {
  Bytes iv;
  Bytes ct;
  try {
    iv = base64_decode(pcb.iv);
    ct = base64_decode(pcb.ciphertext);
  } catch (const ParseError& e) {
    throw CryptoError(std::string("malformed PCB: ") + e.what());
  }
  if (iv.size() != kIvSize) throw CryptoError("PCB IV must be 16 bytes");
  if (ct.empty() || ct.size() % kAesBlockSize != 0) {
    throw CryptoError("PCB ciphertext length is not a positive multiple of 16");
  }
  auto ctx = new_cipher_ctx();
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, key.data(), iv.data()) != 1) {
    throw CryptoError("AES-256-CBC init failed");
  }
  Bytes out(ct.size() + kAesBlockSize);
  int len1 = 0;
  int len2 = 0;
  if (EVP_DecryptUpdate(ctx.get(), out.data(), &len1, ct.data(), static_cast<int>(ct.size())) !=
      1) {
    throw CryptoError("AES-256-CBC decryption failed");
  }
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1) {
    throw IntegrityError("PCB padding check failed (wrong key or corrupted ciphertext)");
  }
  out.resize(static_cast<std::size_t>(len1 + len2));
  return out;
}

PIB pib_create(std::string_view encrypted_payload_hash, const SymmetricKey& key) {
  return PIB{hmac_sha256_hex(key, encrypted_payload_hash)};
}

bool pib_verify(const PIB& pib, std::string_view encrypted_payload_hash,
                const SymmetricKey& key) noexcept {
  try {
    return constant_time_equal(hmac_sha256_hex(key, encrypted_payload_hash), pib.signature);
  } catch (...) {
    return false;
  }
}

std::string bab_signing_string(const BabSubject& subject, std::string_view from,
                               std::string_view to) {
  std::string s;
  s.reserve(subject.bundle_id.size() + subject.source.size() + subject.destination.size() +
            subject.payload_hash.size() + from.size() + to.size() + 5);
  s.append(subject.bundle_id).append("|");
  s.append(subject.source).append("|");
  s.append(subject.destination).append("|");
  s.append(subject.payload_hash).append("|");
  s.append(from).append("|");
  s.append(to);
  return s;
}

BAB bab_create(const BabSubject& subject, std::string_view from, std::string_view to,
               const SymmetricKey& key) {
  if (from == to) throw DomainError("BAB security source and destination must differ");
  return BAB{std::string(from), std::string(to),
             hmac_sha256_hex(key, bab_signing_string(subject, from, to))};
}

bool bab_verify(const BabSubject& subject, const BAB& bab, const SymmetricKey& key) noexcept {
  try {
    if (bab.security_source == bab.security_dest) return false;
    const auto expected =
        hmac_sha256_hex(key, bab_signing_string(subject, bab.security_source, bab.security_dest));
    return constant_time_equal(expected, bab.signature);
  } catch (...) {
    return false;
  }
}

bool bab_verify(const BabSubject& subject, const BAB& bab, std::string_view expected_from,
                std::string_view expected_to, const SymmetricKey& key) noexcept {
  if (bab.security_source != expected_from || bab.security_dest != expected_to) return false;
  return bab_verify(subject, bab, key);
}

}  // namespace dtnsim
