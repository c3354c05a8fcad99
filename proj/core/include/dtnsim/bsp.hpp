#pragma once

// Bundle Security Protocol blocks: payload confidentiality (PCB), end-to-end
// payload integrity (PIB) and hop-by-hop authentication (BAB).
//
// PCB: AES-256-CBC with PKCS7 padding, ciphertext carried as base64 text and
// the IV in its own field. PIB: HMAC-SHA256 over the SHA-256 hex digest of
// the base64 ciphertext. BAB: HMAC-SHA256 over
//   bundle_id|source|destination|payload_hash|from|to
// regenerated on every hop. All nodes share one secret; the AES/HMAC key is
// PBKDF2-HMAC-SHA256(secret, salt, iterations) and is derived once per
// configuration.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtnsim {

using Bytes = std::vector<std::uint8_t>;
using SymmetricKey = std::array<std::uint8_t, 32>;

struct KeyConfig {
  std::string shared_secret;
  std::string salt;
  int kdf_iterations = 100000;
};

// Full confidentiality envelope as produced by pcb_encrypt.
struct PCB {
  std::string iv;          // base64 of 16 bytes
  std::string ciphertext;  // base64 of the padded AES output

  bool operator==(const PCB&) const = default;
};

struct PIB {
  std::string signature;  // 64 lowercase hex chars

  bool operator==(const PIB&) const = default;
};

struct BAB {
  std::string security_source;
  std::string security_dest;
  std::string signature;

  bool operator==(const BAB&) const = default;
};

// Blocks as attached to a bundle. The ciphertext itself travels in the
// bundle's encrypted_payload, so the bundle-side PCB keeps only the IV.
struct SecurityBlocks {
  std::string pcb_iv;
  PIB pib;
  std::optional<BAB> bab;

  bool operator==(const SecurityBlocks&) const = default;
};

// Fields of a bundle that a BAB signature covers, besides the hop pair.
struct BabSubject {
  std::string_view bundle_id;
  std::string_view source;
  std::string_view destination;
  std::string_view payload_hash;
};

inline constexpr std::size_t kAesBlockSize = 16;
inline constexpr std::size_t kIvSize = 16;

// ---- primitives --------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string hmac_sha256_hex(const SymmetricKey& key, std::string_view message);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);  // throws ParseError

Bytes random_bytes(std::size_t n);

// Comparison whose running time does not depend on where the inputs differ.
bool constant_time_equal(std::string_view a, std::string_view b);

Bytes pbkdf2_hmac_sha256(std::string_view password, std::string_view salt, int iterations,
                         std::size_t length);

// ---- blocks --------------------------------------------------------------

// PBKDF2 result for cfg; derived on first use and served from a process-wide
// cache afterwards.
SymmetricKey derive_key(const KeyConfig& cfg);

// Length of the base64 ciphertext for a plaintext of plaintext_len bytes:
// PKCS7 always adds 1..16 bytes, then base64 expands 3 -> 4. The IV is not
// included.
std::size_t encrypted_size(std::size_t plaintext_len);

PCB pcb_encrypt(std::span<const std::uint8_t> plaintext, const SymmetricKey& key);
PCB pcb_encrypt(std::string_view plaintext, const SymmetricKey& key);
// Throws IntegrityError on bad padding, CryptoError on malformed input.
Bytes pcb_decrypt(const PCB& pcb, const SymmetricKey& key);

PIB pib_create(std::string_view encrypted_payload_hash, const SymmetricKey& key);
bool pib_verify(const PIB& pib, std::string_view encrypted_payload_hash,
                const SymmetricKey& key) noexcept;

std::string bab_signing_string(const BabSubject& subject, std::string_view from,
                               std::string_view to);
// Throws DomainError when from == to.
BAB bab_create(const BabSubject& subject, std::string_view from, std::string_view to,
               const SymmetricKey& key);
bool bab_verify(const BabSubject& subject, const BAB& bab, const SymmetricKey& key) noexcept;
// Also requires the block to name exactly this hop, so a BAB captured on
// another hop does not authenticate here.
bool bab_verify(const BabSubject& subject, const BAB& bab, std::string_view expected_from,
                std::string_view expected_to, const SymmetricKey& key) noexcept;

}  // namespace dtnsim
