#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qbin {

using Bytes = std::vector<std::uint8_t>;

/// Owner master key: one half for AEAD, one half for search-token PRFs.
/// Lives in a key file referenced by path; never embedded in metadata.
struct OwnerKey {
  std::array<std::uint8_t, 32> enc_key{};
  std::array<std::uint8_t, 32> mac_key{};

  static OwnerKey generate();
  static OwnerKey load(const std::string& path);
  void save(const std::string& path) const;

  /// Stable fingerprint for manifests (not secret material).
  std::string fingerprint() const;
};

/// AES-256-GCM with a fresh random nonce per call; output is
/// nonce || ciphertext || tag. Two encryptions of the same plaintext differ.
Bytes aead_encrypt(const OwnerKey& key, std::span<const std::uint8_t> plaintext,
                   std::span<const std::uint8_t> aad = {});

/// Returns nullopt on any authentication failure (tampered record).
std::optional<Bytes> aead_decrypt(const OwnerKey& key,
                                  std::span<const std::uint8_t> record,
                                  std::span<const std::uint8_t> aad = {});

using Token = std::array<std::uint8_t, 32>;

/// Keyed deterministic token for the i-th occurrence of a value: distinct
/// occurrences of the same value yield unrelated tokens, which is what lets
/// the cloud index ciphertexts without deterministic encryption.
Token occurrence_token(const OwnerKey& key, std::string_view attribute,
                       std::string_view value, std::uint64_t occurrence);

std::string token_hex(const Token& token);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

Bytes random_bytes(std::size_t n);

}  // namespace qbin
