#include "qbin/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "qbin/error.hpp"

namespace qbin {

namespace {

constexpr std::size_t kNonceLen = 12;
constexpr std::size_t kTagLen = 16;

struct CtxFree {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxFree>;

std::string to_hex(std::span<const std::uint8_t> data) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

}  // namespace

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    fail(ErrorKind::Crypto, "RAND_bytes failed");
  }
  return out;
}

OwnerKey OwnerKey::generate() {
  OwnerKey key;
  Bytes material = random_bytes(64);
  std::memcpy(key.enc_key.data(), material.data(), 32);
  std::memcpy(key.mac_key.data(), material.data() + 32, 32);
  return key;
}

OwnerKey OwnerKey::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Crypto, "cannot open key file '" + path + "'");
  Bytes material((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (material.size() != 64) {
    fail(ErrorKind::Crypto, "key file '" + path + "' is not 64 bytes");
  }
  OwnerKey key;
  std::memcpy(key.enc_key.data(), material.data(), 32);
  std::memcpy(key.mac_key.data(), material.data() + 32, 32);
  return key;
}

void OwnerKey::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Crypto, "cannot write key file '" + path + "'");
  out.write(reinterpret_cast<const char*>(enc_key.data()), enc_key.size());
  out.write(reinterpret_cast<const char*>(mac_key.data()), mac_key.size());
}

std::string OwnerKey::fingerprint() const {
  Bytes material(enc_key.begin(), enc_key.end());
  material.insert(material.end(), mac_key.begin(), mac_key.end());
  auto digest = sha256(material);
  return to_hex(std::span(digest).subspan(0, 8));
}

Bytes aead_encrypt(const OwnerKey& key, std::span<const std::uint8_t> plaintext,
                   std::span<const std::uint8_t> aad) {
  Bytes nonce = random_bytes(kNonceLen);
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail(ErrorKind::Crypto, "EVP_CIPHER_CTX_new failed");

  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.enc_key.data(),
                         nonce.data()) != 1) {
    fail(ErrorKind::Crypto, "encrypt init failed");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    fail(ErrorKind::Crypto, "aad update failed");
  }
  Bytes out(kNonceLen + plaintext.size() + kTagLen);
  std::memcpy(out.data(), nonce.data(), kNonceLen);
  if (!plaintext.empty() &&
      EVP_EncryptUpdate(ctx.get(), out.data() + kNonceLen, &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    fail(ErrorKind::Crypto, "encrypt update failed");
  }
  int fin = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + kNonceLen + plaintext.size(), &fin) != 1) {
    fail(ErrorKind::Crypto, "encrypt final failed");
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagLen,
                          out.data() + kNonceLen + plaintext.size()) != 1) {
    fail(ErrorKind::Crypto, "tag extraction failed");
  }
  return out;
}

std::optional<Bytes> aead_decrypt(const OwnerKey& key,
                                  std::span<const std::uint8_t> record,
                                  std::span<const std::uint8_t> aad) {
  if (record.size() < kNonceLen + kTagLen) return std::nullopt;
  const std::uint8_t* nonce = record.data();
  const std::uint8_t* body = record.data() + kNonceLen;
  const std::size_t body_len = record.size() - kNonceLen - kTagLen;
  const std::uint8_t* tag = record.data() + kNonceLen + body_len;

  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail(ErrorKind::Crypto, "EVP_CIPHER_CTX_new failed");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.enc_key.data(),
                         nonce) != 1) {
    fail(ErrorKind::Crypto, "decrypt init failed");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                        static_cast<int>(aad.size())) != 1) {
    return std::nullopt;
  }
  Bytes out(body_len);
  if (body_len > 0 &&
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, body, static_cast<int>(body_len)) != 1) {
    return std::nullopt;
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagLen,
                          const_cast<std::uint8_t*>(tag)) != 1) {
    return std::nullopt;
  }
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + body_len, &fin) != 1) {
    return std::nullopt;  // authentication failed
  }
  return out;
}

Token occurrence_token(const OwnerKey& key, std::string_view attribute,
                       std::string_view value, std::uint64_t occurrence) {
  // Length-prefixed fields; a plain concatenation would let distinct
  // (attribute, value) pairs collide.
  Bytes message;
  auto put = [&message](std::string_view s) {
    std::uint64_t n = s.size();
    for (int i = 0; i < 8; ++i) message.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    message.insert(message.end(), s.begin(), s.end());
  };
  put(attribute);
  put(value);
  for (int i = 0; i < 8; ++i) {
    message.push_back(static_cast<std::uint8_t>(occurrence >> (8 * i)));
  }

  Token token{};
  unsigned int out_len = 0;
  if (!HMAC(EVP_sha256(), key.mac_key.data(), static_cast<int>(key.mac_key.size()),
            message.data(), message.size(), token.data(), &out_len) ||
      out_len != token.size()) {
    fail(ErrorKind::Crypto, "HMAC failed");
  }
  return token;
}

std::string token_hex(const Token& token) {
  return to_hex(std::span(token.data(), token.size()));
}

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> digest{};
  SHA256(data.data(), data.size(), digest.data());
  return digest;
}

std::string sha256_hex(std::string_view data) {
  auto digest = sha256(std::span(reinterpret_cast<const std::uint8_t*>(data.data()),
                                 data.size()));
  return to_hex(digest);
}

}  // namespace qbin
