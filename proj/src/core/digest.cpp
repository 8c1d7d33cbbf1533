#include "teachloop/core/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "teachloop/core/error.hpp"

namespace teachloop {
namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view bytes) {
  std::array<unsigned char, 32> out{};
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
    throw Error(ErrorCode::kIo, "sha256 computation failed");
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto raw = sha256_raw(bytes);
  std::string hex;
  hex.reserve(64);
  for (unsigned char b : raw) {
    hex.push_back(kHex[b >> 4]);
    hex.push_back(kHex[b & 0xf]);
  }
  return hex;
}

std::string json_digest(const nlohmann::json& value) { return sha256_hex(value.dump()); }

std::string content_handle(std::string_view bytes) { return "sha256:" + sha256_hex(bytes); }

std::uint64_t seed_from(std::string_view text) {
  const auto raw = sha256_raw(text);
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | raw[i];
  return seed;
}

double unit_from(std::string_view text) {
  return static_cast<double>(seed_from(text) >> 11) * 0x1.0p-53;
}

}  // namespace teachloop
