#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace imobe::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
Digest hmac_sha256(std::string_view key, std::string_view data);

// PBKDF2-HMAC-SHA256, used for stored account secrets.
Digest pbkdf2_sha256(std::string_view secret, std::string_view salt, int iterations);

std::string to_hex(const Digest& d);
std::string to_hex(std::string_view bytes);

// Constant-time comparison of equal-length strings.
bool equal_ct(std::string_view a, std::string_view b);

// Hex-encoded random bytes from the OS entropy source.
std::string random_hex(std::size_t n_bytes);

}  // namespace imobe::crypto
