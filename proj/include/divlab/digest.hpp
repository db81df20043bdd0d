#ifndef DIVLAB_DIGEST_HPP
#define DIVLAB_DIGEST_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace divlab {

// SHA-256 as 64 lowercase hex characters.
std::string Sha256Hex(std::span<const std::uint8_t> bytes);
std::string Sha256Hex(std::string_view text);

}  // namespace divlab

#endif  // DIVLAB_DIGEST_HPP
