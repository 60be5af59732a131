#ifndef HESPLIT_UTIL_DIGEST_HPP
#define HESPLIT_UTIL_DIGEST_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace hesplit {

std::array<uint8_t, 32> sha256(std::span<const uint8_t> bytes);
std::array<uint8_t, 32> sha256(const std::string& s);
std::string hex(std::span<const uint8_t> bytes);

}  // namespace hesplit

#endif
