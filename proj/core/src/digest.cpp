#include "fsnids/digest.hpp"

#include <openssl/evp.h>

#include "fsnids/error.hpp"

namespace fsnids {

sha256_digest sha256(std::span<const std::uint8_t> bytes) {
    sha256_digest out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw error("SHA-256 computation failed");
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (const auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

std::string sha256_hex(std::string_view text) {
    const auto d = sha256({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    return to_hex(d);
}

}  // namespace fsnids
