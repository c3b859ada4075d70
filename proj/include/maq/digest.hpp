#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <openssl/evp.h>

#include "maq/common.hpp"

namespace maq {

namespace detail {

class Sha256 {
  public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw TrainError("sha256: init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t len) {
        if (EVP_DigestUpdate(ctx_, data, len) != 1) throw TrainError("sha256: update failed");
    }

    std::string hex() {
        unsigned char raw[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, raw, &len) != 1) throw TrainError("sha256: final failed");
        std::string out(static_cast<std::size_t>(len) * 2, '0');
        static const char* digits = "0123456789abcdef";
        for (unsigned int i = 0; i < len; ++i) {
            out[2 * i] = digits[raw[i] >> 4];
            out[2 * i + 1] = digits[raw[i] & 0xF];
        }
        return out;
    }

  private:
    EVP_MD_CTX* ctx_;
};

}  // namespace detail

inline std::string sha256_hex(const std::string& bytes) {
    detail::Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("sha256_file: cannot open '" + path.string() + "'");
    detail::Sha256 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.hex();
}

}  // namespace maq
