// digest.hpp — SHA-256 content hashes for kernels and emitted files

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace qbm {

class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(const void* data, std::size_t len);
    Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
    template <class T>
    Sha256& update_value(const T& v) { return update(&v, sizeof v); }

    std::string hex();  // finalizes

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

}  // namespace qbm
