#pragma once
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// shared scaffolding for the test binaries

namespace tu {

// fresh scratch dir under the system temp root, removed on destruction
struct TmpDir {
    std::filesystem::path path;
    explicit TmpDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; i++) {
            auto p = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path = p;
                return;
            }
        }
        std::abort();
    }
    ~TmpDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

inline uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    uint64_t h = 1469598103934665603ull;
    char c;
    while (f.get(c)) {
        h ^= (unsigned char)c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace tu
