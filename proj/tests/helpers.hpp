#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("dyadloop-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Token list over a small alphabet so overlaps are common.
inline std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab = 12) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> word(0, vocab - 1);
    std::vector<std::string> out(len(rng));
    for (auto& t : out) {
        t = "w" + std::to_string(word(rng));
    }
    return out;
}

inline std::string join(const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) {
        if (!s.empty()) {
            s += ' ';
        }
        s += t;
    }
    return s;
}

inline std::string source_dir() { return DYADLOOP_SOURCE_DIR; }

} // namespace testing_support
