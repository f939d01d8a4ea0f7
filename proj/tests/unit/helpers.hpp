#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

namespace imml_test {

// Path to the command-line binary under test, set by main from --cli-bin=.
std::string& cli_bin();

// Scratch directory removed on destruction; each instance gets a fresh path.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<unsigned> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("imml_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace imml_test
