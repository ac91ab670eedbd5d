#pragma once

#include "locrank/corpus.hpp"
#include "locrank/text.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace testing {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(LOCRANK_TEST_DATA); }

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("locrank-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write(const fs::path& path, const std::string& text) { locrank::write_file(path, text); }

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI with `args` (already shell-quoted), capturing both streams.
inline RunResult run_cli(const std::string& args, const fs::path& scratch) {
    const auto out = scratch / "cli.stdout";
    const auto err = scratch / "cli.stderr";
    const std::string cmd = std::string("'") + LOCRANK_CLI + "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = fs::exists(out) ? locrank::read_file(out) : "";
    r.err = fs::exists(err) ? locrank::read_file(err) : "";
    return r;
}

inline std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

inline locrank::CodeUnit make_unit(const std::string& path, const std::string& name, int line,
                                   const std::string& text,
                                   locrank::Language lang = locrank::Language::python) {
    locrank::CodeUnit u;
    u.id = locrank::make_unit_id(path, name, line);
    u.repo = "synthetic";
    u.path = path;
    u.language = lang;
    u.qualified_name = name;
    u.start_line = line;
    u.end_line = line + 1;
    u.text = text;
    return u;
}

// Space-separated random words from a small vocabulary, so texts overlap.
inline std::string random_text(std::mt19937_64& rng, int words, int vocab = 60) {
    std::uniform_int_distribution<int> pick(0, vocab - 1);
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) {
            out += ' ';
        }
        out += "w" + std::to_string(pick(rng));
    }
    return out;
}

} // namespace testing
