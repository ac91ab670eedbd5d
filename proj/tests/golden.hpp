#pragma once

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>

namespace testing {

// Compares `actual` with a frozen file under data/golden. Setting
// LOCRANK_UPDATE_GOLDEN=1 rewrites the file instead.
inline void check_golden(const std::string& name, const std::string& actual) {
    const auto path = data_dir() / "golden" / name;
    if (std::getenv("LOCRANK_UPDATE_GOLDEN") != nullptr) {
        write(path, actual);
        MESSAGE("updated golden file " << name);
        return;
    }
    REQUIRE_MESSAGE(fs::exists(path), "missing golden file " << name);
    CHECK(locrank::read_file(path) == actual);
}

} // namespace testing
