#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "narc/rng.hpp"

namespace narc::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("narc_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline const char* reference_market_cfg() {
    return "r = 0.002\neta = 0.01\nT = 10\nx0 = 100\nt0 = 20\n"
           "mixture.weights = 0.4, 0.6\nmixture.means = 0.006, 0.016\nmixture.variances = 0.016, 0.00625\n";
}

}  // namespace narc::testing
