#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"

namespace lsrp::jsonl {

using json = nlohmann::json;

// Parses one JSON object per non-blank line.
inline std::vector<json> read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON record");
        out.push_back(std::move(j));
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::vector<json>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << r.dump() << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace lsrp::jsonl
