// Copyright 2026 kiln Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kiln/common.hpp"

namespace kiln {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

inline std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// One JSON object per non-empty line.
inline std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j = json::parse(lines[i], nullptr, false);
        if (j.is_discarded())
            throw InputError(path.string() + ":" + std::to_string(i + 1) + ": invalid JSON");
        out.push_back(std::move(j));
    }
    return out;
}

inline void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
    std::string buf;
    for (const auto& r : rows) {
        buf += r.dump();
        buf += '\n';
    }
    write_file(path, buf);
}

// Tab-separated rows; enforces an exact column count when n_cols > 0.
inline std::vector<std::vector<std::string>> read_tsv(const fs::path& path, int n_cols = 0) {
    std::vector<std::vector<std::string>> rows;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cols = split(lines[i], '\t');
        if (n_cols > 0 && static_cast<int>(cols.size()) != n_cols)
            throw InputError(path.string() + ":" + std::to_string(i + 1) + ": expected " +
                             std::to_string(n_cols) + " tab-separated columns, got " +
                             std::to_string(cols.size()));
        rows.push_back(std::move(cols));
    }
    return rows;
}

inline json require_field(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    return j.at(key);
}

inline uint64_t fnv_file(const fs::path& path) {
    std::string data = read_file(path);
    return fnv1a64(data);
}

inline std::string iso_timestamp_utc() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

}  // namespace kiln
