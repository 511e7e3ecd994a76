#pragma once

// Content listing of an artifact tree with provenance timestamps blanked.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "gastkit/common.hpp"
#include "gastkit/text_io.hpp"

inline std::map<std::string, std::string> tree_digest(const std::filesystem::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::string bytes = gastkit::read_text_file(e.path());
        if (e.path().filename() == "provenance.json") {
            auto j = nlohmann::ordered_json::parse(bytes);
            j.erase("timestamp");
            bytes = j.dump();
        }
        out[std::filesystem::relative(e.path(), root).generic_string()] = gastkit::hex64(gastkit::fnv1a(bytes)) +
                                                                          " " + std::to_string(bytes.size());
    }
    return out;
}
