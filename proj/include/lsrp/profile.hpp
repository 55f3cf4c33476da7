#pragma once

#include <set>
#include <string>
#include <vector>

#include "lsrp/text.hpp"

namespace lsrp {

// The private payload that must never cross the cloud boundary. There is
// deliberately no serializer from this type into any cloud-bound message.
struct UserProfile {
    std::string profile_text;
    std::string history_text;    // empty means absent
    std::string device_log_text; // empty means absent

    bool has_history() const { return !history_text.empty(); }

    // Every private field, newline-joined; the user-data side of UDRR and the
    // privacy half of pair encoding.
    std::string private_text() const {
        std::string out = profile_text;
        for (const std::string* part : {&history_text, &device_log_text}) {
            if (part->empty()) continue;
            if (!out.empty()) out += '\n';
            out += *part;
        }
        return out;
    }

    // Distinctive substrings the boundary audit scans for: each whole field
    // value plus every word 4-gram of length >= 4. Shorter tokens would fire
    // on common words.
    std::vector<std::string> sentinel_tokens() const {
        std::set<std::string> out;
        for (const std::string* field : {&profile_text, &history_text, &device_log_text}) {
            const std::string value = text::trim(*field);
            if (value.empty()) continue;
            out.insert(value);
            const auto words = text::whitespace_tokens(value);
            for (std::size_t i = 0; i + 4 <= words.size(); ++i) {
                std::string gram = words[i];
                for (std::size_t k = 1; k < 4; ++k) gram += " " + words[i + k];
                if (gram.size() >= 4) out.insert(gram);
            }
        }
        return {out.begin(), out.end()};
    }
};

} // namespace lsrp
