#pragma once

#include <cstdint>
#include <istream>
#include <string>

#include "sfm/sketch.hpp"

namespace sfm {

struct IngestStats {
    uint64_t items = 0;
    uint64_t skipped_empty = 0;
};

/// Insert newline-delimited byte strings into a sketch: one item per
/// line, trailing newline stripped. Empty lines are skipped unless
/// keep_empty, in which case the empty string is a valid item.
inline IngestStats ingest_items(std::istream& in, PcsaSketch& sketch, bool keep_empty = false) {
    IngestStats stats;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() && !keep_empty) {
            ++stats.skipped_empty;
            continue;
        }
        sketch.insert(line);
        ++stats.items;
    }
    return stats;
}

} // namespace sfm
