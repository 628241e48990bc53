#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "gradroute/core/error.hpp"

namespace gradroute {

// Append-only JSONL metrics: one JSON object per line, keys sorted, flushed
// on demand and at destruction. One writer per file.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path, bool append = false)
        : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw format_error("cannot open metrics file " + path);
    }

    void write(const nlohmann::json& row) {
        out_ << row.dump() << '\n';
        if (!out_) throw format_error("write failure on metrics file " + path_);
    }

    void write(const std::string& run_id, uint64_t seed, size_t step, const std::string& metric,
               double value) {
        write(nlohmann::json{{"run_id", run_id},
                             {"seed", seed},
                             {"step", step},
                             {"metric", metric},
                             {"value", value}});
    }

    void flush() {
        out_.flush();
        if (!out_) throw format_error("flush failure on metrics file " + path_);
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

} // namespace gradroute
