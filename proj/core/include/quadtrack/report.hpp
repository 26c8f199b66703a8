#pragma once

#include <string>
#include <vector>

#include "quadtrack/eval.hpp"

namespace quadtrack {

struct ReportEntry {
    std::string name;
    EvalResult result;
    std::string training;  // JSON text of a training report, or empty
};

struct ReportOptions {
    bool include_timing = false;  // throughput block per entry
    bool include_sequences = true;
};

/// JSON report: one named entry per tracker with headline numbers, per-threshold
/// curve tables ([threshold, value] rows) and per-sequence results, plus the
/// entry names ranked by success AUC.
std::string format_report(const std::vector<ReportEntry>& entries, const ReportOptions& options = {});

struct ParsedEntry {
    std::string name;
    std::string protocol;
    Curves aggregate;
    std::vector<SequenceResult> sequences;
    double fps = 0.0;  // zero when the report carries no timing
};

struct ParsedReport {
    std::vector<ParsedEntry> entries;
    std::vector<std::string> ranking;
    const ParsedEntry& entry(const std::string& name) const;
};

/// Throws DataError on malformed input.
ParsedReport parse_report(const std::string& text);

}  // namespace quadtrack
