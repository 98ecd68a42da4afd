#pragma once
// Line-delimited prompt/response audit log. One record per client attempt:
// {key, prompt_hash, response_text, timestamp}. Failed attempts carry an
// empty response_text; the last record per key is the authoritative one
// (replay reads it, retries append before it).

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace icrs {

struct RunLogRecord {
    std::string key;
    std::string prompt_hash;
    std::string response_text;
    std::int64_t timestamp = 0;  // unix seconds; 0 under hermetic clients
};

class RunLog {
public:
    void append(RunLogRecord record);

    // Stable-sorts records by key (attempt order preserved within a key) and
    // writes one JSON object per line. Sorting makes hermetic runs
    // byte-identical regardless of dispatch interleaving.
    void write(const std::string& path) const;

    std::size_t size() const { return records_.size(); }
    const std::vector<RunLogRecord>& records() const { return records_; }

private:
    mutable std::mutex mu_;
    std::vector<RunLogRecord> records_;
};

std::vector<RunLogRecord> read_run_log(const std::string& path);

}  // namespace icrs
