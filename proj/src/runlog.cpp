#include "icrs/runlog.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icrs/error.hpp"

namespace icrs {

using nlohmann::json;

void RunLog::append(RunLogRecord record) {
    std::lock_guard<std::mutex> lock(mu_);
    records_.push_back(std::move(record));
}

void RunLog::write(const std::string& path) const {
    std::vector<RunLogRecord> sorted;
    {
        std::lock_guard<std::mutex> lock(mu_);
        sorted = records_;
    }
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const RunLogRecord& a, const RunLogRecord& b) {
                         return a.key < b.key;
                     });
    std::ofstream out(path);
    if (!out) throw io_error("cannot write", path);
    for (const auto& r : sorted) {
        json j;
        j["key"] = r.key;
        j["prompt_hash"] = r.prompt_hash;
        j["response_text"] = r.response_text;
        j["timestamp"] = r.timestamp;
        out << j.dump() << "\n";
    }
}

std::vector<RunLogRecord> read_run_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("file not found", path);
    std::vector<RunLogRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        RunLogRecord r;
        try {
            json j = json::parse(line);
            r.key = j.at("key").get<std::string>();
            r.prompt_hash = j.at("prompt_hash").get<std::string>();
            r.response_text = j.at("response_text").get<std::string>();
            r.timestamp = j.value("timestamp", std::int64_t{0});
        } catch (const json::exception& e) {
            throw domain_error("malformed record",
                               path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace icrs
