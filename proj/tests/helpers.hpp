#pragma once
// Shared test scaffolding: fixture paths, scratch directories, small builders.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "icrs/corpus.hpp"

namespace icrs_test {

inline std::string source_dir() { return ICRS_SOURCE_DIR; }
inline std::string fixture_manifest() {
    return source_dir() + "/data/fixture/retail/dataset.toml";
}
inline std::string movie_manifest() {
    return source_dir() + "/data/fixture/movie/dataset.toml";
}
// datasets line naming both fixture scenarios with absolute paths
inline std::string fixture_datasets_line() {
    return "datasets = [\"" + fixture_manifest() + "\", \"" + movie_manifest() +
           "\"]";
}
inline std::string fixture_config() {
    return source_dir() + "/data/fixture/run_config.toml";
}
inline std::string templates_dir() { return source_dir() + "/templates"; }
inline std::string goldens_dir() { return source_dir() + "/tests/goldens"; }
inline std::string cli_bin() { return ICRS_CLI_BIN; }

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("icrs_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string str() const { return path_.string(); }
    std::filesystem::path path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void spit(const std::string& path, const std::string& content) {
    std::filesystem::create_directories(
        std::filesystem::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Minimal valid conversation: alternating speakers, ground truth referenced
// at `cut` (1-based turn index; 0 = never referenced).
inline icrs::corpus::Conversation make_conversation(const std::string& id,
                                                    int turns, int cut,
                                                    const std::string& gt_item) {
    icrs::corpus::Conversation c;
    c.id = id;
    c.scenario = icrs::corpus::Scenario::custom;
    c.ground_truth_items = {gt_item};
    for (int i = 1; i <= turns; ++i) {
        icrs::corpus::Turn t;
        t.index = i;
        t.speaker = (i % 2 == 1) ? icrs::corpus::Speaker::seeker
                                 : icrs::corpus::Speaker::recommender;
        t.text = "turn " + std::to_string(i);
        if (i == cut) t.referenced_items = {gt_item};
        c.turns.push_back(std::move(t));
    }
    return c;
}

}  // namespace icrs_test
