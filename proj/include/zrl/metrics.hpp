#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "zrl/trainer.hpp"

namespace zrl {

// Append-only JSONL sink; every record is flushed as it is written.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void write(const MetricsRecord& record);

private:
    std::ofstream out_;
};

struct MetricsFile {
    std::vector<MetricsRecord> records;
    std::vector<std::string> warnings;  // one per skipped line
};

MetricsFile read_metrics(const std::filesystem::path& path);

}  // namespace zrl
