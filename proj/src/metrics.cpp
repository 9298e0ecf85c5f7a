#include "zrl/metrics.hpp"

#include "zrl/errors.hpp"

namespace zrl {

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write metrics file " + path.string());
}

void MetricsWriter::write(const MetricsRecord& record) {
    out_ << record.to_json().dump() << '\n';
    out_.flush();
}

MetricsFile read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read metrics file " + path.string());
    MetricsFile file;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            file.records.push_back(MetricsRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            file.warnings.push_back(path.string() + ":" + std::to_string(line_no) + ": skipped malformed record (" +
                                    e.what() + ")");
        }
    }
    return file;
}

}  // namespace zrl
