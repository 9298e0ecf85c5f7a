#include "zrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "zrl/errors.hpp"

namespace zrl {

namespace {

constexpr const char* kMagic = "zrl-checkpoint v1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, long iteration) {
    nlohmann::ordered_json header;
    header["architecture"] = params.config.to_json();
    header["iteration"] = iteration;
    header["param_count"] = params.size();
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out << kMagic << '\n' << header.dump() << '\n';
        out.write(reinterpret_cast<const char*>(params.values.data()),
                  static_cast<std::streamsize>(params.values.size() * sizeof(double)));
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path.string());
    std::string magic;
    std::string header_line;
    std::getline(in, magic);
    if (magic != kMagic) throw ConfigError(path.string() + ": not a checkpoint (bad header)");
    std::getline(in, header_line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": corrupt checkpoint header: " + e.what());
    }
    Checkpoint ck;
    ck.params.config = ModelConfig::from_json(header.at("architecture"));
    ck.params.config.validate();
    ck.iteration = header.at("iteration").get<long>();
    const auto count = header.at("param_count").get<std::size_t>();
    if (count != ck.params.config.param_count()) {
        throw ConfigError(path.string() + ": parameter count does not match the architecture");
    }
    ck.params.values.resize(count);
    in.read(reinterpret_cast<char*>(ck.params.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
        throw ConfigError(path.string() + ": truncated checkpoint");
    }
    return ck;
}

void require_compatible(const ModelConfig& expected, const ModelConfig& actual) {
    if (const auto field = expected.first_mismatch(actual)) {
        throw ConfigError("architecture mismatch in model." + *field + ": expected " +
                          expected.to_json()[*field].dump() + ", checkpoint has " + actual.to_json()[*field].dump());
    }
}

}  // namespace zrl
