#pragma once

// Self-contained SVG line charts of metrics files.

#include <string>
#include <vector>

#include "zrl/trainer.hpp"

namespace zrl {

enum class PlotPanel { success, train_reward, nonzero_adv };

PlotPanel parse_panel(std::string_view name);

struct PlotOptions {
    PlotPanel panel = PlotPanel::success;
    std::string tag;                // difficulty for the success panel; empty: first tag of each series
    std::string decoding = "sampled";  // or "greedy"
    std::string title;
    int width = 720;
    int height = 440;
};

struct PlotSeries {
    std::string label;
    std::vector<MetricsRecord> records;
};

std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace zrl
