#include "zrl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "zrl/errors.hpp"

namespace zrl {

PlotPanel parse_panel(std::string_view name) {
    if (name == "success") return PlotPanel::success;
    if (name == "train_reward") return PlotPanel::train_reward;
    if (name == "nonzero_adv") return PlotPanel::nonzero_adv;
    throw ConfigError("unknown panel '" + std::string(name) + "' (expected success, train_reward or nonzero_adv)");
}

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << x;
    return os.str();
}

std::vector<std::pair<double, double>> points(const PlotSeries& s, const PlotOptions& o) {
    std::vector<std::pair<double, double>> out;
    std::string tag = o.tag;
    for (const auto& r : s.records) {
        std::optional<double> y;
        switch (o.panel) {
            case PlotPanel::success: {
                if (tag.empty() && !r.success.empty()) tag = r.success.begin()->first;
                const auto it = r.success.find(tag);
                if (it != r.success.end()) y = o.decoding == "greedy" ? it->second.greedy : it->second.sampled;
                break;
            }
            case PlotPanel::train_reward: y = r.mean_train_reward; break;
            case PlotPanel::nonzero_adv: y = r.nonzero_adv_fraction; break;
        }
        if (y) out.emplace_back(static_cast<double>(r.iteration), *y);
    }
    return out;
}

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& o) {
    const double left = 70, right = 170, top = 40, bottom = 55;
    const double pw = o.width - left - right;
    const double ph = o.height - top - bottom;

    std::vector<std::vector<std::pair<double, double>>> pts;
    double xmax = 1.0;
    for (const auto& s : series) {
        pts.push_back(points(s, o));
        for (const auto& [x, y] : pts.back()) xmax = std::max(xmax, x);
    }
    const auto sx = [&](double x) { return left + pw * x / xmax; };
    const auto sy = [&](double y) { return top + ph * (1.0 - std::clamp(y, 0.0, 1.0)); };

    const char* ylabel = o.panel == PlotPanel::success        ? "success rate"
                         : o.panel == PlotPanel::train_reward ? "mean train reward"
                                                              : "non-zero step advantage fraction";
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!o.title.empty()) {
        svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
            << escape(o.title) << "</text>\n";
    }
    // Grid and ticks.
    for (int i = 0; i <= 5; ++i) {
        const double y = i / 5.0;
        svg << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(sy(y)) << "\" y2=\""
            << num(sy(y)) << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<text x=\"" << num(left - 8) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << num(y)
            << "</text>\n";
        const double x = xmax * i / 5.0;
        svg << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
            << std::lround(x) << "</text>\n";
    }
    svg << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(o.height - 12.0)
        << "\" text-anchor=\"middle\">iteration</text>\n";
    svg << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
        << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kColors[i % std::size(kColors)];
        svg << "<g class=\"series\" data-label=\"" << escape(series[i].label) << "\">\n";
        if (!pts[i].empty()) {
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (const auto& [x, y] : pts[i]) svg << num(sx(x)) << "," << num(sy(y)) << " ";
            svg << "\"/>\n";
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(i);
        svg << "<line x1=\"" << num(left + pw + 12) << "\" x2=\"" << num(left + pw + 32) << "\" y1=\"" << num(ly - 4)
            << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << num(left + pw + 38) << "\" y=\"" << num(ly) << "\">" << escape(series[i].label)
            << "</text>\n</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace zrl
