#pragma once

// SVG rendering of logged evaluation trajectories: arena bounds, obstacles,
// vortex cores, goal/start markers and the path polyline colored by outcome.
// Geometry is emitted in world coordinates (a y-flip group handles screen
// orientation), so coordinates round-trip exactly through the document.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driqn/metrics.hpp"
#include "driqn/world.hpp"

namespace driqn {

namespace render_detail {

inline const char* outcome_color(const std::string& outcome) {
    if (outcome == "GoalReached") return "#1a9e3c";
    if (outcome == "Collision") return "#d4403c";
    if (outcome == "Timeout") return "#e0a112";
    return "#3a6ea8";
}

inline void svg_header(std::ostream& os, double bound) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-2 -6 " << bound + 4 << " "
       << bound + 10 << "\" width=\"720\" height=\"780\">\n";
    os << "<g transform=\"translate(0," << bound << ") scale(1,-1)\">\n";
}

inline void svg_map(std::ostream& os, const WorldMap& map, double goal_radius) {
    os << "<rect class=\"bounds\" x=\"0\" y=\"0\" width=\"" << map.bound << "\" height=\""
       << map.bound << "\" fill=\"#eef6fa\" stroke=\"#334\" stroke-width=\"0.15\"/>\n";
    for (const auto& v : map.vortices)
        os << "<circle class=\"vortex\" cx=\"" << format_g17(v.center.x) << "\" cy=\""
           << format_g17(v.center.y) << "\" r=\"" << format_g17(v.core_radius)
           << "\" fill=\"none\" stroke=\"#6fa3b8\" stroke-width=\"0.12\" "
              "stroke-dasharray=\"0.7 0.45\"/>\n";
    for (const auto& o : map.obstacles)
        os << "<circle class=\"obstacle\" cx=\"" << format_g17(o.center.x) << "\" cy=\""
           << format_g17(o.center.y) << "\" r=\"" << format_g17(o.radius)
           << "\" fill=\"#8d8d8d\" stroke=\"#444\" stroke-width=\"0.1\"/>\n";
    os << "<circle class=\"goal\" cx=\"" << format_g17(map.goal.x) << "\" cy=\""
       << format_g17(map.goal.y) << "\" r=\"" << format_g17(goal_radius)
       << "\" fill=\"#35b558\" stroke=\"#156f31\" stroke-width=\"0.1\"/>\n";
    os << "<circle class=\"start\" cx=\"" << format_g17(map.start.x) << "\" cy=\""
       << format_g17(map.start.y)
       << "\" r=\"0.45\" fill=\"#2f62c4\" stroke=\"#173a7d\" stroke-width=\"0.1\"/>\n";
}

inline void svg_legend(std::ostream& os, double bound, const std::string& title) {
    os << "</g>\n";
    os << "<text x=\"0\" y=\"-3.5\" font-size=\"1.8\" fill=\"#222\">" << title << "</text>\n";
    const struct {
        const char* color;
        const char* label;
    } entries[] = {{"#1a9e3c", "success"}, {"#d4403c", "collision"}, {"#e0a112", "timeout"}};
    double x = 0.0;
    for (const auto& e : entries) {
        os << "<rect x=\"" << x << "\" y=\"" << bound + 1.5
           << "\" width=\"1.6\" height=\"1.6\" fill=\"" << e.color << "\"/>\n";
        os << "<text x=\"" << x + 2.1 << "\" y=\"" << bound + 2.9
           << "\" font-size=\"1.6\" fill=\"#222\">" << e.label << "</text>\n";
        x += 11.0;
    }
    os << "</svg>\n";
}

}  // namespace render_detail

// Renders one logged episode (id "<step>_<env>") from a run directory into
// render_<id>.svg. Returns the output path, or nothing when the episode was
// never logged (skipped with a warning on the stream).
inline std::optional<std::filesystem::path> render_episode(const std::filesystem::path& run_dir,
                                                           const std::string& id,
                                                           std::ostream& warnings) {
    namespace fs = std::filesystem;
    const fs::path traj = run_dir / "traj" / (id + ".csv");
    if (!fs::exists(traj)) {
        warnings << "render: skipping missing episode " << id << "\n";
        return std::nullopt;
    }
    const auto us = id.find_last_of('_');
    if (us == std::string::npos) {
        warnings << "render: malformed episode id " << id << "\n";
        return std::nullopt;
    }
    const std::string env = id.substr(us + 1);
    const fs::path map_path = run_dir / "maps" / ("env_" + env + ".json");
    if (!fs::exists(map_path)) {
        warnings << "render: missing map document for episode " << id << "\n";
        return std::nullopt;
    }

    nlohmann::json mj;
    {
        std::ifstream f(map_path);
        f >> mj;
    }
    const WorldMap map = map_from_json(mj);

    double goal_radius = 0.5;
    if (fs::exists(run_dir / "config.json")) {
        std::ifstream f(run_dir / "config.json");
        nlohmann::json cfg;
        f >> cfg;
        if (cfg.contains("world") && cfg["world"].contains("goal_radius"))
            goal_radius = cfg["world"]["goal_radius"].get<double>();
    }

    const CsvTable rows = read_csv(traj.string());
    const int cx = rows.column("x"), cy = rows.column("y"), co = rows.column("outcome");
    std::string outcome = rows.rows.empty() ? "Running" : rows.rows.back()[co];

    const fs::path out_path = run_dir / ("render_" + id + ".svg");
    std::ofstream os(out_path);
    render_detail::svg_header(os, map.bound);
    render_detail::svg_map(os, map, goal_radius);
    os << "<polyline class=\"path outcome-" << outcome << "\" fill=\"none\" stroke=\""
       << render_detail::outcome_color(outcome) << "\" stroke-width=\"0.22\" points=\"";
    for (const auto& row : rows.rows) os << row[cx] << "," << row[cy] << " ";
    os << "\"/>\n";
    render_detail::svg_legend(os, map.bound, "episode " + id + " (" + outcome + ")");
    return out_path;
}

// Renders each requested episode; with no ids, emits a legend-only document.
inline std::vector<std::filesystem::path> render_trajectories(
    const std::filesystem::path& run_dir, const std::vector<std::string>& ids,
    std::ostream& warnings) {
    std::vector<std::filesystem::path> out;
    if (ids.empty()) {
        const std::filesystem::path p = run_dir / "render_legend.svg";
        std::ofstream os(p);
        render_detail::svg_header(os, 50.0);
        render_detail::svg_legend(os, 50.0, "legend");
        out.push_back(p);
        return out;
    }
    for (const auto& id : ids)
        if (auto p = render_episode(run_dir, id, warnings)) out.push_back(*p);
    return out;
}

}  // namespace driqn
