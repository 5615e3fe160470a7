#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpsf/agents.hpp"

namespace cpsf {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip-exact decimal for CSV cells.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Episode JSONL: one JSON object per line.
// ---------------------------------------------------------------------------

inline nlohmann::json episode_to_json(const TrajectoryRecord& rec) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& snap : rec.steps) {
    nlohmann::json row = nlohmann::json::array();
    for (const Vec2& p : snap.positions) row.push_back({p.x, p.y});
    steps.push_back(std::move(row));
  }
  nlohmann::json goals = nlohmann::json::array();
  for (const Vec2& g : rec.goals) goals.push_back({g.x, g.y});
  return {{"schema_version", 1}, {"seed", rec.seed},   {"num_agents", rec.num_agents},
          {"dt", rec.dt},        {"steps", steps},     {"goals", goals},
          {"radii", rec.radii}};
}

inline TrajectoryRecord episode_from_json(const nlohmann::json& j) {
  TrajectoryRecord rec;
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.num_agents = j.at("num_agents").get<int>();
  rec.dt = j.at("dt").get<double>();
  for (const auto& row : j.at("steps")) {
    AgentSnapshot snap;
    for (const auto& p : row) snap.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    rec.steps.push_back(std::move(snap));
  }
  for (const auto& g : j.at("goals")) rec.goals.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
  rec.radii = j.at("radii").get<std::vector<double>>();
  return rec;
}

inline void write_episodes_jsonl(const std::filesystem::path& path,
                                 const std::vector<TrajectoryRecord>& episodes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& rec : episodes) out << episode_to_json(rec).dump() << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<TrajectoryRecord> read_episodes_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  std::vector<TrajectoryRecord> episodes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      episodes.push_back(episode_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return episodes;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  return nlohmann::json::parse(in);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Minimal SVG chart: per-h mean error with quantile whiskers and the radius
// line, deterministic bytes.
// ---------------------------------------------------------------------------

inline std::string coverage_svg(const std::vector<double>& mean_error,
                                const std::vector<double>& q90,
                                const std::vector<double>& radii_values) {
  const int H = static_cast<int>(mean_error.size());
  const double width = 480, height = 300, margin = 45;
  double peak = 1e-9;
  for (int h = 0; h < H; ++h)
    peak = std::max({peak, q90[h], std::isinf(radii_values[h]) ? 0.0 : radii_values[h]});
  peak *= 1.15;

  auto x_of = [&](int h) { return margin + (width - 2 * margin) * (h + 0.5) / H; };
  auto y_of = [&](double v) { return height - margin - (height - 2 * margin) * (v / peak); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (int h = 0; h < H; ++h) {
    const double x = x_of(h);
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(y_of(mean_error[h])) << "\" x2=\""
        << num(x) << "\" y2=\"" << num(y_of(q90[h])) << "\" stroke=\"steelblue\"/>\n";
    svg << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y_of(mean_error[h]))
        << "\" r=\"3\" fill=\"steelblue\"/>\n";
    if (!std::isinf(radii_values[h])) {
      svg << "<line x1=\"" << num(x - 10) << "\" y1=\"" << num(y_of(radii_values[h]))
          << "\" x2=\"" << num(x + 10) << "\" y2=\"" << num(y_of(radii_values[h]))
          << "\" stroke=\"goldenrod\" stroke-dasharray=\"4 2\" stroke-width=\"2\"/>\n";
    }
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(height - margin + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << h + 1 << "</text>\n";
  }
  svg << "<text x=\"" << num(width / 2) << "\" y=\"" << num(height - 8)
      << "\" font-size=\"12\" text-anchor=\"middle\">prediction step</text>\n";
  svg << "<text x=\"14\" y=\"" << num(height / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num(height / 2) << ")\">error (m)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cpsf
