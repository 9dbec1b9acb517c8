#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdl/dataset.hpp"

namespace fixtures {

inline std::string sample_network_path() { return std::string(SDL_SOURCE_DIR) + "/data/networks/far_taillight.json"; }

// A spot that passes every object-level test of the sample network with room
// to spare.
inline nlohmann::json clear_taillight() {
  return {{"features",
           {{"y", 0.45}, {"area", 15}, {"red", 0.95}, {"amber", 0.1}, {"bright", 220}, {"aspect", 1.0},
            {"contrast", 0.6}, {"luma", 20}}}};
}

inline nlohmann::json empty_mask(int w = 16, int h = 12) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < h; ++y) rows.push_back({w});
  return {{"w", w}, {"h", h}, {"bits", rows}};
}

// Frame on which the sample network's output is saturated true once warm.
inline nlohmann::json clear_frame(const std::string& episode, long t, bool label = true) {
  return {{"episode", episode},
          {"t", t},
          {"features", {{"speed", 90}, {"ambient", 2}, {"yaw", 0}}},
          {"objects", {clear_taillight(), clear_taillight(), clear_taillight()}},
          {"masks", {{"glare", empty_mask()}}},
          {"label", label}};
}

inline sdl::Dataset dataset_from(const std::vector<nlohmann::json>& frames) {
  std::ostringstream out;
  for (const auto& f : frames) out << f.dump() << '\n';
  std::istringstream in(out.str());
  return sdl::read_dataset(in, "fixture");
}

}  // namespace fixtures
