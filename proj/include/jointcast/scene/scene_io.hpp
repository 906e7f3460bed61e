#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jointcast/scene/scene.hpp"

namespace jointcast {

/// JSON-lines scene files, one scenario per line:
///   {scenario_id, polygons:[{id, kind, points:[[x,y]...], headings}],
///    agents:[{id, category, positions, headings, timestamps, valid, is_target, future_gt?}]}
/// Reals are written in shortest round-trip form, so write -> read is exact.
std::string scene_to_json_line(const Scene& scene);
Scene scene_from_json_line(const std::string& line, ValidationMode mode = ValidationMode::kInference);

void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);

/// Parse failures raise ParseError and schema failures ValidationError, both
/// prefixed with "<path>:<line>".
std::vector<Scene> read_scenes(const std::filesystem::path& path, ValidationMode mode = ValidationMode::kInference);

}  // namespace jointcast
