#pragma once

// File formats for demonstrations and guide paths.
//
// Demonstration (JSON lines):
//   {"schema":"tims/demo/1","source_id":"expert-03"}
//   {"t":0,"x":...,"y":...,"z":...}          one point per line, um
// Guide path (JSON):
//   {"schema":"tims/guidepath/1","points":[[x,y,z],...],"ci":[[x,y,z],...],
//    "hyper":[{"length_scale":..,"signal_variance":..,"noise_variance":..} x3]}

#include "tims/gpr.hpp"

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

namespace tims {

inline constexpr const char* kDemoSchema = "tims/demo/1";
inline constexpr const char* kGuidePathSchema = "tims/guidepath/1";

/// Raw points in file order (before preprocessing). The header line is
/// optional; when present its schema must match.
Path read_demo(std::istream& in, std::string* source_id = nullptr);
Path read_demo(const std::filesystem::path& file, std::string* source_id = nullptr);
void write_demo(std::ostream& out, const Path& points, const std::string& source_id);

void write_guide_path(std::ostream& out, const GuidePath& guide,
                      const std::optional<std::array<GprHyperparams, 3>>& hyper = std::nullopt);
GuidePath read_guide_path(std::istream& in);
GuidePath read_guide_path(const std::filesystem::path& file);

}  // namespace tims
