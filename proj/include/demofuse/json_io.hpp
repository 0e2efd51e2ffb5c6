#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "demofuse/geom.hpp"

namespace demofuse {

// Insertion-ordered JSON keeps file output stable and human-diffable.
using Json = nlohmann::ordered_json;

/// Pose serialization: {"q":[w,x,y,z],"t":[x,y,z]}, quaternion written in
/// canonical sign (w >= 0).
Json pose_to_json(const Pose& p);
Pose pose_from_json(const Json& j);

Json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

Json quat_to_json(const Quat& q);
Quat quat_from_json(const Json& j);

/// Whole-file read; throws IoError when the path is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

/// Write via temp file + rename in the same directory, so readers never see
/// a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

/// Parse a whole-document JSON file (config files, truth.json, ...).
Json load_json(const std::filesystem::path& path);

/// FNV-1a 64-bit over the file bytes, hex-encoded. Used for run-manifest
/// input fingerprints.
std::string file_digest(const std::filesystem::path& path);

}  // namespace demofuse
