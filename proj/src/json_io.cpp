#include "demofuse/json_io.hpp"

#include <fstream>
#include <sstream>

#include "demofuse/errors.hpp"

namespace demofuse {

namespace {

void require_array(const Json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) {
    throw ValidationError(std::string(what) + " must be an array of " +
                          std::to_string(n) + " numbers");
  }
}

}  // namespace

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  require_array(j, 3, "vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json quat_to_json(const Quat& q) {
  const Quat c = canonical(q);
  return Json::array({c.w(), c.x(), c.y(), c.z()});
}

Quat quat_from_json(const Json& j) {
  require_array(j, 4, "quaternion");
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
         j[3].get<double>());
  const double norm_err = std::abs(q.norm() - 1.0);
  if (norm_err > 1e-6) {
    throw ValidationError("quaternion is not unit-norm");
  }
  // Keep canonically written values bit-exact; only repair sloppy inputs.
  if (norm_err > 1e-12) q.normalize();
  return q;
}

Json pose_to_json(const Pose& p) {
  Json j;
  j["q"] = quat_to_json(p.q);
  j["t"] = vec3_to_json(p.t);
  return j;
}

Pose pose_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("q") || !j.contains("t")) {
    throw ValidationError("pose must be an object with \"q\" and \"t\"");
  }
  Pose p;
  p.q = quat_from_json(j["q"]);
  p.t = vec3_from_json(j["t"]);
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file: " + path.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) {
    throw IoError("error while reading: " + path.string());
  }
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open file for writing: " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      throw IoError("error while writing: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() +
                  ": " + ec.message());
  }
}

Json load_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("invalid JSON in " + path.string() + ": " +
                          e.what());
  }
}

std::string file_digest(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace demofuse
