#include "nsf/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace nsf {

namespace fs = std::filesystem;
using nlohmann::json;

void Burst::validate() const {
  if (frames.empty()) throw std::invalid_argument("burst: no frames");
  if (timestamps.size() != frames.size())
    throw std::invalid_argument("burst: timestamp count does not match frame count");
  if (std::abs(timestamps.front()) > 1e-12 || std::abs(timestamps.back() - 1.0) > 1e-12)
    throw std::invalid_argument("burst: timestamps must start at 0 and end at 1");
  for (size_t i = 1; i < timestamps.size(); ++i)
    if (timestamps[i] <= timestamps[i - 1])
      throw std::invalid_argument("burst: timestamps must be strictly increasing");
  for (const Image& f : frames) {
    if (f.width != width || f.height != height || f.channels != 3)
      throw std::invalid_argument("burst: frame size mismatch");
    for (float v : f.pixels)
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw std::invalid_argument("burst: pixel outside [0,1]");
  }
  if (device_rotations.size() != frames.size())
    throw std::invalid_argument("burst: device rotation count does not match frame count");
  intrinsics.validate();
}

namespace {

void write_f32(const std::string& path, const float* data, size_t count) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<float> read_f32(const std::string& path, size_t expected) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("missing file: " + path);
  const auto bytes = static_cast<size_t>(f.tellg());
  if (bytes < expected * sizeof(float))
    throw std::runtime_error("truncated frame file: " + path + " (" + std::to_string(bytes) +
                             " bytes, expected " + std::to_string(expected * sizeof(float)) + ")");
  f.seekg(0);
  std::vector<float> data(expected);
  f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected * sizeof(float)));
  if (!f) throw std::runtime_error("read failed: " + path);
  return data;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.f32", i);
  return buf;
}

const json& require_key(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::runtime_error(std::string("bundle meta missing field: ") + key);
  return *it;
}

}  // namespace

void save_bundle(const Burst& burst, const std::string& path) {
  burst.validate();
  fs::create_directories(fs::path(path) / "frames");
  json meta;
  meta["version"] = 1;
  meta["width"] = burst.width;
  meta["height"] = burst.height;
  meta["frame_count"] = burst.frame_count();
  meta["timestamps"] = burst.timestamps;
  std::vector<double> intr(burst.intrinsics.k.m.begin(), burst.intrinsics.k.m.end());
  meta["intrinsics"] = intr;
  std::vector<double> rots;
  rots.reserve(burst.device_rotations.size() * 9);
  for (const Mat3& r : burst.device_rotations) rots.insert(rots.end(), r.m.begin(), r.m.end());
  meta["device_rotations"] = rots;

  for (int i = 0; i < burst.frame_count(); ++i)
    write_f32((fs::path(path) / "frames" / frame_name(i)).string(),
              burst.frames[static_cast<size_t>(i)].pixels.data(),
              burst.frames[static_cast<size_t>(i)].pixels.size());

  if (burst.ground_truth) {
    const GroundTruth& gt = *burst.ground_truth;
    json names;
    names["transmission"] = "gt_transmission.f32";
    names["obstruction"] = "gt_obstruction.f32";
    names["alpha"] = "gt_alpha.f32";
    names["pose"] = "gt_pose.json";
    meta["ground_truth"] = names;
    write_f32((fs::path(path) / "gt_transmission.f32").string(), gt.transmission.pixels.data(),
              gt.transmission.pixels.size());
    write_f32((fs::path(path) / "gt_obstruction.f32").string(), gt.obstruction.pixels.data(),
              gt.obstruction.pixels.size());
    write_f32((fs::path(path) / "gt_alpha.f32").string(), gt.alpha.pixels.data(),
              gt.alpha.pixels.size());
    json pose;
    pose["points"] = gt.pose_points;
    pose["translation"] = gt.pose_translation;
    pose["rotation"] = gt.pose_rotation;
    std::ofstream pf(fs::path(path) / "gt_pose.json");
    pf << pose.dump(2) << "\n";
  }

  std::ofstream mf(fs::path(path) / "meta.json");
  if (!mf) throw std::runtime_error("cannot write meta.json under " + path);
  mf << meta.dump(2) << "\n";
}

Burst load_bundle(const std::string& path) {
  std::ifstream mf(fs::path(path) / "meta.json");
  if (!mf) throw std::runtime_error("missing file: " + (fs::path(path) / "meta.json").string());
  json meta;
  try {
    mf >> meta;
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt meta.json: " + std::string(e.what()));
  }

  const int version = require_key(meta, "version").get<int>();
  if (version != 1)
    throw std::runtime_error("unsupported bundle version " + std::to_string(version));

  Burst burst;
  burst.width = require_key(meta, "width").get<int>();
  burst.height = require_key(meta, "height").get<int>();
  const int frame_count = require_key(meta, "frame_count").get<int>();
  burst.timestamps = require_key(meta, "timestamps").get<std::vector<double>>();
  const auto intr = require_key(meta, "intrinsics").get<std::vector<double>>();
  if (intr.size() != 9) throw std::runtime_error("bundle meta field intrinsics: expected 9 reals");
  std::copy(intr.begin(), intr.end(), burst.intrinsics.k.m.begin());
  const auto rots = require_key(meta, "device_rotations").get<std::vector<double>>();
  if (rots.size() != static_cast<size_t>(frame_count) * 9)
    throw std::runtime_error("bundle meta field device_rotations: expected frame_count*9 reals");
  for (int i = 0; i < frame_count; ++i) {
    Mat3 r;
    std::copy(rots.begin() + i * 9, rots.begin() + (i + 1) * 9, r.m.begin());
    burst.device_rotations.push_back(r);
  }

  const size_t frame_floats = static_cast<size_t>(burst.width) * burst.height * 3;
  for (int i = 0; i < frame_count; ++i) {
    Image img(burst.width, burst.height, 3);
    img.pixels = read_f32((fs::path(path) / "frames" / frame_name(i)).string(), frame_floats);
    burst.frames.push_back(std::move(img));
  }

  if (meta.contains("ground_truth")) {
    const json& names = meta["ground_truth"];
    GroundTruth gt;
    gt.transmission = Image(burst.width, burst.height, 3);
    gt.transmission.pixels =
        read_f32((fs::path(path) / require_key(names, "transmission").get<std::string>()).string(),
                 frame_floats);
    gt.obstruction = Image(burst.width, burst.height, 3);
    gt.obstruction.pixels =
        read_f32((fs::path(path) / require_key(names, "obstruction").get<std::string>()).string(),
                 frame_floats);
    gt.alpha = Image(burst.width, burst.height, 1);
    gt.alpha.pixels =
        read_f32((fs::path(path) / require_key(names, "alpha").get<std::string>()).string(),
                 frame_floats / 3);
    std::ifstream pf(fs::path(path) / require_key(names, "pose").get<std::string>());
    if (pf) {
      json pose;
      pf >> pose;
      gt.pose_points = require_key(pose, "points").get<int>();
      gt.pose_translation = require_key(pose, "translation").get<std::vector<double>>();
      gt.pose_rotation = require_key(pose, "rotation").get<std::vector<double>>();
    }
    burst.ground_truth = std::move(gt);
  }

  burst.validate();
  return burst;
}

Image tonemap(const Image& img, double gamma) {
  if (gamma <= 0) throw std::invalid_argument("tonemap: gamma must be > 0");
  Image out = img;
  const double inv = 1.0 / gamma;
  for (float& v : out.pixels) {
    const double x = std::clamp(static_cast<double>(v), 0.0, 1.0);
    v = static_cast<float>(gamma == 1.0 ? x : std::pow(x, inv));
  }
  return out;
}

}  // namespace nsf
