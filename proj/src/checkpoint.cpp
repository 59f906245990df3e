#include "nsf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace nsf {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'S', 'F', 'C', 'K', 'P', 'T', '1'};

json encoding_to_json(const EncodingParams& e) {
  return json{{"base", e.base_resolution},
              {"scale", e.per_level_scale},
              {"levels", e.levels},
              {"features", e.features_per_level},
              {"log2_table", e.log2_table_size}};
}

EncodingParams encoding_from_json(const json& j) {
  EncodingParams e;
  e.base_resolution = j.at("base").get<int>();
  e.per_level_scale = j.at("scale").get<double>();
  e.levels = j.at("levels").get<int>();
  e.features_per_level = j.at("features").get<int>();
  e.log2_table_size = j.at("log2_table").get<int>();
  return e;
}

json config_to_json(const SceneModelConfig& c) {
  return json{{"single_layer", c.single_layer},
              {"tr_rgb", encoding_to_json(c.tr_rgb_enc)},
              {"tr_flow", encoding_to_json(c.tr_flow_enc)},
              {"ob_rgb", encoding_to_json(c.ob_rgb_enc)},
              {"ob_flow", encoding_to_json(c.ob_flow_enc)},
              {"alpha", encoding_to_json(c.alpha_enc)},
              {"tr_flow_points", c.tr_flow_points},
              {"ob_flow_points", c.ob_flow_points},
              {"tr_depth", c.tr_depth},
              {"ob_depth", c.ob_depth},
              {"temperature", c.temperature},
              {"eta_rotation", c.eta_rotation},
              {"pose_control_points", c.pose_control_points},
              {"mlp_hidden", c.mlp_hidden},
              {"mlp_layers", c.mlp_layers},
              {"alpha_bias", c.alpha_bias},
              {"flow_mode", c.flow_mode == SplineMode::kLinear ? "linear" : "cubic"},
              {"seed", c.seed}};
}

SceneModelConfig config_from_json(const json& j) {
  SceneModelConfig c;
  c.single_layer = j.at("single_layer").get<bool>();
  c.tr_rgb_enc = encoding_from_json(j.at("tr_rgb"));
  c.tr_flow_enc = encoding_from_json(j.at("tr_flow"));
  c.ob_rgb_enc = encoding_from_json(j.at("ob_rgb"));
  c.ob_flow_enc = encoding_from_json(j.at("ob_flow"));
  c.alpha_enc = encoding_from_json(j.at("alpha"));
  c.tr_flow_points = j.at("tr_flow_points").get<int>();
  c.ob_flow_points = j.at("ob_flow_points").get<int>();
  c.tr_depth = j.at("tr_depth").get<double>();
  c.ob_depth = j.at("ob_depth").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.eta_rotation = j.at("eta_rotation").get<double>();
  c.pose_control_points = j.at("pose_control_points").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.mlp_layers = j.at("mlp_layers").get<int>();
  c.alpha_bias = j.at("alpha_bias").get<double>();
  c.flow_mode = j.at("flow_mode").get<std::string>() == "linear" ? SplineMode::kLinear
                                                                 : SplineMode::kCubicHermite;
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: unexpected end of file");
  return v;
}

}  // namespace

void save_checkpoint(SceneModel<float>& scene, int source_width, int source_height,
                     const std::string& path) {
  json header;
  header["model"] = config_to_json(scene.config);
  header["source_width"] = source_width;
  header["source_height"] = source_height;
  std::vector<double> intr(scene.intrinsics.k.m.begin(), scene.intrinsics.k.m.end());
  header["intrinsics"] = intr;
  header["frame_timestamps"] = scene.pose.frame_timestamps;
  std::vector<double> rots;
  for (const Mat3& r : scene.pose.device_rotations) rots.insert(rots.end(), r.m.begin(), r.m.end());
  header["device_rotations"] = rots;
  const std::string hjson = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kMagic, 8);
  write_pod<uint32_t>(f, static_cast<uint32_t>(hjson.size()));
  f.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));

  std::vector<std::pair<std::string, Tensor<float>*>> params;
  scene.visit_params([&](const std::string& name, Tensor<float>& t) { params.emplace_back(name, &t); });
  write_pod<uint32_t>(f, static_cast<uint32_t>(params.size()));
  for (auto& [name, t] : params) {
    write_pod<uint16_t>(f, static_cast<uint16_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(f, static_cast<uint8_t>(t->ndim()));
    for (int d = 0; d < t->ndim(); ++d) write_pod<uint32_t>(f, static_cast<uint32_t>(t->dim(d)));
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic or unsupported version in " + path);
  const uint32_t hlen = read_pod<uint32_t>(f);
  std::string hjson(hlen, '\0');
  f.read(hjson.data(), hlen);
  if (!f) throw std::runtime_error("checkpoint: truncated header");
  const json header = json::parse(hjson);

  const SceneModelConfig config = config_from_json(header.at("model"));
  Intrinsics intr;
  const auto kv = header.at("intrinsics").get<std::vector<double>>();
  std::copy(kv.begin(), kv.end(), intr.k.m.begin());
  const auto ts = header.at("frame_timestamps").get<std::vector<double>>();
  const auto rots = header.at("device_rotations").get<std::vector<double>>();
  std::vector<Mat3> device_rotations(rots.size() / 9);
  for (size_t i = 0; i < device_rotations.size(); ++i)
    std::copy(rots.begin() + static_cast<long>(i * 9), rots.begin() + static_cast<long>((i + 1) * 9),
              device_rotations[i].m.begin());

  LoadedCheckpoint out{scene_model_init<float>(config, intr, device_rotations, ts),
                       header.at("source_width").get<int>(),
                       header.at("source_height").get<int>()};

  std::map<std::string, std::pair<std::vector<int64_t>, std::vector<float>>> tensors;
  const uint32_t count = read_pod<uint32_t>(f);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t nlen = read_pod<uint16_t>(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    const uint8_t ndim = read_pod<uint8_t>(f);
    std::vector<int64_t> dims;
    int64_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      dims.push_back(read_pod<uint32_t>(f));
      numel *= dims.back();
    }
    std::vector<float> data(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(numel * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor " + name);
    tensors[name] = {std::move(dims), std::move(data)};
  }

  out.scene.visit_params([&](const std::string& name, Tensor<float>& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
    if (it->second.first != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
    std::copy(it->second.second.begin(), it->second.second.end(), t.data());
  });
  return out;
}

}  // namespace nsf
