#include "quickloc/serialize.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace quickloc {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");
static_assert(sizeof(Real) == 4, "blob dtype is fp32");

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  if (!l.name.empty()) j["name"] = l.name;
  if (l.kernel_h > 0) j["kernel"] = {l.kernel_h, l.kernel_w};
  if (l.stride != 1) j["stride"] = l.stride;
  if (l.units > 0) j["units"] = l.units;
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  l.name = j.value("name", std::string{});
  if (j.contains("kernel")) {
    l.kernel_h = j["kernel"].at(0).get<int>();
    l.kernel_w = j["kernel"].at(1).get<int>();
  }
  l.stride = j.value("stride", 1);
  l.units = j.value("units", 0);
  if (l.trainable() && l.name.empty())
    throw ParseError("manifest: trainable layer without a name");
  return l;
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const auto& l : layers) arr.push_back(layer_to_json(l));
  return arr;
}

std::vector<LayerSpec> layers_from_json(const json& arr) {
  std::vector<LayerSpec> layers;
  for (const auto& j : arr) layers.push_back(layer_from_json(j));
  return layers;
}

}  // namespace

void save_model(const MultiExitModel& m, const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path mpath(manifest_path);
  const std::string blob_name = mpath.stem().string() + ".bin";

  json j;
  j["magic"] = "QLOC";
  j["version"] = kModelFormatVersion;
  j["seed"] = m.seed;
  j["source_digest"] = m.source_digest;
  j["input"] = {m.input.height, m.input.width, m.input.channels};
  j["classes"] = m.classes;
  j["wap_index"] = m.wap_index;
  j["backbone"] = layers_to_json(m.backbone);
  j["final_head"] = layers_to_json(m.final_head);
  j["baseline_trained"] = m.baseline_trained;

  json exits = json::array();
  for (std::size_t e = 0; e < m.exits.size(); ++e) {
    const auto& b = m.exits[e];
    const auto& rule = m.default_policy.at(e);
    json je;
    je["name"] = b.name;
    je["attach_after"] = b.attach_after;
    je["layers"] = layers_to_json(b.layers);
    je["enabled"] = rule.enabled;
    je["method"] = method_name(rule.method);
    je["theta"] = rule.theta;
    je["trained"] = static_cast<bool>(m.exit_trained.at(e));
    exits.push_back(std::move(je));
  }
  j["exits"] = std::move(exits);

  json blocks = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, blk] : m.weights.blocks) {
    json jb;
    jb["name"] = name;
    jb["w_dims"] = blk.w_dims;
    jb["bias"] = blk.b.size();
    jb["offset"] = offset;
    blocks.push_back(std::move(jb));
    offset += (blk.w.size() + blk.b.size()) * sizeof(Real);
  }
  j["blob"] = {{"file", blob_name}, {"dtype", "f32le"}, {"blocks", std::move(blocks)}};

  std::ofstream mf(mpath);
  if (!mf) throw InvalidArgument("cannot write " + manifest_path);
  mf << j.dump(2) << '\n';

  std::ofstream bf(mpath.parent_path() / blob_name, std::ios::binary);
  if (!bf) throw InvalidArgument("cannot write blob next to " + manifest_path);
  for (const auto& [name, blk] : m.weights.blocks) {
    bf.write(reinterpret_cast<const char*>(blk.w.data()),
             static_cast<std::streamsize>(blk.w.size() * sizeof(Real)));
    bf.write(reinterpret_cast<const char*>(blk.b.data()),
             static_cast<std::streamsize>(blk.b.size() * sizeof(Real)));
  }
}

MultiExitModel load_model(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream mf(manifest_path);
  if (!mf) throw ParseError("cannot open " + manifest_path);
  json j;
  try {
    mf >> j;
  } catch (const json::exception& e) {
    throw ParseError(manifest_path + ": " + e.what());
  }
  if (j.value("magic", std::string{}) != "QLOC")
    throw ParseError(manifest_path + ": not a QLOC manifest");
  if (j.value("version", 0) != kModelFormatVersion)
    throw ParseError(manifest_path + ": unsupported format version");

  MultiExitModel m;
  m.seed = j.value("seed", 0u);
  m.source_digest = j.value("source_digest", std::string{});
  m.input = {j["input"].at(0).get<int>(), j["input"].at(1).get<int>(),
             j["input"].at(2).get<int>()};
  m.classes = j.at("classes").get<int>();
  m.wap_index = j.value("wap_index", WapIndex{});
  m.backbone = layers_from_json(j.at("backbone"));
  m.final_head = layers_from_json(j.at("final_head"));
  m.baseline_trained = j.value("baseline_trained", false);
  for (const auto& je : j.at("exits")) {
    ExitBranch b;
    b.name = je.at("name").get<std::string>();
    b.attach_after = je.at("attach_after").get<int>();
    b.layers = layers_from_json(je.at("layers"));
    m.exits.push_back(std::move(b));
    ExitRule rule;
    rule.enabled = je.value("enabled", false);
    rule.method = method_from_name(je.value("method", std::string("margin")));
    rule.theta = je.value("theta", 0.8);
    m.default_policy.push_back(rule);
    m.exit_trained.push_back(je.value("trained", false) ? 1 : 0);
  }

  const auto& jblob = j.at("blob");
  const fs::path blob_path =
      fs::path(manifest_path).parent_path() / jblob.at("file").get<std::string>();
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw ParseError("cannot open blob " + blob_path.string());

  for (const auto& jb : jblob.at("blocks")) {
    auto& blk = m.weights.add(jb.at("name").get<std::string>());
    blk.w_dims = jb.at("w_dims").get<std::vector<int>>();
    std::size_t wn = 1;
    for (int d : blk.w_dims) wn *= static_cast<std::size_t>(d);
    blk.w.resize(wn);
    blk.b.resize(jb.at("bias").get<std::size_t>());
    bf.seekg(static_cast<std::streamoff>(jb.at("offset").get<std::uint64_t>()));
    bf.read(reinterpret_cast<char*>(blk.w.data()),
            static_cast<std::streamsize>(blk.w.size() * sizeof(Real)));
    bf.read(reinterpret_cast<char*>(blk.b.data()),
            static_cast<std::streamsize>(blk.b.size() * sizeof(Real)));
    if (!bf)
      throw ParseError(blob_path.string() + ": truncated block '" +
                       jb.at("name").get<std::string>() + "'");
  }

  // cross-check block sizes against the layer-implied shapes
  std::vector<std::pair<std::vector<LayerSpec>, Shape3>> stacks;
  stacks.emplace_back(m.baseline_stack(), m.input);
  for (const auto& b : m.exits) {
    Shape3 s = m.input;
    for (int i = 0; i <= b.attach_after; ++i)
      s = layer_output_shape(m.backbone[i], s);
    stacks.emplace_back(b.layers, s);
  }
  for (const auto& [layers, in] : stacks) {
    Shape3 s = in;
    for (const auto& l : layers) {
      if (l.trainable()) {
        const auto& blk = m.weights.get(l.name);
        if (blk.param_count() != layer_param_count(l, s))
          throw ParseError(manifest_path + ": block '" + l.name +
                           "' does not match its layer shape");
      }
      s = layer_output_shape(l, s);
    }
  }
  return m;
}

std::string file_digest_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace quickloc
