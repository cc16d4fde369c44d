#include <bit>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "quadlearn/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace quadlearn {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kCheckpointSchema = 1;

std::filesystem::path strip_json(std::filesystem::path p) {
  if (p.extension() == ".json") p.replace_extension();
  return p;
}

ordered_json params_to_json(const NominalParams& p) {
  ordered_json j;
  j["m"] = p.m;
  j["J"] = {p.J.x(), p.J.y(), p.J.z()};
  j["k_f"] = p.k_f;
  j["k_tau"] = p.k_tau;
  j["l"] = p.l;
  j["g"] = p.g;
  j["u_max"] = p.u_max;
  return j;
}

NominalParams params_from_json(const ordered_json& j) {
  NominalParams p;
  p.m = j.at("m").get<double>();
  const auto jj = j.at("J");
  p.J = Vec3(jj.at(0).get<double>(), jj.at(1).get<double>(), jj.at(2).get<double>());
  p.k_f = j.at("k_f").get<double>();
  p.k_tau = j.at("k_tau").get<double>();
  p.l = j.at("l").get<double>();
  p.g = j.at("g").get<double>();
  p.u_max = j.at("u_max").get<double>();
  return p;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& stem_in) {
  const std::filesystem::path stem = strip_json(stem_in);
  const std::filesystem::path json_path = stem.string() + ".json";
  const std::filesystem::path bin_path = stem.string() + ".bin";

  ordered_json j;
  j["format"] = "quadlearn-checkpoint";
  j["schema_version"] = kCheckpointSchema;
  j["kind"] = kind_to_string(model.spec.kind);
  ordered_json spec;
  spec["T"] = model.spec.T;
  spec["tcn_channels"] = model.spec.tcn_channels;
  spec["kernel"] = model.spec.kernel;
  spec["dilations"] = model.spec.dilations;
  spec["mlp_hidden"] = model.spec.mlp_hidden;
  spec["dropout"] = model.spec.dropout;
  spec["motor_scale"] = model.spec.motor_scale;
  j["spec"] = spec;
  j["prior"] = params_to_json(model.prior);
  ordered_json layers = ordered_json::array();
  for (const LayerInfo& l : model.layers) {
    layers.push_back({{"name", l.name}, {"offset", l.offset}, {"rows", l.rows},
                      {"cols", l.cols}});
  }
  j["layers"] = layers;
  j["param_count"] = model.param_count();
  ordered_json bn_channels = ordered_json::array();
  for (const auto& s : model.bn) bn_channels.push_back(s.running_mean.size());
  j["bn_channels"] = bn_channels;
  j["blob"] = bin_path.filename().string();

  std::ofstream jf(json_path, std::ios::binary);
  if (!jf) throw io_error("cannot write " + json_path.string());
  jf << j.dump(2) << "\n";

  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) throw io_error("cannot write " + bin_path.string());
  auto write_doubles = [&bf](const double* p, size_t n) {
    bf.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  };
  write_doubles(model.theta.data(), model.theta.size());
  for (const auto& s : model.bn) {
    write_doubles(s.running_mean.data(), s.running_mean.size());
    write_doubles(s.running_var.data(), s.running_var.size());
  }
  if (!bf) throw io_error("failed writing " + bin_path.string());
}

Model load_model(const std::filesystem::path& stem_in) {
  const std::filesystem::path stem = strip_json(stem_in);
  const std::filesystem::path json_path = stem.string() + ".json";

  std::ifstream jf(json_path, std::ios::binary);
  if (!jf) throw checkpoint_error("cannot open " + json_path.string());
  ordered_json j;
  try {
    jf >> j;
  } catch (const std::exception& e) {
    throw checkpoint_error("malformed manifest " + json_path.string() + ": " + e.what());
  }

  try {
    if (j.at("format").get<std::string>() != "quadlearn-checkpoint") {
      throw checkpoint_error("not a checkpoint manifest: " + json_path.string());
    }
    if (j.at("schema_version").get<int>() != kCheckpointSchema) {
      throw checkpoint_error("unsupported checkpoint schema version");
    }
    ModelSpec spec;
    spec.kind = kind_from_string(j.at("kind").get<std::string>());
    const auto& js = j.at("spec");
    spec.T = js.at("T").get<int>();
    spec.tcn_channels = js.at("tcn_channels").get<std::vector<int>>();
    spec.kernel = js.at("kernel").get<int>();
    spec.dilations = js.at("dilations").get<std::vector<int>>();
    spec.mlp_hidden = js.at("mlp_hidden").get<std::vector<int>>();
    spec.dropout = js.at("dropout").get<double>();
    spec.motor_scale = js.at("motor_scale").get<double>();

    Model model = Model::create(spec, 0, params_from_json(j.at("prior")));
    if (model.param_count() != j.at("param_count").get<int>()) {
      throw checkpoint_error("manifest param_count " +
                             std::to_string(j.at("param_count").get<int>()) +
                             " does not match topology (" +
                             std::to_string(model.param_count()) + ")");
    }

    const std::filesystem::path bin_path =
        json_path.parent_path() / j.at("blob").get<std::string>();
    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw checkpoint_error("cannot open blob " + bin_path.string());
    auto read_doubles = [&bf, &bin_path](double* p, size_t n) {
      bf.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
      if (bf.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
        throw checkpoint_error("blob " + bin_path.string() + " truncated");
      }
    };
    read_doubles(model.theta.data(), model.theta.size());
    for (auto& s : model.bn) {
      read_doubles(s.running_mean.data(), s.running_mean.size());
      read_doubles(s.running_var.data(), s.running_var.size());
    }
    char extra;
    if (bf.read(&extra, 1); bf.gcount() != 0) {
      throw checkpoint_error("blob " + bin_path.string() + " has trailing bytes");
    }
    if (!model.theta.allFinite()) {
      throw checkpoint_error("checkpoint parameters are not finite");
    }
    return model;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw checkpoint_error("manifest " + json_path.string() + ": " + e.what());
  }
}

}  // namespace quadlearn
