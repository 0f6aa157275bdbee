#include "mtmask/net/checkpoint.hpp"

namespace mtmask::net {

ordered_json architecture_to_json(const Architecture& arch) {
  ordered_json j;
  j["in_channels"] = arch.in_channels;
  j["widths"] = arch.widths;
  j["attention"] = arch.attention;
  j["skip"] = arch.skip;
  ordered_json heads = ordered_json::array();
  for (MaskKind m : arch.heads) heads.push_back(std::string(mask_name(m)));
  j["heads"] = heads;
  return j;
}

Architecture architecture_from_json(const ordered_json& j) {
  try {
    Architecture a;
    a.in_channels = j.at("in_channels").get<int>();
    a.widths = j.at("widths").get<std::vector<int>>();
    a.attention = j.at("attention").get<bool>();
    a.skip = j.at("skip").get<bool>();
    a.heads.clear();
    for (const auto& h : j.at("heads")) {
      const auto kind = parse_mask_name(h.get<std::string>());
      if (!kind) throw DataError("checkpoint: unknown head '" + h.get<std::string>() + "'");
      a.heads.push_back(*kind);
    }
    a.check();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed architecture descriptor: ") + e.what());
  }
}

Checkpoint make_checkpoint(const MultiTaskModel& model, int epoch) {
  Checkpoint c;
  c.arch = model.architecture();
  c.seed = model.seed();
  c.epoch = epoch;
  c.names = model.parameter_names();
  for (const auto* p : model.parameters()) {
    c.shapes.push_back(p->shape);
    c.payload.insert(c.payload.end(), p->data.begin(), p->data.end());
  }
  return c;
}

namespace {

void copy_parameters(const Checkpoint& ckpt, const std::vector<Tensor<float>*>& params, std::size_t count) {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (ckpt.shapes.at(i) != params[i]->shape) throw DataError("checkpoint: parameter '" + ckpt.names.at(i) + "' shape mismatch");
    std::copy_n(ckpt.payload.begin() + static_cast<std::ptrdiff_t>(offset), params[i]->size(), params[i]->data.begin());
    offset += params[i]->size();
  }
}

}  // namespace

MultiTaskModel model_from_checkpoint(const Checkpoint& ckpt) {
  MultiTaskModel m(ckpt.arch, ckpt.seed);
  auto params = m.parameters();
  if (params.size() != ckpt.shapes.size()) throw DataError("checkpoint: parameter count does not match architecture");
  copy_parameters(ckpt, params, params.size());
  return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ordered_json h;
  h["format"] = "mtmask-checkpoint";
  h["version"] = 1;
  h["arch"] = architecture_to_json(ckpt.arch);
  h["seed"] = ckpt.seed;
  h["epoch"] = ckpt.epoch;
  ordered_json params = ordered_json::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    params.push_back({{"name", ckpt.names[i]}, {"shape", ckpt.shapes[i]}});
    std::size_t n = 1;
    for (int d : ckpt.shapes[i]) n *= static_cast<std::size_t>(d);
    total += n;
  }
  if (total != ckpt.payload.size()) throw DataError("checkpoint: payload length does not match descriptor");
  h["params"] = params;
  h["count"] = total;
  write_envelope(path, h, ckpt.payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Envelope env = read_envelope(path);
  const auto& h = env.header;
  Checkpoint c;
  try {
    if (h.at("format").get<std::string>() != "mtmask-checkpoint") throw FormatError("not a checkpoint file: " + path.string());
    c.arch = architecture_from_json(h.at("arch"));
    c.seed = h.at("seed").get<std::uint64_t>();
    c.epoch = h.at("epoch").get<int>();
    std::size_t total = 0;
    for (const auto& p : h.at("params")) {
      c.names.push_back(p.at("name").get<std::string>());
      c.shapes.push_back(p.at("shape").get<std::vector<int>>());
      total += Tensor<float>::count(c.shapes.back());
    }
    if (total != h.at("count").get<std::size_t>()) throw FormatError("checkpoint: descriptor count disagrees with shapes");
    if (env.payload.size() < total) throw FormatError("truncated payload in " + path.string());
    if (env.payload.size() > total) throw FormatError("checkpoint: payload longer than descriptor in " + path.string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  c.payload = std::move(env.payload);
  // Shapes must agree with what the architecture builds.
  MultiTaskModel probe(c.arch, c.seed);
  const auto names = probe.parameter_names();
  if (names != c.names) throw FormatError("checkpoint: parameter list does not match architecture");
  return c;
}

void init_from_checkpoint(MultiTaskModel& model, const Checkpoint& ckpt, InitMode mode) {
  auto params = model.parameters();
  if (mode == InitMode::full) {
    if (!(model.architecture() == ckpt.arch)) throw DataError("checkpoint: architecture mismatch for full restore");
    copy_parameters(ckpt, params, params.size());
    return;
  }
  if (!model.architecture().same_backbone(ckpt.arch)) throw DataError("checkpoint: backbone descriptor mismatch");
  copy_parameters(ckpt, params, model.backbone_parameter_count());
  model.init_heads();
}

}  // namespace mtmask::net
